/*
 * Copyright (C) 2026 countyprev contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "countyprev/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "countyprev/csv.hpp"
#include "countyprev/data.hpp"
#include "countyprev/math.hpp"
#include "countyprev/util.hpp"

namespace countyprev {

int DrawSet::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

Eigen::VectorXd DrawSet::pooled(int param) const {
  Eigen::VectorXd out(retained() * chain_count());
  long long at = 0;
  for (const auto& chain : chains) {
    out.segment(at, chain.rows()) = chain.col(param);
    at += chain.rows();
  }
  return out;
}

std::vector<Eigen::VectorXd> DrawSet::per_chain(int param) const {
  std::vector<Eigen::VectorXd> out;
  out.reserve(chains.size());
  for (const auto& chain : chains) out.push_back(chain.col(param));
  return out;
}

long long DrawSet::total_divergences() const {
  long long n = 0;
  for (const auto& s : stats) n += s.divergences;
  return n;
}

std::string fit_config_hash(const ModelConfig& mcfg, const SamplerConfig& scfg) {
  std::string buf;
  auto put = [&buf](const std::string& s) {
    buf += s;
    buf += '|';
  };
  put(mcfg.prevalence_random_intercept ? "rep1" : "rep0");
  put(mcfg.mortality_random_intercept ? "rem1" : "rem0");
  put(format_double(mcfg.prior.intercept_sd));
  put(format_double(mcfg.prior.halfnormal_scale));
  put(mcfg.prior.shrinkage_family == ShrinkageFamily::HalfCauchy ? "cauchy" : "normal");
  put(format_double(mcfg.prior.shrinkage_scale));
  put(mcfg.gamma_constraint == GammaConstraint::PositiveUnbounded ? "pos" : "unit");
  for (const auto& c : mcfg.covariates_p) put("p:" + c);
  for (const auto& c : mcfg.covariates_m) put("m:" + c);
  put(std::to_string(scfg.chains));
  put(std::to_string(scfg.iterations));
  put(std::to_string(scfg.warmup));
  put(std::to_string(scfg.thin));
  put(format_double(scfg.target_accept));
  put(std::to_string(scfg.max_tree_depth));
  put(std::to_string(scfg.seed));
  put(format_double(scfg.init_jitter));
  return hex64(fnv1a(buf));
}

namespace {

/// Crude moment-based starting point: intercepts near the observed death and
/// survey rates, ratios at their empirical values, unit scales elsewhere.
/// Purely an initialization aid; the posterior is unchanged.
Eigen::VectorXd initial_point(const Dataset& ds, const ParameterLayout& L) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(L.dim);
  auto set_block = [&v](int off, int len, double x) {
    for (int i = 0; i < len; ++i) v[off + i] = x;
  };
  set_block(L.lambda_p, L.P, 1.0);
  set_block(L.zeta_p, L.P, 1.0);
  set_block(L.lambda_m, L.M, 1.0);
  set_block(L.zeta_m, L.M, 1.0);
  if (L.P > 0) v[L.tau_p] = 1.0;
  if (L.M > 0) v[L.tau_m] = 1.0;
  if (L.re_p) v[L.sigma0_p] = 0.3;
  if (L.re_m) v[L.sigma0_m] = 0.3;
  set_block(L.shared, L.G, 0.05);

  double prev0 = 0.05;
  if (!ds.county_estimates.empty()) {
    double acc = 0.0;
    for (const auto& est : ds.county_estimates) acc += est.prev_est;
    prev0 = std::min(std::max(acc / static_cast<double>(ds.county_estimates.size()), 1e-4), 0.5);
  }
  double death_rate = 1e-4;
  {
    double deaths = 0.0, pop = 0.0;
    for (const auto& county : ds.counties) {
      if (!county.suppressed) {
        deaths += static_cast<double>(*county.deaths);
        pop += static_cast<double>(county.population);
      }
    }
    if (pop > 0.0 && deaths > 0.0) death_rate = deaths / pop;
  }
  const double mort0 = std::min(std::max(death_rate / prev0, 1e-6), 0.5);
  v[L.beta0_p] = logit(prev0);
  v[L.beta0_m] = logit(mort0);

  double gamma0 = 0.5;
  if (!ds.state_evidence.empty()) {
    double acc = 0.0;
    for (const auto& ev : ds.state_evidence) acc += ev.prev_est;
    gamma0 = std::min(std::max(acc / static_cast<double>(ds.state_evidence.size()) / prev0, 0.02), 0.9);
  }
  v[L.gamma] = L.gamma_constraint == GammaConstraint::UnitInterval ? std::min(gamma0, 0.95) : gamma0;

  set_block(L.r, L.R, 0.5);
  for (const auto& ev : ds.state_evidence) {
    if (!ev.q_misuse.has_value()) continue;
    const int r_idx = L.r_index_of_state(ds.state_index.at(ev.state_id));
    if (r_idx < 0) continue;
    const double ratio = static_cast<double>(*ev.q_oud) / static_cast<double>(*ev.q_misuse);
    v[L.r + r_idx] = std::min(std::max(ratio, 0.01), 0.99);
  }

  ParameterVector theta;
  theta.layout = std::make_shared<ParameterLayout>(L);
  theta.values = std::move(v);
  return to_unconstrained(theta);
}

}  // namespace

DrawSet fit(const Dataset& ds, const ModelConfig& mcfg, const SamplerConfig& scfg,
            const FitOptions& options) {
  scfg.validate();
  const Posterior posterior(ds, mcfg, options.mask);
  const auto layout = posterior.layout();
  const Eigen::VectorXd init = initial_point(ds, *layout);

  std::vector<ChainResult> results(static_cast<std::size_t>(scfg.chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(scfg.chains));

  int workers = options.jobs > 0 ? options.jobs : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, scfg.chains));

  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      const int k = next.fetch_add(1);
      if (k >= scfg.chains) break;
      try {
        results[static_cast<std::size_t>(k)] = run_chain(scfg, k, posterior, init, options.warm_start);
      } catch (...) {
        errors[static_cast<std::size_t>(k)] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }

  DrawSet out;
  out.names = layout->names;
  out.seed = scfg.seed;
  out.config_hash = fit_config_hash(mcfg, scfg);
  out.dataset_hash = hex64(dataset_hash(ds));
  out.iterations = scfg.iterations;
  out.warmup = scfg.warmup;
  out.thin = scfg.thin;
  for (auto& res : results) {
    Eigen::MatrixXd constrained(res.draws.rows(), layout->dim);
    for (long long i = 0; i < res.draws.rows(); ++i) {
      auto [theta, jac] = from_unconstrained(res.draws.row(i).transpose(), layout);
      constrained.row(i) = theta.values.transpose();
    }
    out.chains.push_back(std::move(constrained));
    out.energy.push_back(std::move(res.energy));
    out.divergent.push_back(std::move(res.divergent));
    out.stats.push_back(std::move(res.stats));
  }
  return out;
}

namespace {

/// Average-tie ranks of pooled values, then mapped through the normal
/// quantile function (offset rank normalization).
std::vector<Eigen::VectorXd> rank_normalize(const std::vector<Eigen::VectorXd>& chains) {
  long long total = 0;
  for (const auto& c : chains) total += c.size();
  std::vector<std::pair<double, long long>> order;
  order.reserve(static_cast<std::size_t>(total));
  long long at = 0;
  for (const auto& c : chains) {
    for (long long i = 0; i < c.size(); ++i) order.emplace_back(c[i], at++);
  }
  std::sort(order.begin(), order.end());
  std::vector<double> rank(static_cast<std::size_t>(total));
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && order[j + 1].first == order[i].first) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[static_cast<std::size_t>(order[k].second)] = avg;
    i = j + 1;
  }
  std::vector<Eigen::VectorXd> out;
  out.reserve(chains.size());
  at = 0;
  const double denom = static_cast<double>(total) + 0.25;
  for (const auto& c : chains) {
    Eigen::VectorXd z(c.size());
    for (long long k = 0; k < c.size(); ++k) {
      z[k] = inverse_normal_cdf((rank[static_cast<std::size_t>(at++)] - 0.375) / denom);
    }
    out.push_back(std::move(z));
  }
  return out;
}

std::vector<Eigen::VectorXd> split_halves(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(2 * chains.size());
  for (const auto& c : chains) {
    const long long half = c.size() / 2;
    out.push_back(c.head(half));
    out.push_back(c.tail(half));
  }
  return out;
}

bool all_constant(const std::vector<Eigen::VectorXd>& chains) {
  double first = chains.front()[0];
  for (const auto& c : chains) {
    for (long long i = 0; i < c.size(); ++i) {
      if (c[i] != first) return false;
    }
  }
  return true;
}

double classic_rhat(const std::vector<Eigen::VectorXd>& chains) {
  const auto m = static_cast<double>(chains.size());
  const double n = static_cast<double>(chains.front().size());
  double grand = 0.0;
  std::vector<double> means;
  means.reserve(chains.size());
  double w = 0.0;
  for (const auto& c : chains) {
    const double mean = c.mean();
    means.push_back(mean);
    grand += mean;
    w += (c.array() - mean).square().sum() / (n - 1.0);
  }
  grand /= m;
  w /= m;
  double b = 0.0;
  for (double mean : means) b += (mean - grand) * (mean - grand);
  b *= n / (m - 1.0);
  if (!(w > 0.0)) return 1.0;
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

}  // namespace

DiagnosticResult rhat(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.size() < 2) {
    throw std::invalid_argument("rhat: need at least 2 chains");
  }
  for (const auto& c : chains) {
    if (c.size() < 4) throw std::invalid_argument("rhat: need at least 4 draws per chain");
  }
  if (all_constant(chains)) {
    return {1.0, true};
  }
  const auto halves = split_halves(chains);
  const auto z = rank_normalize(halves);
  return {classic_rhat(z), false};
}

DiagnosticResult ess(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.empty()) throw std::invalid_argument("ess: no chains");
  Eigen::Index n_min = chains.front().size();
  for (const auto& c : chains) n_min = std::min(n_min, c.size());
  if (n_min < 4) throw std::invalid_argument("ess: need at least 4 draws per chain");
  if (all_constant(chains)) {
    return {0.0, true};
  }
  const auto m = static_cast<double>(chains.size());
  const double n = static_cast<double>(n_min);

  std::vector<double> means;
  std::vector<Eigen::VectorXd> centered;
  means.reserve(chains.size());
  for (const auto& c : chains) {
    const double mean = c.head(n_min).mean();
    means.push_back(mean);
    centered.push_back((c.head(n_min).array() - mean).matrix());
  }
  auto acov = [&](std::size_t j, Eigen::Index t) {
    const auto& x = centered[j];
    double s = 0.0;
    for (Eigen::Index i = 0; i + t < n_min; ++i) s += x[i] * x[i + t];
    return s / n;
  };

  double w = 0.0;
  for (std::size_t j = 0; j < centered.size(); ++j) w += acov(j, 0) * n / (n - 1.0);
  w /= m;
  double b_over_n = 0.0;
  if (chains.size() > 1) {
    const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
    for (double mean : means) b_over_n += (mean - grand) * (mean - grand);
    b_over_n /= (m - 1.0);
  }
  const double var_plus = (n - 1.0) / n * w + b_over_n;
  if (!(var_plus > 0.0)) {
    return {0.0, true};
  }

  auto rho = [&](Eigen::Index t) {
    double mean_acov = 0.0;
    for (std::size_t j = 0; j < centered.size(); ++j) mean_acov += acov(j, t) * n / (n - 1.0);
    mean_acov /= m;
    return 1.0 - (w - mean_acov) / var_plus;
  };

  // Geyer initial monotone sequence over autocorrelation pairs.
  double sum_pairs = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t + 1 < n_min; t += 2) {
    const double r_even = t == 0 ? 1.0 : rho(t);
    const double r_odd = rho(t + 1);
    double pair = r_even + r_odd;
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    sum_pairs += pair;
  }
  const double tau = std::max(-1.0 + 2.0 * sum_pairs, 1.0 / (m * n));
  return {m * n / tau, false};
}

std::vector<SummaryRow> summarize(const DrawSet& draws, bool multiplier_row) {
  if (draws.chain_count() == 0 || draws.retained() == 0) {
    throw std::invalid_argument("summarize: empty draw set");
  }
  std::vector<SummaryRow> rows;
  const bool diagnostics = draws.chain_count() >= 2 && draws.retained() >= 4;

  auto summary_of = [&](const std::string& name, const std::vector<Eigen::VectorXd>& per_chain) {
    SummaryRow row;
    row.name = name;
    std::vector<double> pooled;
    for (const auto& c : per_chain) {
      pooled.insert(pooled.end(), c.data(), c.data() + c.size());
    }
    const double n = static_cast<double>(pooled.size());
    const double mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : pooled) ss += (x - mean) * (x - mean);
    row.mean = mean;
    row.sd = n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    std::sort(pooled.begin(), pooled.end());
    row.p2_5 = quantile_sorted(pooled, 0.025);
    row.p50 = quantile_sorted(pooled, 0.5);
    row.p97_5 = quantile_sorted(pooled, 0.975);
    row.significant = !(row.p2_5 <= 0.0 && 0.0 <= row.p97_5);
    if (diagnostics) {
      row.rhat = rhat(per_chain).value;
      row.ess = ess(per_chain).value;
    } else {
      row.rhat = 1.0;
      row.ess = n;
    }
    return row;
  };

  for (int j = 0; j < draws.dim(); ++j) {
    rows.push_back(summary_of(draws.names[static_cast<std::size_t>(j)], draws.per_chain(j)));
  }
  const int gamma_idx = draws.index_of("gamma");
  if (multiplier_row && gamma_idx >= 0) {
    std::vector<Eigen::VectorXd> inv;
    for (const auto& chain : draws.chains) {
      inv.push_back(chain.col(gamma_idx).cwiseInverse());
    }
    rows.push_back(summary_of("inv_gamma", inv));
  }
  return rows;
}

ConvergenceReport convergence_report(const DrawSet& draws) {
  ConvergenceReport report;
  report.divergences = draws.total_divergences();
  for (const auto& s : draws.stats) report.treedepth_saturations += s.treedepth_saturations;
  report.min_ess = std::numeric_limits<double>::infinity();
  if (draws.chain_count() >= 2 && draws.retained() >= 4) {
    for (int j = 0; j < draws.dim(); ++j) {
      const auto per_chain = draws.per_chain(j);
      const auto r = rhat(per_chain);
      const auto e = ess(per_chain);
      if (!r.degenerate) report.max_rhat = std::max(report.max_rhat, r.value);
      if (!e.degenerate) report.min_ess = std::min(report.min_ess, e.value);
    }
  }
  if (!std::isfinite(report.min_ess)) report.min_ess = 0.0;
  report.pass = report.max_rhat < 1.1;
  return report;
}

ParameterVector posterior_mean_params(const DrawSet& draws, std::shared_ptr<const ParameterLayout> layout) {
  if (layout->dim != draws.dim()) {
    throw std::invalid_argument("posterior_mean_params: layout/draws dimension mismatch");
  }
  ParameterVector theta;
  theta.layout = std::move(layout);
  theta.values = Eigen::VectorXd::Zero(draws.dim());
  long long total = 0;
  for (const auto& chain : draws.chains) {
    theta.values += chain.colwise().sum().transpose();
    total += chain.rows();
  }
  theta.values /= static_cast<double>(total);
  return theta;
}

WarmStart warm_start_from(const DrawSet& draws) {
  WarmStart ws;
  if (draws.stats.empty()) return ws;
  double eps = 0.0;
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(draws.stats.front().inverse_mass_diag.size());
  for (const auto& s : draws.stats) {
    eps += s.step_size;
    mass += s.inverse_mass_diag;
  }
  ws.step_size = eps / static_cast<double>(draws.stats.size());
  ws.inverse_mass_diag = mass / static_cast<double>(draws.stats.size());
  return ws;
}

void save_drawset(const DrawSet& draws, const std::filesystem::path& dir, bool binary) {
  std::filesystem::create_directories(dir);
  const std::string meta = "config_hash=" + draws.config_hash + " dataset_hash=" + draws.dataset_hash +
                           " seed=" + std::to_string(draws.seed);
  for (int k = 0; k < draws.chain_count(); ++k) {
    csv::Writer w(dir / ("draws_chain" + std::to_string(k) + ".csv"));
    w.comment(meta);
    std::vector<std::string> cols = {"chain", "iter"};
    cols.insert(cols.end(), draws.names.begin(), draws.names.end());
    cols.push_back("energy");
    cols.push_back("divergent");
    w.header(cols);
    const auto& chain = draws.chains[static_cast<std::size_t>(k)];
    for (long long i = 0; i < chain.rows(); ++i) {
      w.field(static_cast<long long>(k)).field(i);
      for (int j = 0; j < chain.cols(); ++j) w.field(chain(i, j));
      w.field(draws.energy[static_cast<std::size_t>(k)][i]);
      w.field(static_cast<long long>(draws.divergent[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]));
      w.end_row();
    }
  }
  if (binary) {
    std::ofstream out(dir / "draws.bin", std::ios::binary);
    const char magic[8] = {'C', 'P', 'D', 'R', 'A', 'W', '1', '\0'};
    out.write(magic, 8);
    const std::int64_t nchain = draws.chain_count(), nkeep = draws.retained(), ndim = draws.dim();
    out.write(reinterpret_cast<const char*>(&nchain), 8);
    out.write(reinterpret_cast<const char*>(&nkeep), 8);
    out.write(reinterpret_cast<const char*>(&ndim), 8);
    for (const auto& chain : draws.chains) {
      for (long long i = 0; i < chain.rows(); ++i) {
        for (int j = 0; j < chain.cols(); ++j) {
          const double v = chain(i, j);
          out.write(reinterpret_cast<const char*>(&v), 8);
        }
      }
    }
  }

  nlohmann::json run;
  run["seed"] = draws.seed;
  run["config_hash"] = draws.config_hash;
  run["dataset_hash"] = draws.dataset_hash;
  run["chains"] = draws.chain_count();
  run["iterations"] = draws.iterations;
  run["warmup"] = draws.warmup;
  run["thin"] = draws.thin;
  run["retained_per_chain"] = draws.retained();
  nlohmann::json adaptation = nlohmann::json::array();
  for (const auto& s : draws.stats) {
    nlohmann::json cj;
    cj["step_size"] = s.step_size;
    cj["divergences"] = s.divergences;
    cj["treedepth_saturations"] = s.treedepth_saturations;
    cj["mean_accept"] = s.mean_accept;
    cj["inverse_mass_diag"] = std::vector<double>(
        s.inverse_mass_diag.data(), s.inverse_mass_diag.data() + s.inverse_mass_diag.size());
    adaptation.push_back(cj);
  }
  run["adaptation"] = adaptation;
  std::ofstream out(dir / "run.json");
  out << run.dump(2) << "\n";
}

DrawSet load_drawset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "run.json");
  if (!in) {
    throw ParseError("cannot open " + (dir / "run.json").string());
  }
  nlohmann::json run = nlohmann::json::parse(in);
  DrawSet draws;
  draws.seed = run.at("seed").get<std::uint64_t>();
  draws.config_hash = run.at("config_hash").get<std::string>();
  draws.dataset_hash = run.at("dataset_hash").get<std::string>();
  draws.iterations = run.at("iterations").get<long long>();
  draws.warmup = run.at("warmup").get<long long>();
  draws.thin = run.at("thin").get<int>();
  const int nchain = run.at("chains").get<int>();
  for (const auto& cj : run.at("adaptation")) {
    ChainStats s;
    s.step_size = cj.at("step_size").get<double>();
    s.divergences = cj.at("divergences").get<long long>();
    s.treedepth_saturations = cj.at("treedepth_saturations").get<long long>();
    s.mean_accept = cj.at("mean_accept").get<double>();
    const auto mass = cj.at("inverse_mass_diag").get<std::vector<double>>();
    s.inverse_mass_diag = Eigen::Map<const Eigen::VectorXd>(mass.data(), static_cast<long long>(mass.size()));
    draws.stats.push_back(std::move(s));
  }
  for (int k = 0; k < nchain; ++k) {
    const auto t = csv::Table::read_file(dir / ("draws_chain" + std::to_string(k) + ".csv"));
    if (k == 0) {
      // Columns between `iter` and `energy` are the parameter manifest.
      const auto& cols = t.columns();
      for (std::size_t j = 2; j + 2 < cols.size(); ++j) draws.names.push_back(cols[j]);
    }
    const int ndim = static_cast<int>(draws.names.size());
    Eigen::MatrixXd chain(static_cast<long long>(t.row_count()), ndim);
    Eigen::VectorXd energy(static_cast<long long>(t.row_count()));
    std::vector<char> divergent(t.row_count(), 0);
    for (std::size_t i = 0; i < t.row_count(); ++i) {
      for (int j = 0; j < ndim; ++j) chain(static_cast<long long>(i), j) = t.get_double(i, j + 2);
      energy[static_cast<long long>(i)] = t.get_double(i, ndim + 2);
      divergent[i] = t.get_int(i, ndim + 3) != 0 ? 1 : 0;
    }
    draws.chains.push_back(std::move(chain));
    draws.energy.push_back(std::move(energy));
    draws.divergent.push_back(std::move(divergent));
  }
  return draws;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path,
                       const std::string& metadata) {
  csv::Writer w(path);
  if (!metadata.empty()) w.comment(metadata);
  w.header({"param", "mean", "sd", "p2.5", "p50", "p97.5", "rhat", "ess", "significant"});
  for (const auto& row : rows) {
    w.field(row.name)
        .field(row.mean)
        .field(row.sd)
        .field(row.p2_5)
        .field(row.p50)
        .field(row.p97_5)
        .field(row.rhat)
        .field(row.ess)
        .field(static_cast<long long>(row.significant ? 1 : 0));
    w.end_row();
  }
}

void write_convergence_json(const ConvergenceReport& report, const DrawSet& draws,
                            const std::filesystem::path& path) {
  nlohmann::json j;
  j["max_rhat"] = report.max_rhat;
  j["min_ess"] = report.min_ess;
  j["divergences"] = report.divergences;
  j["treedepth_saturations"] = report.treedepth_saturations;
  j["pass"] = report.pass;
  j["config_hash"] = draws.config_hash;
  j["dataset_hash"] = draws.dataset_hash;
  j["seed"] = draws.seed;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

}  // namespace countyprev
