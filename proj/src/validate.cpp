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
#include "countyprev/validate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "countyprev/csv.hpp"
#include "countyprev/data.hpp"
#include "countyprev/math.hpp"
#include "countyprev/predict.hpp"
#include "countyprev/rng.hpp"
#include "countyprev/util.hpp"

namespace countyprev {

namespace {

std::string zero_pad(int value, int width) {
  std::string s = std::to_string(value);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

Eigen::VectorXd default_beta_p(int k) {
  const double base[5] = {0.16, 0.08, 0.05, 0.13, 0.01};
  Eigen::VectorXd v(k);
  for (int j = 0; j < k; ++j) v[j] = base[j % 5];
  return v;
}

Eigen::VectorXd default_beta_m(int k) {
  const double base[5] = {0.06, 0.15, 0.04, -0.16, 0.02};
  Eigen::VectorXd v(k);
  for (int j = 0; j < k; ++j) v[j] = base[j % 5];
  return v;
}

std::vector<double> ranks_with_ties(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&x](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

double spearman_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson_correlation(ranks_with_ties(x), ranks_with_ties(y));
}

void SyntheticSpec::validate() const {
  if (counties < 1 || states < 1 || counties < states) {
    throw std::domain_error("synthetic spec: need counties >= states >= 1");
  }
  if (covariates < 0) throw std::domain_error("synthetic spec: covariates must be nonnegative");
  if (evidence_states.empty()) {
    throw std::domain_error("synthetic spec: at least one evidence state required");
  }
  for (int s : evidence_states) {
    if (s < 0 || s >= states) throw std::domain_error("synthetic spec: evidence state out of range");
  }
  if (shared_sd_groups < 0 || shared_sd_groups > static_cast<int>(evidence_states.size())) {
    throw std::domain_error("synthetic spec: shared_sd_groups out of range");
  }
  if (!(pop_min >= 1.0 && pop_max >= pop_min)) {
    throw std::domain_error("synthetic spec: invalid population range");
  }
  if (!(gamma > 0.0) || !(sigma0_p >= 0.0) || !(sigma0_m >= 0.0)) {
    throw std::domain_error("synthetic spec: invalid scale parameters");
  }
  if (!(r_low > 0.0 && r_low <= r_high && r_high < 1.0)) {
    throw std::domain_error("synthetic spec: require 0 < r_low <= r_high < 1");
  }
  if (suppression_threshold < 0) {
    throw std::domain_error("synthetic spec: suppression threshold must be nonnegative");
  }
}

SyntheticData simulate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 0x51f7));
  const int n = spec.counties;
  const int S = spec.states;
  const int K = spec.covariates;
  const int pad_s = S > 99 ? 3 : 2;
  const int per_state = (n + S - 1) / S;

  const Eigen::VectorXd beta_p = spec.beta_p.size() == K ? spec.beta_p : default_beta_p(K);
  const Eigen::VectorXd beta_m = spec.beta_m.size() == K ? spec.beta_m : default_beta_m(K);

  SyntheticData out;
  Dataset& ds = out.dataset;
  ds.suppression_threshold = spec.suppression_threshold;
  for (int j = 0; j < K; ++j) ds.covariate_names.push_back("cov" + std::to_string(j + 1));

  std::vector<int> state_of(static_cast<std::size_t>(n));
  std::vector<std::string> state_names(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) state_names[static_cast<std::size_t>(s)] = "S" + zero_pad(s + 1, pad_s);

  // Populations and raw covariates.
  Eigen::MatrixXd raw(n, K);
  Eigen::VectorXd pop(n);
  for (int i = 0; i < n; ++i) {
    state_of[static_cast<std::size_t>(i)] = std::min(i / per_state, S - 1);
    pop[i] = std::floor(std::exp(rng.uniform(std::log(spec.pop_min), std::log(spec.pop_max))));
    for (int j = 0; j < K; ++j) raw(i, j) = rng.normal();
  }

  // Rates are generated from the standardized design, so downstream
  // standardization reproduces the generative covariates exactly.
  Eigen::MatrixXd design = raw;
  for (int j = 0; j < K; ++j) {
    const double mean = design.col(j).mean();
    const double sd = std::sqrt((design.col(j).array() - mean).square().sum() / (n - 1));
    design.col(j) = (design.col(j).array() - mean) / sd;
  }

  Eigen::VectorXd b_p = Eigen::VectorXd::Zero(S), b_m = Eigen::VectorXd::Zero(S);
  if (spec.state_effects) {
    for (int s = 0; s < S; ++s) {
      b_p[s] = spec.sigma0_p * rng.normal();
      b_m[s] = spec.sigma0_m * rng.normal();
    }
  }
  Eigen::VectorXd r_state(S);
  for (int s = 0; s < S; ++s) {
    r_state[s] = S > 1 ? spec.r_low + (spec.r_high - spec.r_low) * static_cast<double>(s) /
                             static_cast<double>(S - 1)
                       : 0.5 * (spec.r_low + spec.r_high);
  }

  Eigen::VectorXd p(n), m(n);
  for (int i = 0; i < n; ++i) {
    const int s = state_of[static_cast<std::size_t>(i)];
    p[i] = inv_logit(spec.beta0_p + b_p[s] + design.row(i) * beta_p);
    m[i] = inv_logit(spec.beta0_m + b_m[s] + design.row(i) * beta_m);
  }

  // Counties with death outcomes, suppressed at the threshold.
  std::vector<long long> state_deaths(static_cast<std::size_t>(S), 0);
  for (int i = 0; i < n; ++i) {
    CountyRecord rec;
    const int s = state_of[static_cast<std::size_t>(i)];
    rec.county_id = state_names[static_cast<std::size_t>(s)] + "_C" + zero_pad(i + 1, 4);
    rec.state_id = state_names[static_cast<std::size_t>(s)];
    rec.population = static_cast<long long>(pop[i]);
    const long long d = rng.poisson(m[i] * p[i] * pop[i]);
    state_deaths[static_cast<std::size_t>(s)] += d;
    if (d <= spec.suppression_threshold) {
      rec.suppressed = true;
    } else {
      rec.deaths = d;
    }
    for (int j = 0; j < K; ++j) rec.covariates.push_back(raw(i, j));
    ds.counties.push_back(std::move(rec));
  }
  ds.rebuild_index();

  // State-level survey evidence for every state.
  for (int s = 0; s < S; ++s) {
    double weighted = 0.0, pop_total = 0.0;
    for (int i = 0; i < n; ++i) {
      if (state_of[static_cast<std::size_t>(i)] == s) {
        weighted += p[i] * pop[i];
        pop_total += pop[i];
      }
    }
    const double mean = spec.gamma * weighted / pop_total;
    const double sd = std::max(spec.st_rel_sd * mean, 1e-6);
    const auto par = lognormal_moment_params(mean, sd);
    StateEvidence ev;
    ev.state_id = state_names[static_cast<std::size_t>(s)];
    ev.prev_est = std::exp(par.u + std::sqrt(par.v_sq) * rng.normal());
    ev.ci_lower = std::max(ev.prev_est - 1.96 * sd, 1e-9);
    ev.ci_upper = std::min(ev.prev_est + 1.96 * sd, 1.0 - 1e-9);
    ev.q_misuse = spec.q_misuse_base;
    ev.q_oud = rng.binomial(spec.q_misuse_base, r_state[s]);
    ds.state_evidence.push_back(std::move(ev));
  }

  // County estimates for the evidence states; trailing ones use the shared
  // unknown-sd mechanism.
  std::set<int> shared_states;
  for (int g = 0; g < spec.shared_sd_groups; ++g) {
    shared_states.insert(spec.evidence_states[spec.evidence_states.size() - 1 - static_cast<std::size_t>(g)]);
  }
  for (int i = 0; i < n; ++i) {
    const int s = state_of[static_cast<std::size_t>(i)];
    if (std::find(spec.evidence_states.begin(), spec.evidence_states.end(), s) ==
        spec.evidence_states.end()) {
      continue;
    }
    const double mean = p[i] * r_state[s];
    CountyPrevEstimate est;
    est.county_id = ds.counties[static_cast<std::size_t>(i)].county_id;
    if (shared_states.count(s) > 0) {
      const double sd = spec.shared_sd_true;
      const auto par = lognormal_moment_params(mean, sd);
      est.prev_est = std::exp(par.u + std::sqrt(par.v_sq) * rng.normal());
      est.sd_mode = SdMode::SharedUnknown;
      est.sd_group = state_names[static_cast<std::size_t>(s)];
    } else {
      const double sd = std::max(spec.co_rel_sd * mean, 1e-6);
      const auto par = lognormal_moment_params(mean, sd);
      est.prev_est = std::exp(par.u + std::sqrt(par.v_sq) * rng.normal());
      est.sd_mode = SdMode::FromCI;
      est.ci_lower = std::max(est.prev_est - 1.96 * sd, 1e-9);
      est.ci_upper = std::min(est.prev_est + 1.96 * sd, 1.0 - 1e-9);
    }
    if (!(est.prev_est > 0.0 && est.prev_est < 1.0)) {
      est.prev_est = std::min(std::max(est.prev_est, 1e-9), 1.0 - 1e-9);
    }
    ds.county_estimates.push_back(std::move(est));
  }

  for (int s = 0; s < S; ++s) {
    out.state_total_deaths.emplace_back(state_names[static_cast<std::size_t>(s)],
                                        state_deaths[static_cast<std::size_t>(s)]);
  }

  auto& truth = out.truth;
  truth["beta0_p"] = spec.beta0_p;
  truth["beta0_m"] = spec.beta0_m;
  for (int j = 0; j < K; ++j) {
    truth["beta_p[" + ds.covariate_names[static_cast<std::size_t>(j)] + "]"] = beta_p[j];
    truth["beta_m[" + ds.covariate_names[static_cast<std::size_t>(j)] + "]"] = beta_m[j];
  }
  truth["sigma0_p"] = spec.sigma0_p;
  truth["sigma0_m"] = spec.sigma0_m;
  truth["gamma"] = spec.gamma;
  for (int s = 0; s < S; ++s) {
    truth["b_p[" + state_names[static_cast<std::size_t>(s)] + "]"] = b_p[s];
    truth["b_m[" + state_names[static_cast<std::size_t>(s)] + "]"] = b_m[s];
    truth["r[" + state_names[static_cast<std::size_t>(s)] + "]"] = r_state[s];
  }
  for (int s : shared_states) {
    truth["sigma_co[" + state_names[static_cast<std::size_t>(s)] + "]"] = spec.shared_sd_true;
  }
  return out;
}

ResidualTable pearson_residuals(const ParameterVector& theta, const Dataset& ds, const ModelConfig& cfg) {
  const Posterior posterior(ds, cfg);
  const DerivedRates rates = posterior.county_rates(theta);
  ResidualTable table;
  std::vector<double> values;
  for (std::size_t i = 0; i < ds.counties.size(); ++i) {
    const auto& county = ds.counties[i];
    if (county.suppressed) continue;
    const double lambda = rates.m[static_cast<long long>(i)] * rates.p[static_cast<long long>(i)] *
                          static_cast<double>(county.population);
    if (!(lambda > 0.0)) {
      table.excluded.push_back(static_cast<int>(i));
      continue;
    }
    table.county.push_back(static_cast<int>(i));
    values.push_back((static_cast<double>(*county.deaths) - lambda) / std::sqrt(lambda));
  }
  table.residual = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<long long>(values.size()));
  return table;
}

ResidualTable pearson_residuals(const DrawSet& draws, const Dataset& ds, const ModelConfig& cfg) {
  auto layout = ParameterLayout::create(ds, cfg);
  if (layout->names != draws.names) {
    throw ModelConfigError("pearson_residuals: draws manifest does not match dataset/config");
  }
  return pearson_residuals(posterior_mean_params(draws, layout), ds, cfg);
}

std::vector<StateResidualRow> state_residual_summary(const ResidualTable& residuals, const Dataset& ds) {
  std::vector<std::vector<double>> by_state(static_cast<std::size_t>(ds.state_count()));
  for (std::size_t idx = 0; idx < residuals.county.size(); ++idx) {
    const int state = ds.county_state[static_cast<std::size_t>(residuals.county[idx])];
    by_state[static_cast<std::size_t>(state)].push_back(residuals.residual[static_cast<long long>(idx)]);
  }
  std::vector<StateResidualRow> rows;
  for (int s = 0; s < ds.state_count(); ++s) {
    const auto& vals = by_state[static_cast<std::size_t>(s)];
    if (vals.size() < 3) continue;
    StateResidualRow row;
    row.state_id = ds.state_ids[static_cast<std::size_t>(s)];
    row.n = static_cast<int>(vals.size());
    const double n = static_cast<double>(vals.size());
    row.mean = std::accumulate(vals.begin(), vals.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : vals) ss += (v - row.mean) * (v - row.mean);
    const double se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    row.ci_lower = row.mean - 1.96 * se;
    row.ci_upper = row.mean + 1.96 * se;
    row.significant = row.ci_lower > 0.0 || row.ci_upper < 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ResidualRegressionRow> residual_regression(const ResidualTable& residuals, const Dataset& ds) {
  if (!ds.standardized()) {
    throw std::domain_error("residual_regression: dataset must be standardized");
  }
  std::vector<std::vector<std::size_t>> by_state(static_cast<std::size_t>(ds.state_count()));
  for (std::size_t idx = 0; idx < residuals.county.size(); ++idx) {
    const int state = ds.county_state[static_cast<std::size_t>(residuals.county[idx])];
    by_state[static_cast<std::size_t>(state)].push_back(idx);
  }

  std::vector<ResidualRegressionRow> rows;
  for (int s = 0; s < ds.state_count(); ++s) {
    const auto& members = by_state[static_cast<std::size_t>(s)];
    if (members.size() < 3) continue;
    for (int j = 0; j < ds.covariate_count(); ++j) {
      ResidualRegressionRow row;
      row.state_id = ds.state_ids[static_cast<std::size_t>(s)];
      row.covariate = ds.covariate_names[static_cast<std::size_t>(j)];
      row.n = static_cast<int>(members.size());
      const double n = static_cast<double>(members.size());

      double mx = 0.0, my = 0.0;
      for (std::size_t idx : members) {
        mx += *ds.counties[static_cast<std::size_t>(residuals.county[idx])].covariates[static_cast<std::size_t>(j)];
        my += residuals.residual[static_cast<long long>(idx)];
      }
      mx /= n;
      my /= n;
      double sxx = 0.0, sxy = 0.0;
      for (std::size_t idx : members) {
        const double x =
            *ds.counties[static_cast<std::size_t>(residuals.county[idx])].covariates[static_cast<std::size_t>(j)];
        const double y = residuals.residual[static_cast<long long>(idx)];
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
      }
      if (!(sxx > 1e-12) || members.size() < 3) {
        row.skipped = true;
        rows.push_back(std::move(row));
        continue;
      }
      row.slope = sxy / sxx;
      row.intercept = my - row.slope * mx;
      double rss = 0.0;
      for (std::size_t idx : members) {
        const double x =
            *ds.counties[static_cast<std::size_t>(residuals.county[idx])].covariates[static_cast<std::size_t>(j)];
        const double y = residuals.residual[static_cast<long long>(idx)];
        const double e = y - row.intercept - row.slope * x;
        rss += e * e;
      }
      const double df = n - 2.0;
      const double s2 = rss / df;
      const double se_slope = std::sqrt(s2 / sxx);
      const double se_int = std::sqrt(s2 * (1.0 / n + mx * mx / sxx));
      auto pvalue = [&](double coef, double se) {
        if (!(se > 0.0)) return coef == 0.0 ? 1.0 : 0.0;
        return student_t_two_sided_pvalue(coef / se, df);
      };
      row.p_slope = pvalue(row.slope, se_slope);
      row.p_intercept = pvalue(row.intercept, se_int);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<PpcStateRow> ppc_state_deaths(const DrawSet& draws, const Dataset& ds, const ModelConfig& cfg,
                                          const std::map<std::string, long long>& observed_totals,
                                          std::uint64_t seed) {
  const Eigen::MatrixXd deaths = predictive_deaths(draws, ds, cfg, seed);
  const long long total = deaths.rows();
  std::vector<PpcStateRow> rows;
  for (int s = 0; s < ds.state_count(); ++s) {
    PpcStateRow row;
    row.state_id = ds.state_ids[static_cast<std::size_t>(s)];
    std::vector<double> totals(static_cast<std::size_t>(total), 0.0);
    for (std::size_t i = 0; i < ds.counties.size(); ++i) {
      if (ds.county_state[i] != s) continue;
      for (long long k = 0; k < total; ++k) totals[static_cast<std::size_t>(k)] += deaths(k, static_cast<long long>(i));
    }
    const auto it = observed_totals.find(row.state_id);
    if (it == observed_totals.end()) {
      row.skipped = true;
      rows.push_back(std::move(row));
      continue;
    }
    row.observed = it->second;
    row.pred_mean = std::accumulate(totals.begin(), totals.end(), 0.0) / static_cast<double>(total);
    std::vector<double> sorted = totals;
    std::sort(sorted.begin(), sorted.end());
    row.p2_5 = quantile_sorted(sorted, 0.025);
    row.p97_5 = quantile_sorted(sorted, 0.975);
    long long below = 0, equal = 0;
    for (double v : totals) {
      if (v < static_cast<double>(row.observed)) ++below;
      if (v == static_cast<double>(row.observed)) ++equal;
    }
    row.percentile = (static_cast<double>(below) + 0.5 * static_cast<double>(equal)) /
                     static_cast<double>(total);
    row.flagged = row.percentile < 0.025 || row.percentile > 0.975;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<int> assign_folds(int n_units, int k, std::uint64_t seed) {
  if (k < 2 || n_units < k) {
    throw std::domain_error("assign_folds: need k >= 2 and at least k units");
  }
  std::vector<int> order(static_cast<std::size_t>(n_units));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0xf01d));
  for (int i = n_units - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.integer(static_cast<std::uint64_t>(i) + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  std::vector<int> fold(static_cast<std::size_t>(n_units));
  for (int i = 0; i < n_units; ++i) {
    fold[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i % k;
  }
  return fold;
}

namespace {

SamplerConfig fold_sampler_config(const SamplerConfig& scfg, std::uint64_t stream) {
  SamplerConfig out = scfg;
  // Warm-started refits keep the post-warmup budget but shorten adaptation.
  const long long post = scfg.iterations - scfg.warmup;
  out.warmup = std::min<long long>(scfg.warmup, std::max<long long>(200, scfg.warmup / 5));
  out.iterations = out.warmup + post;
  out.seed = derive_seed(scfg.seed, stream);
  return out;
}

void finalize_cv_aggregates(CvReport& report) {
  std::vector<double> pred, obs;
  long long covered = 0, scored_observed = 0;
  long long overlap = 0, scored_suppressed = 0;
  double mape_sum = 0.0;
  for (const auto& unit : report.units) {
    if (!unit.scored) continue;
    if (unit.suppressed) {
      ++scored_suppressed;
      if (unit.covered) ++overlap;
      continue;
    }
    ++scored_observed;
    if (unit.covered) ++covered;
    mape_sum += std::abs(unit.pred_mean - unit.observed) / std::abs(unit.observed);
    pred.push_back(unit.pred_mean);
    obs.push_back(unit.observed);
  }
  report.mape = scored_observed > 0 ? 100.0 * mape_sum / static_cast<double>(scored_observed) : 0.0;
  report.coverage =
      scored_observed > 0 ? static_cast<double>(covered) / static_cast<double>(scored_observed) : 0.0;
  report.overlap_suppressed =
      scored_suppressed > 0 ? static_cast<double>(overlap) / static_cast<double>(scored_suppressed) : 0.0;
  report.spearman = pred.size() >= 2 ? spearman_correlation(pred, obs)
                                     : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

CvReport kfold_cv_prevalence(const Dataset& ds, const ModelConfig& mcfg, const SamplerConfig& scfg,
                             int k, std::uint64_t seed, int jobs) {
  const int n_est = static_cast<int>(ds.county_estimates.size());
  if (n_est < k) {
    throw std::domain_error("kfold_cv_prevalence: need at least k county estimates");
  }
  const auto folds = assign_folds(n_est, k, seed);

  const DrawSet base = fit(ds, mcfg, scfg, {.jobs = jobs});
  const WarmStart warm = warm_start_from(base);

  CvReport report;
  report.k = k;
  report.units.resize(static_cast<std::size_t>(n_est));

  auto layout = ParameterLayout::create(ds, mcfg);
  for (int f = 0; f < k; ++f) {
    LikelihoodMask mask;
    for (int e = 0; e < n_est; ++e) {
      if (folds[static_cast<std::size_t>(e)] == f) mask.skip_county_estimates.push_back(e);
    }
    const SamplerConfig scfg_f = fold_sampler_config(scfg, 1000 + static_cast<std::uint64_t>(f));
    const DrawSet draws = fit(ds, mcfg, scfg_f, {.jobs = jobs, .warm_start = &warm, .mask = &mask});
    const bool converged = convergence_report(draws).pass;
    if (!converged) ++report.failed_folds;

    const RateDraws rates = rate_draws(draws, ds, mcfg);
    const long long total = rates.p.rows();
    Rng rng(derive_seed(seed, 5000 + static_cast<std::uint64_t>(f)));
    for (int e : mask.skip_county_estimates) {
      const auto& est = ds.county_estimates[static_cast<std::size_t>(e)];
      CvUnit& unit = report.units[static_cast<std::size_t>(e)];
      unit.id = est.county_id;
      unit.fold = f;
      unit.observed = est.prev_est;
      unit.scored = converged;
      const int county = ds.county_index.at(est.county_id);
      const int state = ds.county_state[static_cast<std::size_t>(county)];
      const int r_idx = layout->r_index_of_state(state);
      const int r_col = r_idx >= 0 ? draws.index_of("r[" + ds.state_ids[static_cast<std::size_t>(state)] + "]") : -1;
      if (r_col < 0) {
        unit.scored = false;
        continue;
      }
      int sd_col = -1;
      double sd_fixed = 0.0;
      if (est.sd_mode == SdMode::FromCI) {
        sd_fixed = std::max(sd_from_ci(*est.ci_lower, *est.ci_upper), kMinObservationSd);
      } else {
        sd_col = draws.index_of("sigma_co[" + est.sd_group + "]");
        if (sd_col < 0) {
          unit.scored = false;
          continue;
        }
      }
      const Eigen::VectorXd r_draws = draws.pooled(r_col);
      const Eigen::VectorXd sd_draws = sd_col >= 0 ? draws.pooled(sd_col) : Eigen::VectorXd();
      double mean_sum = 0.0;
      std::vector<double> samples(static_cast<std::size_t>(total));
      for (long long d = 0; d < total; ++d) {
        const double mean = rates.p(d, county) * r_draws[d];
        const double sd = sd_col >= 0 ? std::max(sd_draws[d], kMinObservationSd) : sd_fixed;
        const auto par = lognormal_moment_params(mean, sd);
        samples[static_cast<std::size_t>(d)] = std::exp(par.u + std::sqrt(par.v_sq) * rng.normal());
        mean_sum += mean;
      }
      unit.pred_mean = mean_sum / static_cast<double>(total);
      std::sort(samples.begin(), samples.end());
      unit.lo = quantile_sorted(samples, 0.025);
      unit.hi = quantile_sorted(samples, 0.975);
      unit.covered = unit.observed >= unit.lo && unit.observed <= unit.hi;
    }
  }
  finalize_cv_aggregates(report);
  return report;
}

CvReport kfold_cv_deaths(const Dataset& ds, const ModelConfig& mcfg, const SamplerConfig& scfg,
                         int k, std::uint64_t seed, int jobs) {
  const int n = static_cast<int>(ds.counties.size());
  if (n < k) {
    throw std::domain_error("kfold_cv_deaths: need at least k counties");
  }

  // Stratified assignment: counties with estimates are dealt separately so
  // every fold sees some of them.
  std::set<int> with_estimate;
  for (const auto& est : ds.county_estimates) {
    with_estimate.insert(ds.county_index.at(est.county_id));
  }
  std::vector<int> stratum_a, stratum_b;
  for (int i = 0; i < n; ++i) {
    (with_estimate.count(i) > 0 ? stratum_a : stratum_b).push_back(i);
  }
  std::vector<int> fold(static_cast<std::size_t>(n), 0);
  if (static_cast<int>(stratum_a.size()) >= k) {
    const auto fa = assign_folds(static_cast<int>(stratum_a.size()), k, derive_seed(seed, 11));
    for (std::size_t i = 0; i < stratum_a.size(); ++i) fold[static_cast<std::size_t>(stratum_a[i])] = fa[i];
  } else {
    for (std::size_t i = 0; i < stratum_a.size(); ++i) {
      fold[static_cast<std::size_t>(stratum_a[i])] = static_cast<int>(i) % k;
    }
  }
  const auto fb = assign_folds(static_cast<int>(stratum_b.size()), k, derive_seed(seed, 12));
  for (std::size_t i = 0; i < stratum_b.size(); ++i) fold[static_cast<std::size_t>(stratum_b[i])] = fb[i];

  const DrawSet base = fit(ds, mcfg, scfg, {.jobs = jobs});
  const WarmStart warm = warm_start_from(base);

  CvReport report;
  report.k = k;
  report.units.resize(static_cast<std::size_t>(n));

  for (int f = 0; f < k; ++f) {
    LikelihoodMask mask;
    for (int i = 0; i < n; ++i) {
      if (fold[static_cast<std::size_t>(i)] == f) mask.skip_death_counties.push_back(i);
    }
    // Held-out counties lose their prevalence-estimate terms as well.
    for (int e = 0; e < static_cast<int>(ds.county_estimates.size()); ++e) {
      const int county = ds.county_index.at(ds.county_estimates[static_cast<std::size_t>(e)].county_id);
      if (fold[static_cast<std::size_t>(county)] == f) mask.skip_county_estimates.push_back(e);
    }
    const SamplerConfig scfg_f = fold_sampler_config(scfg, 2000 + static_cast<std::uint64_t>(f));
    const DrawSet draws = fit(ds, mcfg, scfg_f, {.jobs = jobs, .warm_start = &warm, .mask = &mask});
    const bool converged = convergence_report(draws).pass;
    if (!converged) ++report.failed_folds;

    const RateDraws rates = rate_draws(draws, ds, mcfg);
    const long long total = rates.p.rows();
    for (int i : mask.skip_death_counties) {
      const auto& county = ds.counties[static_cast<std::size_t>(i)];
      CvUnit& unit = report.units[static_cast<std::size_t>(i)];
      unit.id = county.county_id;
      unit.fold = f;
      unit.suppressed = county.suppressed;
      unit.observed = county.suppressed ? 0.0 : static_cast<double>(*county.deaths);
      unit.scored = converged;
      std::vector<double> lambda(static_cast<std::size_t>(total));
      double mean = 0.0;
      for (long long d = 0; d < total; ++d) {
        lambda[static_cast<std::size_t>(d)] =
            rates.m(d, i) * rates.p(d, i) * static_cast<double>(county.population);
        mean += lambda[static_cast<std::size_t>(d)];
      }
      unit.pred_mean = mean / static_cast<double>(total);
      std::sort(lambda.begin(), lambda.end());
      unit.lo = quantile_sorted(lambda, 0.025);
      unit.hi = quantile_sorted(lambda, 0.975);
      unit.covered = county.suppressed
                         ? unit.lo <= static_cast<double>(ds.suppression_threshold)
                         : unit.observed >= unit.lo && unit.observed <= unit.hi;
    }
  }
  finalize_cv_aggregates(report);
  return report;
}

std::vector<LosoRow> leave_one_state_out(const Dataset& ds, const ModelConfig& mcfg,
                                         const SamplerConfig& scfg, int jobs) {
  std::set<std::string> evidence_states;
  for (const auto& est : ds.county_estimates) {
    evidence_states.insert(ds.counties[static_cast<std::size_t>(ds.county_index.at(est.county_id))].state_id);
  }
  if (evidence_states.size() < 2) {
    throw std::domain_error("leave_one_state_out: need county estimates from at least 2 states");
  }

  ModelConfig reduced = mcfg;
  reduced.prevalence_random_intercept = false;

  std::vector<LosoRow> rows;
  std::uint64_t stream = 3000;
  for (const auto& held : evidence_states) {
    LikelihoodMask mask;
    std::vector<int> held_estimates;
    for (int e = 0; e < static_cast<int>(ds.county_estimates.size()); ++e) {
      const auto& est = ds.county_estimates[static_cast<std::size_t>(e)];
      const int county = ds.county_index.at(est.county_id);
      if (ds.counties[static_cast<std::size_t>(county)].state_id == held) {
        mask.skip_county_estimates.push_back(e);
        held_estimates.push_back(e);
      }
    }
    SamplerConfig scfg_s = scfg;
    scfg_s.seed = derive_seed(scfg.seed, stream++);
    const DrawSet draws = fit(ds, reduced, scfg_s, {.jobs = jobs, .mask = &mask});

    LosoRow row;
    row.state_id = held;
    row.n = static_cast<int>(held_estimates.size());
    row.param_dim = draws.dim();
    row.converged = convergence_report(draws).pass;

    const int r_col = draws.index_of("r[" + held + "]");
    if (r_col < 0) {
      row.converged = false;
      rows.push_back(std::move(row));
      continue;
    }
    const RateDraws rates = rate_draws(draws, ds, reduced);
    const Eigen::VectorXd r_draws = draws.pooled(r_col);
    const long long total = rates.p.rows();
    std::vector<double> pred, obs;
    for (int e : held_estimates) {
      const auto& est = ds.county_estimates[static_cast<std::size_t>(e)];
      const int county = ds.county_index.at(est.county_id);
      double mean = 0.0;
      for (long long d = 0; d < total; ++d) mean += rates.p(d, county) * r_draws[d];
      pred.push_back(mean / static_cast<double>(total));
      obs.push_back(est.prev_est);
    }
    row.spearman = spearman_correlation(pred, obs);
    row.pearson = pearson_correlation(pred, obs);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ModelConfig> standard_prior_variants(const ModelConfig& base) {
  std::vector<ModelConfig> variants(6, base);
  variants[0].prior.intercept_sd = 5.0;
  variants[1].prior.intercept_sd = 2.5;
  variants[2].prior.halfnormal_scale = 5.0;
  variants[3].prior.halfnormal_scale = 2.5;
  variants[4].prior.shrinkage_family = ShrinkageFamily::HalfNormal;
  variants[4].prior.shrinkage_scale = 0.5;
  variants[5].prior.intercept_sd = 2.5;
  variants[5].prior.halfnormal_scale = 2.5;
  variants[5].prior.shrinkage_family = ShrinkageFamily::HalfNormal;
  variants[5].prior.shrinkage_scale = 0.5;
  return variants;
}

std::vector<std::string> standard_prior_variant_names() {
  return {"alt1_intercept_sd_5",  "alt2_intercept_sd_2.5", "alt3_re_scale_5",
          "alt4_re_scale_2.5",    "alt5_halfnormal_hs_0.5", "alt6_combined"};
}

SensitivityReport prior_sensitivity(const Dataset& ds, const ModelConfig& base, const SamplerConfig& scfg,
                                    const std::vector<ModelConfig>& variants,
                                    const std::vector<std::string>& variant_names, int jobs) {
  if (variants.size() != variant_names.size()) {
    throw std::invalid_argument("prior_sensitivity: variants and names must align");
  }
  SensitivityReport report;
  report.variant_names.push_back("base");
  for (const auto& name : variant_names) report.variant_names.push_back(name);

  std::vector<ModelConfig> all;
  all.push_back(base);
  all.insert(all.end(), variants.begin(), variants.end());

  std::vector<std::vector<SummaryRow>> summaries;
  std::uint64_t stream = 4000;
  for (const auto& cfg : all) {
    SamplerConfig scfg_v = scfg;
    scfg_v.seed = derive_seed(scfg.seed, stream++);
    const DrawSet draws = fit(ds, cfg, scfg_v, {.jobs = jobs});
    report.converged.push_back(convergence_report(draws).pass);
    summaries.push_back(summarize(draws, false));
  }

  std::vector<double> base_sd;
  for (const auto& row : summaries.front()) {
    report.params.push_back(row.name);
    base_sd.push_back(row.sd);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& summary : summaries) {
    std::vector<SensitivityCell> cells(report.params.size(), SensitivityCell{nan, nan, nan});
    for (const auto& row : summary) {
      const auto it = std::find(report.params.begin(), report.params.end(), row.name);
      if (it == report.params.end()) continue;
      cells[static_cast<std::size_t>(it - report.params.begin())] = {row.mean, row.p2_5, row.p97_5};
    }
    report.cells.push_back(std::move(cells));
  }
  for (std::size_t v = 1; v < report.cells.size(); ++v) {
    for (std::size_t p = 0; p < report.params.size(); ++p) {
      if (!(base_sd[p] > 0.0) || std::isnan(report.cells[v][p].mean)) continue;
      const double shift = std::abs(report.cells[v][p].mean - report.cells[0][p].mean) / base_sd[p];
      report.max_shift_sd = std::max(report.max_shift_sd, shift);
    }
  }
  return report;
}

void write_cv_report(const CvReport& report, const std::filesystem::path& csv_path,
                     const std::filesystem::path& json_path, const std::string& metadata) {
  {
    csv::Writer w(csv_path);
    if (!metadata.empty()) w.comment(metadata);
    w.header({"id", "fold", "observed", "suppressed", "pred_mean", "lo95", "hi95", "covered", "scored"});
    for (const auto& unit : report.units) {
      w.field(unit.id)
          .field(static_cast<long long>(unit.fold))
          .field(unit.observed)
          .field(static_cast<long long>(unit.suppressed ? 1 : 0))
          .field(unit.pred_mean)
          .field(unit.lo)
          .field(unit.hi)
          .field(static_cast<long long>(unit.covered ? 1 : 0))
          .field(static_cast<long long>(unit.scored ? 1 : 0));
      w.end_row();
    }
  }
  nlohmann::json j;
  j["k"] = report.k;
  j["mape_percent"] = report.mape;
  j["coverage"] = report.coverage;
  j["spearman"] = report.spearman;
  j["overlap_suppressed"] = report.overlap_suppressed;
  j["failed_folds"] = report.failed_folds;
  std::ofstream out(json_path);
  out << j.dump(2) << "\n";
}

}  // namespace countyprev
