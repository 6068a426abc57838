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
#include "countyprev/predict.hpp"

#include <algorithm>
#include <cmath>

#include "countyprev/csv.hpp"
#include "countyprev/data.hpp"
#include "countyprev/math.hpp"
#include "countyprev/rng.hpp"
#include "countyprev/util.hpp"

namespace countyprev {

namespace {

/// The model layout for this dataset/config must match the draw manifest;
/// otherwise the draws belong to a different model.
std::shared_ptr<const ParameterLayout> checked_layout(const DrawSet& draws, const Dataset& ds,
                                                      const ModelConfig& cfg) {
  auto layout = ParameterLayout::create(ds, cfg);
  if (layout->names != draws.names) {
    throw ModelConfigError("draws manifest does not match the model implied by dataset and config");
  }
  return layout;
}

struct Percentiles {
  double p2_5, p50, p97_5;
};

Percentiles percentiles(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return {quantile_sorted(v, 0.025), quantile_sorted(v, 0.5), quantile_sorted(v, 0.975)};
}

}  // namespace

RateDraws rate_draws(const DrawSet& draws, const Dataset& ds, const ModelConfig& cfg) {
  const Posterior posterior(ds, cfg);
  auto layout = checked_layout(draws, ds, cfg);
  const long long total = draws.retained() * draws.chain_count();
  const int n = static_cast<int>(ds.counties.size());
  RateDraws out;
  out.p.resize(total, n);
  out.m.resize(total, n);
  long long row = 0;
  ParameterVector theta;
  theta.layout = layout;
  for (const auto& chain : draws.chains) {
    for (long long i = 0; i < chain.rows(); ++i) {
      theta.values = chain.row(i).transpose();
      const DerivedRates rates = posterior.county_rates(theta);
      out.p.row(row) = rates.p.transpose();
      out.m.row(row) = rates.m.transpose();
      ++row;
    }
  }
  return out;
}

Eigen::MatrixXd predictive_deaths(const DrawSet& draws, const Dataset& ds, const ModelConfig& cfg,
                                  std::uint64_t seed) {
  const RateDraws rates = rate_draws(draws, ds, cfg);
  const long long total = rates.p.rows();
  const int n = static_cast<int>(ds.counties.size());
  Eigen::MatrixXd deaths(total, n);
  Rng rng(derive_seed(seed, 0x70f55));
  for (long long k = 0; k < total; ++k) {
    for (int i = 0; i < n; ++i) {
      const double lambda =
          rates.m(k, i) * rates.p(k, i) * static_cast<double>(ds.counties[static_cast<std::size_t>(i)].population);
      deaths(k, i) = static_cast<double>(rng.poisson(lambda));
    }
  }
  return deaths;
}

PrevalencePredictive predictive_prevalence(const DrawSet& draws, const Dataset& ds, const ModelConfig& cfg,
                                           std::uint64_t seed) {
  const RateDraws rates = rate_draws(draws, ds, cfg);
  auto layout = checked_layout(draws, ds, cfg);
  const long long total = rates.p.rows();

  const int gamma_idx = draws.index_of("gamma");
  PrevalencePredictive out;
  out.county.resize(total, static_cast<long long>(ds.county_estimates.size()));
  out.state.resize(total, static_cast<long long>(ds.state_evidence.size()));

  // Flatten draws chain-major to index parameters per draw row.
  Eigen::MatrixXd flat(total, draws.dim());
  long long row = 0;
  for (const auto& chain : draws.chains) {
    flat.middleRows(row, chain.rows()) = chain;
    row += chain.rows();
  }

  struct CoView {
    int county;
    int r_offset;
    double sd_fixed;  // <0 means shared
    int shared_offset;
  };
  std::vector<CoView> co_views;
  for (const auto& est : ds.county_estimates) {
    CoView view;
    view.county = ds.county_index.at(est.county_id);
    const int state = ds.county_state[static_cast<std::size_t>(view.county)];
    const int r_idx = layout->r_index_of_state(state);
    if (r_idx < 0) {
      throw ModelConfigError("county predictive for '" + est.county_id + "' requires a ratio parameter");
    }
    view.r_offset = layout->r + r_idx;
    if (est.sd_mode == SdMode::FromCI) {
      view.sd_fixed = std::max(sd_from_ci(*est.ci_lower, *est.ci_upper), kMinObservationSd);
      view.shared_offset = -1;
    } else {
      view.sd_fixed = -1.0;
      const int g = static_cast<int>(
          std::lower_bound(layout->shared_groups.begin(), layout->shared_groups.end(), est.sd_group) -
          layout->shared_groups.begin());
      view.shared_offset = layout->shared + g;
    }
    co_views.push_back(view);
  }

  std::vector<std::vector<int>> state_counties(static_cast<std::size_t>(ds.state_count()));
  Eigen::VectorXd state_pop = Eigen::VectorXd::Zero(ds.state_count());
  for (std::size_t i = 0; i < ds.counties.size(); ++i) {
    state_counties[static_cast<std::size_t>(ds.county_state[i])].push_back(static_cast<int>(i));
    state_pop[ds.county_state[i]] += static_cast<double>(ds.counties[i].population);
  }

  Rng rng(derive_seed(seed, 0x9e3f7));
  for (long long k = 0; k < total; ++k) {
    for (std::size_t e = 0; e < co_views.size(); ++e) {
      const auto& view = co_views[e];
      const double mean = rates.p(k, view.county) * flat(k, view.r_offset);
      const double sd = view.shared_offset >= 0
                            ? std::max(flat(k, view.shared_offset), kMinObservationSd)
                            : view.sd_fixed;
      const auto par = lognormal_moment_params(mean, sd);
      out.county(k, static_cast<long long>(e)) =
          std::exp(par.u + std::sqrt(par.v_sq) * rng.normal());
    }
    for (std::size_t s = 0; s < ds.state_evidence.size(); ++s) {
      const auto& ev = ds.state_evidence[s];
      const int state = ds.state_index.at(ev.state_id);
      double weighted = 0.0;
      for (int i : state_counties[static_cast<std::size_t>(state)]) {
        weighted += rates.p(k, i) * static_cast<double>(ds.counties[static_cast<std::size_t>(i)].population);
      }
      weighted /= state_pop[state];
      const double mean = flat(k, gamma_idx) * weighted;
      const double sd = std::max(sd_from_ci(ev.ci_lower, ev.ci_upper), kMinObservationSd);
      const auto par = lognormal_moment_params(mean, sd);
      out.state(k, static_cast<long long>(s)) = std::exp(par.u + std::sqrt(par.v_sq) * rng.normal());
    }
  }
  return out;
}

std::vector<PredictionRow> prediction_table(const DrawSet& draws, const Dataset& ds,
                                            const ModelConfig& cfg, std::uint64_t seed) {
  const RateDraws rates = rate_draws(draws, ds, cfg);
  const Eigen::MatrixXd deaths = predictive_deaths(draws, ds, cfg, seed);
  const long long total = rates.p.rows();
  const int n = static_cast<int>(ds.counties.size());

  std::vector<PredictionRow> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    PredictionRow row;
    const auto& county = ds.counties[static_cast<std::size_t>(i)];
    row.county_id = county.county_id;
    row.state_id = county.state_id;
    const double pop = static_cast<double>(county.population);

    std::vector<double> p_draws(static_cast<std::size_t>(total));
    std::vector<double> d_draws(static_cast<std::size_t>(total));
    double mean_p = 0.0, mean_d = 0.0, cdf_sum = 0.0;
    for (long long k = 0; k < total; ++k) {
      p_draws[static_cast<std::size_t>(k)] = rates.p(k, i);
      d_draws[static_cast<std::size_t>(k)] = deaths(k, i);
      mean_p += rates.p(k, i);
      mean_d += deaths(k, i);
      cdf_sum += std::exp(log_poisson_cdf(ds.suppression_threshold, rates.m(k, i) * rates.p(k, i) * pop));
    }
    mean_p /= static_cast<double>(total);
    mean_d /= static_cast<double>(total);
    double ss = 0.0;
    for (double v : p_draws) ss += (v - mean_p) * (v - mean_p);
    row.prev_mean = mean_p;
    row.prev_sd = total > 1 ? std::sqrt(ss / static_cast<double>(total - 1)) : 0.0;
    const auto pq = percentiles(p_draws);
    row.prev_p2_5 = pq.p2_5;
    row.prev_p97_5 = pq.p97_5;
    const auto dq = percentiles(d_draws);
    row.deaths_pred_mean = mean_d;
    row.deaths_p2_5 = dq.p2_5;
    row.deaths_p97_5 = dq.p97_5;
    row.p_suppressed = cdf_sum / static_cast<double>(total);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<AggregateRow> national_and_state_aggregates(const DrawSet& draws, const Dataset& ds,
                                                        const ModelConfig& cfg) {
  const RateDraws rates = rate_draws(draws, ds, cfg);
  const long long total = rates.p.rows();

  Eigen::VectorXd pop(ds.counties.size());
  for (std::size_t i = 0; i < ds.counties.size(); ++i) {
    pop[static_cast<long long>(i)] = static_cast<double>(ds.counties[i].population);
  }
  const double national_pop = pop.sum();

  auto make_row = [&](const std::string& level, const std::string& id, const Eigen::VectorXd& weights,
                      double pop_total) {
    AggregateRow row;
    row.level = level;
    row.id = id;
    std::vector<double> prev(static_cast<std::size_t>(total));
    std::vector<double> count(static_cast<std::size_t>(total));
    double mean = 0.0;
    for (long long k = 0; k < total; ++k) {
      const double head = rates.p.row(k).dot(weights);
      prev[static_cast<std::size_t>(k)] = head / pop_total;
      count[static_cast<std::size_t>(k)] = head;
      mean += head / pop_total;
    }
    mean /= static_cast<double>(total);
    double ss = 0.0;
    for (double v : prev) ss += (v - mean) * (v - mean);
    row.prev_mean = mean;
    row.prev_sd = total > 1 ? std::sqrt(ss / static_cast<double>(total - 1)) : 0.0;
    const auto pq = percentiles(prev);
    row.prev_p2_5 = pq.p2_5;
    row.prev_p50 = pq.p50;
    row.prev_p97_5 = pq.p97_5;
    const auto cq = percentiles(count);
    row.count_mean = mean * pop_total;
    row.count_p2_5 = cq.p2_5;
    row.count_p97_5 = cq.p97_5;
    return row;
  };

  std::vector<AggregateRow> rows;
  for (int s = 0; s < ds.state_count(); ++s) {
    Eigen::VectorXd weights = Eigen::VectorXd::Zero(pop.size());
    double pop_total = 0.0;
    for (std::size_t i = 0; i < ds.counties.size(); ++i) {
      if (ds.county_state[i] == s) {
        weights[static_cast<long long>(i)] = pop[static_cast<long long>(i)];
        pop_total += pop[static_cast<long long>(i)];
      }
    }
    rows.push_back(make_row("state", ds.state_ids[static_cast<std::size_t>(s)], weights, pop_total));
  }
  rows.push_back(make_row("national", "US", pop, national_pop));
  return rows;
}

double suppression_probability(const DrawSet& draws, const Dataset& ds, const ModelConfig& cfg,
                               int county_index) {
  if (county_index < 0 || county_index >= static_cast<int>(ds.counties.size())) {
    throw std::invalid_argument("suppression_probability: county index out of range");
  }
  const RateDraws rates = rate_draws(draws, ds, cfg);
  const double pop = static_cast<double>(ds.counties[static_cast<std::size_t>(county_index)].population);
  double sum = 0.0;
  for (long long k = 0; k < rates.p.rows(); ++k) {
    sum += std::exp(
        log_poisson_cdf(ds.suppression_threshold, rates.m(k, county_index) * rates.p(k, county_index) * pop));
  }
  return sum / static_cast<double>(rates.p.rows());
}

void write_predictions_csv(const std::vector<PredictionRow>& rows, const std::filesystem::path& path,
                           const std::string& metadata) {
  csv::Writer w(path);
  if (!metadata.empty()) w.comment(metadata);
  w.header({"county_id", "state_id", "prev_mean", "prev_sd", "prev_p2.5", "prev_p97.5",
            "deaths_pred_mean", "deaths_p2.5", "deaths_p97.5", "p_suppressed"});
  for (const auto& row : rows) {
    w.field(row.county_id)
        .field(row.state_id)
        .field(row.prev_mean)
        .field(row.prev_sd)
        .field(row.prev_p2_5)
        .field(row.prev_p97_5)
        .field(row.deaths_pred_mean)
        .field(row.deaths_p2_5)
        .field(row.deaths_p97_5)
        .field(row.p_suppressed);
    w.end_row();
  }
}

void write_aggregates_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path,
                          const std::string& metadata) {
  csv::Writer w(path);
  if (!metadata.empty()) w.comment(metadata);
  w.header({"level", "id", "prev_mean", "prev_sd", "prev_p2.5", "prev_p50", "prev_p97.5", "count_mean",
            "count_p2.5", "count_p97.5"});
  for (const auto& row : rows) {
    w.field(row.level)
        .field(row.id)
        .field(row.prev_mean)
        .field(row.prev_sd)
        .field(row.prev_p2_5)
        .field(row.prev_p50)
        .field(row.prev_p97_5)
        .field(row.count_mean)
        .field(row.count_p2_5)
        .field(row.count_p97_5);
    w.end_row();
  }
}

}  // namespace countyprev
