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
#ifndef COUNTYPREV_PREDICT_HPP
#define COUNTYPREV_PREDICT_HPP

#include <filesystem>

#include "countyprev/inference.hpp"
#include "countyprev/model.hpp"

namespace countyprev {

/// Per-county rates for every retained draw: matrices of shape
/// (total draws) x (counties), rows in chain-major draw order.
struct RateDraws {
  Eigen::MatrixXd p;
  Eigen::MatrixXd m;
};

RateDraws rate_draws(const DrawSet& draws, const Dataset& ds, const ModelConfig& cfg);

/// Posterior predictive death counts, one row per draw, one column per
/// county; deterministic given the seed.
Eigen::MatrixXd predictive_deaths(const DrawSet& draws, const Dataset& ds, const ModelConfig& cfg,
                                  std::uint64_t seed);

/// Posterior predictive draws of the county and state prevalence
/// observables (lognormal data models at each posterior draw).
struct PrevalencePredictive {
  Eigen::MatrixXd county;  // draws x |county estimates|, column order = ds.county_estimates
  Eigen::MatrixXd state;   // draws x |state evidence|, column order = ds.state_evidence
};

PrevalencePredictive predictive_prevalence(const DrawSet& draws, const Dataset& ds, const ModelConfig& cfg,
                                           std::uint64_t seed);

struct PredictionRow {
  std::string county_id;
  std::string state_id;
  double prev_mean = 0.0;
  double prev_sd = 0.0;
  double prev_p2_5 = 0.0;
  double prev_p97_5 = 0.0;
  double deaths_pred_mean = 0.0;
  double deaths_p2_5 = 0.0;
  double deaths_p97_5 = 0.0;
  double p_suppressed = 0.0;  // P(D <= c), averaged Poisson CDF over draws
};

std::vector<PredictionRow> prediction_table(const DrawSet& draws, const Dataset& ds,
                                            const ModelConfig& cfg, std::uint64_t seed);

struct AggregateRow {
  std::string level;  // "state" or "national"
  std::string id;     // state id or "US"
  double prev_mean = 0.0;
  double prev_sd = 0.0;
  double prev_p2_5 = 0.0;
  double prev_p50 = 0.0;
  double prev_p97_5 = 0.0;
  double count_mean = 0.0;  // population-scaled head count
  double count_p2_5 = 0.0;
  double count_p97_5 = 0.0;
};

/// Draw-wise population-weighted prevalence at state and national level
/// (never a mean of means), plus misuse head counts.
std::vector<AggregateRow> national_and_state_aggregates(const DrawSet& draws, const Dataset& ds,
                                                        const ModelConfig& cfg);

/// Rao-Blackwellized P(D_i <= c): the Poisson CDF at the suppression
/// threshold averaged over posterior rate draws.
double suppression_probability(const DrawSet& draws, const Dataset& ds, const ModelConfig& cfg,
                               int county_index);

void write_predictions_csv(const std::vector<PredictionRow>& rows, const std::filesystem::path& path,
                           const std::string& metadata);
void write_aggregates_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path,
                          const std::string& metadata);

}  // namespace countyprev

#endif  // COUNTYPREV_PREDICT_HPP
