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
#ifndef COUNTYPREV_VALIDATE_HPP
#define COUNTYPREV_VALIDATE_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "countyprev/inference.hpp"
#include "countyprev/model.hpp"

namespace countyprev {

/// Design of a synthetic study: ground-truth parameters plus the evidence
/// plan (which states carry county prevalence estimates, mirroring the
/// two-state setup that identifies the full model).
struct SyntheticSpec {
  int counties = 300;
  int states = 15;
  int covariates = 5;

  double beta0_p = -2.9;
  double beta0_m = -6.0;
  Eigen::VectorXd beta_p;  // defaults applied when empty
  Eigen::VectorXd beta_m;
  bool state_effects = true;
  double sigma0_p = 0.2;
  double sigma0_m = 0.5;
  double gamma = 0.21;
  double r_low = 0.55;
  double r_high = 0.9;

  std::vector<int> evidence_states = {0, 1};
  int shared_sd_groups = 1;      // trailing evidence states use a shared unknown sd
  double shared_sd_true = 0.015;
  double co_rel_sd = 0.10;       // relative sd of county estimates
  double st_rel_sd = 0.08;       // relative sd of state estimates
  long long q_misuse_base = 20000;

  double pop_min = 2e4;
  double pop_max = 1e6;
  long long suppression_threshold = 9;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticData {
  Dataset dataset;  // raw covariates; standardizing reproduces the generative design
  std::map<std::string, double> truth;  // manifest-named true parameter values
  std::vector<std::pair<std::string, long long>> state_total_deaths;  // pre-suppression totals
};

/// Forward-simulates a complete input set plus ground truth. Deterministic
/// in the spec seed.
SyntheticData simulate_synthetic(const SyntheticSpec& spec);

struct ResidualTable {
  std::vector<int> county;  // dataset indices, unsuppressed with positive rate
  Eigen::VectorXd residual;
  std::vector<int> excluded;  // zero-rate counties
};

/// Pearson residuals (D - lambda)/sqrt(lambda) at the given parameters.
ResidualTable pearson_residuals(const ParameterVector& theta, const Dataset& ds, const ModelConfig& cfg);
/// Same, at the posterior-mean parameters of a fit.
ResidualTable pearson_residuals(const DrawSet& draws, const Dataset& ds, const ModelConfig& cfg);

struct StateResidualRow {
  std::string state_id;
  int n = 0;
  double mean = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  bool significant = false;  // 95% CI excludes zero
};

/// Per-state mean residual with a normal 95% CI, for states with at least 3
/// unsuppressed counties.
std::vector<StateResidualRow> state_residual_summary(const ResidualTable& residuals, const Dataset& ds);

struct ResidualRegressionRow {
  std::string state_id;
  std::string covariate;
  int n = 0;
  double intercept = 0.0;
  double slope = 0.0;
  double p_intercept = 1.0;
  double p_slope = 1.0;
  bool skipped = false;  // degenerate design
};

/// Univariate OLS of residuals on each covariate, state by state (states
/// with >= 3 unsuppressed counties).
std::vector<ResidualRegressionRow> residual_regression(const ResidualTable& residuals, const Dataset& ds);

struct PpcStateRow {
  std::string state_id;
  long long observed = 0;
  double pred_mean = 0.0;
  double p2_5 = 0.0;
  double p97_5 = 0.0;
  double percentile = 0.0;
  bool flagged = false;  // observed in the extreme 5% of the predictive
  bool skipped = false;  // no observed total supplied
};

/// Posterior predictive check of state-aggregated death totals against
/// separately observed (unsuppressed) state totals.
std::vector<PpcStateRow> ppc_state_deaths(const DrawSet& draws, const Dataset& ds, const ModelConfig& cfg,
                                          const std::map<std::string, long long>& observed_totals,
                                          std::uint64_t seed);

/// Deterministic fold assignment: a seeded shuffle dealt round-robin.
std::vector<int> assign_folds(int n_units, int k, std::uint64_t seed);

struct CvUnit {
  std::string id;
  int fold = 0;
  double observed = 0.0;
  bool suppressed = false;
  double pred_mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool covered = false;
  bool scored = true;
};

struct CvReport {
  int k = 0;
  std::vector<CvUnit> units;
  double mape = 0.0;                // percent, over scored observed units
  double coverage = 0.0;            // fraction covered among scored observed units
  double spearman = 0.0;            // rank correlation of predictions vs observations
  double overlap_suppressed = 0.0;  // deaths CV: intervals overlapping [0, c]
  int failed_folds = 0;
};

/// 10-fold CV over the county prevalence estimates: each fold refits with the
/// held-out estimates masked out of the likelihood, then scores the held-out
/// observations against their posterior predictive distributions.
CvReport kfold_cv_prevalence(const Dataset& ds, const ModelConfig& mcfg, const SamplerConfig& scfg,
                             int k, std::uint64_t seed, int jobs = 0);

/// Stratified 10-fold CV over all counties for the death outcome: held-out
/// counties lose their death and prevalence-estimate likelihood terms; the
/// posterior of expected deaths is scored against observations (suppressed
/// units by overlap with [0, c]).
CvReport kfold_cv_deaths(const Dataset& ds, const ModelConfig& mcfg, const SamplerConfig& scfg,
                         int k, std::uint64_t seed, int jobs = 0);

struct LosoRow {
  std::string state_id;
  int n = 0;
  double spearman = 0.0;
  double pearson = 0.0;
  bool converged = true;
  int param_dim = 0;
};

/// Leave-one-state-out over the states carrying county estimates, refitting
/// with the prevalence random intercept removed (the reduced model).
std::vector<LosoRow> leave_one_state_out(const Dataset& ds, const ModelConfig& mcfg,
                                         const SamplerConfig& scfg, int jobs = 0);

struct SensitivityCell {
  double mean = 0.0;
  double p2_5 = 0.0;
  double p97_5 = 0.0;
};

struct SensitivityReport {
  std::vector<std::string> variant_names;  // [0] is the base configuration
  std::vector<std::string> params;         // base manifest
  std::vector<std::vector<SensitivityCell>> cells;  // [variant][param]; NaN row when absent
  std::vector<bool> converged;
  double max_shift_sd = 0.0;  // max |mean_v - mean_base| / sd_base
};

SensitivityReport prior_sensitivity(const Dataset& ds, const ModelConfig& base, const SamplerConfig& scfg,
                                    const std::vector<ModelConfig>& variants,
                                    const std::vector<std::string>& variant_names, int jobs = 0);

/// The paper's six stronger-prior variants of a base configuration.
std::vector<ModelConfig> standard_prior_variants(const ModelConfig& base);
std::vector<std::string> standard_prior_variant_names();

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y);
double spearman_correlation(const std::vector<double>& x, const std::vector<double>& y);

void write_cv_report(const CvReport& report, const std::filesystem::path& csv_path,
                     const std::filesystem::path& json_path, const std::string& metadata);

}  // namespace countyprev

#endif  // COUNTYPREV_VALIDATE_HPP
