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
#ifndef COUNTYPREV_MODEL_HPP
#define COUNTYPREV_MODEL_HPP

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "countyprev/target.hpp"
#include "countyprev/types.hpp"

namespace countyprev {

enum class GammaConstraint { PositiveUnbounded, UnitInterval };
enum class ShrinkageFamily { HalfCauchy, HalfNormal };

struct PriorSpec {
  double intercept_sd = 10.0;     // Normal prior sd for fixed-effect intercepts
  double halfnormal_scale = 10.0; // Half-Normal scale for ratios and random-effect sds
  ShrinkageFamily shrinkage_family = ShrinkageFamily::HalfCauchy;
  double shrinkage_scale = 1.0;   // scale of the global/auxiliary shrinkage priors
};

struct ModelConfig {
  bool prevalence_random_intercept = true;
  bool mortality_random_intercept = true;
  PriorSpec prior;
  GammaConstraint gamma_constraint = GammaConstraint::PositiveUnbounded;
  // Covariate include-lists per block; empty means all dataset covariates.
  std::vector<std::string> covariates_p;
  std::vector<std::string> covariates_m;
  // Emit a derived 1/gamma (survey multiplier) row in summaries.
  bool report_multiplier = true;
};

/// Index map of the flat parameter vector. The same block offsets address
/// both the unconstrained sampler coordinates and the constrained reporting
/// values; blocks that a config disables are absent entirely.
///
/// Unconstrained coordinates: identity for intercepts, standard-normal
/// innovations for coefficients and random intercepts (non-centered),
/// log for positive scales, logit for unit-interval parameters.
struct ParameterLayout {
  int P = 0;  // prevalence covariates
  int M = 0;  // mortality covariates
  int S = 0;  // states
  int R = 0;  // states with an OUD/misuse ratio parameter
  int G = 0;  // shared-sd groups
  bool re_p = true;
  bool re_m = true;
  GammaConstraint gamma_constraint = GammaConstraint::PositiveUnbounded;

  std::vector<std::string> cov_names_p, cov_names_m;
  std::vector<std::string> state_names;
  std::vector<int> r_states;  // dataset state indices carrying r, ascending
  std::vector<std::string> shared_groups;

  // Block offsets; -1 when the block is absent.
  int beta0_p = -1, beta_p = -1, beta0_m = -1, beta_m = -1;
  int b_p = -1, sigma0_p = -1, b_m = -1, sigma0_m = -1;
  int gamma = -1, r = -1;
  int lambda_p = -1, zeta_p = -1, tau_p = -1;
  int lambda_m = -1, zeta_m = -1, tau_m = -1;
  int shared = -1;
  int dim = 0;

  std::vector<std::string> names;  // constrained-scale manifest, length == dim

  static std::shared_ptr<const ParameterLayout> create(const Dataset& ds, const ModelConfig& cfg);

  /// r-parameter index for a dataset state index, or -1.
  int r_index_of_state(int state) const;

  /// Flat index of a manifest name, or -1.
  int index_of(const std::string& name) const;
};

/// Constrained-scale parameter values over a layout. Coefficients and random
/// intercepts are stored as their actual values (not innovations).
struct ParameterVector {
  Eigen::VectorXd values;
  std::shared_ptr<const ParameterLayout> layout;

  double beta0_p() const { return values[layout->beta0_p]; }
  double beta0_m() const { return values[layout->beta0_m]; }
  Eigen::VectorBlock<const Eigen::VectorXd> beta_p() const { return segment(layout->beta_p, layout->P); }
  Eigen::VectorBlock<const Eigen::VectorXd> beta_m() const { return segment(layout->beta_m, layout->M); }
  Eigen::VectorBlock<const Eigen::VectorXd> b_p() const {
    return segment(layout->b_p, layout->re_p ? layout->S : 0);
  }
  Eigen::VectorBlock<const Eigen::VectorXd> b_m() const {
    return segment(layout->b_m, layout->re_m ? layout->S : 0);
  }
  double sigma0_p() const { return values[layout->sigma0_p]; }
  double sigma0_m() const { return values[layout->sigma0_m]; }
  double gamma() const { return values[layout->gamma]; }
  Eigen::VectorBlock<const Eigen::VectorXd> r() const { return segment(layout->r, layout->R); }
  Eigen::VectorBlock<const Eigen::VectorXd> lambda_p() const { return segment(layout->lambda_p, layout->P); }
  Eigen::VectorBlock<const Eigen::VectorXd> lambda_m() const { return segment(layout->lambda_m, layout->M); }
  Eigen::VectorBlock<const Eigen::VectorXd> zeta_p() const { return segment(layout->zeta_p, layout->P); }
  Eigen::VectorBlock<const Eigen::VectorXd> zeta_m() const { return segment(layout->zeta_m, layout->M); }
  double tau_p() const { return values[layout->tau_p]; }
  double tau_m() const { return values[layout->tau_m]; }
  Eigen::VectorBlock<const Eigen::VectorXd> sigma_shared() const { return segment(layout->shared, layout->G); }

  /// All constrained-support invariants (positive scales, ratios in (0,1)).
  bool constrained_valid() const;

 private:
  Eigen::VectorBlock<const Eigen::VectorXd> segment(int offset, int len) const {
    return values.segment(len > 0 ? offset : 0, len);
  }
};

/// Per-county prevalence and mortality-given-misuse rates.
struct DerivedRates {
  Eigen::VectorXd p;
  Eigen::VectorXd m;
};

/// Decomposition of the log posterior at an unconstrained point.
struct ModelTerms {
  double deaths = 0.0;
  double county_prev = 0.0;
  double state_prev = 0.0;
  double prior = 0.0;
  double jacobian = 0.0;
  double total() const { return deaths + county_prev + state_prev + prior + jacobian; }
};

/// Maps constrained parameters to the sampler's unconstrained coordinates.
Eigen::VectorXd to_unconstrained(const ParameterVector& theta);

/// Inverse map; also returns the exact log|Jacobian| of the inverse
/// transform (the density correction added to the constrained-scale prior).
std::pair<ParameterVector, double> from_unconstrained(const Eigen::VectorXd& z,
                                                      std::shared_ptr<const ParameterLayout> layout);

/// Floor applied to observation sds before moment matching, preventing a
/// density singularity for zero-width intervals.
inline constexpr double kMinObservationSd = 1e-8;

/// Likelihood terms to drop while keeping the parameter space fixed (the
/// cross-validation holdout mechanism: covariates and populations remain,
/// only the named likelihood contributions vanish).
struct LikelihoodMask {
  std::vector<int> skip_death_counties;    // dataset county indices
  std::vector<int> skip_county_estimates;  // indices into ds.county_estimates
};

/// The joint posterior of the prepared dataset under a model configuration:
/// censored Poisson death likelihood, lognormal county/state prevalence
/// evidence, binomial ratio evidence, and the shrinkage prior hierarchy.
/// Exposes each likelihood component for diagnostics and the fused
/// value-and-analytic-gradient evaluation the sampler consumes.
class Posterior : public LogDensity {
 public:
  Posterior(const Dataset& ds, const ModelConfig& cfg, const LikelihoodMask* mask = nullptr);

  const std::shared_ptr<const ParameterLayout>& layout() const { return layout_; }
  const ModelConfig& config() const { return cfg_; }
  int county_count() const { return static_cast<int>(population_.size()); }

  DerivedRates county_rates(const ParameterVector& theta) const;
  double loglik_deaths(const ParameterVector& theta) const;
  double loglik_county_prev(const ParameterVector& theta) const;
  double loglik_state_prev(const ParameterVector& theta) const;
  double log_prior(const ParameterVector& theta) const;

  ModelTerms terms(const Eigen::VectorXd& z) const;

  int dim() const override { return layout_->dim; }
  double value_and_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const override;

 private:
  struct CountyEstimateView {
    int county;
    int r_idx;
    double y;
    double sd_fixed;   // used when shared_idx < 0
    int shared_idx;    // index into sigma_shared, or -1
  };
  struct StateEvidenceView {
    int state;
    double y;
    double sd;
    bool has_q = false;
    long long q_misuse = 0, q_oud = 0;
    double log_choose = 0.0;
    int r_idx = -1;
  };

  ModelConfig cfg_;
  std::shared_ptr<const ParameterLayout> layout_;
  Eigen::MatrixXd Xp_, Xm_;
  Eigen::VectorXd population_;
  std::vector<long long> deaths_;
  std::vector<char> suppressed_;
  Eigen::VectorXd lgamma_deaths_;
  long long threshold_ = 9;
  std::vector<int> county_state_;
  std::vector<std::string> county_ids_;
  std::vector<char> death_skipped_;
  std::vector<CountyEstimateView> county_ests_;
  std::vector<StateEvidenceView> state_evs_;
  std::vector<std::vector<int>> state_counties_;
  Eigen::VectorXd state_pop_;

  template <bool WithGrad>
  double evaluate(const Eigen::VectorXd& z, Eigen::VectorXd* grad, ModelTerms* parts) const;

  Eigen::VectorXd linear_predictor_p(const ParameterVector& theta) const;
  Eigen::VectorXd linear_predictor_m(const ParameterVector& theta) const;
};

}  // namespace countyprev

#endif  // COUNTYPREV_MODEL_HPP
