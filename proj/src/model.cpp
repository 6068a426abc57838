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
#include "countyprev/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "countyprev/data.hpp"
#include "countyprev/math.hpp"
#include "countyprev/util.hpp"

namespace countyprev {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<std::string> resolve_covariates(const Dataset& ds, const std::vector<std::string>& wanted,
                                            const char* block) {
  if (wanted.empty()) return ds.covariate_names;
  for (const auto& name : wanted) {
    if (std::find(ds.covariate_names.begin(), ds.covariate_names.end(), name) ==
        ds.covariate_names.end()) {
      throw ModelConfigError(std::string("covariate '") + name + "' in " + block +
                             " include-list is not in the dataset");
    }
  }
  return wanted;
}

/// Lognormal evidence term: log density of y under the moment-matched
/// lognormal with the given mean and sd, plus its partials in mean and sd.
struct LognormalObs {
  double ll;
  double d_mean;
  double d_sd;
};

LognormalObs lognormal_obs(double y, double mean, double sd) {
  if (!(mean > 0.0) || !(y > 0.0)) {
    return {kNegInf, 0.0, 0.0};
  }
  const double ratio = sd / mean;
  const double A = ratio * ratio;
  const double v2 = std::log1p(A);
  if (!(v2 > 0.0)) {
    return {kNegInf, 0.0, 0.0};
  }
  const double u = std::log(mean) - 0.5 * v2;
  const double w = std::log(y) - u;
  const double ll = -std::log(y) - 0.5 * (kLogTwoPi + std::log(v2)) - 0.5 * w * w / v2;

  const double dll_du = w / v2;
  const double dll_dv2 = -0.5 / v2 + 0.5 * w * w / (v2 * v2);
  const double dv2_dmean = -2.0 * A / ((1.0 + A) * mean);
  const double dv2_dsd = 2.0 * A / ((1.0 + A) * sd);
  const double du_dmean = 1.0 / mean - 0.5 * dv2_dmean;
  const double du_dsd = -0.5 * dv2_dsd;
  return {ll, dll_du * du_dmean + dll_dv2 * dv2_dmean, dll_du * du_dsd + dll_dv2 * dv2_dsd};
}

/// Half-Cauchy or Half-Normal shrinkage density with partials in the value
/// and in the (possibly parameter-dependent) scale.
struct ShrinkTerm {
  double ll;
  double d_x;
  double d_scale;
};

ShrinkTerm shrinkage_term(double x, double scale, ShrinkageFamily family) {
  if (family == ShrinkageFamily::HalfCauchy) {
    const double s2x2 = scale * scale + x * x;
    return {std::log(2.0 / M_PI) + std::log(scale) - std::log(s2x2), -2.0 * x / s2x2,
            1.0 / scale - 2.0 * scale / s2x2};
  }
  const double ll = std::log(2.0) - 0.5 * kLogTwoPi - std::log(scale) - 0.5 * x * x / (scale * scale);
  return {ll, -x / (scale * scale), -1.0 / scale + x * x / (scale * scale * scale)};
}

}  // namespace

int ParameterLayout::r_index_of_state(int state) const {
  const auto it = std::lower_bound(r_states.begin(), r_states.end(), state);
  if (it == r_states.end() || *it != state) return -1;
  return static_cast<int>(it - r_states.begin());
}

int ParameterLayout::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

std::shared_ptr<const ParameterLayout> ParameterLayout::create(const Dataset& ds, const ModelConfig& cfg) {
  auto layout = std::make_shared<ParameterLayout>();
  layout->cov_names_p = resolve_covariates(ds, cfg.covariates_p, "prevalence");
  layout->cov_names_m = resolve_covariates(ds, cfg.covariates_m, "mortality");
  layout->P = static_cast<int>(layout->cov_names_p.size());
  layout->M = static_cast<int>(layout->cov_names_m.size());
  layout->S = ds.state_count();
  layout->re_p = cfg.prevalence_random_intercept;
  layout->re_m = cfg.mortality_random_intercept;
  layout->gamma_constraint = cfg.gamma_constraint;
  layout->state_names = ds.state_ids;

  // A ratio parameter exists for states with county estimates or head-count
  // evidence; nothing else identifies it.
  std::set<int> r_states;
  for (const auto& est : ds.county_estimates) {
    r_states.insert(ds.county_state[static_cast<std::size_t>(ds.county_index.at(est.county_id))]);
  }
  for (const auto& ev : ds.state_evidence) {
    if (ev.q_misuse.has_value()) {
      r_states.insert(ds.state_index.at(ev.state_id));
    }
  }
  layout->r_states.assign(r_states.begin(), r_states.end());
  layout->R = static_cast<int>(layout->r_states.size());

  std::set<std::string> groups;
  for (const auto& est : ds.county_estimates) {
    if (est.sd_mode == SdMode::SharedUnknown) groups.insert(est.sd_group);
  }
  layout->shared_groups.assign(groups.begin(), groups.end());
  layout->G = static_cast<int>(layout->shared_groups.size());

  int off = 0;
  auto scalar = [&off](int& slot) {
    slot = off;
    off += 1;
  };
  auto block = [&off](int& slot, int len) {
    slot = off;
    off += len;
  };
  scalar(layout->beta0_p);
  block(layout->beta_p, layout->P);
  scalar(layout->beta0_m);
  block(layout->beta_m, layout->M);
  if (layout->re_p) {
    block(layout->b_p, layout->S);
    scalar(layout->sigma0_p);
  }
  if (layout->re_m) {
    block(layout->b_m, layout->S);
    scalar(layout->sigma0_m);
  }
  scalar(layout->gamma);
  block(layout->r, layout->R);
  block(layout->lambda_p, layout->P);
  block(layout->zeta_p, layout->P);
  if (layout->P > 0) scalar(layout->tau_p);
  block(layout->lambda_m, layout->M);
  block(layout->zeta_m, layout->M);
  if (layout->M > 0) scalar(layout->tau_m);
  block(layout->shared, layout->G);
  layout->dim = off;

  auto& names = layout->names;
  names.resize(static_cast<std::size_t>(layout->dim));
  names[static_cast<std::size_t>(layout->beta0_p)] = "beta0_p";
  names[static_cast<std::size_t>(layout->beta0_m)] = "beta0_m";
  for (int j = 0; j < layout->P; ++j) {
    names[static_cast<std::size_t>(layout->beta_p + j)] = "beta_p[" + layout->cov_names_p[static_cast<std::size_t>(j)] + "]";
    names[static_cast<std::size_t>(layout->lambda_p + j)] = "lambda_p[" + layout->cov_names_p[static_cast<std::size_t>(j)] + "]";
    names[static_cast<std::size_t>(layout->zeta_p + j)] = "zeta_p[" + layout->cov_names_p[static_cast<std::size_t>(j)] + "]";
  }
  for (int j = 0; j < layout->M; ++j) {
    names[static_cast<std::size_t>(layout->beta_m + j)] = "beta_m[" + layout->cov_names_m[static_cast<std::size_t>(j)] + "]";
    names[static_cast<std::size_t>(layout->lambda_m + j)] = "lambda_m[" + layout->cov_names_m[static_cast<std::size_t>(j)] + "]";
    names[static_cast<std::size_t>(layout->zeta_m + j)] = "zeta_m[" + layout->cov_names_m[static_cast<std::size_t>(j)] + "]";
  }
  if (layout->re_p) {
    for (int s = 0; s < layout->S; ++s) {
      names[static_cast<std::size_t>(layout->b_p + s)] = "b_p[" + layout->state_names[static_cast<std::size_t>(s)] + "]";
    }
    names[static_cast<std::size_t>(layout->sigma0_p)] = "sigma0_p";
  }
  if (layout->re_m) {
    for (int s = 0; s < layout->S; ++s) {
      names[static_cast<std::size_t>(layout->b_m + s)] = "b_m[" + layout->state_names[static_cast<std::size_t>(s)] + "]";
    }
    names[static_cast<std::size_t>(layout->sigma0_m)] = "sigma0_m";
  }
  names[static_cast<std::size_t>(layout->gamma)] = "gamma";
  for (int k = 0; k < layout->R; ++k) {
    names[static_cast<std::size_t>(layout->r + k)] =
        "r[" + layout->state_names[static_cast<std::size_t>(layout->r_states[static_cast<std::size_t>(k)])] + "]";
  }
  if (layout->P > 0) names[static_cast<std::size_t>(layout->tau_p)] = "tau_p";
  if (layout->M > 0) names[static_cast<std::size_t>(layout->tau_m)] = "tau_m";
  for (int g = 0; g < layout->G; ++g) {
    names[static_cast<std::size_t>(layout->shared + g)] = "sigma_co[" + layout->shared_groups[static_cast<std::size_t>(g)] + "]";
  }
  return layout;
}

bool ParameterVector::constrained_valid() const {
  if (!values.allFinite()) return false;
  const auto& L = *layout;
  auto positive = [&](int off, int len) {
    for (int i = 0; i < len; ++i) {
      if (!(values[off + i] > 0.0)) return false;
    }
    return true;
  };
  if (!positive(L.lambda_p, L.P) || !positive(L.zeta_p, L.P)) return false;
  if (!positive(L.lambda_m, L.M) || !positive(L.zeta_m, L.M)) return false;
  if (L.P > 0 && !positive(L.tau_p, 1)) return false;
  if (L.M > 0 && !positive(L.tau_m, 1)) return false;
  if (L.re_p && !positive(L.sigma0_p, 1)) return false;
  if (L.re_m && !positive(L.sigma0_m, 1)) return false;
  if (!positive(L.shared, L.G)) return false;
  if (!positive(L.gamma, 1)) return false;
  if (L.gamma_constraint == GammaConstraint::UnitInterval && !(values[L.gamma] < 1.0)) return false;
  for (int k = 0; k < L.R; ++k) {
    const double rv = values[L.r + k];
    if (!(rv > 0.0 && rv < 1.0)) return false;
  }
  return true;
}

Eigen::VectorXd to_unconstrained(const ParameterVector& theta) {
  if (!theta.values.allFinite()) {
    throw NumericError("to_unconstrained: non-finite parameter value");
  }
  const auto& L = *theta.layout;
  const auto& v = theta.values;
  Eigen::VectorXd z(L.dim);
  z[L.beta0_p] = v[L.beta0_p];
  z[L.beta0_m] = v[L.beta0_m];
  for (int j = 0; j < L.P; ++j) {
    z[L.lambda_p + j] = std::log(v[L.lambda_p + j]);
    z[L.beta_p + j] = v[L.beta_p + j] / v[L.lambda_p + j];
    z[L.zeta_p + j] = std::log(v[L.zeta_p + j]);
  }
  for (int j = 0; j < L.M; ++j) {
    z[L.lambda_m + j] = std::log(v[L.lambda_m + j]);
    z[L.beta_m + j] = v[L.beta_m + j] / v[L.lambda_m + j];
    z[L.zeta_m + j] = std::log(v[L.zeta_m + j]);
  }
  if (L.P > 0) z[L.tau_p] = std::log(v[L.tau_p]);
  if (L.M > 0) z[L.tau_m] = std::log(v[L.tau_m]);
  if (L.re_p) {
    z[L.sigma0_p] = std::log(v[L.sigma0_p]);
    for (int s = 0; s < L.S; ++s) z[L.b_p + s] = v[L.b_p + s] / v[L.sigma0_p];
  }
  if (L.re_m) {
    z[L.sigma0_m] = std::log(v[L.sigma0_m]);
    for (int s = 0; s < L.S; ++s) z[L.b_m + s] = v[L.b_m + s] / v[L.sigma0_m];
  }
  z[L.gamma] = L.gamma_constraint == GammaConstraint::PositiveUnbounded ? std::log(v[L.gamma])
                                                                        : logit(v[L.gamma]);
  for (int k = 0; k < L.R; ++k) z[L.r + k] = logit(v[L.r + k]);
  for (int g = 0; g < L.G; ++g) z[L.shared + g] = std::log(v[L.shared + g]);
  return z;
}

std::pair<ParameterVector, double> from_unconstrained(const Eigen::VectorXd& z,
                                                      std::shared_ptr<const ParameterLayout> layout) {
  if (!z.allFinite()) {
    throw NumericError("from_unconstrained: non-finite coordinate");
  }
  const auto& L = *layout;
  ParameterVector theta;
  theta.layout = std::move(layout);
  theta.values.resize(L.dim);
  auto& v = theta.values;
  double jac = 0.0;

  v[L.beta0_p] = z[L.beta0_p];
  v[L.beta0_m] = z[L.beta0_m];
  for (int j = 0; j < L.P; ++j) {
    const double lambda = std::exp(z[L.lambda_p + j]);
    v[L.lambda_p + j] = lambda;
    v[L.beta_p + j] = lambda * z[L.beta_p + j];
    jac += 2.0 * z[L.lambda_p + j];
    v[L.zeta_p + j] = std::exp(z[L.zeta_p + j]);
    jac += z[L.zeta_p + j];
  }
  for (int j = 0; j < L.M; ++j) {
    const double lambda = std::exp(z[L.lambda_m + j]);
    v[L.lambda_m + j] = lambda;
    v[L.beta_m + j] = lambda * z[L.beta_m + j];
    jac += 2.0 * z[L.lambda_m + j];
    v[L.zeta_m + j] = std::exp(z[L.zeta_m + j]);
    jac += z[L.zeta_m + j];
  }
  if (L.P > 0) {
    v[L.tau_p] = std::exp(z[L.tau_p]);
    jac += z[L.tau_p];
  }
  if (L.M > 0) {
    v[L.tau_m] = std::exp(z[L.tau_m]);
    jac += z[L.tau_m];
  }
  if (L.re_p) {
    const double sigma = std::exp(z[L.sigma0_p]);
    v[L.sigma0_p] = sigma;
    for (int s = 0; s < L.S; ++s) v[L.b_p + s] = sigma * z[L.b_p + s];
    jac += static_cast<double>(L.S + 1) * z[L.sigma0_p];
  }
  if (L.re_m) {
    const double sigma = std::exp(z[L.sigma0_m]);
    v[L.sigma0_m] = sigma;
    for (int s = 0; s < L.S; ++s) v[L.b_m + s] = sigma * z[L.b_m + s];
    jac += static_cast<double>(L.S + 1) * z[L.sigma0_m];
  }
  if (L.gamma_constraint == GammaConstraint::PositiveUnbounded) {
    v[L.gamma] = std::exp(z[L.gamma]);
    jac += z[L.gamma];
  } else {
    v[L.gamma] = inv_logit(z[L.gamma]);
    jac += -log1p_exp(z[L.gamma]) - log1p_exp(-z[L.gamma]);
  }
  for (int k = 0; k < L.R; ++k) {
    v[L.r + k] = inv_logit(z[L.r + k]);
    jac += -log1p_exp(z[L.r + k]) - log1p_exp(-z[L.r + k]);
  }
  for (int g = 0; g < L.G; ++g) {
    v[L.shared + g] = std::exp(z[L.shared + g]);
    jac += z[L.shared + g];
  }
  return {std::move(theta), jac};
}

Posterior::Posterior(const Dataset& ds, const ModelConfig& cfg, const LikelihoodMask* mask) : cfg_(cfg) {
  // The layout always derives from the full dataset so held-out refits keep
  // the same parameter space.
  layout_ = ParameterLayout::create(ds, cfg);
  const auto& L = *layout_;
  const int n = static_cast<int>(ds.counties.size());
  if (n > 0 && (L.P > 0 || L.M > 0) && !ds.standardized()) {
    throw ModelConfigError("dataset covariates must be standardized before model assembly");
  }

  std::vector<int> col_p(static_cast<std::size_t>(L.P)), col_m(static_cast<std::size_t>(L.M));
  auto col_of = [&ds](const std::string& name) {
    return static_cast<int>(std::find(ds.covariate_names.begin(), ds.covariate_names.end(), name) -
                            ds.covariate_names.begin());
  };
  for (int j = 0; j < L.P; ++j) col_p[static_cast<std::size_t>(j)] = col_of(L.cov_names_p[static_cast<std::size_t>(j)]);
  for (int j = 0; j < L.M; ++j) col_m[static_cast<std::size_t>(j)] = col_of(L.cov_names_m[static_cast<std::size_t>(j)]);

  Xp_.resize(n, L.P);
  Xm_.resize(n, L.M);
  population_.resize(n);
  lgamma_deaths_.resize(n);
  deaths_.resize(static_cast<std::size_t>(n), 0);
  suppressed_.resize(static_cast<std::size_t>(n), 0);
  county_state_ = ds.county_state;
  threshold_ = ds.suppression_threshold;
  county_ids_.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& c = ds.counties[static_cast<std::size_t>(i)];
    county_ids_.push_back(c.county_id);
    population_[i] = static_cast<double>(c.population);
    suppressed_[static_cast<std::size_t>(i)] = c.suppressed ? 1 : 0;
    if (c.suppressed) {
      lgamma_deaths_[i] = 0.0;
    } else {
      deaths_[static_cast<std::size_t>(i)] = *c.deaths;
      lgamma_deaths_[i] = std::lgamma(static_cast<double>(*c.deaths) + 1.0);
    }
    for (int j = 0; j < L.P; ++j) {
      Xp_(i, j) = *c.covariates[static_cast<std::size_t>(col_p[static_cast<std::size_t>(j)])];
    }
    for (int j = 0; j < L.M; ++j) {
      Xm_(i, j) = *c.covariates[static_cast<std::size_t>(col_m[static_cast<std::size_t>(j)])];
    }
  }

  state_counties_.resize(static_cast<std::size_t>(L.S));
  state_pop_ = Eigen::VectorXd::Zero(L.S);
  for (int i = 0; i < n; ++i) {
    state_counties_[static_cast<std::size_t>(county_state_[static_cast<std::size_t>(i)])].push_back(i);
    state_pop_[county_state_[static_cast<std::size_t>(i)]] += population_[i];
  }

  death_skipped_.assign(static_cast<std::size_t>(n), 0);
  std::set<int> skipped_estimates;
  if (mask != nullptr) {
    for (int i : mask->skip_death_counties) {
      if (i < 0 || i >= n) throw std::out_of_range("likelihood mask: county index out of range");
      death_skipped_[static_cast<std::size_t>(i)] = 1;
    }
    for (int e : mask->skip_county_estimates) {
      if (e < 0 || e >= static_cast<int>(ds.county_estimates.size())) {
        throw std::out_of_range("likelihood mask: estimate index out of range");
      }
      skipped_estimates.insert(e);
    }
  }

  int est_index = -1;
  for (const auto& est : ds.county_estimates) {
    ++est_index;
    if (skipped_estimates.count(est_index) > 0) continue;
    CountyEstimateView view;
    view.county = ds.county_index.at(est.county_id);
    const int state = ds.county_state[static_cast<std::size_t>(view.county)];
    view.r_idx = L.r_index_of_state(state);
    if (view.r_idx < 0) {
      throw ModelConfigError("county estimate for '" + est.county_id +
                             "' references a state with no ratio parameter");
    }
    view.y = est.prev_est;
    if (est.sd_mode == SdMode::FromCI) {
      view.shared_idx = -1;
      view.sd_fixed = std::max(sd_from_ci(*est.ci_lower, *est.ci_upper), kMinObservationSd);
    } else {
      view.sd_fixed = 0.0;
      view.shared_idx = static_cast<int>(
          std::lower_bound(L.shared_groups.begin(), L.shared_groups.end(), est.sd_group) -
          L.shared_groups.begin());
    }
    county_ests_.push_back(view);
  }

  for (const auto& ev : ds.state_evidence) {
    StateEvidenceView view;
    view.state = ds.state_index.at(ev.state_id);
    view.y = ev.prev_est;
    view.sd = std::max(sd_from_ci(ev.ci_lower, ev.ci_upper), kMinObservationSd);
    if (ev.q_misuse.has_value()) {
      if (*ev.q_oud > *ev.q_misuse) {
        throw IntegrityError("state '" + ev.state_id + "': q_oud exceeds q_misuse");
      }
      view.has_q = true;
      view.q_misuse = *ev.q_misuse;
      view.q_oud = *ev.q_oud;
      view.log_choose = std::lgamma(static_cast<double>(view.q_misuse) + 1.0) -
                        std::lgamma(static_cast<double>(view.q_oud) + 1.0) -
                        std::lgamma(static_cast<double>(view.q_misuse - view.q_oud) + 1.0);
      view.r_idx = L.r_index_of_state(view.state);
    }
    state_evs_.push_back(view);
  }
}

Eigen::VectorXd Posterior::linear_predictor_p(const ParameterVector& theta) const {
  Eigen::VectorXd lin = Eigen::VectorXd::Constant(population_.size(), theta.beta0_p());
  if (layout_->P > 0) lin.noalias() += Xp_ * theta.beta_p();
  if (layout_->re_p) {
    for (int i = 0; i < lin.size(); ++i) lin[i] += theta.values[layout_->b_p + county_state_[static_cast<std::size_t>(i)]];
  }
  return lin;
}

Eigen::VectorXd Posterior::linear_predictor_m(const ParameterVector& theta) const {
  Eigen::VectorXd lin = Eigen::VectorXd::Constant(population_.size(), theta.beta0_m());
  if (layout_->M > 0) lin.noalias() += Xm_ * theta.beta_m();
  if (layout_->re_m) {
    for (int i = 0; i < lin.size(); ++i) lin[i] += theta.values[layout_->b_m + county_state_[static_cast<std::size_t>(i)]];
  }
  return lin;
}

DerivedRates Posterior::county_rates(const ParameterVector& theta) const {
  DerivedRates rates;
  rates.p = linear_predictor_p(theta).unaryExpr([](double x) { return inv_logit(x); });
  rates.m = linear_predictor_m(theta).unaryExpr([](double x) { return inv_logit(x); });
  return rates;
}

double Posterior::loglik_deaths(const ParameterVector& theta) const {
  const DerivedRates rates = county_rates(theta);
  double ll = 0.0;
  for (int i = 0; i < population_.size(); ++i) {
    if (death_skipped_[static_cast<std::size_t>(i)]) continue;
    const double lam = rates.m[i] * rates.p[i] * population_[i];
    if (!std::isfinite(lam)) {
      throw NumericError("death rate overflow for county '" + county_ids_[static_cast<std::size_t>(i)] + "'");
    }
    if (suppressed_[static_cast<std::size_t>(i)]) {
      ll += log_poisson_cdf(threshold_, lam);
    } else {
      ll += log_poisson_pmf(deaths_[static_cast<std::size_t>(i)], lam);
    }
  }
  return ll;
}

double Posterior::loglik_county_prev(const ParameterVector& theta) const {
  const DerivedRates rates = county_rates(theta);
  double ll = 0.0;
  for (const auto& est : county_ests_) {
    const double mean = rates.p[est.county] * theta.r()[est.r_idx];
    const double sd = est.shared_idx >= 0
                          ? std::max(theta.sigma_shared()[est.shared_idx], kMinObservationSd)
                          : est.sd_fixed;
    ll += lognormal_obs(est.y, mean, sd).ll;
  }
  return ll;
}

double Posterior::loglik_state_prev(const ParameterVector& theta) const {
  const DerivedRates rates = county_rates(theta);
  double ll = 0.0;
  for (const auto& ev : state_evs_) {
    double weighted = 0.0;
    for (int i : state_counties_[static_cast<std::size_t>(ev.state)]) {
      weighted += rates.p[i] * population_[i];
    }
    weighted /= state_pop_[ev.state];
    ll += lognormal_obs(ev.y, theta.gamma() * weighted, ev.sd).ll;
    if (ev.has_q && ev.r_idx >= 0) {
      ll += log_binomial_pmf(ev.q_oud, ev.q_misuse, theta.r()[ev.r_idx]);
    }
  }
  return ll;
}

double Posterior::log_prior(const ParameterVector& theta) const {
  const auto& L = *layout_;
  const auto& prior = cfg_.prior;
  double ll = 0.0;
  ll += log_normal_pdf(theta.beta0_p(), 0.0, prior.intercept_sd);
  ll += log_normal_pdf(theta.beta0_m(), 0.0, prior.intercept_sd);

  auto shrink_block = [&](int P, auto beta, auto lambda, auto zeta, double tau) {
    for (int j = 0; j < P; ++j) {
      ll += log_normal_pdf(beta[j], 0.0, lambda[j]);
      ll += shrinkage_term(lambda[j], tau * zeta[j], prior.shrinkage_family).ll;
      ll += shrinkage_term(zeta[j], prior.shrinkage_scale, prior.shrinkage_family).ll;
    }
    if (P > 0) {
      ll += shrinkage_term(tau, prior.shrinkage_scale, prior.shrinkage_family).ll;
    }
  };
  shrink_block(L.P, theta.beta_p(), theta.lambda_p(), theta.zeta_p(), L.P > 0 ? theta.tau_p() : 1.0);
  shrink_block(L.M, theta.beta_m(), theta.lambda_m(), theta.zeta_m(), L.M > 0 ? theta.tau_m() : 1.0);

  if (L.re_p) {
    for (int s = 0; s < L.S; ++s) ll += log_normal_pdf(theta.b_p()[s], 0.0, theta.sigma0_p());
    ll += log_half_normal_pdf(theta.sigma0_p(), prior.halfnormal_scale);
  }
  if (L.re_m) {
    for (int s = 0; s < L.S; ++s) ll += log_normal_pdf(theta.b_m()[s], 0.0, theta.sigma0_m());
    ll += log_half_normal_pdf(theta.sigma0_m(), prior.halfnormal_scale);
  }
  ll += log_half_normal_pdf(theta.gamma(), prior.halfnormal_scale);
  for (int k = 0; k < L.R; ++k) {
    // Half-Normal mass truncated to (0,1) without renormalization.
    ll += log_half_normal_pdf(theta.r()[k], prior.halfnormal_scale);
  }
  for (int g = 0; g < L.G; ++g) {
    ll += log_half_normal_pdf(theta.sigma_shared()[g], prior.halfnormal_scale);
  }
  return ll;
}

ModelTerms Posterior::terms(const Eigen::VectorXd& z) const {
  ModelTerms parts;
  auto [theta, jac] = from_unconstrained(z, layout_);
  parts.deaths = loglik_deaths(theta);
  parts.county_prev = loglik_county_prev(theta);
  parts.state_prev = loglik_state_prev(theta);
  parts.prior = log_prior(theta);
  parts.jacobian = jac;
  return parts;
}

double Posterior::value_and_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const {
  return evaluate<true>(z, &grad, nullptr);
}

template <bool WithGrad>
double Posterior::evaluate(const Eigen::VectorXd& z, Eigen::VectorXd* grad, ModelTerms* parts) const {
  const auto& L = *layout_;
  if (!z.allFinite() || z.size() != L.dim) {
    return kNegInf;
  }
  auto [theta, jac] = from_unconstrained(z, layout_);
  const auto& v = theta.values;
  if (!v.allFinite()) {
    return kNegInf;  // exp overflow far out in the tails
  }

  const int n = static_cast<int>(population_.size());
  const Eigen::VectorXd linp = linear_predictor_p(theta);
  const Eigen::VectorXd linm = linear_predictor_m(theta);
  const Eigen::VectorXd p = linp.unaryExpr([](double x) { return inv_logit(x); });
  const Eigen::VectorXd m = linm.unaryExpr([](double x) { return inv_logit(x); });

  // Constrained-scale gradient accumulator; chained to z at the end.
  Eigen::VectorXd gC;
  Eigen::VectorXd glinp, glinm;
  if constexpr (WithGrad) {
    gC = Eigen::VectorXd::Zero(L.dim);
    glinp = Eigen::VectorXd::Zero(n);
    glinm = Eigen::VectorXd::Zero(n);
  }

  // Censored Poisson death likelihood.
  double ll_deaths = 0.0;
  for (int i = 0; i < n; ++i) {
    if (death_skipped_[static_cast<std::size_t>(i)]) continue;
    const double lam = m[i] * p[i] * population_[i];
    if (!std::isfinite(lam)) return kNegInf;
    double dll_dlam;
    if (suppressed_[static_cast<std::size_t>(i)]) {
      const double lcdf = log_poisson_cdf(threshold_, lam);
      ll_deaths += lcdf;
      dll_dlam = lam > 0.0 ? -std::exp(log_poisson_pmf(threshold_, lam) - lcdf) : 0.0;
    } else {
      const long long d = deaths_[static_cast<std::size_t>(i)];
      if (lam <= 0.0) {
        if (d > 0) return kNegInf;
        dll_dlam = -1.0;
      } else {
        ll_deaths += static_cast<double>(d) * std::log(lam) - lam - lgamma_deaths_[i];
        dll_dlam = static_cast<double>(d) / lam - 1.0;
      }
    }
    if constexpr (WithGrad) {
      glinp[i] += dll_dlam * lam * (1.0 - p[i]);
      glinm[i] += dll_dlam * lam * (1.0 - m[i]);
    }
  }
  if (!std::isfinite(ll_deaths)) return kNegInf;

  // County-level prevalence evidence.
  double ll_co = 0.0;
  for (const auto& est : county_ests_) {
    const double rk = v[L.r + est.r_idx];
    const double mean = p[est.county] * rk;
    double sd, dsd_dparam = 0.0;
    if (est.shared_idx >= 0) {
      const double sg = v[L.shared + est.shared_idx];
      sd = std::max(sg, kMinObservationSd);
      dsd_dparam = sg > kMinObservationSd ? 1.0 : 0.0;
    } else {
      sd = est.sd_fixed;
    }
    const LognormalObs obs = lognormal_obs(est.y, mean, sd);
    if (!std::isfinite(obs.ll)) return kNegInf;
    ll_co += obs.ll;
    if constexpr (WithGrad) {
      glinp[est.county] += obs.d_mean * rk * p[est.county] * (1.0 - p[est.county]);
      gC[L.r + est.r_idx] += obs.d_mean * p[est.county];
      if (est.shared_idx >= 0) {
        gC[L.shared + est.shared_idx] += obs.d_sd * dsd_dparam;
      }
    }
  }

  // State-level prevalence and ratio evidence.
  double ll_st = 0.0;
  const double gamma = v[L.gamma];
  for (const auto& ev : state_evs_) {
    const auto& members = state_counties_[static_cast<std::size_t>(ev.state)];
    double weighted = 0.0;
    for (int i : members) weighted += p[i] * population_[i];
    weighted /= state_pop_[ev.state];
    const LognormalObs obs = lognormal_obs(ev.y, gamma * weighted, ev.sd);
    if (!std::isfinite(obs.ll)) return kNegInf;
    ll_st += obs.ll;
    if constexpr (WithGrad) {
      gC[L.gamma] += obs.d_mean * weighted;
      const double coef = obs.d_mean * gamma / state_pop_[ev.state];
      for (int i : members) {
        glinp[i] += coef * population_[i] * p[i] * (1.0 - p[i]);
      }
    }
    if (ev.has_q && ev.r_idx >= 0) {
      const double rk = v[L.r + ev.r_idx];
      const double lb = ev.log_choose +
                        (ev.q_oud > 0 ? static_cast<double>(ev.q_oud) * std::log(rk) : 0.0) +
                        (ev.q_oud < ev.q_misuse
                             ? static_cast<double>(ev.q_misuse - ev.q_oud) * std::log1p(-rk)
                             : 0.0);
      if (!std::isfinite(lb)) return kNegInf;
      ll_st += lb;
      if constexpr (WithGrad) {
        double d = 0.0;
        if (ev.q_oud > 0) d += static_cast<double>(ev.q_oud) / rk;
        if (ev.q_oud < ev.q_misuse) d -= static_cast<double>(ev.q_misuse - ev.q_oud) / (1.0 - rk);
        gC[L.r + ev.r_idx] += d;
      }
    }
  }

  // Priors on the constrained scale.
  const auto& prior = cfg_.prior;
  double ll_prior = 0.0;
  ll_prior += log_normal_pdf(v[L.beta0_p], 0.0, prior.intercept_sd);
  ll_prior += log_normal_pdf(v[L.beta0_m], 0.0, prior.intercept_sd);
  if constexpr (WithGrad) {
    gC[L.beta0_p] += -v[L.beta0_p] / (prior.intercept_sd * prior.intercept_sd);
    gC[L.beta0_m] += -v[L.beta0_m] / (prior.intercept_sd * prior.intercept_sd);
  }

  auto shrink_block = [&](int P, int beta_off, int lambda_off, int zeta_off, int tau_off) {
    if (P == 0) return;
    const double tau = v[tau_off];
    for (int j = 0; j < P; ++j) {
      const double beta = v[beta_off + j];
      const double lambda = v[lambda_off + j];
      const double zeta = v[zeta_off + j];
      ll_prior += log_normal_pdf(beta, 0.0, lambda);
      const ShrinkTerm on_lambda = shrinkage_term(lambda, tau * zeta, prior.shrinkage_family);
      const ShrinkTerm on_zeta = shrinkage_term(zeta, prior.shrinkage_scale, prior.shrinkage_family);
      ll_prior += on_lambda.ll + on_zeta.ll;
      if constexpr (WithGrad) {
        gC[beta_off + j] += -beta / (lambda * lambda);
        gC[lambda_off + j] += beta * beta / (lambda * lambda * lambda) - 1.0 / lambda + on_lambda.d_x;
        gC[zeta_off + j] += on_lambda.d_scale * tau + on_zeta.d_x;
        gC[tau_off] += on_lambda.d_scale * zeta;
      }
    }
    const ShrinkTerm on_tau = shrinkage_term(tau, prior.shrinkage_scale, prior.shrinkage_family);
    ll_prior += on_tau.ll;
    if constexpr (WithGrad) {
      gC[tau_off] += on_tau.d_x;
    }
  };
  shrink_block(L.P, L.beta_p, L.lambda_p, L.zeta_p, L.tau_p);
  shrink_block(L.M, L.beta_m, L.lambda_m, L.zeta_m, L.tau_m);

  auto re_block = [&](bool active, int b_off, int sigma_off) {
    if (!active) return;
    const double sigma = v[sigma_off];
    for (int s = 0; s < L.S; ++s) {
      const double b = v[b_off + s];
      ll_prior += log_normal_pdf(b, 0.0, sigma);
      if constexpr (WithGrad) {
        gC[b_off + s] += -b / (sigma * sigma);
        gC[sigma_off] += b * b / (sigma * sigma * sigma) - 1.0 / sigma;
      }
    }
    ll_prior += log_half_normal_pdf(sigma, prior.halfnormal_scale);
    if constexpr (WithGrad) {
      gC[sigma_off] += -sigma / (prior.halfnormal_scale * prior.halfnormal_scale);
    }
  };
  re_block(L.re_p, L.b_p, L.sigma0_p);
  re_block(L.re_m, L.b_m, L.sigma0_m);

  const double hn2 = prior.halfnormal_scale * prior.halfnormal_scale;
  ll_prior += log_half_normal_pdf(gamma, prior.halfnormal_scale);
  if constexpr (WithGrad) gC[L.gamma] += -gamma / hn2;
  for (int k = 0; k < L.R; ++k) {
    ll_prior += log_half_normal_pdf(v[L.r + k], prior.halfnormal_scale);
    if constexpr (WithGrad) gC[L.r + k] += -v[L.r + k] / hn2;
  }
  for (int g = 0; g < L.G; ++g) {
    ll_prior += log_half_normal_pdf(v[L.shared + g], prior.halfnormal_scale);
    if constexpr (WithGrad) gC[L.shared + g] += -v[L.shared + g] / hn2;
  }

  const double total = ll_deaths + ll_co + ll_st + ll_prior + jac;
  if (!std::isfinite(total)) return kNegInf;
  if (parts != nullptr) {
    *parts = {ll_deaths, ll_co, ll_st, ll_prior, jac};
  }
  if constexpr (!WithGrad) {
    return total;
  }

  // Fold the per-county linear-predictor gradients into the coefficient and
  // random-effect slots.
  gC[L.beta0_p] += glinp.sum();
  gC[L.beta0_m] += glinm.sum();
  if (L.P > 0) gC.segment(L.beta_p, L.P).noalias() += Xp_.transpose() * glinp;
  if (L.M > 0) gC.segment(L.beta_m, L.M).noalias() += Xm_.transpose() * glinm;
  if (L.re_p) {
    for (int i = 0; i < n; ++i) gC[L.b_p + county_state_[static_cast<std::size_t>(i)]] += glinp[i];
  }
  if (L.re_m) {
    for (int i = 0; i < n; ++i) gC[L.b_m + county_state_[static_cast<std::size_t>(i)]] += glinm[i];
  }

  // Chain rule from constrained values to sampler coordinates, including the
  // derivative of the log-Jacobian.
  grad->resize(L.dim);
  Eigen::VectorXd& g = *grad;
  g[L.beta0_p] = gC[L.beta0_p];
  g[L.beta0_m] = gC[L.beta0_m];
  auto chain_coef_block = [&](int P, int beta_off, int lambda_off, int zeta_off, int tau_off) {
    for (int j = 0; j < P; ++j) {
      const double lambda = v[lambda_off + j];
      g[beta_off + j] = gC[beta_off + j] * lambda;
      g[lambda_off + j] = gC[beta_off + j] * v[beta_off + j] + gC[lambda_off + j] * lambda + 2.0;
      g[zeta_off + j] = gC[zeta_off + j] * v[zeta_off + j] + 1.0;
    }
    if (P > 0) g[tau_off] = gC[tau_off] * v[tau_off] + 1.0;
  };
  chain_coef_block(L.P, L.beta_p, L.lambda_p, L.zeta_p, L.tau_p);
  chain_coef_block(L.M, L.beta_m, L.lambda_m, L.zeta_m, L.tau_m);
  auto chain_re_block = [&](bool active, int b_off, int sigma_off) {
    if (!active) return;
    const double sigma = v[sigma_off];
    double acc = 0.0;
    for (int s = 0; s < L.S; ++s) {
      g[b_off + s] = gC[b_off + s] * sigma;
      acc += gC[b_off + s] * v[b_off + s];
    }
    g[sigma_off] = acc + gC[sigma_off] * sigma + static_cast<double>(L.S + 1);
  };
  chain_re_block(L.re_p, L.b_p, L.sigma0_p);
  chain_re_block(L.re_m, L.b_m, L.sigma0_m);
  if (L.gamma_constraint == GammaConstraint::PositiveUnbounded) {
    g[L.gamma] = gC[L.gamma] * gamma + 1.0;
  } else {
    g[L.gamma] = gC[L.gamma] * gamma * (1.0 - gamma) + 1.0 - 2.0 * gamma;
  }
  for (int k = 0; k < L.R; ++k) {
    const double rk = v[L.r + k];
    g[L.r + k] = gC[L.r + k] * rk * (1.0 - rk) + 1.0 - 2.0 * rk;
  }
  for (int gidx = 0; gidx < L.G; ++gidx) {
    g[L.shared + gidx] = gC[L.shared + gidx] * v[L.shared + gidx] + 1.0;
  }
  return total;
}

template double Posterior::evaluate<true>(const Eigen::VectorXd&, Eigen::VectorXd*, ModelTerms*) const;
template double Posterior::evaluate<false>(const Eigen::VectorXd&, Eigen::VectorXd*, ModelTerms*) const;

}  // namespace countyprev
