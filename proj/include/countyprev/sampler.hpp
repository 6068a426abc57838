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
#ifndef COUNTYPREV_SAMPLER_HPP
#define COUNTYPREV_SAMPLER_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "countyprev/rng.hpp"
#include "countyprev/target.hpp"

namespace countyprev {

struct SamplerConfig {
  int chains = 4;
  long long iterations = 50000;  // total per chain, warmup included
  long long warmup = 25000;
  int thin = 10;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 20150101;
  double init_jitter = 2.0;
  int max_init_retries = 100;

  void validate() const;
};

/// Retained draws per chain; a trailing remainder short of `thin` is dropped.
long long retained_per_chain(const SamplerConfig& cfg);

/// Dual-averaging step size controller (Hoffman & Gelman 2014, Sec. 3.2).
class DualAveraging {
 public:
  DualAveraging(double step_size_init, double target_accept);

  void update(double accept_prob);
  /// Current (noisy) iterate used while adapting.
  double step_size() const { return std::exp(log_eps_); }
  /// Averaged iterate to freeze at the end of adaptation.
  double adapted_step_size() const { return std::exp(log_eps_bar_); }
  void restart(double step_size_init);

 private:
  double mu_;
  double log_eps_;
  double log_eps_bar_ = 0.0;
  double h_bar_ = 0.0;
  double count_ = 1.0;
  double target_;
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
};

/// Streaming mean/variance (Welford).
class RunningMoments {
 public:
  void reset(int dim);
  void add(const Eigen::VectorXd& x);
  long long count() const { return n_; }
  Eigen::VectorXd variance() const;

 private:
  long long n_ = 0;
  Eigen::VectorXd mean_, m2_;
};

/// Everything one chain owns while sampling.
struct ChainState {
  Eigen::VectorXd position;
  double step_size = 1.0;
  Eigen::VectorXd inverse_mass_diag;  // estimated posterior variances
  DualAveraging dual_avg{1.0, 0.8};
  long long divergences = 0;
  long long treedepth_saturations = 0;
  double accept_sum = 0.0;
  long long accept_count = 0;
  int max_tree_depth = 10;
  double divergence_threshold = 1000.0;
  Rng rng{0};
};

struct TransitionInfo {
  double accept_stat = 0.0;
  bool divergent = false;
  int depth = 0;
  double energy = 0.0;  // Hamiltonian of the selected draw
  long long n_leapfrog = 0;
};

/// One multinomial no-U-turn update of `state.position`.
TransitionInfo nuts_transition(ChainState& state, const LogDensity& target);

/// One leapfrog step of the Hamiltonian flow: updates (z, p) in place,
/// leaves the gradient at the new position in `grad`, and returns the new
/// log density. `grad` must hold the gradient at the incoming z.
double leapfrog_step(const LogDensity& target, const Eigen::VectorXd& inverse_mass_diag, double eps,
                     Eigen::VectorXd& z, Eigen::VectorXd& p, Eigen::VectorXd& grad);

struct ChainStats {
  long long divergences = 0;            // post-warmup
  long long treedepth_saturations = 0;  // post-warmup
  double mean_accept = 0.0;             // post-warmup
  double step_size = 0.0;
  Eigen::VectorXd inverse_mass_diag;
};

struct ChainResult {
  Eigen::MatrixXd draws;  // retained x dim, unconstrained scale
  Eigen::VectorXd energy;
  std::vector<char> divergent;
  ChainStats stats;
};

/// Adaptation state carried over from a previous run to shorten warmup.
struct WarmStart {
  double step_size = 0.0;
  Eigen::VectorXd inverse_mass_diag;
};

/// Runs one chain: jittered initialization, warmup with dual-averaging step
/// size and windowed diagonal-mass estimation, then thinned sampling.
/// Deterministic given (cfg.seed, chain_index).
ChainResult run_chain(const SamplerConfig& cfg, int chain_index, const LogDensity& target,
                      const Eigen::VectorXd& init, const WarmStart* warm_start = nullptr);

}  // namespace countyprev

#endif  // COUNTYPREV_SAMPLER_HPP
