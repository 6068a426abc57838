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
#include "countyprev/sampler.hpp"

#include <cmath>
#include <stdexcept>

#include "countyprev/math.hpp"
#include "countyprev/util.hpp"

namespace countyprev {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double kinetic_energy(const Eigen::VectorXd& p, const Eigen::VectorXd& inverse_mass) {
  return 0.5 * p.dot(inverse_mass.cwiseProduct(p));
}

struct PhasePoint {
  Eigen::VectorXd z;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double logp = -kInf;
};

/// Trajectory endpoints and the multinomial proposal of a subtree.
struct Tree {
  PhasePoint minus, plus;
  Eigen::VectorXd prop;
  double prop_energy = kInf;
  double log_weight = -kInf;  // logsumexp of (H0 - H) over leaves
  bool turning = false;
  bool divergent = false;
};

bool is_uturn(const PhasePoint& minus, const PhasePoint& plus, const Eigen::VectorXd& inverse_mass) {
  const Eigen::VectorXd dz = plus.z - minus.z;
  return dz.dot(inverse_mass.cwiseProduct(minus.p)) < 0.0 ||
         dz.dot(inverse_mass.cwiseProduct(plus.p)) < 0.0;
}

struct TrajectoryContext {
  const LogDensity& target;
  const Eigen::VectorXd& inverse_mass;
  double eps = 1.0;
  double h0 = 0.0;
  double divergence_threshold = 1000.0;
  Rng* rng = nullptr;
  double sum_accept = 0.0;
  long long n_states = 0;
  long long n_leapfrog = 0;
};

PhasePoint leapfrog(TrajectoryContext& ctx, const PhasePoint& from, double eps) {
  PhasePoint out;
  const Eigen::VectorXd p_half = from.p + 0.5 * eps * from.grad;
  out.z = from.z + eps * ctx.inverse_mass.cwiseProduct(p_half);
  out.logp = ctx.target.value_and_gradient(out.z, out.grad);
  if (std::isfinite(out.logp)) {
    out.p = p_half + 0.5 * eps * out.grad;
  } else {
    out.logp = -kInf;
    out.grad = Eigen::VectorXd::Zero(from.z.size());
    out.p = p_half;
  }
  ++ctx.n_leapfrog;
  return out;
}

Tree build_tree(TrajectoryContext& ctx, int depth, int direction, const PhasePoint& from) {
  if (depth == 0) {
    Tree leaf;
    PhasePoint pp = leapfrog(ctx, from, direction * ctx.eps);
    const double energy = std::isfinite(pp.logp) ? -pp.logp + kinetic_energy(pp.p, ctx.inverse_mass) : kInf;
    const double dh = energy - ctx.h0;
    leaf.divergent = !std::isfinite(energy) || dh > ctx.divergence_threshold;
    leaf.log_weight = -dh;
    leaf.prop = pp.z;
    leaf.prop_energy = energy;
    ctx.sum_accept += dh > 0.0 ? std::exp(-dh) : 1.0;
    ctx.n_states += 1;
    leaf.minus = pp;
    leaf.plus = std::move(pp);
    return leaf;
  }

  Tree first = build_tree(ctx, depth - 1, direction, from);
  if (first.divergent || first.turning) {
    return first;
  }
  const PhasePoint& grow_from = direction > 0 ? first.plus : first.minus;
  Tree second = build_tree(ctx, depth - 1, direction, grow_from);
  Tree merged;
  merged.divergent = second.divergent;
  merged.turning = second.turning;
  merged.minus = direction > 0 ? std::move(first.minus) : std::move(second.minus);
  merged.plus = direction > 0 ? std::move(second.plus) : std::move(first.plus);
  merged.log_weight = log_add_exp(first.log_weight, second.log_weight);
  if (merged.divergent || merged.turning) {
    return merged;
  }
  // Multinomial draw between the two halves, proportional to their weights.
  if (std::log(ctx.rng->uniform()) < second.log_weight - merged.log_weight) {
    merged.prop = std::move(second.prop);
    merged.prop_energy = second.prop_energy;
  } else {
    merged.prop = std::move(first.prop);
    merged.prop_energy = first.prop_energy;
  }
  merged.turning = is_uturn(merged.minus, merged.plus, ctx.inverse_mass);
  return merged;
}

double find_reasonable_step_size(const LogDensity& target, const Eigen::VectorXd& inverse_mass,
                                 const Eigen::VectorXd& position, Rng& rng) {
  TrajectoryContext ctx{target, inverse_mass};
  PhasePoint start;
  start.z = position;
  start.logp = target.value_and_gradient(start.z, start.grad);
  if (!std::isfinite(start.logp)) {
    return 1.0;
  }
  start.p.resize(position.size());
  for (int i = 0; i < start.p.size(); ++i) {
    start.p[i] = rng.normal() / std::sqrt(inverse_mass[i]);
  }
  const double h0 = -start.logp + kinetic_energy(start.p, inverse_mass);

  double eps = 1.0;
  auto log_accept = [&](double e) {
    PhasePoint next = leapfrog(ctx, start, e);
    if (!std::isfinite(next.logp)) return -kInf;
    const double h1 = -next.logp + kinetic_energy(next.p, inverse_mass);
    return h0 - h1;
  };
  double la = log_accept(eps);
  const double dir = la > std::log(0.5) ? 1.0 : -1.0;
  for (int iter = 0; iter < 50; ++iter) {
    if (dir > 0.0 && !(la > std::log(0.5))) break;
    if (dir < 0.0 && !(la < std::log(0.5))) break;
    eps *= dir > 0.0 ? 2.0 : 0.5;
    if (eps > 1e7 || eps < 1e-10) break;
    la = log_accept(eps);
  }
  return eps;
}

/// Mass-estimation window ends within warmup (step-size-only buffers at both
/// ends, doubling windows in between).
std::vector<long long> mass_window_ends(long long warmup, long long init_buffer, long long term_buffer,
                                        long long base_window) {
  std::vector<long long> ends;
  if (warmup < init_buffer + term_buffer + base_window) {
    return ends;
  }
  long long start = init_buffer;
  long long size = base_window;
  while (true) {
    long long end = start + size;
    if (end + term_buffer + 2 * size > warmup) {
      ends.push_back(warmup - term_buffer);
      break;
    }
    ends.push_back(end);
    start = end;
    size *= 2;
  }
  return ends;
}

}  // namespace

double leapfrog_step(const LogDensity& target, const Eigen::VectorXd& inverse_mass_diag, double eps,
                     Eigen::VectorXd& z, Eigen::VectorXd& p, Eigen::VectorXd& grad) {
  p += 0.5 * eps * grad;
  z += eps * inverse_mass_diag.cwiseProduct(p);
  const double logp = target.value_and_gradient(z, grad);
  if (std::isfinite(logp)) {
    p += 0.5 * eps * grad;
  }
  return logp;
}

void SamplerConfig::validate() const {
  if (chains < 1) throw std::domain_error("sampler: chains must be >= 1");
  if (iterations < 1) throw std::domain_error("sampler: iterations must be >= 1");
  if (warmup < 0 || warmup > iterations) {
    throw std::domain_error("sampler: require 0 <= warmup <= iterations");
  }
  if (thin < 1) throw std::domain_error("sampler: thin must be >= 1");
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw std::domain_error("sampler: target_accept must lie in (0, 1)");
  }
  if (max_tree_depth < 1 || max_tree_depth > 16) {
    throw std::domain_error("sampler: max_tree_depth must lie in [1, 16]");
  }
  if (!(init_jitter > 0.0)) throw std::domain_error("sampler: init_jitter must be positive");
}

long long retained_per_chain(const SamplerConfig& cfg) {
  return (cfg.iterations - cfg.warmup) / cfg.thin;
}

DualAveraging::DualAveraging(double step_size_init, double target_accept)
    : mu_(std::log(10.0 * step_size_init)), log_eps_(std::log(step_size_init)), target_(target_accept) {}

void DualAveraging::restart(double step_size_init) {
  mu_ = std::log(10.0 * step_size_init);
  log_eps_ = std::log(step_size_init);
  log_eps_bar_ = 0.0;
  h_bar_ = 0.0;
  count_ = 1.0;
}

void DualAveraging::update(double accept_prob) {
  if (std::isnan(accept_prob)) {
    throw NumericError("dual averaging: acceptance statistic is NaN");
  }
  const double w = 1.0 / (count_ + kT0);
  h_bar_ = (1.0 - w) * h_bar_ + w * (target_ - accept_prob);
  log_eps_ = mu_ - std::sqrt(count_) / kGamma * h_bar_;
  const double w2 = std::pow(count_, -kKappa);
  log_eps_bar_ = w2 * log_eps_ + (1.0 - w2) * log_eps_bar_;
  count_ += 1.0;
}

void RunningMoments::reset(int dim) {
  n_ = 0;
  mean_ = Eigen::VectorXd::Zero(dim);
  m2_ = Eigen::VectorXd::Zero(dim);
}

void RunningMoments::add(const Eigen::VectorXd& x) {
  ++n_;
  const Eigen::VectorXd delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta.cwiseProduct(x - mean_);
}

Eigen::VectorXd RunningMoments::variance() const {
  if (n_ < 2) return Eigen::VectorXd::Ones(mean_.size());
  return m2_ / static_cast<double>(n_ - 1);
}

TransitionInfo nuts_transition(ChainState& state, const LogDensity& target) {
  TrajectoryContext ctx{target, state.inverse_mass_diag};
  ctx.eps = state.step_size;
  ctx.divergence_threshold = state.divergence_threshold;
  ctx.rng = &state.rng;

  PhasePoint start;
  start.z = state.position;
  start.logp = target.value_and_gradient(start.z, start.grad);
  if (!std::isfinite(start.logp) || !start.grad.allFinite()) {
    throw NumericError("nuts_transition: non-finite target or gradient at the current position");
  }
  start.p.resize(start.z.size());
  for (int i = 0; i < start.p.size(); ++i) {
    start.p[i] = state.rng.normal() / std::sqrt(state.inverse_mass_diag[i]);
  }
  ctx.h0 = -start.logp + kinetic_energy(start.p, state.inverse_mass_diag);

  Tree trajectory;
  trajectory.minus = start;
  trajectory.plus = start;
  trajectory.prop = start.z;
  trajectory.prop_energy = ctx.h0;
  trajectory.log_weight = 0.0;

  TransitionInfo info;
  int depth = 0;
  for (; depth < state.max_tree_depth; ++depth) {
    const int direction = state.rng.uniform() < 0.5 ? -1 : 1;
    const PhasePoint& grow_from = direction > 0 ? trajectory.plus : trajectory.minus;
    Tree subtree = build_tree(ctx, depth, direction, grow_from);
    if (subtree.divergent) {
      info.divergent = true;
      break;
    }
    if (subtree.turning) {
      break;
    }
    // Biased progressive sampling favors the fresh half of the trajectory.
    if (std::log(state.rng.uniform()) < subtree.log_weight - trajectory.log_weight) {
      trajectory.prop = std::move(subtree.prop);
      trajectory.prop_energy = subtree.prop_energy;
    }
    trajectory.log_weight = log_add_exp(trajectory.log_weight, subtree.log_weight);
    if (direction > 0) {
      trajectory.plus = std::move(subtree.plus);
    } else {
      trajectory.minus = std::move(subtree.minus);
    }
    if (is_uturn(trajectory.minus, trajectory.plus, state.inverse_mass_diag)) {
      ++depth;
      break;
    }
  }
  if (depth >= state.max_tree_depth) {
    ++state.treedepth_saturations;
  }
  if (info.divergent) {
    ++state.divergences;
  }

  info.depth = depth;
  info.accept_stat = ctx.n_states > 0 ? ctx.sum_accept / static_cast<double>(ctx.n_states) : 0.0;
  info.energy = trajectory.prop_energy;
  info.n_leapfrog = ctx.n_leapfrog;
  state.position = std::move(trajectory.prop);
  state.accept_sum += info.accept_stat;
  state.accept_count += 1;
  return info;
}

ChainResult run_chain(const SamplerConfig& cfg, int chain_index, const LogDensity& target,
                      const Eigen::VectorXd& init, const WarmStart* warm_start) {
  cfg.validate();
  const int dim = target.dim();
  if (init.size() != dim) {
    throw std::invalid_argument("run_chain: init dimension mismatch");
  }

  ChainState st;
  st.rng = Rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(chain_index)));
  st.max_tree_depth = cfg.max_tree_depth;
  st.inverse_mass_diag = warm_start != nullptr && warm_start->inverse_mass_diag.size() == dim
                             ? warm_start->inverse_mass_diag
                             : Eigen::VectorXd::Ones(dim);

  // Initialization: the supplied point first, then jitter around it.
  Eigen::VectorXd grad;
  bool initialized = false;
  for (int attempt = 0; attempt <= cfg.max_init_retries; ++attempt) {
    Eigen::VectorXd candidate = init;
    if (attempt > 0) {
      for (int i = 0; i < dim; ++i) {
        candidate[i] += st.rng.uniform(-cfg.init_jitter, cfg.init_jitter);
      }
    }
    const double v = target.value_and_gradient(candidate, grad);
    if (std::isfinite(v) && grad.size() == dim && grad.allFinite()) {
      st.position = std::move(candidate);
      initialized = true;
      break;
    }
  }
  if (!initialized) {
    throw NumericError("run_chain: no finite initialization found after " +
                       std::to_string(cfg.max_init_retries) + " retries");
  }

  st.step_size = warm_start != nullptr && warm_start->step_size > 0.0 ? warm_start->step_size : 1.0;

  const bool adapting = cfg.warmup > 0;
  if (adapting && warm_start == nullptr) {
    st.step_size = find_reasonable_step_size(target, st.inverse_mass_diag, st.position, st.rng);
  }
  st.dual_avg = DualAveraging(st.step_size, cfg.target_accept);

  const auto window_ends = mass_window_ends(cfg.warmup, 75, 50, 25);
  std::size_t window_idx = 0;
  RunningMoments moments;
  moments.reset(dim);

  for (long long t = 0; t < cfg.warmup; ++t) {
    st.step_size = st.dual_avg.step_size();
    const TransitionInfo info = nuts_transition(st, target);
    st.dual_avg.update(info.accept_stat);
    if (window_idx < window_ends.size()) {
      if (t >= 75) moments.add(st.position);
      if (t + 1 == window_ends[window_idx]) {
        // Regularized variance estimate, shrunk toward unit scale.
        const double nn = static_cast<double>(moments.count());
        const Eigen::VectorXd var = moments.variance();
        st.inverse_mass_diag =
            ((nn / (nn + 5.0)) * var.array() + (5.0 / (nn + 5.0)) * 1e-3).matrix();
        moments.reset(dim);
        ++window_idx;
        const double eps = find_reasonable_step_size(target, st.inverse_mass_diag, st.position, st.rng);
        st.dual_avg.restart(eps);
      }
    }
  }
  if (adapting) {
    st.step_size = st.dual_avg.adapted_step_size();
  }

  // Post-warmup bookkeeping starts clean.
  st.divergences = 0;
  st.treedepth_saturations = 0;
  st.accept_sum = 0.0;
  st.accept_count = 0;

  const long long keep = retained_per_chain(cfg);
  ChainResult result;
  result.draws.resize(keep, dim);
  result.energy.resize(keep);
  result.divergent.assign(static_cast<std::size_t>(keep), 0);

  long long kept = 0;
  const long long post = cfg.iterations - cfg.warmup;
  for (long long t = 0; t < post; ++t) {
    const TransitionInfo info = nuts_transition(st, target);
    if ((t + 1) % cfg.thin == 0 && kept < keep) {
      result.draws.row(kept) = st.position.transpose();
      result.energy[kept] = info.energy;
      result.divergent[static_cast<std::size_t>(kept)] = info.divergent ? 1 : 0;
      ++kept;
    }
  }

  result.stats.divergences = st.divergences;
  result.stats.treedepth_saturations = st.treedepth_saturations;
  result.stats.mean_accept = st.accept_count > 0 ? st.accept_sum / static_cast<double>(st.accept_count) : 0.0;
  result.stats.step_size = st.step_size;
  result.stats.inverse_mass_diag = st.inverse_mass_diag;
  return result;
}

}  // namespace countyprev
