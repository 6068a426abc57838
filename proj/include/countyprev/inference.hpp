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
#ifndef COUNTYPREV_INFERENCE_HPP
#define COUNTYPREV_INFERENCE_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "countyprev/model.hpp"
#include "countyprev/sampler.hpp"

namespace countyprev {

/// Posterior draws on the constrained scale across chains, with sampler
/// statistics and the metadata needed to detect stale reuse.
struct DrawSet {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> chains;  // each: retained x dim
  std::vector<Eigen::VectorXd> energy;
  std::vector<std::vector<char>> divergent;
  std::vector<ChainStats> stats;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string dataset_hash;
  long long iterations = 0;
  long long warmup = 0;
  int thin = 1;

  int chain_count() const { return static_cast<int>(chains.size()); }
  long long retained() const { return chains.empty() ? 0 : chains.front().rows(); }
  int dim() const { return static_cast<int>(names.size()); }
  int index_of(const std::string& name) const;
  /// One parameter's draws, concatenated chain by chain.
  Eigen::VectorXd pooled(int param) const;
  std::vector<Eigen::VectorXd> per_chain(int param) const;
  long long total_divergences() const;
};

/// Canonical hash of the model + sampler settings, embedded in outputs.
std::string fit_config_hash(const ModelConfig& mcfg, const SamplerConfig& scfg);

struct FitOptions {
  int jobs = 0;  // chain parallelism cap; 0 = hardware limit
  const WarmStart* warm_start = nullptr;
  const LikelihoodMask* mask = nullptr;
};

/// Runs all chains of the configured sampler against the model posterior and
/// back-transforms the draws to the constrained scale.
DrawSet fit(const Dataset& ds, const ModelConfig& mcfg, const SamplerConfig& scfg,
            const FitOptions& options = {});

struct DiagnosticResult {
  double value = 1.0;
  bool degenerate = false;
};

/// Split-chain rank-normalized potential scale reduction factor.
DiagnosticResult rhat(const std::vector<Eigen::VectorXd>& chains);

/// Effective sample size via Geyer's initial monotone sequence over the
/// combined-chain autocorrelation estimate.
DiagnosticResult ess(const std::vector<Eigen::VectorXd>& chains);

struct SummaryRow {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double p2_5 = 0.0;
  double p50 = 0.0;
  double p97_5 = 0.0;
  double rhat = 1.0;
  double ess = 0.0;
  bool significant = false;  // 95% credible interval excludes zero
};

/// Per-parameter posterior summaries. When `multiplier_row` is set and a
/// gamma parameter exists, appends a derived `inv_gamma` row (the survey
/// underestimation multiplier).
std::vector<SummaryRow> summarize(const DrawSet& draws, bool multiplier_row = true);

struct ConvergenceReport {
  double max_rhat = 1.0;
  double min_ess = 0.0;
  long long divergences = 0;
  long long treedepth_saturations = 0;
  bool pass = true;  // max_rhat < 1.1
};

ConvergenceReport convergence_report(const DrawSet& draws);

/// Posterior-mean parameter vector (constrained scale).
ParameterVector posterior_mean_params(const DrawSet& draws, std::shared_ptr<const ParameterLayout> layout);

/// Average adapted step size / mass across chains, for warm-starting refits.
WarmStart warm_start_from(const DrawSet& draws);

// Run-directory artifacts.
void save_drawset(const DrawSet& draws, const std::filesystem::path& dir, bool binary = false);
DrawSet load_drawset(const std::filesystem::path& dir);
void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path,
                       const std::string& metadata);
void write_convergence_json(const ConvergenceReport& report, const DrawSet& draws,
                            const std::filesystem::path& path);

}  // namespace countyprev

#endif  // COUNTYPREV_INFERENCE_HPP
