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
#ifndef COUNTYPREV_TYPES_HPP
#define COUNTYPREV_TYPES_HPP

#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace countyprev {

/// One county: population at risk, its (possibly suppressed) overdose death
/// count, and raw covariate values. Covariates may be missing before
/// imputation; missingness is explicit, never a sentinel value.
struct CountyRecord {
  std::string county_id;
  std::string state_id;
  long long population = 0;
  std::optional<long long> deaths;  // absent iff suppressed
  bool suppressed = false;
  std::vector<std::optional<double>> covariates;
};

/// One state's survey prevalence estimate with its interval, plus the
/// misuse/disorder head counts used to identify the per-state ratio. The two
/// counts are optional as a pair: a state may report a prevalence estimate
/// without them.
struct StateEvidence {
  std::string state_id;
  double prev_est = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  std::optional<long long> q_misuse;
  std::optional<long long> q_oud;
};

enum class SdMode { FromCI, SharedUnknown };

/// A published county-level disorder prevalence estimate. Its standard
/// deviation either derives from the reported interval or is a shared model
/// parameter named by `sd_group`.
struct CountyPrevEstimate {
  std::string county_id;
  double prev_est = 0.0;
  std::optional<double> ci_lower;
  std::optional<double> ci_upper;
  SdMode sd_mode = SdMode::FromCI;
  std::string sd_group;  // set when sd_mode == SharedUnknown
};

/// Preparation options applied while loading.
struct PrepConfig {
  long long suppression_threshold = 9;
  bool impute_missing = true;
  std::vector<std::string> covariates;  // include-list; empty keeps every column
};

/// The full prepared input: counties, state evidence, county estimates, and
/// the covariate bookkeeping needed to reuse the transform on held-out data.
struct Dataset {
  std::vector<CountyRecord> counties;
  std::vector<StateEvidence> state_evidence;
  std::vector<CountyPrevEstimate> county_estimates;
  std::vector<std::string> covariate_names;
  // (mean, sd) used by standardize_covariates; empty until standardized.
  std::vector<std::pair<double, double>> standardization;
  long long suppression_threshold = 9;
  long long imputed_values = 0;

  // Derived indexing, rebuilt after any structural change.
  std::vector<std::string> state_ids;  // sorted distinct
  std::vector<int> county_state;       // county index -> state index
  std::unordered_map<std::string, int> county_index;
  std::unordered_map<std::string, int> state_index;

  void rebuild_index();
  bool standardized() const { return !standardization.empty(); }
  int covariate_count() const { return static_cast<int>(covariate_names.size()); }
  int state_count() const { return static_cast<int>(state_ids.size()); }
};

}  // namespace countyprev

#endif  // COUNTYPREV_TYPES_HPP
