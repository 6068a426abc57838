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
#ifndef COUNTYPREV_DATA_HPP
#define COUNTYPREV_DATA_HPP

#include <cstdint>
#include <filesystem>

#include "countyprev/types.hpp"

namespace countyprev {

/// Standard deviation implied by a symmetric 95% interval: width / (2 * 1.96).
double sd_from_ci(double ci_lower, double ci_upper);

/// Loads and validates the three input tables. Deaths of suppressed counties
/// come back absent with the flag set; covariates stay raw (pre-imputation,
/// pre-standardization). Referential integrity and duplicates are checked.
Dataset load_dataset(const std::filesystem::path& county_path, const std::filesystem::path& state_path,
                     const std::filesystem::path& county_prev_path, const PrepConfig& config);

/// Replaces each missing covariate value with the state mean of that
/// covariate, falling back to the national mean when the whole state is
/// missing. Counts imputations in `imputed_values`.
Dataset impute_missing(Dataset ds);

/// Centers and scales every covariate column to mean 0 / sd 1 (sample sd,
/// n-1 denominator, unweighted across counties) and records the transform.
Dataset standardize_covariates(Dataset ds);

/// Convenience: load, impute, standardize.
Dataset prepare_dataset(const std::filesystem::path& county_path, const std::filesystem::path& state_path,
                        const std::filesystem::path& county_prev_path, const PrepConfig& config);

/// Writes the dataset back out in the input schemas (counties.csv,
/// state_evidence.csv, county_prev.csv under `dir`).
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

/// Content hash covering everything the model consumes; used to detect stale
/// draws when predicting.
std::uint64_t dataset_hash(const Dataset& ds);

}  // namespace countyprev

#endif  // COUNTYPREV_DATA_HPP
