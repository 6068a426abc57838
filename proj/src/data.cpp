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
#include "countyprev/data.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "countyprev/csv.hpp"
#include "countyprev/util.hpp"

namespace countyprev {

void Dataset::rebuild_index() {
  county_index.clear();
  state_index.clear();
  state_ids.clear();
  std::set<std::string> states;
  for (const auto& c : counties) states.insert(c.state_id);
  state_ids.assign(states.begin(), states.end());
  for (std::size_t i = 0; i < state_ids.size(); ++i) state_index[state_ids[i]] = static_cast<int>(i);
  county_state.resize(counties.size());
  for (std::size_t i = 0; i < counties.size(); ++i) {
    county_index[counties[i].county_id] = static_cast<int>(i);
    county_state[i] = state_index.at(counties[i].state_id);
  }
}

double sd_from_ci(double ci_lower, double ci_upper) {
  if (ci_upper < ci_lower) {
    throw std::domain_error("sd_from_ci: ci_upper < ci_lower");
  }
  return (ci_upper - ci_lower) / (2.0 * 1.96);
}

namespace {

std::string row_ref(const csv::Table& t, std::size_t row) {
  return t.source() + ":" + std::to_string(t.line_of_row(row));
}

void load_counties(Dataset& ds, const std::filesystem::path& path, const PrepConfig& config) {
  const auto t = csv::Table::read_file(path);
  const int c_id = t.require_column("county_id");
  const int c_state = t.require_column("state_id");
  const int c_pop = t.require_column("population");
  const int c_deaths = t.require_column("deaths");
  const int c_supp = t.require_column("suppressed");

  // Any column beyond the fixed five is a covariate; an include-list in the
  // config restricts to a subset, preserving file order.
  std::vector<int> cov_cols;
  for (std::size_t j = 0; j < t.columns().size(); ++j) {
    const int col = static_cast<int>(j);
    if (col == c_id || col == c_state || col == c_pop || col == c_deaths || col == c_supp) continue;
    if (!config.covariates.empty() &&
        std::find(config.covariates.begin(), config.covariates.end(), t.columns()[j]) ==
            config.covariates.end()) {
      continue;
    }
    cov_cols.push_back(col);
    ds.covariate_names.push_back(t.columns()[j]);
  }
  for (const auto& want : config.covariates) {
    if (std::find(ds.covariate_names.begin(), ds.covariate_names.end(), want) == ds.covariate_names.end()) {
      throw ParseError(path.string() + ": configured covariate '" + want + "' not present");
    }
  }

  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    CountyRecord rec;
    rec.county_id = t.cell(r, c_id);
    rec.state_id = t.cell(r, c_state);
    if (rec.county_id.empty() || rec.state_id.empty()) {
      throw ParseError(row_ref(t, r) + ": empty county_id or state_id");
    }
    if (!seen.insert(rec.county_id).second) {
      throw IntegrityError(row_ref(t, r) + ": duplicate county_id '" + rec.county_id + "'");
    }
    rec.population = t.get_int(r, c_pop);
    if (rec.population < 1) {
      throw ParseError(row_ref(t, r) + ": population must be >= 1");
    }
    const long long supp = t.get_int(r, c_supp);
    rec.suppressed = supp != 0;
    rec.deaths = t.get_optional_int(r, c_deaths);
    if (rec.suppressed && rec.deaths.has_value()) {
      throw ParseError(row_ref(t, r) + ": suppressed county must have blank deaths");
    }
    if (!rec.suppressed && !rec.deaths.has_value()) {
      throw ParseError(row_ref(t, r) + ": unsuppressed county must report deaths");
    }
    if (rec.deaths.has_value() && *rec.deaths < 0) {
      throw ParseError(row_ref(t, r) + ": deaths must be nonnegative");
    }
    rec.covariates.reserve(cov_cols.size());
    for (int col : cov_cols) {
      rec.covariates.push_back(t.get_optional_double(r, col));
    }
    ds.counties.push_back(std::move(rec));
  }
}

void load_state_evidence(Dataset& ds, const std::filesystem::path& path) {
  const auto t = csv::Table::read_file(path);
  const int c_state = t.require_column("state_id");
  const int c_prev = t.require_column("prev_est");
  const int c_lo = t.require_column("ci_lower");
  const int c_hi = t.require_column("ci_upper");
  const int c_qm = t.require_column("q_misuse");
  const int c_qo = t.require_column("q_oud");

  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    StateEvidence ev;
    ev.state_id = t.cell(r, c_state);
    if (!seen.insert(ev.state_id).second) {
      throw IntegrityError(row_ref(t, r) + ": duplicate state_id '" + ev.state_id + "'");
    }
    if (ds.state_index.find(ev.state_id) == ds.state_index.end()) {
      throw IntegrityError(row_ref(t, r) + ": state_id '" + ev.state_id + "' has no counties");
    }
    ev.prev_est = t.get_double(r, c_prev);
    ev.ci_lower = t.get_double(r, c_lo);
    ev.ci_upper = t.get_double(r, c_hi);
    if (!(0.0 < ev.ci_lower && ev.ci_lower <= ev.prev_est && ev.prev_est <= ev.ci_upper &&
          ev.ci_upper < 1.0)) {
      throw ParseError(row_ref(t, r) + ": require 0 < ci_lower <= prev_est <= ci_upper < 1");
    }
    ev.q_misuse = t.get_optional_int(r, c_qm);
    ev.q_oud = t.get_optional_int(r, c_qo);
    if (ev.q_misuse.has_value() != ev.q_oud.has_value()) {
      throw ParseError(row_ref(t, r) + ": q_misuse and q_oud must be given together");
    }
    if (ev.q_misuse.has_value()) {
      if (*ev.q_misuse < 1) throw ParseError(row_ref(t, r) + ": q_misuse must be positive");
      if (*ev.q_oud < 0 || *ev.q_oud > *ev.q_misuse) {
        throw ParseError(row_ref(t, r) + ": require 0 <= q_oud <= q_misuse");
      }
    }
    ds.state_evidence.push_back(std::move(ev));
  }
}

void load_county_prev(Dataset& ds, const std::filesystem::path& path) {
  const auto t = csv::Table::read_file(path);
  const int c_id = t.require_column("county_id");
  const int c_prev = t.require_column("prev_est");
  const int c_lo = t.require_column("ci_lower");
  const int c_hi = t.require_column("ci_upper");
  const int c_mode = t.require_column("sd_mode");
  const int c_group = t.require_column("sd_group");

  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    CountyPrevEstimate est;
    est.county_id = t.cell(r, c_id);
    if (ds.county_index.find(est.county_id) == ds.county_index.end()) {
      throw IntegrityError(row_ref(t, r) + ": county_id '" + est.county_id + "' not in county table");
    }
    if (!seen.insert(est.county_id).second) {
      throw IntegrityError(row_ref(t, r) + ": duplicate county estimate for '" + est.county_id + "'");
    }
    est.prev_est = t.get_double(r, c_prev);
    if (!(est.prev_est > 0.0 && est.prev_est < 1.0)) {
      throw ParseError(row_ref(t, r) + ": prev_est must lie in (0, 1)");
    }
    est.ci_lower = t.get_optional_double(r, c_lo);
    est.ci_upper = t.get_optional_double(r, c_hi);
    const std::string& mode = t.cell(r, c_mode);
    if (mode == "from_ci") {
      est.sd_mode = SdMode::FromCI;
      if (!est.ci_lower || !est.ci_upper) {
        throw ParseError(row_ref(t, r) + ": sd_mode=from_ci requires both interval bounds");
      }
      if (!(*est.ci_lower <= est.prev_est && est.prev_est <= *est.ci_upper)) {
        throw ParseError(row_ref(t, r) + ": require ci_lower <= prev_est <= ci_upper");
      }
    } else if (mode == "shared") {
      est.sd_mode = SdMode::SharedUnknown;
      est.sd_group = t.cell(r, c_group);
      if (est.sd_group.empty()) {
        throw ParseError(row_ref(t, r) + ": sd_mode=shared requires sd_group");
      }
    } else {
      throw ParseError(row_ref(t, r) + ": sd_mode must be 'from_ci' or 'shared', got '" + mode + "'");
    }
    ds.county_estimates.push_back(std::move(est));
  }
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& county_path, const std::filesystem::path& state_path,
                     const std::filesystem::path& county_prev_path, const PrepConfig& config) {
  Dataset ds;
  ds.suppression_threshold = config.suppression_threshold;
  if (ds.suppression_threshold < 0) {
    throw std::domain_error("suppression_threshold must be nonnegative");
  }
  load_counties(ds, county_path, config);
  ds.rebuild_index();
  load_state_evidence(ds, state_path);
  load_county_prev(ds, county_prev_path);
  return ds;
}

Dataset impute_missing(Dataset ds) {
  const int K = ds.covariate_count();
  const int S = ds.state_count();
  if (K == 0) return ds;

  for (int j = 0; j < K; ++j) {
    std::vector<double> state_sum(static_cast<std::size_t>(S), 0.0);
    std::vector<long long> state_n(static_cast<std::size_t>(S), 0);
    double national_sum = 0.0;
    long long national_n = 0;
    for (std::size_t i = 0; i < ds.counties.size(); ++i) {
      const auto& v = ds.counties[i].covariates[static_cast<std::size_t>(j)];
      if (v.has_value()) {
        state_sum[static_cast<std::size_t>(ds.county_state[i])] += *v;
        state_n[static_cast<std::size_t>(ds.county_state[i])] += 1;
        national_sum += *v;
        national_n += 1;
      }
    }
    if (national_n == 0) {
      throw std::domain_error("covariate '" + ds.covariate_names[static_cast<std::size_t>(j)] +
                              "' is missing in every county");
    }
    const double national_mean = national_sum / static_cast<double>(national_n);
    for (std::size_t i = 0; i < ds.counties.size(); ++i) {
      auto& v = ds.counties[i].covariates[static_cast<std::size_t>(j)];
      if (v.has_value()) continue;
      const auto s = static_cast<std::size_t>(ds.county_state[i]);
      v = state_n[s] > 0 ? state_sum[s] / static_cast<double>(state_n[s]) : national_mean;
      ++ds.imputed_values;
    }
  }
  return ds;
}

Dataset standardize_covariates(Dataset ds) {
  const int K = ds.covariate_count();
  const auto n = ds.counties.size();
  ds.standardization.clear();
  ds.standardization.reserve(static_cast<std::size_t>(K));
  for (int j = 0; j < K; ++j) {
    double sum = 0.0;
    for (const auto& c : ds.counties) {
      const auto& v = c.covariates[static_cast<std::size_t>(j)];
      if (!v.has_value()) {
        throw std::domain_error("standardize_covariates: missing value in covariate '" +
                                ds.covariate_names[static_cast<std::size_t>(j)] + "'; impute first");
      }
      sum += *v;
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& c : ds.counties) {
      const double d = *c.covariates[static_cast<std::size_t>(j)] - mean;
      ss += d * d;
    }
    const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    if (!(sd > 0.0)) {
      throw std::domain_error("covariate '" + ds.covariate_names[static_cast<std::size_t>(j)] +
                              "' is constant; cannot standardize");
    }
    for (auto& c : ds.counties) {
      auto& v = c.covariates[static_cast<std::size_t>(j)];
      v = (*v - mean) / sd;
    }
    ds.standardization.emplace_back(mean, sd);
  }
  return ds;
}

Dataset prepare_dataset(const std::filesystem::path& county_path, const std::filesystem::path& state_path,
                        const std::filesystem::path& county_prev_path, const PrepConfig& config) {
  Dataset ds = load_dataset(county_path, state_path, county_prev_path, config);
  if (config.impute_missing) {
    ds = impute_missing(std::move(ds));
  }
  return standardize_covariates(std::move(ds));
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    csv::Writer w(dir / "counties.csv");
    std::vector<std::string> cols = {"county_id", "state_id", "population", "deaths", "suppressed"};
    cols.insert(cols.end(), ds.covariate_names.begin(), ds.covariate_names.end());
    w.header(cols);
    for (const auto& c : ds.counties) {
      w.field(c.county_id).field(c.state_id).field(c.population);
      if (c.deaths.has_value()) {
        w.field(*c.deaths);
      } else {
        w.blank();
      }
      w.field(static_cast<long long>(c.suppressed ? 1 : 0));
      for (const auto& v : c.covariates) {
        if (v.has_value()) {
          w.field(*v);
        } else {
          w.blank();
        }
      }
      w.end_row();
    }
  }
  {
    csv::Writer w(dir / "state_evidence.csv");
    w.header({"state_id", "prev_est", "ci_lower", "ci_upper", "q_misuse", "q_oud"});
    for (const auto& ev : ds.state_evidence) {
      w.field(ev.state_id).field(ev.prev_est).field(ev.ci_lower).field(ev.ci_upper);
      if (ev.q_misuse.has_value()) {
        w.field(*ev.q_misuse).field(*ev.q_oud);
      } else {
        w.blank().blank();
      }
      w.end_row();
    }
  }
  {
    csv::Writer w(dir / "county_prev.csv");
    w.header({"county_id", "prev_est", "ci_lower", "ci_upper", "sd_mode", "sd_group"});
    for (const auto& est : ds.county_estimates) {
      w.field(est.county_id).field(est.prev_est);
      if (est.ci_lower.has_value()) {
        w.field(*est.ci_lower);
      } else {
        w.blank();
      }
      if (est.ci_upper.has_value()) {
        w.field(*est.ci_upper);
      } else {
        w.blank();
      }
      w.field(std::string(est.sd_mode == SdMode::FromCI ? "from_ci" : "shared")).field(est.sd_group);
      w.end_row();
    }
  }
}

std::uint64_t dataset_hash(const Dataset& ds) {
  std::string buf;
  buf.reserve(ds.counties.size() * 64);
  auto put = [&buf](const std::string& s) {
    buf += s;
    buf += '\x1f';
  };
  put(std::to_string(ds.suppression_threshold));
  for (const auto& name : ds.covariate_names) put(name);
  for (const auto& c : ds.counties) {
    put(c.county_id);
    put(c.state_id);
    put(std::to_string(c.population));
    put(c.deaths.has_value() ? std::to_string(*c.deaths) : "-");
    put(c.suppressed ? "1" : "0");
    for (const auto& v : c.covariates) put(v.has_value() ? format_double(*v) : "-");
  }
  for (const auto& ev : ds.state_evidence) {
    put(ev.state_id);
    put(format_double(ev.prev_est));
    put(format_double(ev.ci_lower));
    put(format_double(ev.ci_upper));
    put(ev.q_misuse.has_value() ? std::to_string(*ev.q_misuse) : "-");
    put(ev.q_oud.has_value() ? std::to_string(*ev.q_oud) : "-");
  }
  for (const auto& est : ds.county_estimates) {
    put(est.county_id);
    put(format_double(est.prev_est));
    put(est.ci_lower.has_value() ? format_double(*est.ci_lower) : "-");
    put(est.ci_upper.has_value() ? format_double(*est.ci_upper) : "-");
    put(est.sd_mode == SdMode::FromCI ? "ci" : "shared");
    put(est.sd_group);
  }
  return fnv1a(buf);
}

}  // namespace countyprev
