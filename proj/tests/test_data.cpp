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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "countyprev/data.hpp"
#include "countyprev/util.hpp"
#include "support.hpp"

using namespace countyprev;
using countyprev::testing::TempDir;

namespace {

const char* kCounties =
    "county_id,state_id,population,deaths,suppressed,disp,smoke\n"
    "A1,MA,50000,25,0,81.2,0.18\n"
    "A2,MA,30000,,1,74.0,0.22\n"
    "B1,KY,45000,12,0,95.5,0.25\n";

const char* kStates =
    "state_id,prev_est,ci_lower,ci_upper,q_misuse,q_oud\n"
    "MA,0.012,0.010,0.014,20000,12000\n"
    "KY,0.015,0.012,0.018,15000,14000\n";

const char* kCountyPrev =
    "county_id,prev_est,ci_lower,ci_upper,sd_mode,sd_group\n"
    "A1,0.045,0.035,0.055,from_ci,\n"
    "B1,0.06,,,shared,KY\n";

Dataset load_fixture(const TempDir& dir, const PrepConfig& cfg = {}) {
  return load_dataset(dir.file("counties.csv", kCounties), dir.file("state_evidence.csv", kStates),
                      dir.file("county_prev.csv", kCountyPrev), cfg);
}

}  // namespace

TEST_CASE("sd_from_ci") {
  CHECK(sd_from_ci(0.04, 0.04) == 0.0);
  CHECK(sd_from_ci(0.03, 0.07) == doctest::Approx(0.010204081632653061).epsilon(1e-14));
  // positively homogeneous in the width
  const double w = 0.013;
  CHECK(sd_from_ci(0.1, 0.1 + 2 * w) == doctest::Approx(2.0 * sd_from_ci(0.1, 0.1 + w)).epsilon(1e-14));
  CHECK(sd_from_ci(0.05, 0.2) >= 0.0);
  CHECK_THROWS_AS(sd_from_ci(0.07, 0.03), std::domain_error);
}

TEST_CASE("loading the three-county fixture") {
  TempDir dir("load");
  const Dataset ds = load_fixture(dir);
  REQUIRE(ds.counties.size() == 3);
  CHECK(ds.counties[1].suppressed);
  CHECK_FALSE(ds.counties[1].deaths.has_value());
  CHECK(ds.counties[0].deaths == 25);
  CHECK(ds.covariate_names == std::vector<std::string>{"disp", "smoke"});
  CHECK(ds.state_ids == std::vector<std::string>{"KY", "MA"});
  CHECK(ds.county_state[0] == ds.state_index.at("MA"));
  REQUIRE(ds.county_estimates.size() == 2);
  CHECK(ds.county_estimates[1].sd_mode == SdMode::SharedUnknown);
  CHECK(ds.county_estimates[1].sd_group == "KY");
  CHECK(ds.state_evidence[0].q_misuse == 20000);
}

TEST_CASE("covariate include-list restricts and validates") {
  TempDir dir("cols");
  PrepConfig cfg;
  cfg.covariates = {"smoke"};
  const Dataset ds = load_fixture(dir, cfg);
  CHECK(ds.covariate_names == std::vector<std::string>{"smoke"});
  CHECK(ds.counties[0].covariates.size() == 1);

  PrepConfig bad;
  bad.covariates = {"smoke", "nope"};
  CHECK_THROWS_AS(load_fixture(dir, bad), ParseError);
}

TEST_CASE("referential integrity failures") {
  TempDir dir("integrity");
  // county_prev row referencing an absent county
  CHECK_THROWS_AS(load_dataset(dir.file("c.csv", kCounties), dir.file("s.csv", kStates),
                               dir.file("p.csv",
                                        "county_id,prev_est,ci_lower,ci_upper,sd_mode,sd_group\n"
                                        "ZZ,0.05,0.04,0.06,from_ci,\n"),
                               {}),
                  IntegrityError);
  // state evidence for a state with no counties
  CHECK_THROWS_AS(load_dataset(dir.file("c2.csv", kCounties),
                               dir.file("s2.csv",
                                        "state_id,prev_est,ci_lower,ci_upper,q_misuse,q_oud\n"
                                        "TX,0.01,0.009,0.011,100,50\n"),
                               dir.file("p2.csv", kCountyPrev), {}),
                  IntegrityError);
  // duplicate county id
  CHECK_THROWS_AS(load_dataset(dir.file("c3.csv",
                                        "county_id,state_id,population,deaths,suppressed\n"
                                        "A1,MA,100,1,0\n"
                                        "A1,MA,200,2,0\n"),
                               dir.file("s3.csv", kStates), dir.file("p3.csv", kCountyPrev), {}),
                  IntegrityError);
}

TEST_CASE("parse errors carry file and line") {
  TempDir dir("parse");
  const auto path = dir.file("c.csv",
                             "county_id,state_id,population,deaths,suppressed\n"
                             "A1,MA,100,1,0\n"
                             "A2,MA,abc,1,0\n");
  try {
    load_dataset(path, dir.file("s.csv", kStates), dir.file("p.csv", kCountyPrev), {});
    FAIL("expected ParseError");
  } catch (const ParseError& err) {
    const std::string msg = err.what();
    CHECK(msg.find("c.csv:3") != std::string::npos);
    CHECK(msg.find("population") != std::string::npos);
  }
}

TEST_CASE("suppression consistency is enforced") {
  TempDir dir("supp");
  CHECK_THROWS_AS(load_dataset(dir.file("c.csv",
                                        "county_id,state_id,population,deaths,suppressed\n"
                                        "A1,MA,100,5,1\n"),
                               dir.file("s.csv", kStates), dir.file("p.csv", kCountyPrev), {}),
                  ParseError);
  CHECK_THROWS_AS(load_dataset(dir.file("c2.csv",
                                        "county_id,state_id,population,deaths,suppressed\n"
                                        "A1,MA,100,,0\n"),
                               dir.file("s2.csv", kStates), dir.file("p2.csv", kCountyPrev), {}),
                  ParseError);
}

TEST_CASE("a dataset at the case-study scale loads") {
  TempDir dir("big");
  std::ostringstream counties;
  counties << "county_id,state_id,population,deaths,suppressed,x1\n";
  std::ostringstream states;
  states << "state_id,prev_est,ci_lower,ci_upper,q_misuse,q_oud\n";
  const int n_counties = 3132, n_states = 50;
  for (int s = 0; s < n_states; ++s) {
    states << "S" << s << ",0.012,0.011,0.013,10000,6000\n";
  }
  for (int i = 0; i < n_counties; ++i) {
    const int s = i % n_states;
    const bool suppressed = i % 3 == 0;
    counties << "C" << i << ",S" << s << "," << (10000 + i) << ","
             << (suppressed ? "" : std::to_string(10 + i % 40)) << "," << (suppressed ? 1 : 0) << ","
             << (0.1 * (i % 7)) << "\n";
  }
  const Dataset ds = load_dataset(dir.file("c.csv", counties.str()), dir.file("s.csv", states.str()),
                                  dir.file("p.csv", "county_id,prev_est,ci_lower,ci_upper,sd_mode,sd_group\n"),
                                  {});
  CHECK(ds.counties.size() == 3132);
  CHECK(ds.state_count() == 50);
}

TEST_CASE("standardize_covariates") {
  TempDir dir("std");
  const auto c = dir.file("c.csv",
                          "county_id,state_id,population,deaths,suppressed,x\n"
                          "A,MA,100,1,0,1\n"
                          "B,MA,100,2,0,2\n"
                          "C,MA,100,3,0,3\n");
  const auto s = dir.file("s.csv", "state_id,prev_est,ci_lower,ci_upper,q_misuse,q_oud\n");
  const auto p = dir.file("p.csv", "county_id,prev_est,ci_lower,ci_upper,sd_mode,sd_group\n");
  Dataset ds = standardize_covariates(load_dataset(c, s, p, {}));
  CHECK(*ds.counties[0].covariates[0] == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(*ds.counties[1].covariates[0] == doctest::Approx(0.0));
  CHECK(*ds.counties[2].covariates[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(ds.standardization[0].first == doctest::Approx(2.0));
  CHECK(ds.standardization[0].second == doctest::Approx(1.0));

  // idempotent on already-standardized input
  Dataset twice = standardize_covariates(ds);
  for (int i = 0; i < 3; ++i) {
    CHECK(*twice.counties[static_cast<std::size_t>(i)].covariates[0] ==
          doctest::Approx(*ds.counties[static_cast<std::size_t>(i)].covariates[0]).epsilon(1e-12));
  }

  // moments after the transform
  double mean = 0.0, ss = 0.0;
  for (const auto& county : ds.counties) mean += *county.covariates[0];
  mean /= 3.0;
  for (const auto& county : ds.counties) ss += (*county.covariates[0] - mean) * (*county.covariates[0] - mean);
  CHECK(std::abs(mean) < 1e-10);
  CHECK(std::abs(std::sqrt(ss / 2.0) - 1.0) < 1e-10);
}

TEST_CASE("constant covariate is rejected") {
  TempDir dir("const");
  const auto c = dir.file("c.csv",
                          "county_id,state_id,population,deaths,suppressed,x\n"
                          "A,MA,100,1,0,7\n"
                          "B,MA,100,2,0,7\n");
  const auto s = dir.file("s.csv", "state_id,prev_est,ci_lower,ci_upper,q_misuse,q_oud\n");
  const auto p = dir.file("p.csv", "county_id,prev_est,ci_lower,ci_upper,sd_mode,sd_group\n");
  CHECK_THROWS_WITH_AS(standardize_covariates(load_dataset(c, s, p, {})),
                       doctest::Contains("'x' is constant"), std::domain_error);
}

TEST_CASE("impute_missing uses state means with national fallback") {
  TempDir dir("imp");
  const auto c = dir.file("c.csv",
                          "county_id,state_id,population,deaths,suppressed,x\n"
                          "A1,MA,100,1,0,2\n"
                          "A2,MA,100,1,0,4\n"
                          "A3,MA,100,1,0,\n"
                          "B1,KY,100,1,0,\n"
                          "B2,KY,100,1,0,\n"
                          "C1,TX,100,1,0,9\n");
  const auto s = dir.file("s.csv", "state_id,prev_est,ci_lower,ci_upper,q_misuse,q_oud\n");
  const auto p = dir.file("p.csv", "county_id,prev_est,ci_lower,ci_upper,sd_mode,sd_group\n");
  Dataset ds = impute_missing(load_dataset(c, s, p, {}));
  CHECK(*ds.counties[ds.county_index.at("A3")].covariates[0] == doctest::Approx(3.0));
  // KY has no observed value: falls back to the national mean (2+4+9)/3
  CHECK(*ds.counties[ds.county_index.at("B1")].covariates[0] == doctest::Approx(5.0));
  CHECK(*ds.counties[ds.county_index.at("B2")].covariates[0] == doctest::Approx(5.0));
  CHECK(ds.imputed_values == 3);
  // non-missing values untouched
  CHECK(*ds.counties[ds.county_index.at("A1")].covariates[0] == doctest::Approx(2.0));

  // identity when nothing is missing
  Dataset again = impute_missing(ds);
  CHECK(again.imputed_values == ds.imputed_values);
}

TEST_CASE("covariate missing everywhere is unusable") {
  TempDir dir("allmiss");
  const auto c = dir.file("c.csv",
                          "county_id,state_id,population,deaths,suppressed,x\n"
                          "A,MA,100,1,0,\n"
                          "B,MA,100,2,0,\n");
  const auto s = dir.file("s.csv", "state_id,prev_est,ci_lower,ci_upper,q_misuse,q_oud\n");
  const auto p = dir.file("p.csv", "county_id,prev_est,ci_lower,ci_upper,sd_mode,sd_group\n");
  CHECK_THROWS_AS(impute_missing(load_dataset(c, s, p, {})), std::domain_error);
}

TEST_CASE("save/load round trip is exact") {
  TempDir dir("round");
  Dataset ds = load_fixture(dir);
  ds = impute_missing(std::move(ds));
  ds = standardize_covariates(std::move(ds));
  const auto out = dir.path() / "saved";
  save_dataset(ds, out);
  const Dataset back = load_dataset(out / "counties.csv", out / "state_evidence.csv",
                                    out / "county_prev.csv", {});
  REQUIRE(back.counties.size() == ds.counties.size());
  for (std::size_t i = 0; i < ds.counties.size(); ++i) {
    CHECK(back.counties[i].population == ds.counties[i].population);
    CHECK(back.counties[i].deaths == ds.counties[i].deaths);
    CHECK(back.counties[i].suppressed == ds.counties[i].suppressed);
    for (std::size_t j = 0; j < ds.covariate_names.size(); ++j) {
      CHECK(*back.counties[i].covariates[j] == *ds.counties[i].covariates[j]);
    }
  }
  CHECK(back.state_evidence[0].prev_est == ds.state_evidence[0].prev_est);
  CHECK(back.county_estimates[1].sd_group == ds.county_estimates[1].sd_group);
  CHECK(dataset_hash(back) == dataset_hash(ds));
}

TEST_CASE("dataset hash is content sensitive") {
  TempDir dir("hash");
  Dataset ds = load_fixture(dir);
  const auto h0 = dataset_hash(ds);
  Dataset changed = ds;
  changed.counties[0].population += 1;
  CHECK(dataset_hash(changed) != h0);
}

TEST_CASE("q columns are optional as a pair") {
  TempDir dir("qopt");
  const Dataset ds = load_dataset(dir.file("c.csv", kCounties),
                                  dir.file("s.csv",
                                           "state_id,prev_est,ci_lower,ci_upper,q_misuse,q_oud\n"
                                           "MA,0.012,0.010,0.014,,\n"
                                           "KY,0.015,0.012,0.018,15000,14000\n"),
                                  dir.file("p.csv", kCountyPrev), {});
  CHECK_FALSE(ds.state_evidence[0].q_misuse.has_value());
  CHECK(ds.state_evidence[1].q_misuse.has_value());

  CHECK_THROWS_AS(load_dataset(dir.file("c2.csv", kCounties),
                               dir.file("s2.csv",
                                        "state_id,prev_est,ci_lower,ci_upper,q_misuse,q_oud\n"
                                        "MA,0.012,0.010,0.014,100,200\n"),
                               dir.file("p2.csv", kCountyPrev), {}),
                  ParseError);
}
