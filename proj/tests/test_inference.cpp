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

#include "countyprev/data.hpp"
#include "countyprev/inference.hpp"
#include "countyprev/validate.hpp"
#include "support.hpp"

using namespace countyprev;
using countyprev::testing::TempDir;

namespace {

std::vector<Eigen::VectorXd> gaussian_chains(int m, int n, double mean, double sd, std::uint64_t seed) {
  std::vector<Eigen::VectorXd> chains;
  for (int j = 0; j < m; ++j) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
    Eigen::VectorXd c(n);
    for (int i = 0; i < n; ++i) c[i] = mean + sd * rng.normal();
    chains.push_back(std::move(c));
  }
  return chains;
}

Dataset small_dataset() {
  SyntheticSpec spec;
  spec.counties = 50;
  spec.states = 5;
  spec.covariates = 2;
  spec.evidence_states = {0, 1};
  spec.shared_sd_groups = 1;
  spec.seed = 2025;
  return standardize_covariates(simulate_synthetic(spec).dataset);
}

DrawSet small_fit(bool reduced = false, std::uint64_t seed = 321) {
  // fits are deterministic, so repeated requests hit a cache
  static std::map<std::pair<bool, std::uint64_t>, DrawSet> cache;
  const auto key = std::make_pair(reduced, seed);
  const auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  ModelConfig mcfg;
  mcfg.prevalence_random_intercept = !reduced;
  SamplerConfig scfg;
  scfg.chains = 4;
  scfg.iterations = 2000;
  scfg.warmup = 1000;
  scfg.thin = 1;
  scfg.seed = seed;
  const DrawSet draws = fit(small_dataset(), mcfg, scfg, {.jobs = 2});
  cache[key] = draws;
  return draws;
}

}  // namespace

TEST_CASE("rhat on identical constant chains is degenerate 1") {
  std::vector<Eigen::VectorXd> chains(4, Eigen::VectorXd::Constant(100, 3.0));
  const auto r = rhat(chains);
  CHECK(r.value == doctest::Approx(1.0));
  CHECK(r.degenerate);
}

TEST_CASE("rhat near 1 for chains from one distribution") {
  const auto r = rhat(gaussian_chains(4, 1000, 0.0, 1.0, 8));
  CHECK(r.value < 1.02);
  CHECK_FALSE(r.degenerate);
}

TEST_CASE("rhat far above 1.1 for separated chains") {
  auto chains = gaussian_chains(1, 1000, 0.0, 1.0, 9);
  auto shifted = gaussian_chains(1, 1000, 10.0, 1.0, 10);
  chains.push_back(shifted.front());
  CHECK(rhat(chains).value > 1.5);
}

TEST_CASE("rhat input validation") {
  CHECK_THROWS_AS(rhat(gaussian_chains(1, 100, 0.0, 1.0, 1)), std::invalid_argument);
  CHECK_THROWS_AS(rhat(gaussian_chains(2, 3, 0.0, 1.0, 1)), std::invalid_argument);
}

TEST_CASE("ess of independent draws is near the sample size") {
  const auto e = ess(gaussian_chains(4, 1000, 0.0, 1.0, 77));
  CHECK(e.value > 4000 * 0.8);
  CHECK(e.value < 4000 * 1.2);
}

TEST_CASE("ess of an AR(1) chain matches the analytic rate") {
  const double rho = 0.9;
  const int n = 20000;
  Rng rng(55);
  Eigen::VectorXd x(n);
  x[0] = rng.normal();
  for (int i = 1; i < n; ++i) x[i] = rho * x[i - 1] + std::sqrt(1 - rho * rho) * rng.normal();
  const auto e = ess({x});
  const double expected = n * (1 - rho) / (1 + rho);
  CHECK(e.value > expected * 0.7);
  CHECK(e.value < expected * 1.3);
}

TEST_CASE("ess flags constant chains") {
  std::vector<Eigen::VectorXd> chains(2, Eigen::VectorXd::Constant(50, 1.5));
  CHECK(ess(chains).degenerate);
}

TEST_CASE("summarize basics") {
  DrawSet draws;
  draws.names = {"a", "b"};
  Eigen::MatrixXd c1(4, 2), c2(4, 2);
  c1 << 3, -1, 3, 1, 3, -2, 3, 2;
  c2 << 3, -1.5, 3, 1.5, 3, -0.5, 3, 0.5;
  draws.chains = {c1, c2};

  const auto rows = summarize(draws, false);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].mean == doctest::Approx(3.0));
  CHECK(rows[0].sd == doctest::Approx(0.0));
  CHECK(rows[0].p2_5 == doctest::Approx(3.0));
  CHECK(rows[0].p97_5 == doctest::Approx(3.0));
  CHECK(rows[0].significant);

  CHECK(rows[1].mean == doctest::Approx(0.0));
  CHECK_FALSE(rows[1].significant);  // symmetric draws cover zero
  CHECK(rows[1].p2_5 < rows[1].p50);
  CHECK(rows[1].p50 < rows[1].p97_5);
}

TEST_CASE("fit returns equal chains with valid constrained draws") {
  const DrawSet draws = small_fit();
  CHECK(draws.chain_count() == 4);
  CHECK(draws.retained() == 1000);
  CHECK(draws.dim() == static_cast<int>(draws.names.size()));

  const Dataset ds = small_dataset();
  const auto layout = ParameterLayout::create(ds, ModelConfig{});
  REQUIRE(layout->names == draws.names);
  for (const auto& chain : draws.chains) {
    for (long long i = 0; i < chain.rows(); i += 173) {
      ParameterVector theta{chain.row(i).transpose(), layout};
      CHECK(theta.constrained_valid());
    }
  }
  // chain-relabeling invariance of pooled summaries
  DrawSet relabeled = draws;
  std::swap(relabeled.chains[0], relabeled.chains[3]);
  const auto a = summarize(draws, false);
  const auto b = summarize(relabeled, false);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].mean == doctest::Approx(b[i].mean));
    CHECK(a[i].p50 == doctest::Approx(b[i].p50));
  }
}

TEST_CASE("reduced model manifest drops the prevalence intercepts") {
  const DrawSet full = small_fit(false);
  const DrawSet reduced = small_fit(true);
  auto count_prefix = [](const DrawSet& d, const std::string& prefix) {
    long long n = 0;
    for (const auto& name : d.names) {
      if (name.rfind(prefix, 0) == 0) ++n;
    }
    return n;
  };
  CHECK(count_prefix(full, "b_p[") == 5);
  CHECK(count_prefix(reduced, "b_p[") == 0);
  CHECK(reduced.index_of("sigma0_p") == -1);
  CHECK(reduced.index_of("sigma0_m") >= 0);
  CHECK(full.dim() - reduced.dim() == 6);
}

TEST_CASE("prior-only fit reproduces the intercept prior sd") {
  Dataset ds;  // no counties, no evidence
  ds.covariate_names = {"x1", "x2"};
  ds.rebuild_index();
  SamplerConfig scfg;
  scfg.chains = 4;
  scfg.iterations = 3000;
  scfg.warmup = 1000;
  scfg.thin = 1;
  scfg.seed = 7;
  const DrawSet draws = fit(ds, ModelConfig{}, scfg, {.jobs = 2});
  const auto rows = summarize(draws, true);
  const auto it = std::find_if(rows.begin(), rows.end(),
                               [](const SummaryRow& r) { return r.name == "beta0_p"; });
  REQUIRE(it != rows.end());
  CHECK(std::abs(it->sd - 10.0) / 10.0 < 0.15);
  // derived multiplier row present when gamma exists
  CHECK(std::find_if(rows.begin(), rows.end(),
                     [](const SummaryRow& r) { return r.name == "inv_gamma"; }) != rows.end());
}

TEST_CASE("convergence report on a healthy fit") {
  const DrawSet draws = small_fit();
  const auto report = convergence_report(draws);
  CHECK(report.max_rhat < 1.1);
  CHECK(report.min_ess > 10.0);
  CHECK(report.pass);
}

TEST_CASE("posterior mean parameters match column means") {
  const DrawSet draws = small_fit();
  const Dataset ds = small_dataset();
  const auto layout = ParameterLayout::create(ds, ModelConfig{});
  const ParameterVector theta = posterior_mean_params(draws, layout);
  const int j = draws.index_of("gamma");
  CHECK(theta.values[j] == doctest::Approx(draws.pooled(j).mean()).epsilon(1e-12));
}

TEST_CASE("drawset round trips through the run directory") {
  const DrawSet draws = small_fit(false, 99);
  TempDir dir("draws");
  save_drawset(draws, dir.path(), true);
  const DrawSet back = load_drawset(dir.path());
  CHECK(back.names == draws.names);
  CHECK(back.seed == draws.seed);
  CHECK(back.config_hash == draws.config_hash);
  CHECK(back.dataset_hash == draws.dataset_hash);
  REQUIRE(back.chain_count() == draws.chain_count());
  for (int k = 0; k < draws.chain_count(); ++k) {
    CHECK(back.chains[static_cast<std::size_t>(k)] == draws.chains[static_cast<std::size_t>(k)]);
  }
  CHECK(std::filesystem::exists(dir.path() / "draws.bin"));
}

TEST_CASE("fit determinism: identical seeds give identical draws") {
  const DrawSet a = small_fit(false, 515);
  const DrawSet b = small_fit(false, 515);
  for (int k = 0; k < a.chain_count(); ++k) {
    CHECK(a.chains[static_cast<std::size_t>(k)] == b.chains[static_cast<std::size_t>(k)]);
  }
}
