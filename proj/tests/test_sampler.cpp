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

#include "countyprev/sampler.hpp"
#include "countyprev/util.hpp"
#include "support.hpp"

using namespace countyprev;
using countyprev::testing::GaussianTarget;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> values) {
  Eigen::VectorXd v(static_cast<long long>(values.size()));
  long long i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

}  // namespace

TEST_CASE("retained draw arithmetic") {
  SamplerConfig cfg;  // 50,000 / 25,000 / thin 10
  CHECK(retained_per_chain(cfg) == 2500);
  CHECK(retained_per_chain(cfg) * cfg.chains == 10000);

  SamplerConfig odd = cfg;
  odd.iterations = 1007;
  odd.warmup = 1000;
  odd.thin = 3;
  CHECK(retained_per_chain(odd) == 2);  // trailing remainder dropped

  SamplerConfig equal = cfg;
  equal.iterations = equal.warmup;
  CHECK(retained_per_chain(equal) == 0);
}

TEST_CASE("config validation") {
  SamplerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  SamplerConfig bad = cfg;
  bad.warmup = bad.iterations + 1;
  CHECK_THROWS_AS(bad.validate(), std::domain_error);
  bad = cfg;
  bad.target_accept = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::domain_error);
  bad = cfg;
  bad.thin = 0;
  CHECK_THROWS_AS(bad.validate(), std::domain_error);
}

TEST_CASE("standard 2-D gaussian moments") {
  GaussianTarget target(vec({1.0, 1.0}));
  SamplerConfig cfg;
  cfg.iterations = 10500;
  cfg.warmup = 500;
  cfg.thin = 1;
  cfg.seed = 99;
  const ChainResult res = run_chain(cfg, 0, target, Eigen::VectorXd::Zero(2));
  REQUIRE(res.draws.rows() == 10000);
  for (int j = 0; j < 2; ++j) {
    const double mean = res.draws.col(j).mean();
    const double var = (res.draws.col(j).array() - mean).square().sum() / (res.draws.rows() - 1.0);
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(var - 1.0) < 0.1);
  }
  // well-conditioned target: divergences are essentially impossible
  CHECK(res.stats.divergences < res.draws.rows() / 1000);
}

TEST_CASE("tiny step size saturates the tree and stays near the start") {
  GaussianTarget target(vec({1.0, 1.0, 1.0}));
  ChainState st;
  st.position = vec({0.3, -0.2, 0.1});
  st.step_size = 1e-10;
  st.inverse_mass_diag = Eigen::VectorXd::Ones(3);
  st.max_tree_depth = 6;
  st.rng = Rng(7);
  const Eigen::VectorXd start = st.position;
  const TransitionInfo info = nuts_transition(st, target);
  CHECK(st.treedepth_saturations == 1);
  CHECK(info.depth == 6);
  CHECK((st.position - start).norm() < 1e-6);
}

TEST_CASE("leapfrog reverses to the start under momentum flip") {
  GaussianTarget target(vec({1.0, 4.0}));
  const Eigen::VectorXd mass = Eigen::VectorXd::Ones(2);
  Eigen::VectorXd z = vec({0.7, -0.4});
  Eigen::VectorXd p = vec({0.2, 0.5});
  Eigen::VectorXd grad;
  target.value_and_gradient(z, grad);
  const Eigen::VectorXd z0 = z, p0 = p;
  const double eps = 1e-3;
  for (int i = 0; i < 64; ++i) leapfrog_step(target, mass, eps, z, p, grad);
  p = -p;
  for (int i = 0; i < 64; ++i) leapfrog_step(target, mass, eps, z, p, grad);
  CHECK((z - z0).norm() < 1e-8);
  CHECK((p + p0).norm() < 1e-8);
}

TEST_CASE("dual averaging drives acceptance toward the target") {
  GaussianTarget target(vec({1.0, 1.0, 1.0, 1.0, 1.0}));
  SamplerConfig cfg;
  cfg.iterations = 3000;
  cfg.warmup = 1000;
  cfg.thin = 1;
  cfg.target_accept = 0.8;
  cfg.seed = 5;
  const ChainResult res = run_chain(cfg, 0, target, Eigen::VectorXd::Zero(5));
  CHECK(std::abs(res.stats.mean_accept - cfg.target_accept) < 0.1);
}

TEST_CASE("mass adaptation recovers anisotropic variances") {
  GaussianTarget target(vec({1.0, 100.0}));
  SamplerConfig cfg;
  cfg.iterations = 3000;
  cfg.warmup = 1500;
  cfg.thin = 1;
  cfg.seed = 17;
  const ChainResult res = run_chain(cfg, 0, target, Eigen::VectorXd::Zero(2));
  const double ratio = res.stats.inverse_mass_diag[1] / res.stats.inverse_mass_diag[0];
  CHECK(ratio > 50.0);
  CHECK(ratio < 200.0);
  CHECK(res.stats.inverse_mass_diag[0] == doctest::Approx(1.0).epsilon(1.0));
}

TEST_CASE("zero warmup leaves step size and mass at initialization") {
  GaussianTarget target(vec({1.0, 1.0}));
  SamplerConfig cfg;
  cfg.iterations = 50;
  cfg.warmup = 0;
  cfg.thin = 1;
  const ChainResult res = run_chain(cfg, 0, target, Eigen::VectorXd::Zero(2));
  CHECK(res.stats.step_size == 1.0);
  CHECK(res.stats.inverse_mass_diag == Eigen::VectorXd::Ones(2));
}

TEST_CASE("determinism per (seed, chain index)") {
  GaussianTarget target(vec({1.0, 2.0}));
  SamplerConfig cfg;
  cfg.iterations = 600;
  cfg.warmup = 300;
  cfg.thin = 2;
  cfg.seed = 4242;
  const ChainResult a = run_chain(cfg, 1, target, Eigen::VectorXd::Zero(2));
  const ChainResult b = run_chain(cfg, 1, target, Eigen::VectorXd::Zero(2));
  CHECK(a.draws == b.draws);
  CHECK(a.energy == b.energy);
  const ChainResult c = run_chain(cfg, 2, target, Eigen::VectorXd::Zero(2));
  CHECK(a.draws != c.draws);
}

TEST_CASE("iterations equal to warmup give a valid empty result") {
  GaussianTarget target(vec({1.0}));
  SamplerConfig cfg;
  cfg.iterations = 200;
  cfg.warmup = 200;
  cfg.thin = 1;
  const ChainResult res = run_chain(cfg, 0, target, Eigen::VectorXd::Zero(1));
  CHECK(res.draws.rows() == 0);
  CHECK(res.energy.size() == 0);
}

TEST_CASE("initialization failure after exhausting retries") {
  // A target that is nowhere finite.
  class Hostile : public LogDensity {
   public:
    int dim() const override { return 2; }
    double value_and_gradient(const Eigen::VectorXd&, Eigen::VectorXd&) const override {
      return -std::numeric_limits<double>::infinity();
    }
  } hostile;
  SamplerConfig cfg;
  cfg.iterations = 10;
  cfg.warmup = 5;
  cfg.max_init_retries = 20;
  CHECK_THROWS_AS(run_chain(cfg, 0, hostile, Eigen::VectorXd::Zero(2)), NumericError);
}

TEST_CASE("kolmogorov-smirnov smoke test on a 1-D gaussian") {
  GaussianTarget target(vec({1.0}));
  SamplerConfig cfg;
  cfg.iterations = 4500;
  cfg.warmup = 500;
  cfg.thin = 1;
  cfg.seed = 11;
  const ChainResult res = run_chain(cfg, 0, target, Eigen::VectorXd::Zero(1));
  std::vector<double> sample(res.draws.col(0).data(), res.draws.col(0).data() + res.draws.rows());
  const double d = countyprev::testing::ks_statistic_standard_normal(sample);
  const double crit = 1.6276236307187293 / std::sqrt(static_cast<double>(sample.size()));
  CHECK(d < crit);
}
