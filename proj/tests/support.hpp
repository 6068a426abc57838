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
#ifndef COUNTYPREV_TESTS_SUPPORT_HPP
#define COUNTYPREV_TESTS_SUPPORT_HPP

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "countyprev/math.hpp"
#include "countyprev/model.hpp"
#include "countyprev/target.hpp"
#include "countyprev/types.hpp"

namespace countyprev::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    dir_ = std::filesystem::temp_directory_path() /
           ("countyprev_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  const std::filesystem::path& path() const { return dir_; }
  std::filesystem::path file(const std::string& name, const std::string& content) const {
    const auto p = dir_ / name;
    std::ofstream out(p);
    out << content;
    return p;
  }

 private:
  std::filesystem::path dir_;
};

/// Independent Gaussian target with chosen variances.
class GaussianTarget : public LogDensity {
 public:
  explicit GaussianTarget(Eigen::VectorXd variances) : var_(std::move(variances)) {}

  int dim() const override { return static_cast<int>(var_.size()); }

  double value_and_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const override {
    grad = -z.cwiseQuotient(var_);
    return -0.5 * z.cwiseQuotient(var_).dot(z);
  }

 private:
  Eigen::VectorXd var_;
};

/// Kolmogorov-Smirnov statistic of a sample against the standard normal CDF.
inline double ks_statistic_standard_normal(std::vector<double> sample) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double cdf = normal_cdf(sample[i]);
    const double hi = (static_cast<double>(i) + 1.0) / n - cdf;
    const double lo = cdf - static_cast<double>(i) / n;
    d = std::max(d, std::max(hi, lo));
  }
  return d;
}

/// In-memory dataset with one state, no covariates, explicit deaths.
/// `deaths < 0` marks a suppressed county.
inline Dataset tiny_dataset(const std::vector<long long>& populations, const std::vector<long long>& deaths,
                            long long threshold = 9) {
  Dataset ds;
  ds.suppression_threshold = threshold;
  for (std::size_t i = 0; i < populations.size(); ++i) {
    CountyRecord rec;
    rec.county_id = "C" + std::to_string(i + 1);
    rec.state_id = "ST";
    rec.population = populations[i];
    if (deaths[i] < 0) {
      rec.suppressed = true;
    } else {
      rec.deaths = deaths[i];
    }
    ds.counties.push_back(std::move(rec));
  }
  ds.rebuild_index();
  return ds;
}

/// A valid parameter vector over a layout: unit scales, zero coefficients,
/// gamma/r at interior defaults. Override entries by manifest name.
inline ParameterVector make_theta(const std::shared_ptr<const ParameterLayout>& layout,
                                  const std::vector<std::pair<std::string, double>>& overrides = {}) {
  ParameterVector theta;
  theta.layout = layout;
  theta.values = Eigen::VectorXd::Zero(layout->dim);
  const auto& L = *layout;
  auto set_block = [&theta](int off, int len, double v) {
    for (int i = 0; i < len; ++i) theta.values[off + i] = v;
  };
  set_block(L.lambda_p, L.P, 1.0);
  set_block(L.zeta_p, L.P, 1.0);
  set_block(L.lambda_m, L.M, 1.0);
  set_block(L.zeta_m, L.M, 1.0);
  if (L.P > 0) theta.values[L.tau_p] = 1.0;
  if (L.M > 0) theta.values[L.tau_m] = 1.0;
  if (L.re_p) theta.values[L.sigma0_p] = 1.0;
  if (L.re_m) theta.values[L.sigma0_m] = 1.0;
  theta.values[L.gamma] = L.gamma_constraint == GammaConstraint::UnitInterval ? 0.5 : 1.0;
  set_block(L.r, L.R, 0.5);
  set_block(L.shared, L.G, 1.0);
  for (const auto& [name, value] : overrides) {
    const int idx = layout->index_of(name);
    if (idx < 0) throw std::invalid_argument("make_theta: unknown name " + name);
    theta.values[idx] = value;
  }
  return theta;
}

/// Unconstrained coordinates of a synthetic ground truth (names absent from
/// the layout are ignored; shrinkage scales stay at their defaults).
inline Eigen::VectorXd unconstrained_truth(const std::map<std::string, double>& truth,
                                           const std::shared_ptr<const ParameterLayout>& layout) {
  auto theta = make_theta(layout);
  for (const auto& [name, value] : truth) {
    const int idx = layout->index_of(name);
    if (idx >= 0) theta.values[idx] = value;
  }
  return to_unconstrained(theta);
}

}  // namespace countyprev::testing

#endif  // COUNTYPREV_TESTS_SUPPORT_HPP
