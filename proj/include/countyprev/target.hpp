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
#ifndef COUNTYPREV_TARGET_HPP
#define COUNTYPREV_TARGET_HPP

#include <Eigen/Dense>

namespace countyprev {

/// An unnormalized log density with gradient on an unconstrained space.
/// Implementations must return -inf (never throw, never NaN) for points
/// outside the computable region so the sampler can treat them as divergent.
class LogDensity {
 public:
  virtual ~LogDensity() = default;
  virtual int dim() const = 0;
  /// Returns log density; fills `grad` (resized to dim) when finite.
  virtual double value_and_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const = 0;

  double value(const Eigen::VectorXd& z) const {
    Eigen::VectorXd g;
    return value_and_gradient(z, g);
  }
};

}  // namespace countyprev

#endif  // COUNTYPREV_TARGET_HPP
