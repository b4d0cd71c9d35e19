#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "clora/matrix.hpp"

namespace clora {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Moments for one parameter matrix. Confine to one thread per parameter.
struct AdamState {
  Matrix first_moment;
  Matrix second_moment;
  std::uint64_t step_count = 0;
  AdamOptions options;

  AdamState() = default;
  AdamState(std::size_t rows, std::size_t cols, AdamOptions opts);
  static AdamState like(const Matrix& param, AdamOptions opts) {
    return AdamState(param.rows(), param.cols(), opts);
  }
};

/// Bias-corrected Adam update of `param` in place; increments the step count.
void adam_step(Matrix& param, const Matrix& grad, AdamState& state);

using LossFn = std::function<double(std::span<const double>)>;
using GradFn = std::function<std::vector<double>(std::span<const double>)>;

/// Max over coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|),
/// where numeric is the central difference with step `eps`.
/// Throws NumericError if the loss is non-finite at any probe point.
double grad_check(const LossFn& loss, const GradFn& grad, std::span<const double> params,
                  double eps);

}  // namespace clora
