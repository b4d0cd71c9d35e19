#include "clora/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "clora/kernels.hpp"

namespace clora {

void AdamOptions::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("adam: lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("adam: beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("adam: beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("adam: eps must be > 0");
}

AdamState::AdamState(std::size_t rows, std::size_t cols, AdamOptions opts)
    : first_moment(rows, cols), second_moment(rows, cols), options(opts) {
  options.validate();
}

void adam_step(Matrix& param, const Matrix& grad, AdamState& state) {
  if (!param.same_shape(grad)) throw_shape_error("adam_step", param, grad);
  if (!param.same_shape(state.first_moment)) throw_shape_error("adam_step", param, state.first_moment);
  ++state.step_count;
  const auto t = static_cast<double>(state.step_count);
  const AdamOptions& o = state.options;
  const kernels::AdamCoeffs coeffs{o.lr, o.beta1, o.beta2, o.eps, 1.0 - std::pow(o.beta1, t),
                                   1.0 - std::pow(o.beta2, t)};
  kernels::active().adam_update(param.size(), param.data().data(), grad.data().data(),
                                state.first_moment.data().data(),
                                state.second_moment.data().data(), coeffs);
}

double grad_check(const LossFn& loss, const GradFn& grad, std::span<const double> params,
                  double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be > 0");
  std::vector<double> probe(params.begin(), params.end());
  const std::vector<double> analytic = grad(probe);
  if (analytic.size() != probe.size()) {
    throw ShapeError("grad_check: gradient has " + std::to_string(analytic.size()) +
                     " entries for " + std::to_string(probe.size()) + " parameters");
  }
  auto checked = [&](std::size_t i) {
    const double v = loss(probe);
    if (!std::isfinite(v)) {
      throw NumericError("grad_check: non-finite loss while probing coordinate " +
                         std::to_string(i));
    }
    return v;
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double up = checked(i);
    probe[i] = saved - eps;
    const double down = checked(i);
    probe[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace clora
