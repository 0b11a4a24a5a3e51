#pragma once

#include "dualcap/autograd.hpp"
#include "dualcap/parameter.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace dualcap::testing {

inline constexpr double kNoiseFloor = 1e-8;

struct TensorGradError {
  std::string name;
  double relative = 0.0;
  double analytic_norm = 0.0;
};

/// Central differences on every entry of every parameter against the gradient
/// left by one backward pass. `loss` must rebuild its graph on every call.
inline std::vector<TensorGradError> check_gradients(const ParamList& params, const std::function<ag::Var()>& loss,
                                                    double step = 1e-5) {
  zero_grads(params);
  ag::backward(loss());
  std::vector<TensorGradError> out;
  for (Parameter* p : params) {
    const Matrix analytic = p->grad;
    Matrix numeric(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double keep = p->value.data()[i];
      p->value.data()[i] = keep + step;
      const double up = loss().item();
      p->value.data()[i] = keep - step;
      const double down = loss().item();
      p->value.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2.0 * step);
    }
    const double scale = std::max(analytic.norm(), numeric.norm());
    // Both below central-difference round-off: the gradient is zero (e.g. attention key biases).
    const double rel = scale < kNoiseFloor ? 0.0 : (analytic - numeric).norm() / scale;
    out.push_back(TensorGradError{p->name, rel, analytic.norm()});
  }
  return out;
}

inline double worst(const std::vector<TensorGradError>& errors) {
  double w = 0.0;
  for (const auto& e : errors) w = std::max(w, e.relative);
  return w;
}

/// Same check for a free input matrix rather than a parameter.
inline double check_input_gradient(Matrix& input, const std::function<ag::Var(const ag::Var&)>& loss,
                                   double step = 1e-5) {
  const ag::Var x = ag::variable(input);
  ag::backward(loss(x));
  const Matrix analytic = x.grad();
  Matrix numeric(input.rows(), input.cols());
  for (Eigen::Index i = 0; i < input.size(); ++i) {
    const double keep = input.data()[i];
    input.data()[i] = keep + step;
    const double up = loss(ag::constant(input)).item();
    input.data()[i] = keep - step;
    const double down = loss(ag::constant(input)).item();
    input.data()[i] = keep;
    numeric.data()[i] = (up - down) / (2.0 * step);
  }
  const double scale = std::max(analytic.norm(), numeric.norm());
  return scale < kNoiseFloor ? 0.0 : (analytic - numeric).norm() / scale;
}

}  // namespace dualcap::testing
