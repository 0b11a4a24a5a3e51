#pragma once

#include "dualcap/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace dualcap {

/// A named trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
    quantize_f32(value);
    grad = Matrix::Zero(value.rows(), value.cols());
  }

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using ParamVisitor = std::function<void(Parameter&)>;
using ConstParamVisitor = std::function<void(const Parameter&)>;

/// Non-owning, ordered view over parameters gathered from one or more modules.
using ParamList = std::vector<Parameter*>;

void zero_grads(const ParamList& params);

/// Sha-256 over names, shapes and float32 values, lowercase hex.
std::string fingerprint(const std::vector<const Parameter*>& params);

}  // namespace dualcap
