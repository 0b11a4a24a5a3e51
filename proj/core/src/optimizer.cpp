#include "dualcap/optimizer.hpp"

#include "dualcap/errors.hpp"

#include <cmath>

namespace dualcap {

void AdamW::step(const ParamList& params) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  for (Parameter* p : params) {
    if (p->frozen) continue;
    if (!p->grad.allFinite()) throw NumericError("non-finite gradient for " + p->name);
    auto [it, inserted] = moments_.try_emplace(p->name);
    Moments& m = it->second;
    if (inserted) {
      m.first = Matrix::Zero(p->value.rows(), p->value.cols());
      m.second = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    m.first = cfg_.beta1 * m.first + (1.0 - cfg_.beta1) * p->grad;
    m.second = cfg_.beta2 * m.second + (1.0 - cfg_.beta2) * p->grad.cwiseProduct(p->grad);
    quantize_f32(m.first);
    quantize_f32(m.second);
    p->value *= (1.0 - cfg_.lr * cfg_.weight_decay);
    p->value.array() -= cfg_.lr * (m.first.array() / bc1) / ((m.second.array() / bc2).sqrt() + cfg_.eps);
    quantize_f32(p->value);
  }
}

}  // namespace dualcap
