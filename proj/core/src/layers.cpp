#include "dualcap/layers.hpp"

#include <cmath>

namespace dualcap {

Linear::Linear(const std::string& name, int in, int out, Rng& rng)
    : w(name + ".w", random_normal(rng, in, out, 1.0 / std::sqrt(static_cast<double>(in)))),
      b(name + ".b", Matrix::Zero(1, out)) {}

LayerNorm::LayerNorm(const std::string& name, int width)
    : gamma(name + ".gamma", Matrix::Ones(1, width)), beta(name + ".beta", Matrix::Zero(1, width)) {}

AttentionWeights::AttentionWeights(const std::string& name, int width, int kv_width, Rng& rng)
    : q(name + ".q", width, width, rng),
      k(name + ".k", kv_width, width, rng),
      v(name + ".v", kv_width, width, rng),
      o(name + ".o", width, width, rng) {}

}  // namespace dualcap
