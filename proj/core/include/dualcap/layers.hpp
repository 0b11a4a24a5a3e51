#pragma once

#include "dualcap/autograd.hpp"
#include "dualcap/parameter.hpp"

#include <string>

namespace dualcap {

/// y = x W + b with W stored (in x out).
struct Linear {
  Parameter w;
  Parameter b;

  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng);

  void visit(const ParamVisitor& fn) {
    fn(w);
    fn(b);
  }
};

struct LayerNorm {
  Parameter gamma;
  Parameter beta;

  LayerNorm() = default;
  LayerNorm(const std::string& name, int width);

  void visit(const ParamVisitor& fn) {
    fn(gamma);
    fn(beta);
  }
};

/// Projections around a multi-head attention core.
struct AttentionWeights {
  Linear q;
  Linear k;
  Linear v;
  Linear o;

  AttentionWeights() = default;
  AttentionWeights(const std::string& name, int width, int kv_width, Rng& rng);

  void visit(const ParamVisitor& fn) {
    q.visit(fn);
    k.visit(fn);
    v.visit(fn);
    o.visit(fn);
  }
};

// Graph-bound views. Binding copies values into leaf nodes once per loss evaluation.
struct BoundLinear {
  ag::Var w;
  ag::Var b;

  explicit BoundLinear(Linear& l) : w(ag::leaf(l.w)), b(ag::leaf(l.b)) {}
  ag::Var operator()(const ag::Var& x) const { return ag::add_bias(ag::matmul(x, w), b); }
};

struct BoundLayerNorm {
  ag::Var gamma;
  ag::Var beta;

  explicit BoundLayerNorm(LayerNorm& l) : gamma(ag::leaf(l.gamma)), beta(ag::leaf(l.beta)) {}
  ag::Var operator()(const ag::Var& x) const { return ag::layer_norm(x, gamma, beta); }
};

struct BoundAttention {
  BoundLinear q;
  BoundLinear k;
  BoundLinear v;
  BoundLinear o;

  explicit BoundAttention(AttentionWeights& a) : q(a.q), k(a.k), v(a.v), o(a.o) {}
  ag::Var operator()(const ag::Var& x, const ag::Var& context, const ag::BoolMatrix& mask, int heads) const {
    return o(ag::attention(q(x), k(context), v(context), mask, heads));
  }
};

}  // namespace dualcap
