#include "dualcap/autograd.hpp"

#include "gradcheck.hpp"

#include <gtest/gtest.h>

#include <functional>

namespace dualcap {
namespace {

using UnaryOp = std::function<ag::Var(const ag::Var&)>;

double reduce_check(Matrix input, const UnaryOp& op) {
  // weighted sum so every output entry gets a distinct upstream gradient
  Rng rng(99);
  const ag::Var probe = ag::variable(input);
  const Matrix weights = random_normal(rng, op(probe).rows(), op(probe).cols(), 1.0);
  return testing::check_input_gradient(input, [&](const ag::Var& x) {
    return ag::sum_all(ag::mul(op(x), ag::constant(weights)));
  });
}

Matrix sample(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  return random_normal(rng, r, c, 1.0);
}

TEST(Autograd, ElementwiseOps) {
  const Matrix other = sample(3, 4, 2);
  EXPECT_LT(reduce_check(sample(3, 4, 1), [&](const ag::Var& x) { return ag::add(x, ag::constant(other)); }), 1e-7);
  EXPECT_LT(reduce_check(sample(3, 4, 1), [&](const ag::Var& x) { return ag::sub(ag::constant(other), x); }), 1e-7);
  EXPECT_LT(reduce_check(sample(3, 4, 1), [&](const ag::Var& x) { return ag::mul(x, x); }), 1e-7);
  EXPECT_LT(reduce_check(sample(3, 4, 1), [](const ag::Var& x) { return ag::scale(x, -2.5); }), 1e-7);
  EXPECT_LT(reduce_check(sample(3, 4, 1), [](const ag::Var& x) { return ag::gelu(x); }), 1e-7);
}

TEST(Autograd, MatrixOps) {
  const Matrix w = sample(4, 5, 3);
  EXPECT_LT(reduce_check(sample(3, 4, 1), [&](const ag::Var& x) { return ag::matmul(x, ag::constant(w)); }), 1e-7);
  EXPECT_LT(reduce_check(sample(4, 5, 1), [&](const ag::Var& x) { return ag::matmul(ag::constant(sample(2, 4, 4)), x); }),
            1e-7);
  EXPECT_LT(reduce_check(sample(3, 4, 1), [](const ag::Var& x) { return ag::transpose(x); }), 1e-7);
  EXPECT_LT(reduce_check(sample(1, 4, 1), [](const ag::Var& b) { return ag::add_bias(ag::constant(Matrix::Ones(3, 4)), b); }),
            1e-7);
}

TEST(Autograd, Normalisation) {
  const Matrix gamma = sample(1, 6, 5);
  const Matrix beta = sample(1, 6, 6);
  EXPECT_LT(reduce_check(sample(3, 6, 1),
                         [&](const ag::Var& x) { return ag::layer_norm(x, ag::constant(gamma), ag::constant(beta)); }),
            1e-6);
  EXPECT_LT(reduce_check(sample(3, 6, 1), [](const ag::Var& x) { return ag::normalize_rows(x); }), 1e-6);
}

TEST(Autograd, RowOps) {
  EXPECT_LT(reduce_check(sample(5, 3, 1), [](const ag::Var& x) { return ag::rows(x, 1, 3); }), 1e-7);
  EXPECT_LT(reduce_check(sample(6, 3, 1), [](const ag::Var& x) { return ag::group_max_rows(x, 3); }), 1e-7);
  EXPECT_LT(reduce_check(sample(2, 3, 1),
                         [](const ag::Var& x) {
                           const std::vector<ag::Var> parts{x, ag::constant(Matrix::Ones(1, 3)), x};
                           return ag::concat_rows(parts);
                         }),
            1e-7);
  const std::vector<int> ids{2, 0, 2, 1};
  EXPECT_LT(reduce_check(sample(3, 4, 1), [&](const ag::Var& t) { return ag::embedding(t, ids); }), 1e-7);
}

TEST(Autograd, Attention) {
  ag::BoolMatrix mask = ag::BoolMatrix::Constant(3, 4, true);
  mask(0, 3) = false;
  mask(1, 0) = false;
  const Matrix k = sample(4, 6, 7);
  const Matrix v = sample(4, 6, 8);
  EXPECT_LT(reduce_check(sample(3, 6, 1),
                         [&](const ag::Var& q) { return ag::attention(q, ag::constant(k), ag::constant(v), mask, 2); }),
            1e-6);
  EXPECT_LT(reduce_check(k, [&](const ag::Var& kk) {
              return ag::attention(ag::constant(sample(3, 6, 1)), kk, ag::constant(v), mask, 2);
            }),
            1e-6);
}

TEST(Autograd, MaskedEdgesCarryNoWeight) {
  // values at masked keys must not influence the output
  ag::BoolMatrix mask = ag::BoolMatrix::Constant(2, 3, true);
  mask(0, 2) = false;
  mask(1, 2) = false;
  const Matrix q = sample(2, 4, 1);
  const Matrix k = sample(3, 4, 2);
  Matrix v = sample(3, 4, 3);
  const Matrix a = ag::attention(ag::constant(q), ag::constant(k), ag::constant(v), mask, 2).value();
  v.row(2).setConstant(1e6);
  const Matrix b = ag::attention(ag::constant(q), ag::constant(k), ag::constant(v), mask, 2).value();
  EXPECT_TRUE(a == b);
}

TEST(Autograd, Losses) {
  const std::vector<int> targets{1, -1, 0};
  EXPECT_LT(testing::check_input_gradient(*std::make_unique<Matrix>(sample(3, 4, 1)),
                                          [&](const ag::Var& x) { return ag::cross_entropy_sum(x, targets); }),
            1e-7);
  const std::vector<double> labels{1.0, 0.0, 1.0};
  Matrix logits = sample(3, 1, 2);
  EXPECT_LT(testing::check_input_gradient(logits, [&](const ag::Var& x) { return ag::bce_with_logits_sum(x, labels); }),
            1e-7);
}

TEST(Autograd, ScalarOps) {
  Matrix s = Matrix::Constant(1, 1, 0.37);
  const Matrix x = sample(2, 3, 4);
  EXPECT_LT(testing::check_input_gradient(
                s, [&](const ag::Var& t) { return ag::sum_all(ag::scale_by(ag::constant(x), ag::reciprocal(t))); }),
            1e-7);
  EXPECT_LT(reduce_check(sample(2, 3, 1), [](const ag::Var& t) { return ag::scale(ag::mean_all(t), 1.0); }), 1e-7);
}

TEST(Autograd, FrozenParameterBindsAsConstant) {
  Parameter p("w", Matrix::Ones(2, 2));
  p.frozen = true;
  const ag::Var w = ag::leaf(p);
  EXPECT_FALSE(w.requires_grad());
  Parameter live("v", Matrix::Ones(2, 2));
  const ag::Var v = ag::leaf(live);
  ag::backward(ag::sum_all(ag::mul(v, w)));
  EXPECT_TRUE(p.grad.isZero(0.0));
  EXPECT_TRUE(live.grad.isApprox(Matrix::Ones(2, 2)));
}

TEST(Autograd, GradientsAccumulateAcrossUses) {
  Parameter p("w", Matrix::Constant(1, 1, 3.0));
  const ag::Var w = ag::leaf(p);
  ag::backward(ag::add(ag::mul(w, w), w));  // d/dw (w^2 + w) = 2w + 1
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 7.0);
}

}  // namespace
}  // namespace dualcap
