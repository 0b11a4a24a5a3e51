#include "dualcap/autograd.hpp"

#include "dualcap/errors.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

namespace dualcap::ag {
namespace {

template <typename Expr>
void accumulate(const NodePtr& node, const Expr& g) {
  if (!node->requires_grad) return;
  if (node->grad.size() == 0) {
    node->grad = g;
  } else {
    node->grad += g;
  }
}

Var make(Matrix value, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(fn);
  }
  return Var(std::move(node));
}

void require_shape(bool ok, const char* op) {
  if (!ok) throw NumericError(std::string("shape mismatch in ") + op);
}

}  // namespace

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var leaf(Parameter& p) {
  auto node = std::make_shared<Node>();
  node->value = p.value;
  if (!p.frozen) {
    node->requires_grad = true;
    node->param = &p;
  }
  return Var(std::move(node));
}

Var variable(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

void backward(const Var& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1)
    throw NumericError("backward() needs a scalar loss");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad = Matrix::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& node = **it;
    if (node.grad.size() == 0) continue;
    if (node.backward) node.backward(node);
    if (node.param != nullptr) node.param->grad += node.grad;
  }
}

Var add(const Var& a, const Var& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  return make(a.value() + b.value(), {a.node(), b.node()}, [](Node& n) {
    accumulate(n.parents[0], n.grad);
    accumulate(n.parents[1], n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
  return make(a.value() - b.value(), {a.node(), b.node()}, [](Node& n) {
    accumulate(n.parents[0], n.grad);
    accumulate(n.parents[1], -n.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul");
  return make(a.value().cwiseProduct(b.value()), {a.node(), b.node()}, [](Node& n) {
    const Matrix& av = n.parents[0]->value;
    const Matrix& bv = n.parents[1]->value;
    accumulate(n.parents[0], n.grad.cwiseProduct(bv));
    accumulate(n.parents[1], n.grad.cwiseProduct(av));
  });
}

Var add_bias(const Var& x, const Var& bias) {
  require_shape(bias.rows() == 1 && bias.cols() == x.cols(), "add_bias");
  Matrix out = x.value();
  out.rowwise() += bias.value().row(0);
  return make(std::move(out), {x.node(), bias.node()}, [](Node& n) {
    accumulate(n.parents[0], n.grad);
    accumulate(n.parents[1], n.grad.colwise().sum());
  });
}

Var add_const(const Var& x, const Matrix& c) {
  require_shape(c.rows() == x.rows() && c.cols() == x.cols(), "add_const");
  return make(x.value() + c, {x.node()}, [](Node& n) { accumulate(n.parents[0], n.grad); });
}

Var scale(const Var& x, double s) {
  return make(x.value() * s, {x.node()}, [s](Node& n) { accumulate(n.parents[0], n.grad * s); });
}

Var scale_by(const Var& x, const Var& scalar) {
  require_shape(scalar.rows() == 1 && scalar.cols() == 1, "scale_by");
  return make(x.value() * scalar.item(), {x.node(), scalar.node()}, [](Node& n) {
    const double s = n.parents[1]->value(0, 0);
    accumulate(n.parents[0], n.grad * s);
    Matrix gs(1, 1);
    gs(0, 0) = n.grad.cwiseProduct(n.parents[0]->value).sum();
    accumulate(n.parents[1], gs);
  });
}

Var reciprocal(const Var& scalar) {
  require_shape(scalar.rows() == 1 && scalar.cols() == 1, "reciprocal");
  Matrix out(1, 1);
  out(0, 0) = 1.0 / scalar.item();
  return make(std::move(out), {scalar.node()}, [](Node& n) {
    const double x = n.parents[0]->value(0, 0);
    accumulate(n.parents[0], n.grad * (-1.0 / (x * x)));
  });
}

Var matmul(const Var& a, const Var& b) {
  require_shape(a.cols() == b.rows(), "matmul");
  Matrix out = a.value() * b.value();
  return make(std::move(out), {a.node(), b.node()}, [](Node& n) {
    const NodePtr& pa = n.parents[0];
    const NodePtr& pb = n.parents[1];
    if (pa->requires_grad) accumulate(pa, n.grad * pb->value.transpose());
    if (pb->requires_grad) accumulate(pb, pa->value.transpose() * n.grad);
  });
}

Var transpose(const Var& x) {
  return make(x.value().transpose(), {x.node()},
              [](Node& n) { accumulate(n.parents[0], n.grad.transpose()); });
}

Var gelu(const Var& x) {
  // tanh approximation
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.size(); ++i) {
    const double z = xv.data()[i];
    out.data()[i] = 0.5 * z * (1.0 + std::tanh(kC * (z + kA * z * z * z)));
  }
  return make(std::move(out), {x.node()}, [](Node& n) {
    const Matrix& in = n.parents[0]->value;
    Matrix g(in.rows(), in.cols());
    for (Eigen::Index i = 0; i < in.size(); ++i) {
      const double z = in.data()[i];
      const double u = kC * (z + kA * z * z * z);
      const double t = std::tanh(u);
      const double du = kC * (1.0 + 3.0 * kA * z * z);
      g.data()[i] = n.grad.data()[i] * (0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * du);
    }
    accumulate(n.parents[0], g);
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index rows_n = x.rows();
  const Eigen::Index d = x.cols();
  require_shape(gamma.rows() == 1 && gamma.cols() == d && beta.rows() == 1 && beta.cols() == d,
                "layer_norm");
  Matrix xhat(rows_n, d);
  Eigen::VectorXd inv_std(rows_n);
  for (Eigen::Index r = 0; r < rows_n; ++r) {
    const auto row = x.value().row(r);
    const double mean = row.mean();
    const double var = (row.array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (row.array() - mean) * inv_std(r);
  }
  Matrix out = xhat;
  out.array().rowwise() *= gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return make(std::move(out), {x.node(), gamma.node(), beta.node()},
              [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
                const Matrix& g = n.grad;
                const auto& gam = n.parents[1]->value;
                if (n.parents[0]->requires_grad) {
                  Matrix gx(g.rows(), g.cols());
                  const double dd = static_cast<double>(g.cols());
                  for (Eigen::Index r = 0; r < g.rows(); ++r) {
                    const RowVector gh = g.row(r).cwiseProduct(gam.row(0));
                    const double mean_gh = gh.mean();
                    const double mean_ghx = gh.cwiseProduct(xhat.row(r)).sum() / dd;
                    gx.row(r) = inv_std(r) *
                                (gh.array() - mean_gh - xhat.row(r).array() * mean_ghx).matrix();
                  }
                  accumulate(n.parents[0], gx);
                }
                accumulate(n.parents[1], g.cwiseProduct(xhat).colwise().sum());
                accumulate(n.parents[2], g.colwise().sum());
              });
}

Var attention(const Var& q, const Var& k, const Var& v, const BoolMatrix& mask, int heads) {
  const Eigen::Index nq = q.rows();
  const Eigen::Index nk = k.rows();
  const Eigen::Index d = q.cols();
  require_shape(k.cols() == d && v.cols() == d && v.rows() == nk, "attention");
  require_shape(mask.rows() == nq && mask.cols() == nk, "attention mask");
  require_shape(heads >= 1 && d % heads == 0, "attention heads");
  const Eigen::Index dh = d / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  Matrix out(nq, d);
  for (int h = 0; h < heads; ++h) {
    const auto qh = q.value().middleCols(h * dh, dh);
    const auto kh = k.value().middleCols(h * dh, dh);
    const auto vh = v.value().middleCols(h * dh, dh);
    Matrix scores = (qh * kh.transpose()) * s;
    Matrix& p = probs[static_cast<std::size_t>(h)];
    p = Matrix::Zero(nq, nk);
    for (Eigen::Index i = 0; i < nq; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < nk; ++j)
        if (mask(i, j)) mx = std::max(mx, scores(i, j));
      if (!std::isfinite(mx)) throw NumericError("attention row with no visible key");
      double z = 0.0;
      for (Eigen::Index j = 0; j < nk; ++j) {
        if (mask(i, j)) {
          p(i, j) = std::exp(scores(i, j) - mx);
          z += p(i, j);
        }
      }
      p.row(i) /= z;
    }
    out.middleCols(h * dh, dh) = p * vh;
  }
  return make(std::move(out), {q.node(), k.node(), v.node()},
              [probs = std::move(probs), heads, dh, s](Node& n) {
                const Matrix& qv = n.parents[0]->value;
                const Matrix& kv = n.parents[1]->value;
                const Matrix& vv = n.parents[2]->value;
                Matrix gq = Matrix::Zero(qv.rows(), qv.cols());
                Matrix gk = Matrix::Zero(kv.rows(), kv.cols());
                Matrix gv = Matrix::Zero(vv.rows(), vv.cols());
                for (int h = 0; h < heads; ++h) {
                  const Matrix& p = probs[static_cast<std::size_t>(h)];
                  const auto go = n.grad.middleCols(h * dh, dh);
                  gv.middleCols(h * dh, dh) = p.transpose() * go;
                  const Matrix gp = go * vv.middleCols(h * dh, dh).transpose();
                  const Eigen::VectorXd row_dot = gp.cwiseProduct(p).rowwise().sum();
                  Matrix gs = p.cwiseProduct(gp.colwise() - row_dot);
                  gs *= s;
                  gq.middleCols(h * dh, dh) = gs * kv.middleCols(h * dh, dh);
                  gk.middleCols(h * dh, dh) = gs.transpose() * qv.middleCols(h * dh, dh);
                }
                accumulate(n.parents[0], gq);
                accumulate(n.parents[1], gk);
                accumulate(n.parents[2], gv);
              });
}

Var rows(const Var& x, Eigen::Index begin, Eigen::Index count) {
  require_shape(begin >= 0 && count >= 0 && begin + count <= x.rows(), "rows");
  return make(x.value().middleRows(begin, count), {x.node()}, [begin, count](Node& n) {
    Matrix g = Matrix::Zero(n.parents[0]->value.rows(), n.parents[0]->value.cols());
    g.middleRows(begin, count) = n.grad;
    accumulate(n.parents[0], g);
  });
}

Var concat_rows(std::span<const Var> parts) {
  Eigen::Index total = 0;
  Eigen::Index cols = -1;
  std::vector<NodePtr> parents;
  for (const Var& p : parts) {
    if (p.rows() == 0) continue;
    if (cols < 0) cols = p.cols();
    require_shape(p.cols() == cols, "concat_rows");
    total += p.rows();
  }
  if (cols < 0) cols = parts.empty() ? 0 : parts.front().cols();
  Matrix out(total, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    if (p.rows() == 0) continue;
    out.middleRows(at, p.rows()) = p.value();
    offsets.push_back(at);
    parents.push_back(p.node());
    at += p.rows();
  }
  return make(std::move(out), parents, [offsets = std::move(offsets)](Node& n) {
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      const NodePtr& p = n.parents[i];
      if (p->requires_grad) accumulate(p, n.grad.middleRows(offsets[i], p->value.rows()));
    }
  });
}

Var embedding(const Var& table, std::span<const int> ids) {
  const auto n_rows = static_cast<Eigen::Index>(ids.size());
  Matrix out(n_rows, table.cols());
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    const int id = ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= table.rows()) throw NumericError("token id out of range");
    out.row(i) = table.value().row(id);
  }
  std::vector<int> copy(ids.begin(), ids.end());
  return make(std::move(out), {table.node()}, [copy = std::move(copy)](Node& n) {
    Matrix g = Matrix::Zero(n.parents[0]->value.rows(), n.parents[0]->value.cols());
    for (std::size_t i = 0; i < copy.size(); ++i) g.row(copy[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    accumulate(n.parents[0], g);
  });
}

Var normalize_rows(const Var& x, double eps) {
  Matrix out = x.value();
  Eigen::VectorXd norms(out.rows());
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    norms(r) = std::max(out.row(r).norm(), eps);
    out.row(r) /= norms(r);
  }
  Matrix y = out;
  return make(std::move(out), {x.node()}, [y = std::move(y), norms = std::move(norms)](Node& n) {
    Matrix g(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = n.grad.row(r).dot(y.row(r));
      g.row(r) = (n.grad.row(r) - dot * y.row(r)) / norms(r);
    }
    accumulate(n.parents[0], g);
  });
}

Var group_max_rows(const Var& x, Eigen::Index group) {
  require_shape(group >= 1 && x.rows() % group == 0, "group_max_rows");
  const Eigen::Index groups = x.rows() / group;
  Matrix out(groups, x.cols());
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> arg(groups, x.cols());
  for (Eigen::Index gi = 0; gi < groups; ++gi) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      Eigen::Index best = gi * group;
      for (Eigen::Index r = gi * group + 1; r < (gi + 1) * group; ++r)
        if (x.value()(r, c) > x.value()(best, c)) best = r;
      out(gi, c) = x.value()(best, c);
      arg(gi, c) = best;
    }
  }
  return make(std::move(out), {x.node()}, [arg = std::move(arg)](Node& n) {
    Matrix g = Matrix::Zero(n.parents[0]->value.rows(), n.parents[0]->value.cols());
    for (Eigen::Index gi = 0; gi < arg.rows(); ++gi)
      for (Eigen::Index c = 0; c < arg.cols(); ++c) g(arg(gi, c), c) += n.grad(gi, c);
    accumulate(n.parents[0], g);
  });
}

Var sum_all(const Var& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return make(std::move(out), {x.node()}, [](Node& n) {
    const auto& pv = n.parents[0]->value;
    accumulate(n.parents[0], Matrix::Constant(pv.rows(), pv.cols(), n.grad(0, 0)));
  });
}

Var mean_all(const Var& x) {
  const double count = static_cast<double>(x.value().size());
  return scale(sum_all(x), 1.0 / count);
}

Var cross_entropy_sum(const Var& logits, std::span<const int> targets) {
  require_shape(static_cast<Eigen::Index>(targets.size()) == logits.rows(), "cross_entropy_sum");
  const Matrix& lv = logits.value();
  Matrix probs(lv.rows(), lv.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < lv.rows(); ++r) {
    const double mx = lv.row(r).maxCoeff();
    probs.row(r) = (lv.row(r).array() - mx).exp();
    const double z = probs.row(r).sum();
    probs.row(r) /= z;
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0) continue;
    if (t >= lv.cols()) throw NumericError("cross-entropy target out of range");
    total += -(lv(r, t) - mx - std::log(z));
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  std::vector<int> copy(targets.begin(), targets.end());
  return make(std::move(out), {logits.node()},
              [probs = std::move(probs), copy = std::move(copy)](Node& n) {
                Matrix g = probs;
                for (Eigen::Index r = 0; r < g.rows(); ++r) {
                  const int t = copy[static_cast<std::size_t>(r)];
                  if (t < 0) {
                    g.row(r).setZero();
                  } else {
                    g(r, t) -= 1.0;
                  }
                }
                accumulate(n.parents[0], g * n.grad(0, 0));
              });
}

Var bce_with_logits_sum(const Var& logits, std::span<const double> labels) {
  require_shape(logits.cols() == 1 && static_cast<Eigen::Index>(labels.size()) == logits.rows(),
                "bce_with_logits_sum");
  const Matrix& lv = logits.value();
  double total = 0.0;
  Matrix sig(lv.rows(), 1);
  for (Eigen::Index r = 0; r < lv.rows(); ++r) {
    const double z = lv(r, 0);
    const double y = labels[static_cast<std::size_t>(r)];
    // max(z,0) - z*y + log(1 + exp(-|z|))
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    sig(r, 0) = 1.0 / (1.0 + std::exp(-z));
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  std::vector<double> copy(labels.begin(), labels.end());
  return make(std::move(out), {logits.node()},
              [sig = std::move(sig), copy = std::move(copy)](Node& n) {
                Matrix g(sig.rows(), 1);
                for (Eigen::Index r = 0; r < sig.rows(); ++r)
                  g(r, 0) = (sig(r, 0) - copy[static_cast<std::size_t>(r)]) * n.grad(0, 0);
                accumulate(n.parents[0], g);
              });
}

}  // namespace dualcap::ag
