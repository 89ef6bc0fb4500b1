#include "scan/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace scan {

Parameter::Parameter(std::string name_, Matrix value_) : name(std::move(name_)), value(std::move(value_)) {
  zero_grad();
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) {
  Node node;
  node.value = std::move(value);
  return push(std::move(node));
}

Var Tape::param(Parameter& p) {
  if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
  Node node;
  node.source = &p;
  node.sink = &p;
  node.requires_grad = true;
  return push(std::move(node));
}

Var Tape::param(const Parameter& p) {
  Node node;
  node.source = &p;
  return push(std::move(node));
}

const Matrix& Tape::value(Var v) const {
  const Node& node = nodes_[v.id];
  return node.source ? node.source->value : node.value;
}

Matrix& Tape::grad(Var v) {
  Node& node = nodes_[v.id];
  if (node.sink) return node.sink->grad;
  if (!node.has_grad) {
    node.grad.setZero(node.value.rows(), node.value.cols());
    node.has_grad = true;
  }
  return node.grad;
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  Node node;
  node.value = std::move(value);
  for (Var in : inputs) node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
  if (node.requires_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

template <typename Fn>
Var Tape::unary(Var a, Matrix value, Fn&& local_grad) {
  const Var inputs[] = {a};
  return record(std::move(value), inputs,
                [a, local_grad = std::forward<Fn>(local_grad)](Tape& t, const Matrix& g) {
                  t.grad(a) += local_grad(t, g);
                });
}

Var Tape::lookup(Parameter& table, std::span<const int> ids) { return gather_rows(param(table), ids); }

Var Tape::lookup(const Parameter& table, std::span<const int> ids) { return gather_rows(param(table), ids); }

Var Tape::gather_rows(Var tv, std::span<const int> ids) {
  const Matrix& table = value(tv);
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || ids[t] >= table.rows()) {
      throw std::out_of_range("lookup: id " + std::to_string(ids[t]) + " outside table of " +
                              std::to_string(table.rows()) + " rows");
    }
    out.row(static_cast<Eigen::Index>(t)) = table.row(ids[t]);
  }
  std::vector<int> rows(ids.begin(), ids.end());
  const Var inputs[] = {tv};
  return record(std::move(out), inputs, [tv, rows = std::move(rows)](Tape& t, const Matrix& g) {
    Matrix& tg = t.grad(tv);
    for (std::size_t r = 0; r < rows.size(); ++r) tg.row(rows[r]) += g.row(static_cast<Eigen::Index>(r));
  });
}

Var Tape::matmul(Var a, Var b) {
  Matrix out = value(a) * value(b);
  const Var inputs[] = {a, b};
  return record(std::move(out), inputs, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.grad(a).noalias() += g * t.value(b).transpose();
    if (t.requires_grad(b)) t.grad(b).noalias() += t.value(a).transpose() * g;
  });
}

Var Tape::matmul_bt(Var a, Var b) {
  Matrix out = value(a) * value(b).transpose();
  const Var inputs[] = {a, b};
  return record(std::move(out), inputs, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.grad(a).noalias() += g * t.value(b);
    if (t.requires_grad(b)) t.grad(b).noalias() += g.transpose() * t.value(a);
  });
}

Var Tape::add(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
    throw std::invalid_argument("add: shape mismatch");
  }
  Matrix out = value(a) + value(b);
  const Var inputs[] = {a, b};
  return record(std::move(out), inputs, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.grad(a) += g;
    if (t.requires_grad(b)) t.grad(b) += g;
  });
}

Var Tape::add_row(Var a, Var row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols()) {
    throw std::invalid_argument("add_row: expected a 1x" + std::to_string(value(a).cols()) + " row");
  }
  Matrix out = value(a).rowwise() + value(row).row(0);
  const Var inputs[] = {a, row};
  return record(std::move(out), inputs, [a, row](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.grad(a) += g;
    if (t.requires_grad(row)) t.grad(row) += g.colwise().sum();
  });
}

Var Tape::scale(Var a, double k) {
  return unary(a, value(a) * k, [k](Tape&, const Matrix& g) -> Matrix { return g * k; });
}

Var Tape::sigmoid(Var a) {
  Matrix out = value(a).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  Matrix y = out;
  return unary(a, std::move(out), [y = std::move(y)](Tape&, const Matrix& g) -> Matrix {
    return g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
  });
}

Var Tape::tanh(Var a) {
  Matrix out = value(a).array().tanh().matrix();
  Matrix y = out;
  return unary(a, std::move(out), [y = std::move(y)](Tape&, const Matrix& g) -> Matrix {
    return (g.array() * (1.0 - y.array().square())).matrix();
  });
}

Var Tape::relu(Var a) {
  Matrix out = value(a).cwiseMax(0.0);
  return unary(a, std::move(out), [a](Tape& t, const Matrix& g) -> Matrix {
    return (t.value(a).array() > 0.0).select(g, 0.0);
  });
}

namespace {

RowVector softmax_row(const RowVector& x, const std::vector<bool>* mask) {
  double peak = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!mask || (*mask)[static_cast<std::size_t>(i)]) peak = std::max(peak, x(i));
  }
  RowVector out = RowVector::Zero(x.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (mask && !(*mask)[static_cast<std::size_t>(i)]) continue;
    out(i) = std::exp(x(i) - peak);
    total += out(i);
  }
  return out / total;
}

// Row-wise softmax Jacobian-vector product: dx = y ⊙ (g − <g, y>).
Matrix softmax_backward(const Matrix& y, const Matrix& g) {
  Matrix dx(y.rows(), y.cols());
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double dot = g.row(r).dot(y.row(r));
    dx.row(r) = y.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
  }
  return dx;
}

}  // namespace

Var Tape::softmax_rows(Var a) {
  const Matrix& x = value(a);
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r) = softmax_row(x.row(r), nullptr);
  Matrix y = out;
  return unary(a, std::move(out),
               [y = std::move(y)](Tape&, const Matrix& g) -> Matrix { return softmax_backward(y, g); });
}

Var Tape::masked_softmax(Var a, const std::vector<bool>& mask) {
  const Matrix& x = value(a);
  if (x.rows() != 1 || static_cast<std::size_t>(x.cols()) != mask.size()) {
    throw std::invalid_argument("masked_softmax: expects a 1xk row and a k-entry mask");
  }
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
    throw std::invalid_argument("masked_softmax: every entry is masked");
  }
  Matrix out = softmax_row(x.row(0), &mask);
  Matrix y = out;
  return unary(a, std::move(out),
               [y = std::move(y)](Tape&, const Matrix& g) -> Matrix { return softmax_backward(y, g); });
}

Var Tape::stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no rows");
  const Eigen::Index cols = value(rows.front()).cols();
  Matrix out(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (value(rows[r]).rows() != 1 || value(rows[r]).cols() != cols) {
      throw std::invalid_argument("stack_rows: ragged rows");
    }
    out.row(static_cast<Eigen::Index>(r)) = value(rows[r]);
  }
  std::vector<Var> in(rows.begin(), rows.end());
  return record(std::move(out), rows, [in = std::move(in)](Tape& t, const Matrix& g) {
    for (std::size_t r = 0; r < in.size(); ++r) {
      if (t.requires_grad(in[r])) t.grad(in[r]) += g.row(static_cast<Eigen::Index>(r));
    }
  });
}

Var Tape::transpose(Var a) {
  return unary(a, value(a).transpose(), [](Tape&, const Matrix& g) -> Matrix { return g.transpose(); });
}

Var Tape::sum_squares(Var a) {
  Matrix out(1, 1);
  out(0, 0) = value(a).squaredNorm();
  return unary(a, std::move(out),
               [a](Tape& t, const Matrix& g) -> Matrix { return 2.0 * g(0, 0) * t.value(a); });
}

Var Tape::weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
  if (terms.size() != weights.size()) throw std::invalid_argument("weighted_sum: size mismatch");
  Matrix out = Matrix::Zero(1, 1);
  for (std::size_t k = 0; k < terms.size(); ++k) out(0, 0) += weights[k] * scalar(terms[k]);
  std::vector<Var> in(terms.begin(), terms.end());
  std::vector<double> w(weights.begin(), weights.end());
  return record(std::move(out), terms, [in = std::move(in), w = std::move(w)](Tape& t, const Matrix& g) {
    for (std::size_t k = 0; k < in.size(); ++k) {
      if (t.requires_grad(in[k])) t.grad(in[k])(0, 0) += w[k] * g(0, 0);
    }
  });
}

void Tape::backward(Var loss) {
  if (value(loss).size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  grad(loss)(0, 0) += 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.backward || !node.has_grad) continue;
    // Closures only touch the gradients of earlier nodes.
    node.backward(*this, node.grad);
  }
}

}  // namespace scan
