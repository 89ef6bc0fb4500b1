#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace scan {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// A learnable tensor together with its accumulated gradient.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix value);

  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node recorded on a Tape. Only meaningful for the tape that created it.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode automatic differentiation over dense matrices.
///
/// Every op records its output value and a closure that propagates the
/// output gradient to its inputs. Gradients of Parameter nodes accumulate
/// straight into Parameter::grad, so several tapes (one per sentence) can
/// contribute to the same parameters before an optimizer step.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  Var constant(Matrix value);
  /// Trainable leaf: backward accumulates into p.grad.
  Var param(Parameter& p);
  /// Read-only leaf: takes part in the computation but never receives a gradient.
  Var param(const Parameter& p);

  const Matrix& value(Var v) const;
  /// Gradient slot of `v`; sized and zeroed on first access.
  Matrix& grad(Var v);
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  double scalar(Var v) const { return value(v)(0, 0); }
  std::size_t size() const { return nodes_.size(); }

  /// Records a node with a user-supplied backward closure. The closure runs
  /// only when some input requires a gradient.
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);

  // Rows of `table` selected by ids; gradient scattered back into the rows.
  Var lookup(Parameter& table, std::span<const int> ids);
  Var lookup(const Parameter& table, std::span<const int> ids);

  Var matmul(Var a, Var b);
  /// a * b^T
  Var matmul_bt(Var a, Var b);
  Var add(Var a, Var b);
  /// Adds a 1×c row vector to every row of an r×c matrix.
  Var add_row(Var a, Var row);
  Var scale(Var a, double k);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  /// Softmax within each row.
  Var softmax_rows(Var a);
  /// Softmax of a 1×k row where entries with mask[i] == false get exactly zero weight.
  Var masked_softmax(Var a, const std::vector<bool>& mask);
  Var stack_rows(std::span<const Var> rows);
  Var transpose(Var a);
  /// Sum of squared entries, as a 1×1 node.
  Var sum_squares(Var a);
  /// Σ weights[k] · terms[k] over 1×1 nodes.
  Var weighted_sum(std::span<const Var> terms, std::span<const double> weights);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse order.
  void backward(Var loss);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    const Parameter* source = nullptr;
    Parameter* sink = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  Var push(Node node);
  Var gather_rows(Var table, std::span<const int> ids);
  template <typename Fn>
  Var unary(Var a, Matrix value, Fn&& local_grad);

  std::vector<Node> nodes_;
};

}  // namespace scan
