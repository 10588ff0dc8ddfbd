#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "graphalp/matrix.hpp"

namespace graphalp {

/// Trainable matrix with an accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string name_, Matrix value_)
      : name(std::move(name_)), value(std::move(value_)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a value recorded on a Tape.
class Tensor {
 public:
  Tensor() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  /// Value of a 1x1 tensor.
  double item() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode autodiff tape. Nodes are appended in evaluation order, so a
/// reverse sweep is a valid topological order and visits every node once.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix value);
  /// Differentiable leaf that is not a Parameter (used for input-gradient checks).
  Tensor variable(Matrix value);
  /// Leaf bound to `param`; `backward` accumulates into `param.grad`.
  Tensor parameter(Parameter& param);

  /// Runs the reverse sweep from a 1x1 tensor.
  void backward(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }

  // Op-author interface.
  Tensor record(Matrix value, std::vector<std::size_t> parents, BackwardFn backward);
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }
  /// Adds `delta` into the gradient of node `id` when it requires one.
  void accumulate(std::size_t id, const Matrix& delta);
  template <typename Expr>
  void accumulate_expr(std::size_t id, const Expr& delta) {
    auto& node = nodes_[id];
    if (!node.requires_grad) return;
    ensure_grad(node);
    node.grad.noalias() += delta;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  static void ensure_grad(Node& node) {
    if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  }

  std::deque<Node> nodes_;
};

/// Row-normalized (mean-aggregation) sparse adjacency shared between tapes.
using SharedSparse = std::shared_ptr<const SparseMatrix>;

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// h * h^T, symmetric bit-for-bit.
Tensor gram(const Tensor& h);
Tensor add(const Tensor& a, const Tensor& b);
/// Adds a 1 x c row to every row of a.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor gather_rows(const Tensor& a, std::span<const int> rows);
Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count);
Tensor top_left(const Tensor& a, Eigen::Index rows, Eigen::Index cols);
/// s * b with a constant sparse matrix.
Tensor spmm(const SharedSparse& s, const Tensor& b);
/// Sum of all entries as a 1x1 tensor.
Tensor sum(const Tensor& a);
/// ||a - b||_F^2 as a 1x1 tensor.
Tensor squared_error(const Tensor& a, const Tensor& b);

/// Sum over `rows` of w[label] * -log softmax(logits)[row, label].
Tensor weighted_cross_entropy(const Tensor& logits, std::span<const int> rows, std::span<const int> labels,
                              std::span<const double> class_weights);

/// Clamp bound used by binary_cross_entropy.
inline constexpr double kBceEpsilon = 1e-7;

/// Sum of -[t log s + (1 - t) log(1 - s)] over an n x 1 score column,
/// with s clamped to [eps, 1 - eps].
Tensor binary_cross_entropy(const Tensor& scores, std::span<const double> targets);

}  // namespace ops

/// Row-wise softmax (max-shifted).
Matrix softmax_rows(const Matrix& logits);

/// Row argmax; ties resolve to the lowest column index.
std::vector<int> argmax_rows(const Matrix& m);

/// Cosine similarity; zero when either vector has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace graphalp
