#include "graphalp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace graphalp {
namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_tape(const Tensor& a, const Tensor& b) {
  if (!a.valid() || a.tape() != b.tape()) throw std::invalid_argument("tensors belong to different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                                shape_str(b.value()));
  }
}

}  // namespace

const Matrix& Tensor::value() const { return tape_->value(id_); }

const Matrix& Tensor::grad() const { return tape_->grad(id_); }

bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }

double Tensor::item() const {
  const auto& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw std::logic_error("item() on non-scalar tensor " + shape_str(v));
  return v(0, 0);
}

Tensor Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, true});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::parameter(Parameter& param) {
  if (param.grad.rows() != param.value.rows() || param.grad.cols() != param.value.cols()) param.zero_grad();
  nodes_.push_back(Node{param.value, {}, {}, {}, &param, true});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::record(Matrix value, std::vector<std::size_t> parents, BackwardFn backward) {
  bool needs = false;
  for (auto p : parents) needs = needs || nodes_[p].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, std::move(parents), needs ? std::move(backward) : BackwardFn{}, nullptr, needs});
  return Tensor(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& delta) { accumulate_expr(id, delta); }

void Tape::backward(const Tensor& root) {
  if (root.tape() != this) throw std::invalid_argument("backward root belongs to another tape");
  auto& top = nodes_[root.id()];
  if (top.value.rows() != 1 || top.value.cols() != 1) throw std::invalid_argument("backward root must be 1x1");
  for (auto& node : nodes_) node.grad.resize(0, 0);
  if (!top.requires_grad) return;
  top.grad = Matrix::Constant(1, 1, 1.0);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.requires_grad || node.grad.size() == 0) continue;
    if (node.backward) node.backward(*this, i);
    if (node.param != nullptr) node.param->grad += node.grad;
  }
}

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ " + shape_str(a.value()) + " * " + shape_str(b.value()));
  }
  Matrix out = a.value() * b.value();
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate_expr(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate_expr(ib, t.value(ia).transpose() * g);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: column counts differ " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  }
  Matrix out = a.value() * b.value().transpose();
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate_expr(ia, g * t.value(ib));
    if (t.requires_grad(ib)) t.accumulate_expr(ib, g.transpose() * t.value(ia));
  });
}

Tensor gram(const Tensor& h) {
  Matrix prod = h.value() * h.value().transpose();
  Matrix out = 0.5 * (prod + prod.transpose());
  const auto ih = h.id();
  return h.tape()->record(std::move(out), {ih}, [ih](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate_expr(ih, (g + g.transpose()) * t.value(ih));
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: bias " + shape_str(row.value()) + " does not match " + shape_str(a.value()));
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  const auto ia = a.id(), ir = row.id();
  return a.tape()->record(std::move(out), {ia, ir}, [ia, ir](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate(ia, g);
    if (t.requires_grad(ir)) t.accumulate_expr(ir, g.colwise().sum());
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    if (t.requires_grad(ib)) t.accumulate_expr(ib, -t.grad(self));
  });
}

Tensor scale(const Tensor& a, double factor) {
  Matrix out = factor * a.value();
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {ia}, [ia, factor](Tape& t, std::size_t self) {
    t.accumulate_expr(ia, factor * t.grad(self));
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a.value().cwiseProduct(b.value());
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate_expr(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate_expr(ib, g.cwiseProduct(t.value(ia)));
  });
}

Tensor relu(const Tensor& a) {
  Matrix out = a.value().cwiseMax(0.0);
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    const Matrix& x = t.value(ia);
    t.accumulate_expr(ia, t.grad(self).cwiseProduct((x.array() > 0.0).cast<double>().matrix()));
  });
}

Tensor sigmoid(const Tensor& a) {
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    t.accumulate_expr(ia, t.grad(self).cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row counts differ");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const auto ia = a.id(), ib = b.id();
  const auto ca = a.cols(), cb = b.cols();
  return a.tape()->record(std::move(out), {ia, ib}, [ia, ib, ca, cb](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate_expr(ia, g.leftCols(ca));
    if (t.requires_grad(ib)) t.accumulate_expr(ib, g.rightCols(cb));
  });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("concat_rows: column counts differ " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  }
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a.value(), b.value();
  const auto ia = a.id(), ib = b.id();
  const auto ra = a.rows(), rb = b.rows();
  return a.tape()->record(std::move(out), {ia, ib}, [ia, ib, ra, rb](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate_expr(ia, g.topRows(ra));
    if (t.requires_grad(ib)) t.accumulate_expr(ib, g.bottomRows(rb));
  });
}

Tensor gather_rows(const Tensor& a, std::span<const int> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= a.rows()) throw std::out_of_range("gather_rows: row index out of range");
    out.row(static_cast<Eigen::Index>(r)) = a.value().row(rows[r]);
  }
  const auto ia = a.id();
  std::vector<int> idx(rows.begin(), rows.end());
  return a.tape()->record(std::move(out), {ia}, [ia, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& x = t.value(ia);
    Matrix delta = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) delta.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
    t.accumulate(ia, delta);
  });
}

Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) throw std::out_of_range("slice_rows: range out of bounds");
  Matrix out = a.value().middleRows(begin, count);
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {ia}, [ia, begin, count](Tape& t, std::size_t self) {
    const Matrix& x = t.value(ia);
    Matrix delta = Matrix::Zero(x.rows(), x.cols());
    delta.middleRows(begin, count) = t.grad(self);
    t.accumulate(ia, delta);
  });
}

Tensor top_left(const Tensor& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows > a.rows() || cols > a.cols()) throw std::out_of_range("top_left: block exceeds tensor");
  Matrix out = a.value().topLeftCorner(rows, cols);
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {ia}, [ia, rows, cols](Tape& t, std::size_t self) {
    const Matrix& x = t.value(ia);
    Matrix delta = Matrix::Zero(x.rows(), x.cols());
    delta.topLeftCorner(rows, cols) = t.grad(self);
    t.accumulate(ia, delta);
  });
}

Tensor spmm(const SharedSparse& s, const Tensor& b) {
  if (!s || s->cols() != b.rows()) throw std::invalid_argument("spmm: sparse operand does not match tensor rows");
  Matrix out = (*s) * b.value();
  const auto ib = b.id();
  return b.tape()->record(std::move(out), {ib}, [ib, s](Tape& t, std::size_t self) {
    t.accumulate(ib, Matrix(s->transpose() * t.grad(self)));
  });
}

Tensor sum(const Tensor& a) {
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    const Matrix& x = t.value(ia);
    t.accumulate_expr(ia, Matrix::Constant(x.rows(), x.cols(), t.grad(self)(0, 0)));
  });
}

Tensor squared_error(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "squared_error");
  Matrix diff = a.value() - b.value();
  Matrix out = Matrix::Constant(1, 1, diff.squaredNorm());
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {ia, ib}, [ia, ib, diff = std::move(diff)](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    if (t.requires_grad(ia)) t.accumulate_expr(ia, (2.0 * g) * diff);
    if (t.requires_grad(ib)) t.accumulate_expr(ib, (-2.0 * g) * diff);
  });
}

Tensor weighted_cross_entropy(const Tensor& logits, std::span<const int> rows, std::span<const int> labels,
                              std::span<const double> class_weights) {
  if (rows.size() != labels.size()) throw std::invalid_argument("weighted_cross_entropy: rows and labels differ in length");
  const auto k = logits.cols();
  if (static_cast<Eigen::Index>(class_weights.size()) != k) {
    throw std::invalid_argument("weighted_cross_entropy: expected " + std::to_string(k) + " class weights");
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (labels[r] < 0 || labels[r] >= k) {
      throw std::out_of_range("weighted_cross_entropy: label " + std::to_string(labels[r]) + " outside [0, " +
                              std::to_string(k) + ")");
    }
    if (rows[r] < 0 || rows[r] >= logits.rows()) throw std::out_of_range("weighted_cross_entropy: row index out of range");
  }
  const Matrix& z = logits.value();
  double loss = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto row = z.row(rows[r]);
    const double shift = row.maxCoeff();
    const double lse = shift + std::log((row.array() - shift).exp().sum());
    loss += class_weights[labels[r]] * (lse - row(labels[r]));
  }
  const auto il = logits.id();
  std::vector<int> idx(rows.begin(), rows.end());
  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<double> w(class_weights.begin(), class_weights.end());
  return logits.tape()->record(
      Matrix::Constant(1, 1, loss), {il},
      [il, idx = std::move(idx), lab = std::move(lab), w = std::move(w)](Tape& t, std::size_t self) {
        const double g = t.grad(self)(0, 0);
        const Matrix& zz = t.value(il);
        Matrix delta = Matrix::Zero(zz.rows(), zz.cols());
        for (std::size_t r = 0; r < idx.size(); ++r) {
          const auto row = zz.row(idx[r]);
          RowVector p = (row.array() - row.maxCoeff()).exp().matrix();
          p /= p.sum();
          p(lab[r]) -= 1.0;
          delta.row(idx[r]) += (g * w[lab[r]]) * p;
        }
        t.accumulate(il, delta);
      });
}

Tensor binary_cross_entropy(const Tensor& scores, std::span<const double> targets) {
  if (scores.cols() != 1 || scores.rows() != static_cast<Eigen::Index>(targets.size())) {
    throw std::invalid_argument("binary_cross_entropy: scores must be an n x 1 column matching the targets");
  }
  const Matrix& s = scores.value();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double p = std::clamp(s(i, 0), kBceEpsilon, 1.0 - kBceEpsilon);
    const double y = targets[static_cast<std::size_t>(i)];
    loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  const auto is = scores.id();
  std::vector<double> y(targets.begin(), targets.end());
  return scores.tape()->record(Matrix::Constant(1, 1, loss), {is}, [is, y = std::move(y)](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    const Matrix& ss = t.value(is);
    Matrix delta = Matrix::Zero(ss.rows(), 1);
    for (Eigen::Index i = 0; i < ss.rows(); ++i) {
      const double raw = ss(i, 0);
      if (raw < kBceEpsilon || raw > 1.0 - kBceEpsilon) continue;  // clamped: flat
      const double yi = y[static_cast<std::size_t>(i)];
      delta(i, 0) = g * (raw - yi) / (raw * (1.0 - raw));
    }
    t.accumulate(is, delta);
  });
}

}  // namespace ops

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    out.row(r) = (row.array() - row.maxCoeff()).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()), 0);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c) {
      if (m(r, c) > m(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace graphalp
