#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "graphalp/graph.hpp"
#include "graphalp/matrix.hpp"

namespace graphalp {

/// k x k counts; rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes = 0);
  ConfusionMatrix(int num_classes, std::span<const int> y_true, std::span<const int> y_pred);
  /// Row-major k x k initializer.
  static ConfusionMatrix from_rows(const std::vector<std::vector<std::size_t>>& rows);

  void add(int truth, int predicted, std::size_t count = 1);
  std::size_t at(int truth, int predicted) const { return cells_[index(truth, predicted)]; }
  int num_classes() const { return k_; }
  std::size_t total() const;
  std::size_t row_total(int truth) const;
  std::size_t col_total(int predicted) const;
  std::vector<std::vector<std::size_t>> rows() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t index(int truth, int predicted) const;

  int k_ = 0;
  std::vector<std::size_t> cells_;
};

double accuracy(const ConfusionMatrix& cm);
/// Unweighted mean of per-class F1; a class with precision + recall = 0 contributes 0.
double macro_f1(const ConfusionMatrix& cm);
/// Geometric mean of per-class recalls over classes present in the evaluation set.
double g_mean(const ConfusionMatrix& cm);

/// Fraction of `ids` whose assigned label differs from the true label.
double measured_noise_ratio(std::span<const int> assigned, std::span<const int> truth, std::span<const NodeId> ids);

/// Percent with two decimals, e.g. 0.7595 -> "75.95".
std::string format_percent(double fraction);

/// Writes `id,label,origin,z0,...` with 17 significant digits.
void export_embeddings(const Matrix& z, std::span<const int> labels, std::span<const NodeOrigin> origins,
                       const std::filesystem::path& path);

struct EmbeddingTable {
  std::vector<int> labels;
  std::vector<NodeOrigin> origins;
  Matrix z;
};

EmbeddingTable read_embeddings(const std::filesystem::path& path);

}  // namespace graphalp
