#include "graphalp/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "graphalp/log.hpp"

namespace graphalp {
namespace {

void require_nonempty(const ConfusionMatrix& cm) {
  if (cm.num_classes() == 0 || cm.total() == 0) throw std::invalid_argument("metric of an empty confusion matrix");
}

const char* origin_name(NodeOrigin origin) { return origin == NodeOrigin::kOriginal ? "original" : "synthetic"; }

}  // namespace

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : k_(num_classes), cells_(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(num_classes), 0) {
  if (num_classes < 0) throw std::invalid_argument("negative class count");
}

ConfusionMatrix::ConfusionMatrix(int num_classes, std::span<const int> y_true, std::span<const int> y_pred)
    : ConfusionMatrix(num_classes) {
  if (y_true.size() != y_pred.size()) throw std::invalid_argument("y_true and y_pred differ in length");
  for (std::size_t i = 0; i < y_true.size(); ++i) add(y_true[i], y_pred[i]);
}

ConfusionMatrix ConfusionMatrix::from_rows(const std::vector<std::vector<std::size_t>>& rows) {
  ConfusionMatrix cm(static_cast<int>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != rows.size()) throw std::invalid_argument("confusion matrix rows must be square");
    for (std::size_t p = 0; p < rows.size(); ++p) cm.add(static_cast<int>(t), static_cast<int>(p), rows[t][p]);
  }
  return cm;
}

std::size_t ConfusionMatrix::index(int truth, int predicted) const {
  if (truth < 0 || truth >= k_ || predicted < 0 || predicted >= k_) {
    throw std::out_of_range("confusion matrix class index out of range");
  }
  return static_cast<std::size_t>(truth) * static_cast<std::size_t>(k_) + static_cast<std::size_t>(predicted);
}

void ConfusionMatrix::add(int truth, int predicted, std::size_t count) { cells_[index(truth, predicted)] += count; }

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (auto c : cells_) t += c;
  return t;
}

std::size_t ConfusionMatrix::row_total(int truth) const {
  std::size_t t = 0;
  for (int p = 0; p < k_; ++p) t += at(truth, p);
  return t;
}

std::size_t ConfusionMatrix::col_total(int predicted) const {
  std::size_t t = 0;
  for (int r = 0; r < k_; ++r) t += at(r, predicted);
  return t;
}

std::vector<std::vector<std::size_t>> ConfusionMatrix::rows() const {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(k_));
  for (int t = 0; t < k_; ++t) {
    for (int p = 0; p < k_; ++p) out[t].push_back(at(t, p));
  }
  return out;
}

double accuracy(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  std::size_t trace = 0;
  for (int c = 0; c < cm.num_classes(); ++c) trace += cm.at(c, c);
  return static_cast<double>(trace) / static_cast<double>(cm.total());
}

double macro_f1(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  double sum = 0.0;
  for (int c = 0; c < cm.num_classes(); ++c) {
    const double tp = static_cast<double>(cm.at(c, c));
    const double predicted = static_cast<double>(cm.col_total(c));
    const double actual = static_cast<double>(cm.row_total(c));
    const double precision = predicted > 0 ? tp / predicted : 0.0;
    const double recall = actual > 0 ? tp / actual : 0.0;
    if (precision + recall > 0) sum += 2.0 * precision * recall / (precision + recall);
  }
  return sum / cm.num_classes();
}

double g_mean(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  double log_sum = 0.0;
  int present = 0;
  for (int c = 0; c < cm.num_classes(); ++c) {
    const auto actual = cm.row_total(c);
    if (actual == 0) {
      log::warn("g-mean: class ", c, " absent from the evaluation set; excluded");
      continue;
    }
    const auto tp = cm.at(c, c);
    if (tp == 0) return 0.0;
    log_sum += std::log(static_cast<double>(tp) / static_cast<double>(actual));
    ++present;
  }
  return std::exp(log_sum / present);
}

double measured_noise_ratio(std::span<const int> assigned, std::span<const int> truth, std::span<const NodeId> ids) {
  if (ids.empty()) throw std::invalid_argument("noise ratio over an empty id set");
  std::size_t wrong = 0;
  for (NodeId id : ids) {
    const auto i = static_cast<std::size_t>(id);
    if (i >= assigned.size() || i >= truth.size()) throw std::out_of_range("noise ratio: id without a label");
    if (assigned[i] != truth[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(ids.size());
}

std::string format_percent(double fraction) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << 100.0 * fraction;
  return out.str();
}

void export_embeddings(const Matrix& z, std::span<const int> labels, std::span<const NodeOrigin> origins,
                       const std::filesystem::path& path) {
  if (labels.size() != static_cast<std::size_t>(z.rows()) || origins.size() != labels.size()) {
    throw std::invalid_argument("embedding rows, labels and origins must align");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "id,label,origin";
  for (Eigen::Index j = 0; j < z.cols(); ++j) out << ",z" << j;
  out << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    out << i << ',' << labels[i] << ',' << origin_name(origins[i]);
    for (Eigen::Index j = 0; j < z.cols(); ++j) out << ',' << z(i, j);
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

EmbeddingTable read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::size_t dims = 0;
  for (char ch : line) dims += ch == ',' ? 1 : 0;
  dims = dims >= 2 ? dims - 2 : 0;
  EmbeddingTable table;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream fields(line);
    std::string field;
    std::getline(fields, field, ',');  // id
    std::getline(fields, field, ',');
    table.labels.push_back(std::stoi(field));
    std::getline(fields, field, ',');
    table.origins.push_back(field == "synthetic" ? NodeOrigin::kSynthetic : NodeOrigin::kOriginal);
    std::vector<double> row;
    while (std::getline(fields, field, ',')) row.push_back(std::strtod(field.c_str(), nullptr));
    if (row.size() != dims) throw std::runtime_error(path.string() + ": ragged embedding row");
    rows.push_back(std::move(row));
  }
  table.z.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dims));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < dims; ++j) table.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return table;
}

}  // namespace graphalp
