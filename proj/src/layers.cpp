#include "graphalp/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace graphalp {

Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix w(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = rng.uniform(-limit, limit);
  }
  return w;
}

MlpParams MlpParams::create(const std::string& name, const std::vector<std::size_t>& dims, Rng& rng,
                            Activation output) {
  if (dims.size() < 2) throw std::invalid_argument("MLP '" + name + "' needs at least input and output sizes");
  MlpParams mlp;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(dims[l]);
    const auto out = static_cast<Eigen::Index>(dims[l + 1]);
    const bool last = l + 2 == dims.size();
    mlp.layers.push_back(DenseLayer{
        Parameter(name + ".l" + std::to_string(l) + ".weight", glorot_uniform(in, out, rng)),
        Parameter(name + ".l" + std::to_string(l) + ".bias", Matrix::Zero(1, out)),
        last ? output : Activation::kRelu});
  }
  return mlp;
}

std::size_t MlpParams::input_dim() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.value.rows());
}

std::size_t MlpParams::output_dim() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.value.cols());
}

std::vector<Parameter*> MlpParams::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

std::vector<const Parameter*> MlpParams::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& layer : layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

GraphSageParams GraphSageParams::create(const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                                        Activation activation) {
  return GraphSageParams{
      Parameter(name + ".weight",
                glorot_uniform(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(2 * in), rng)),
      activation};
}

SharedSparse mean_adjacency(std::size_t num_nodes, std::span<const Edge> edges) {
  std::vector<double> degree(num_nodes, 0.0);
  for (const auto& e : edges) {
    degree[e.u] += 1.0;
    degree[e.v] += 1.0;
  }
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(2 * edges.size());
  for (const auto& e : edges) {
    triplets.emplace_back(e.u, e.v, 1.0 / degree[e.u]);
    triplets.emplace_back(e.v, e.u, 1.0 / degree[e.v]);
  }
  auto adj = std::make_shared<SparseMatrix>(static_cast<Eigen::Index>(num_nodes), static_cast<Eigen::Index>(num_nodes));
  adj->setFromTriplets(triplets.begin(), triplets.end());
  adj->makeCompressed();
  return adj;
}

Tensor apply_activation(const Tensor& x, Activation activation) {
  return activation == Activation::kRelu ? ops::relu(x) : x;
}

Tensor mlp_forward(Tape& tape, MlpParams& params, const Tensor& x) {
  if (params.layers.empty()) throw std::invalid_argument("mlp_forward: empty MLP");
  if (static_cast<std::size_t>(x.cols()) != params.input_dim()) {
    throw std::invalid_argument("mlp_forward: input has " + std::to_string(x.cols()) + " columns, layer expects " +
                                std::to_string(params.input_dim()));
  }
  Tensor h = x;
  for (auto& layer : params.layers) {
    h = ops::add_row(ops::matmul(h, tape.parameter(layer.weight)), tape.parameter(layer.bias));
    h = apply_activation(h, layer.activation);
  }
  return h;
}

Tensor graphsage_forward(Tape& tape, GraphSageParams& params, const Tensor& x, const SharedSparse& adj) {
  if (static_cast<std::size_t>(x.cols()) != params.input_dim()) {
    throw std::invalid_argument("graphsage_forward: input has " + std::to_string(x.cols()) + " columns, layer expects " +
                                std::to_string(params.input_dim()));
  }
  if (!adj || adj->rows() != x.rows() || adj->cols() != x.rows()) {
    throw std::invalid_argument("graphsage_forward: adjacency does not match node count");
  }
  const Tensor neighborhood = ops::spmm(adj, x);
  const Tensor joined = ops::concat_cols(x, neighborhood);
  return apply_activation(ops::matmul_nt(joined, tape.parameter(params.weight)), params.activation);
}

Tensor sigmoid_inner_product(const Tensor& h) { return ops::sigmoid(ops::gram(h)); }

Tensor frobenius_loss(const Tensor& xhat, const Tensor& x) { return ops::squared_error(xhat, x); }

void zero_grad(std::span<Parameter* const> params) {
  for (auto* p : params) p->zero_grad();
}

void adam_step(AdamState& state, std::span<Parameter* const> params) {
  if (state.first_moment.size() != params.size()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (auto* p : params) {
      state.first_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.second_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
    state.step = 0;
  }
  for (auto* p : params) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
      throw std::invalid_argument("gradient of '" + p->name + "' does not match its parameter shape");
    }
    if (!p->grad.allFinite()) throw std::runtime_error("non-finite gradient in parameter '" + p->name + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * p.grad;
    v = state.beta2 * v + (1.0 - state.beta2) * p.grad.cwiseProduct(p.grad);
    if (state.weight_decay != 0.0) p.value *= 1.0 - state.lr * state.weight_decay;
    p.value.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  }
}

nlohmann::json save_parameters(std::span<const Parameter* const> params) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto* p : params) {
    std::vector<double> values(p->value.data(), p->value.data() + p->value.size());
    out[p->name] = {{"shape", {p->value.rows(), p->value.cols()}}, {"values", std::move(values)}};
  }
  return out;
}

void load_parameters(const nlohmann::json& checkpoint, std::span<Parameter* const> params) {
  for (auto* p : params) {
    if (!checkpoint.contains(p->name)) throw std::runtime_error("checkpoint lacks parameter '" + p->name + "'");
    const auto& entry = checkpoint.at(p->name);
    const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    const auto values = entry.at("values").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] != p->value.rows() || shape[1] != p->value.cols() ||
        values.size() != static_cast<std::size_t>(p->value.size())) {
      throw std::runtime_error("checkpoint shape mismatch for '" + p->name + "'");
    }
    std::copy(values.begin(), values.end(), p->value.data());
    p->zero_grad();
  }
}

}  // namespace graphalp
