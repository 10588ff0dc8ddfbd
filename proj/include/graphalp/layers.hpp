#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphalp/graph.hpp"
#include "graphalp/random.hpp"
#include "graphalp/tensor.hpp"

namespace graphalp {

enum class Activation { kIdentity, kRelu };

struct DenseLayer {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out
  Activation activation = Activation::kIdentity;
};

/// Stack of dense layers; ReLU on hidden layers, configurable output activation.
struct MlpParams {
  std::vector<DenseLayer> layers;

  /// `dims` = {input, hidden..., output}; weights Glorot-uniform, biases zero.
  static MlpParams create(const std::string& name, const std::vector<std::size_t>& dims, Rng& rng,
                          Activation output = Activation::kIdentity);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

/// One GraphSage layer: act(W · [x_v ‖ mean_{u∈N(v)} x_u]).
struct GraphSageParams {
  Parameter weight;  // out x (2 * in)
  Activation activation = Activation::kRelu;

  static GraphSageParams create(const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                                Activation activation = Activation::kRelu);

  std::size_t input_dim() const { return static_cast<std::size_t>(weight.value.cols() / 2); }
  std::size_t output_dim() const { return static_cast<std::size_t>(weight.value.rows()); }
};

/// Glorot/Xavier uniform initialization of a rows x cols matrix.
Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);

/// Row-normalized adjacency: row v averages v's neighbors; isolated rows are zero.
SharedSparse mean_adjacency(std::size_t num_nodes, std::span<const Edge> edges);

Tensor apply_activation(const Tensor& x, Activation activation);

Tensor mlp_forward(Tape& tape, MlpParams& params, const Tensor& x);

Tensor graphsage_forward(Tape& tape, GraphSageParams& params, const Tensor& x, const SharedSparse& adj);

/// sigma(H H^T).
Tensor sigmoid_inner_product(const Tensor& h);

/// ||xhat - x||_F^2.
Tensor frobenius_loss(const Tensor& xhat, const Tensor& x);

/// Adam with bias correction and decoupled weight decay.
struct AdamState {
  double lr = 1e-3;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

/// Applies one update to `params` from their accumulated gradients.
/// Throws std::runtime_error naming the parameter when a gradient is not finite.
void adam_step(AdamState& state, std::span<Parameter* const> params);

void zero_grad(std::span<Parameter* const> params);

/// Flat JSON map name -> {shape, values (row-major)}.
nlohmann::json save_parameters(std::span<const Parameter* const> params);
/// Loads values by name; shapes must match.
void load_parameters(const nlohmann::json& checkpoint, std::span<Parameter* const> params);

}  // namespace graphalp
