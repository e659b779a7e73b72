#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "odn/model/scaler.hpp"
#include "odn/tensor/layers.hpp"

namespace odn::resunet {

struct Config {
  std::size_t size = 64;                          // input is size x size
  std::vector<std::size_t> channels{16, 32, 64, 64};  // one entry per resolution level
  std::size_t hidden = 32;                        // HD
  std::size_t components = 2;
  std::size_t branch_width = 128;
  std::size_t branch_depth = 2;
  std::uint64_t seed = 1;

  std::size_t levels() const { return channels.size(); }
  std::size_t bottleneck_side() const { return size >> (levels() - 1); }
  std::size_t latent() const { return channels.back() * bottleneck_side() * bottleneck_side(); }
  std::size_t pixels() const { return size * size; }
  void validate() const;
  std::string describe() const;
  static Config parse(const std::string& text);
};

/// G[b,n,c] = sum_h B[b,c,h] T[b,n,h] + beta[c].
Var fuse(Var branch, Var trunk, Var beta);

/// Mean squared error over material pixels and all components.
/// pred/truth [b x n x c], mask [b x n] (nonzero = material).
Var masked_mse_loss(Var pred, const Tensor& truth, const Tensor& mask);

/// conv3 -> relu -> conv3, plus identity (or 1x1 projection), relu.
struct ResBlock {
  Conv conv1, conv2;
  Conv project;  // w == nullptr for identity
  Var operator()(Tape& tape, Var x) const;
};

struct Trace {
  Var bottleneck;  // before fusion
  Var fused;
  std::vector<Var> skips;
};

class Network {
 public:
  explicit Network(Config cfg);

  const Config& config() const { return cfg_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  /// velocity [b x 1] -> (latent [b x latent], B [b x c x HD])
  std::pair<Var, Var> branch(Tape& tape, const Tensor& velocity) const;
  /// masks [b x 1 x S x S], latent [b x latent] -> [b x S*S x HD]. A null
  /// latent skips the fusion.
  Var trunk(Tape& tape, const Tensor& masks, Var latent, Trace* trace = nullptr) const;
  Var forward(Tape& tape, const Tensor& masks, const Tensor& velocity, Trace* trace = nullptr) const;

 private:
  Config cfg_;
  ParameterStore store_;
  std::vector<Dense> branch_;
  Dense latent_head_, fusion_head_;
  std::vector<ResBlock> encoder_;
  std::vector<Conv> down_;
  std::vector<Conv> decoder_;  // upsample + skip concat, then conv3 -> relu
  Conv head_;
  Parameter* beta_ = nullptr;
};

struct Sample {
  std::vector<std::uint8_t> mask;
  double velocity = 0.0;
  std::vector<double> temperature;
  std::vector<double> stress;
};

struct TrainConfig {
  std::size_t iterations = 10000;
  std::size_t batch = 4;
  double learning_rate = 5e-4;
  bool step_decay = true;  // halve at 1/3 and 2/3 of the budget
  std::uint64_t seed = 1;
};

struct TrainResult {
  std::vector<double> history;
  bool aborted = false;
  std::string reason;
};

class Model {
 public:
  explicit Model(Config cfg);

  TrainResult train(const std::vector<const Sample*>& train, const TrainConfig& tc);

  /// Per sample, pixel-major (T, sigma) pairs in physical units, 0 on void.
  std::vector<std::vector<double>> predict(const std::vector<const Sample*>& inputs) const;

  Network& network() { return net_; }
  const Network& network() const { return net_; }
  const model::MinMaxScaler& input_scaler() const { return in_; }
  const model::MinMaxScaler& target_scaler() const { return out_; }

  Tensor masks(const std::vector<const Sample*>& batch) const;
  Tensor velocities(const std::vector<const Sample*>& batch) const;
  Tensor scaled_targets(const std::vector<const Sample*>& batch) const;
  Tensor material(const std::vector<const Sample*>& batch) const;

  io::TensorContainer to_container() const;
  static Model from_container(const io::TensorContainer& c);

 private:
  Network net_;
  model::MinMaxScaler in_, out_;
};

struct SweepResult {
  std::vector<double> velocities;
  std::vector<std::vector<double>> max_stress;  // [mask][velocity]
  std::vector<double> average;                  // per velocity
  std::size_t max_design = 0, median_design = 0, min_design = 0;  // at the highest velocity
};

/// Predicted max |sigma| over material pixels for every (mask, velocity).
SweepResult velocity_sweep(const Model& model, const std::vector<std::vector<std::uint8_t>>& masks,
                           const std::vector<double>& velocities);

}  // namespace odn::resunet
