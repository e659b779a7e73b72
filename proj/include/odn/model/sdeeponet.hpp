#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "odn/model/scaler.hpp"
#include "odn/tensor/layers.hpp"

namespace odn::sdeeponet {

struct Config {
  std::size_t sequence = 101;  // also the hidden dimension HD
  std::size_t units_wide = 32;    // first and last GRU
  std::size_t units_narrow = 16;  // middle GRUs
  std::size_t trunk_width = 64;
  std::size_t trunk_depth = 3;
  std::size_t components = 2;
  std::uint64_t seed = 1;

  std::size_t hidden() const { return sequence; }
  void validate() const;
  std::string describe() const;
  static Config parse(const std::string& text);
};

/// G[b,n,c] = sum_h B[b,h] T[n,h,c] + beta[c].
Var fuse(Var branch, Var trunk, Var beta);

/// Sum of squared errors over the batch divided by (n_samples / 2N) times the
/// squared deviation from the batch mean; 2N = every value in the batch.
Var modified_r2_loss(Var pred, const Tensor& truth, std::size_t batch);

class Network {
 public:
  explicit Network(Config cfg);

  const Config& config() const { return cfg_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  std::size_t branch_parameter_count() const;
  std::size_t trunk_parameter_count() const;

  /// profiles [b x L x 2] (scaled) -> [b x HD]
  Var branch(Tape& tape, const Tensor& profiles) const;
  /// coords [N x 2] -> [N x HD x c]
  Var trunk(Tape& tape, const Tensor& coords) const;
  /// -> [b x N x c]
  Var forward(Tape& tape, const Tensor& profiles, const Tensor& coords) const;

 private:
  Config cfg_;
  ParameterStore store_;
  Gru gru_[4];
  Dense readout_;
  std::vector<Dense> trunk_;
  Parameter* beta_ = nullptr;
};

/// One casting record: two input histories and the final nodal fields.
struct Sample {
  std::vector<double> flux;
  std::vector<double> displacement;
  std::vector<double> temperature;
  std::vector<double> stress;
};

struct TrainConfig {
  std::size_t iterations = 20000;
  std::size_t batch = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
};

struct TrainResult {
  std::vector<double> history;
  bool aborted = false;
  std::string reason;
};

/// Trained network plus the scalers fit on its training split.
class Model {
 public:
  Model(Config cfg, std::vector<double> coords);

  /// Fits scalers on `train` and runs mini-batch Adam. On a non-finite loss
  /// or gradient the loop stops and the last good parameters are kept.
  TrainResult train(const std::vector<const Sample*>& train, const TrainConfig& tc);

  /// Physical-unit fields [b][N*2] laid out node-major (T, sigma).
  std::vector<std::vector<double>> predict(const std::vector<const Sample*>& inputs) const;

  Network& network() { return net_; }
  const Network& network() const { return net_; }
  const std::vector<double>& coords() const { return coords_; }
  std::size_t nodes() const { return coords_.size() / 2; }
  const model::MinMaxScaler& input_scaler() const { return in_; }
  const model::MinMaxScaler& target_scaler() const { return out_; }

  Tensor scaled_inputs(const std::vector<const Sample*>& batch) const;
  Tensor scaled_targets(const std::vector<const Sample*>& batch) const;

  io::TensorContainer to_container() const;
  static Model from_container(const io::TensorContainer& c);

 private:
  Network net_;
  std::vector<double> coords_;  // N x 2, already in [0, 1]
  model::MinMaxScaler in_, out_;
};

}  // namespace odn::sdeeponet
