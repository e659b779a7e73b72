#include "odn/model/sdeeponet.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "odn/core/error.hpp"
#include "odn/tensor/optim.hpp"

namespace odn::sdeeponet {

void Config::validate() const {
  if (sequence == 0 || units_wide == 0 || units_narrow == 0 || trunk_width == 0 || components == 0) {
    throw ParameterError("S-DeepONet sizes must be positive");
  }
}

std::string Config::describe() const {
  std::ostringstream os;
  os << "kind=sdeeponet\nsequence=" << sequence << "\nunits_wide=" << units_wide << "\nunits_narrow=" << units_narrow
     << "\ntrunk_width=" << trunk_width << "\ntrunk_depth=" << trunk_depth << "\ncomponents=" << components
     << "\nseed=" << seed << "\n";
  return os.str();
}

Config Config::parse(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (kv["kind"] != "sdeeponet") throw CheckpointError("checkpoint does not hold an S-DeepONet");
  auto num = [&](const char* key) -> std::uint64_t {
    auto it = kv.find(key);
    if (it == kv.end()) throw CheckpointError(std::string("architecture metadata lacks '") + key + "'");
    return std::stoull(it->second);
  };
  Config c;
  c.sequence = num("sequence");
  c.units_wide = num("units_wide");
  c.units_narrow = num("units_narrow");
  c.trunk_width = num("trunk_width");
  c.trunk_depth = num("trunk_depth");
  c.components = num("components");
  c.seed = num("seed");
  c.validate();
  return c;
}

Var fuse(Var branch, Var trunk, Var beta) {
  const Shape& bs = branch.shape();
  const Shape& ts = trunk.shape();
  if (bs.size() != 2 || ts.size() != 3) {
    throw DimensionError("fuse expects B [b x HD] and T [N x HD x c], got " + to_string(bs) + " and " + to_string(ts));
  }
  if (bs[1] != ts[1]) {
    throw DimensionError("fuse: hidden dimension mismatch " + to_string(bs) + " vs " + to_string(ts));
  }
  const std::size_t b = bs[0], hd = bs[1], n = ts[0], c = ts[2];
  if (beta.shape() != Shape{c}) throw DimensionError("fuse: bias shape " + to_string(beta.shape()));
  Var t = ops::reshape(ops::permute(trunk, {1, 0, 2}), {hd, n * c});
  return ops::add_bias(ops::reshape(ops::matmul(branch, t), {b, n, c}), beta);
}

Var modified_r2_loss(Var pred, const Tensor& truth, std::size_t batch) {
  if (pred.value().size() != truth.size()) {
    throw DimensionError("loss: prediction " + to_string(pred.shape()) + " vs truth " + to_string(truth.shape()));
  }
  if (batch == 0) throw LossError("loss needs a positive batch size");
  const auto v = truth.values();
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double den = 0.0;
  for (double x : v) den += (x - mean) * (x - mean);
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*lo == *hi || !(den > 0.0)) throw LossError("modified R2 loss undefined: truth batch has zero variance");
  Tape& tape = *pred.tape();
  Var diff = ops::sub(pred, tape.constant(truth.reshaped(pred.shape())));
  const double factor = static_cast<double>(v.size()) / (static_cast<double>(batch) * den);
  return ops::scale(ops::sum(ops::square(diff)), factor);
}

Network::Network(Config cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  gru_[0] = make_gru(store_, "branch.gru1", 2, cfg_.units_wide, rng);
  gru_[1] = make_gru(store_, "branch.gru2", cfg_.units_wide, cfg_.units_narrow, rng);
  gru_[2] = make_gru(store_, "branch.gru3", cfg_.units_narrow, cfg_.units_narrow, rng);
  gru_[3] = make_gru(store_, "branch.gru4", cfg_.units_narrow, cfg_.units_wide, rng);
  readout_ = make_dense(store_, "branch.readout", cfg_.units_wide, 1, Activation::none, rng);
  std::size_t in = 2;
  for (std::size_t i = 0; i < cfg_.trunk_depth; ++i) {
    trunk_.push_back(make_dense(store_, "trunk.dense" + std::to_string(i + 1), in, cfg_.trunk_width,
                                Activation::tanh, rng));
    in = cfg_.trunk_width;
  }
  trunk_.push_back(make_dense(store_, "trunk.out", in, cfg_.hidden() * cfg_.components, Activation::none, rng));
  beta_ = &store_.add("fuse.beta", Tensor({cfg_.components}, 0.0));
}

std::size_t Network::branch_parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : store_)
    if (p.name.starts_with("branch.")) n += p.value.size();
  return n;
}

std::size_t Network::trunk_parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : store_)
    if (p.name.starts_with("trunk.")) n += p.value.size();
  return n;
}

Var Network::branch(Tape& tape, const Tensor& profiles) const {
  const Shape& s = profiles.shape();
  if (s.size() != 3 || s[1] != cfg_.sequence || s[2] != 2) {
    throw DimensionError("branch expects [b x " + std::to_string(cfg_.sequence) + " x 2] histories, got " +
                         to_string(s));
  }
  const std::size_t b = s[0], len = s[1];
  std::vector<Var> xs;
  xs.reserve(len);
  for (std::size_t t = 0; t < len; ++t) {
    Tensor step({b, 2});
    for (std::size_t i = 0; i < b; ++i) {
      step[2 * i] = profiles[(i * len + t) * 2];
      step[2 * i + 1] = profiles[(i * len + t) * 2 + 1];
    }
    xs.push_back(tape.constant(std::move(step)));
  }
  auto seq1 = gru_[0].run(tape, xs);
  auto seq2 = gru_[1].run(tape, seq1);
  const std::vector<Var> repeated(len, seq2.back());
  auto seq3 = gru_[2].run(tape, repeated);
  auto seq4 = gru_[3].run(tape, seq3);
  Var stacked = ops::concat(seq4, 0);  // [(len * b) x wide], time-major
  Var y = readout_(tape, stacked);
  return ops::permute(ops::reshape(y, {len, b}), {1, 0});
}

Var Network::trunk(Tape& tape, const Tensor& coords) const {
  if (coords.rank() != 2 || coords.extent(1) != 2) {
    throw DimensionError("trunk expects [N x 2] coordinates, got " + to_string(coords.shape()));
  }
  Var x = tape.constant(coords);
  for (const Dense& d : trunk_) x = d(tape, x);
  return ops::reshape(x, {coords.extent(0), cfg_.hidden(), cfg_.components});
}

Var Network::forward(Tape& tape, const Tensor& profiles, const Tensor& coords) const {
  return fuse(branch(tape, profiles), trunk(tape, coords), tape.parameter(*beta_));
}

// ---------------------------------------------------------------- model

Model::Model(Config cfg, std::vector<double> coords) : net_(cfg), coords_(std::move(coords)) {
  if (coords_.empty() || coords_.size() % 2 != 0) throw DimensionError("coordinates must be an N x 2 array");
}

Tensor Model::scaled_inputs(const std::vector<const Sample*>& batch) const {
  if (!in_.fitted()) throw CheckpointError("input scaler missing");
  const std::size_t len = net_.config().sequence;
  Tensor x({batch.size(), len, 2});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& s = *batch[i];
    if (s.flux.size() != len || s.displacement.size() != len) {
      throw DimensionError("input histories must have " + std::to_string(len) + " samples");
    }
    for (std::size_t t = 0; t < len; ++t) {
      x[(i * len + t) * 2] = in_.transform(s.flux[t], 0);
      x[(i * len + t) * 2 + 1] = in_.transform(s.displacement[t], 1);
    }
  }
  return x;
}

Tensor Model::scaled_targets(const std::vector<const Sample*>& batch) const {
  if (!out_.fitted()) throw CheckpointError("target scaler missing");
  const std::size_t n = nodes();
  Tensor y({batch.size(), n, 2});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& s = *batch[i];
    if (s.temperature.size() != n || s.stress.size() != n) throw DimensionError("target fields must have N values");
    for (std::size_t k = 0; k < n; ++k) {
      y[(i * n + k) * 2] = out_.transform(s.temperature[k], 0);
      y[(i * n + k) * 2 + 1] = out_.transform(s.stress[k], 1);
    }
  }
  return y;
}

TrainResult Model::train(const std::vector<const Sample*>& train, const TrainConfig& tc) {
  if (train.size() < 2) throw ParameterError("training needs at least two samples");
  if (tc.batch == 0) throw ParameterError("batch size must be positive");
  std::vector<std::vector<double>> inputs(2), targets(2);
  for (const Sample* s : train) {
    inputs[0].insert(inputs[0].end(), s->flux.begin(), s->flux.end());
    inputs[1].insert(inputs[1].end(), s->displacement.begin(), s->displacement.end());
    targets[0].insert(targets[0].end(), s->temperature.begin(), s->temperature.end());
    targets[1].insert(targets[1].end(), s->stress.begin(), s->stress.end());
  }
  in_ = model::MinMaxScaler::fit(inputs);
  out_ = model::MinMaxScaler::fit(targets);

  const Tensor coords({nodes(), 2}, coords_);
  const std::size_t bs = std::min(tc.batch, train.size());
  Adam adam(net_.parameters().pointers(), AdamConfig{tc.learning_rate});
  Rng rng(tc.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  TrainResult result;
  result.history.reserve(tc.iterations);
  for (std::size_t it = 0; it < tc.iterations; ++it) {
    if (cursor + bs > order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    std::vector<std::size_t> pick(order.begin() + cursor, order.begin() + cursor + bs);
    cursor += bs;
    std::sort(pick.begin(), pick.end());
    std::vector<const Sample*> batch;
    for (auto i : pick) batch.push_back(train[i]);
    try {
      Tape tape;
      Var pred = net_.forward(tape, scaled_inputs(batch), coords);
      Var loss = modified_r2_loss(pred, scaled_targets(batch), bs);
      const double value = loss.value()[0];
      adam.zero_grad();
      tape.backward(loss);
      adam.step();
      result.history.push_back(value);
    } catch (const DomainError& e) {
      result.aborted = true;
      result.reason = "iteration " + std::to_string(it + 1) + ": " + e.what();
      break;
    } catch (const TrainingAbort& e) {
      result.aborted = true;
      result.reason = e.what();
      break;
    }
  }
  return result;
}

std::vector<std::vector<double>> Model::predict(const std::vector<const Sample*>& inputs) const {
  if (!in_.fitted() || !out_.fitted()) throw CheckpointError("scaler missing");
  const Tensor coords({nodes(), 2}, coords_);
  const std::size_t n = nodes();
  std::vector<std::vector<double>> out;
  out.reserve(inputs.size());
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < inputs.size(); start += kChunk) {
    std::vector<const Sample*> chunk(inputs.begin() + start,
                                     inputs.begin() + std::min(inputs.size(), start + kChunk));
    Tape tape(false);
    const Tensor& g = net_.forward(tape, scaled_inputs(chunk), coords).value();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      std::vector<double> f(n * 2);
      for (std::size_t k = 0; k < n; ++k) {
        f[2 * k] = out_.inverse(g[(i * n + k) * 2], 0);
        f[2 * k + 1] = out_.inverse(g[(i * n + k) * 2 + 1], 1);
      }
      out.push_back(std::move(f));
    }
  }
  return out;
}

io::TensorContainer Model::to_container() const {
  io::TensorContainer c;
  c.put_text("meta/arch", net_.config().describe());
  c.put_f64("coords", coords_, {nodes(), 2});
  for (const auto& p : net_.parameters()) c.put_f64("param/" + p.name, p.value);
  in_.save(c, "scaler/input");
  out_.save(c, "scaler/target");
  return c;
}

Model Model::from_container(const io::TensorContainer& c) {
  Model m(Config::parse(c.get_text("meta/arch")), c.get_f64_values("coords"));
  for (auto& p : m.net_.parameters()) {
    const std::string key = "param/" + p.name;
    if (!c.contains(key)) throw CheckpointError("checkpoint lacks parameter '" + p.name + "'");
    Tensor t = c.get_f64(key);
    if (t.shape() != p.value.shape()) {
      throw CheckpointError("parameter '" + p.name + "' has shape " + to_string(t.shape()) + ", expected " +
                            to_string(p.value.shape()));
    }
    p.value = std::move(t);
  }
  m.in_ = model::MinMaxScaler::load(c, "scaler/input");
  m.out_ = model::MinMaxScaler::load(c, "scaler/target");
  return m;
}

}  // namespace odn::sdeeponet
