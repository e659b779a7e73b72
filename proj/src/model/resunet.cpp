#include "odn/model/resunet.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "odn/core/error.hpp"
#include "odn/tensor/optim.hpp"

namespace odn::resunet {

void Config::validate() const {
  if (channels.empty() || hidden == 0 || components == 0 || branch_width == 0 || branch_depth == 0) {
    throw ParameterError("ResUNet sizes must be positive");
  }
  for (auto c : channels)
    if (c == 0) throw ParameterError("ResUNet channel counts must be positive");
  const std::size_t div = std::size_t{1} << (levels() - 1);
  if (size < 3 || size % div != 0 || size / div < 1) {
    throw ParameterError("input size " + std::to_string(size) + " is not divisible across " +
                         std::to_string(levels()) + " levels");
  }
}

std::string Config::describe() const {
  std::ostringstream os;
  os << "kind=resunet\nsize=" << size << "\nchannels=";
  for (std::size_t i = 0; i < channels.size(); ++i) os << (i ? "," : "") << channels[i];
  os << "\nhidden=" << hidden << "\ncomponents=" << components << "\nbranch_width=" << branch_width
     << "\nbranch_depth=" << branch_depth << "\nseed=" << seed << "\n";
  return os.str();
}

Config Config::parse(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (kv["kind"] != "resunet") throw CheckpointError("checkpoint does not hold a ResUNet-DeepONet");
  auto num = [&](const char* key) -> std::uint64_t {
    auto it = kv.find(key);
    if (it == kv.end()) throw CheckpointError(std::string("architecture metadata lacks '") + key + "'");
    return std::stoull(it->second);
  };
  Config c;
  c.size = num("size");
  c.channels.clear();
  std::istringstream ch(kv["channels"]);
  for (std::string tok; std::getline(ch, tok, ',');) c.channels.push_back(std::stoull(tok));
  c.hidden = num("hidden");
  c.components = num("components");
  c.branch_width = num("branch_width");
  c.branch_depth = num("branch_depth");
  c.seed = num("seed");
  c.validate();
  return c;
}

Var fuse(Var branch, Var trunk, Var beta) {
  const Shape& bs = branch.shape();
  const Shape& ts = trunk.shape();
  if (bs.size() != 3 || ts.size() != 3 || bs[0] != ts[0]) {
    throw DimensionError("fuse expects B [b x c x HD] and T [b x n x HD], got " + to_string(bs) + " and " +
                         to_string(ts));
  }
  if (bs[2] != ts[2]) throw DimensionError("fuse: hidden dimension mismatch " + to_string(bs) + " vs " + to_string(ts));
  if (beta.shape() != Shape{bs[1]}) throw DimensionError("fuse: bias shape " + to_string(beta.shape()));
  return ops::add_bias(ops::batched_matmul(trunk, branch, true), beta);
}

Var masked_mse_loss(Var pred, const Tensor& truth, const Tensor& mask) {
  const Shape& s = pred.shape();
  if (s.size() != 3 || truth.shape() != s || mask.size() != s[0] * s[1]) {
    throw DimensionError("masked loss: prediction " + to_string(s) + ", truth " + to_string(truth.shape()) +
                         ", mask " + to_string(mask.shape()));
  }
  const std::size_t c = s[2];
  Tensor w(s, 0.0);
  Tensor t(s, 0.0);
  std::size_t solid = 0;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (mask[p] == 0.0) continue;
    ++solid;
    for (std::size_t k = 0; k < c; ++k) {
      w[p * c + k] = 1.0;
      t[p * c + k] = truth[p * c + k];
    }
  }
  if (solid == 0) throw LossError("masked loss over an empty mask");
  Tape& tape = *pred.tape();
  Var diff = ops::mul(ops::sub(pred, tape.constant(std::move(t))), tape.constant(std::move(w)));
  return ops::scale(ops::sum(ops::square(diff)), 1.0 / static_cast<double>(solid * c));
}

Var ResBlock::operator()(Tape& tape, Var x) const {
  Var y = conv2(tape, ops::relu(conv1(tape, x)));
  Var skip = project.w ? project(tape, x) : x;
  return ops::relu(ops::add(y, skip));
}

namespace {

ResBlock make_block(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  ResBlock b;
  b.conv1 = make_conv(store, name + ".conv1", in, out, 3, 1, rng);
  b.conv2 = make_conv(store, name + ".conv2", out, out, 3, 1, rng);
  if (in != out) b.project = make_conv(store, name + ".project", in, out, 1, 1, rng);
  return b;
}

}  // namespace

Network::Network(Config cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  std::size_t in = 1;
  for (std::size_t i = 0; i < cfg_.branch_depth; ++i) {
    branch_.push_back(make_dense(store_, "branch.dense" + std::to_string(i + 1), in, cfg_.branch_width,
                                 Activation::relu, rng));
    in = cfg_.branch_width;
  }
  latent_head_ = make_dense(store_, "branch.latent", in, cfg_.latent(), Activation::none, rng);
  fusion_head_ = make_dense(store_, "branch.fusion", in, cfg_.components * cfg_.hidden, Activation::none, rng);

  const auto& ch = cfg_.channels;
  encoder_.push_back(make_block(store_, "trunk.enc0", 1, ch[0], rng));
  for (std::size_t i = 1; i < ch.size(); ++i) {
    down_.push_back(make_conv(store_, "trunk.down" + std::to_string(i), ch[i - 1], ch[i], 3, 2, rng));
    encoder_.push_back(make_block(store_, "trunk.enc" + std::to_string(i), ch[i], ch[i], rng));
  }
  for (std::size_t i = 0; i + 1 < ch.size(); ++i) {
    decoder_.push_back(make_conv(store_, "trunk.dec" + std::to_string(i), ch[i + 1] + ch[i], ch[i], 3, 1, rng));
  }
  head_ = make_conv(store_, "trunk.head", ch[0], cfg_.hidden, 1, 1, rng);
  beta_ = &store_.add("fuse.beta", Tensor({cfg_.components}, 0.0));
}

std::pair<Var, Var> Network::branch(Tape& tape, const Tensor& velocity) const {
  if (velocity.rank() != 2 || velocity.extent(1) != 1) {
    throw DimensionError("branch expects [b x 1] velocities, got " + to_string(velocity.shape()));
  }
  Var x = tape.constant(velocity);
  for (const Dense& d : branch_) x = d(tape, x);
  const std::size_t b = velocity.extent(0);
  Var latent = latent_head_(tape, x);
  Var coef = ops::reshape(fusion_head_(tape, x), {b, cfg_.components, cfg_.hidden});
  return {latent, coef};
}

Var Network::trunk(Tape& tape, const Tensor& masks, Var latent, Trace* trace) const {
  const Shape& s = masks.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != cfg_.size || s[3] != cfg_.size) {
    throw DimensionError("trunk expects [b x 1 x " + std::to_string(cfg_.size) + " x " + std::to_string(cfg_.size) +
                         "] masks, got " + to_string(s));
  }
  const std::size_t b = s[0];
  std::vector<Var> skips;
  Var e = encoder_[0](tape, tape.constant(masks));
  for (std::size_t i = 1; i < encoder_.size(); ++i) {
    skips.push_back(e);
    e = encoder_[i](tape, down_[i - 1](tape, e));
  }
  Var d = e;
  if (latent) {
    if (latent.value().size() != e.value().size()) {
      throw DimensionError("latent " + to_string(latent.shape()) + " does not match bottleneck " + to_string(e.shape()));
    }
    d = ops::mul(e, ops::reshape(latent, e.shape()));
  }
  if (trace) {
    trace->bottleneck = e;
    trace->fused = d;
    trace->skips = skips;
  }
  for (std::size_t k = decoder_.size(); k-- > 0;) {
    const Var parts[2] = {ops::upsample_nearest(d), skips[k]};
    d = ops::relu(decoder_[k](tape, ops::concat(parts, 1)));
  }
  Var h = head_(tape, d);  // [b x HD x S x S]
  return ops::permute(ops::reshape(h, {b, cfg_.hidden, cfg_.pixels()}), {0, 2, 1});
}

Var Network::forward(Tape& tape, const Tensor& masks, const Tensor& velocity, Trace* trace) const {
  auto [latent, coef] = branch(tape, velocity);
  return fuse(coef, trunk(tape, masks, latent, trace), tape.parameter(*beta_));
}

// ---------------------------------------------------------------- model

Model::Model(Config cfg) : net_(std::move(cfg)) {}

Tensor Model::masks(const std::vector<const Sample*>& batch) const {
  const std::size_t n = net_.config().pixels(), side = net_.config().size;
  Tensor m({batch.size(), 1, side, side});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i]->mask.size() != n) throw DimensionError("mask must have " + std::to_string(n) + " pixels");
    for (std::size_t p = 0; p < n; ++p) m[i * n + p] = batch[i]->mask[p] ? 1.0 : 0.0;
  }
  return m;
}

Tensor Model::material(const std::vector<const Sample*>& batch) const {
  return masks(batch).reshaped({batch.size(), net_.config().pixels()});
}

Tensor Model::velocities(const std::vector<const Sample*>& batch) const {
  if (!in_.fitted()) throw CheckpointError("velocity scaler missing");
  Tensor v({batch.size(), 1});
  for (std::size_t i = 0; i < batch.size(); ++i) v[i] = in_.transform(batch[i]->velocity, 0);
  return v;
}

Tensor Model::scaled_targets(const std::vector<const Sample*>& batch) const {
  if (!out_.fitted()) throw CheckpointError("target scaler missing");
  const std::size_t n = net_.config().pixels();
  Tensor y({batch.size(), n, 2});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& s = *batch[i];
    if (s.temperature.size() != n || s.stress.size() != n) throw DimensionError("target fields must cover every pixel");
    for (std::size_t p = 0; p < n; ++p) {
      if (!s.mask[p]) continue;
      y[(i * n + p) * 2] = out_.transform(s.temperature[p], 0);
      y[(i * n + p) * 2 + 1] = out_.transform(s.stress[p], 1);
    }
  }
  return y;
}

TrainResult Model::train(const std::vector<const Sample*>& train, const TrainConfig& tc) {
  if (train.size() < 2) throw ParameterError("training needs at least two samples");
  if (tc.batch == 0) throw ParameterError("batch size must be positive");
  if (net_.config().components != 2) throw ParameterError("training expects two output components");
  std::vector<std::vector<double>> vel(1), targets(2);
  for (const Sample* s : train) {
    vel[0].push_back(s->velocity);
    for (std::size_t p = 0; p < s->mask.size(); ++p) {
      if (!s->mask[p]) continue;
      targets[0].push_back(s->temperature[p]);
      targets[1].push_back(s->stress[p]);
    }
  }
  in_ = model::MinMaxScaler::fit(vel);
  out_ = model::MinMaxScaler::fit(targets);

  const std::size_t bs = std::min(tc.batch, train.size());
  Adam adam(net_.parameters().pointers(), AdamConfig{tc.learning_rate});
  Rng rng(tc.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;
  const std::size_t third = tc.iterations / 3, two_thirds = 2 * tc.iterations / 3;

  TrainResult result;
  result.history.reserve(tc.iterations);
  for (std::size_t it = 0; it < tc.iterations; ++it) {
    if (tc.step_decay) {
      const double factor = it >= two_thirds ? 0.25 : it >= third ? 0.5 : 1.0;
      adam.set_learning_rate(tc.learning_rate * factor);
    }
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
      Var pred = net_.forward(tape, masks(batch), velocities(batch));
      Var loss = masked_mse_loss(pred, scaled_targets(batch), material(batch));
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
  const std::size_t n = net_.config().pixels();
  std::vector<std::vector<double>> out;
  out.reserve(inputs.size());
  constexpr std::size_t kChunk = 8;
  for (std::size_t start = 0; start < inputs.size(); start += kChunk) {
    std::vector<const Sample*> chunk(inputs.begin() + start, inputs.begin() + std::min(inputs.size(), start + kChunk));
    Tape tape(false);
    const Tensor& g = net_.forward(tape, masks(chunk), velocities(chunk)).value();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      std::vector<double> f(n * 2, 0.0);
      for (std::size_t p = 0; p < n; ++p) {
        if (!chunk[i]->mask[p]) continue;
        f[2 * p] = out_.inverse(g[(i * n + p) * 2], 0);
        f[2 * p + 1] = out_.inverse(g[(i * n + p) * 2 + 1], 1);
      }
      out.push_back(std::move(f));
    }
  }
  return out;
}

io::TensorContainer Model::to_container() const {
  io::TensorContainer c;
  c.put_text("meta/arch", net_.config().describe());
  for (const auto& p : net_.parameters()) c.put_f64("param/" + p.name, p.value);
  in_.save(c, "scaler/input");
  out_.save(c, "scaler/target");
  return c;
}

Model Model::from_container(const io::TensorContainer& c) {
  Model m(Config::parse(c.get_text("meta/arch")));
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

SweepResult velocity_sweep(const Model& model, const std::vector<std::vector<std::uint8_t>>& masks,
                           const std::vector<double>& velocities) {
  if (masks.empty() || velocities.empty()) throw ParameterError("sweep needs at least one mask and one velocity");
  SweepResult r;
  r.velocities = velocities;
  r.max_stress.assign(masks.size(), std::vector<double>(velocities.size(), 0.0));
  std::vector<Sample> samples;
  samples.reserve(masks.size() * velocities.size());
  for (const auto& m : masks)
    for (double v : velocities) samples.push_back(Sample{m, v, {}, {}});
  std::vector<const Sample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  const auto pred = model.predict(ptrs);
  for (std::size_t i = 0; i < masks.size(); ++i)
    for (std::size_t j = 0; j < velocities.size(); ++j) {
      const auto& f = pred[i * velocities.size() + j];
      double mx = 0.0;
      for (std::size_t p = 0; p < masks[i].size(); ++p)
        if (masks[i][p]) mx = std::max(mx, std::abs(f[2 * p + 1]));
      r.max_stress[i][j] = mx;
    }
  for (std::size_t j = 0; j < velocities.size(); ++j) {
    double s = 0.0;
    for (const auto& row : r.max_stress) s += row[j];
    r.average.push_back(s / static_cast<double>(masks.size()));
  }
  const std::size_t top = static_cast<std::size_t>(
      std::max_element(velocities.begin(), velocities.end()) - velocities.begin());
  std::vector<std::size_t> order(masks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return r.max_stress[a][top] < r.max_stress[b][top]; });
  r.min_design = order.front();
  r.max_design = order.back();
  r.median_design = order[(order.size() - 1) / 2];
  return r;
}

}  // namespace odn::resunet
