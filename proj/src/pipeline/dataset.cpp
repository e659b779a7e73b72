#include "odn/pipeline/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "odn/am/am.hpp"
#include "odn/cast/slice.hpp"
#include "odn/core/error.hpp"
#include "odn/core/rng.hpp"
#include "odn/profile/profile.hpp"

namespace odn::pipeline {

namespace {

// Separate stream families so the two generators never share seeds.
constexpr std::uint64_t kCastingStream = 0x63617374;  // "cast"
constexpr std::uint64_t kAmStream = 0x616d;           // "am"
constexpr std::uint64_t kSplitStream = 0x73706c74;    // "splt"

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::uint64_t u64(std::size_t v) { return static_cast<std::uint64_t>(v); }

void require(const io::TensorContainer& c, const std::string& name) {
  if (!c.contains(name)) throw FormatError("dataset is missing '" + name + "'");
}

std::vector<double> row_block(const std::vector<double>& all, std::size_t row, std::size_t width) {
  return {all.begin() + static_cast<std::ptrdiff_t>(row * width),
          all.begin() + static_cast<std::ptrdiff_t>((row + 1) * width)};
}

}  // namespace

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_dataset(std::size_t n, double ratio,
                                                                            std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ParameterError("split ratio must lie in (0, 1)");
  if (n < 2) throw ParameterError("cannot split fewer than two samples");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, kSplitStream));
  // Fisher-Yates with explicit draws so the order does not depend on the
  // standard library's shuffle.
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(idx[i], idx[j]);
  }
  std::size_t n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn,
                  const Progress& progress) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mu;
  std::size_t done = 0;
  auto worker = [&] {
    for (;;) {
      if (failed.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        failed = true;
        return;
      }
      std::lock_guard lock(mu);
      ++done;
      if (progress) progress(done, n);
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

// ------------------------------------------------------------------ casting

sdeeponet::Sample generate_casting_sample(const RunConfig& cfg, std::size_t index, std::size_t* attempts) {
  const cast::CastingSolver solver(cfg.casting.solver);
  ProfileConfig pc = cfg.casting.profile;
  pc.duration = cfg.casting.solver.duration;
  const std::uint64_t base = derive_seed(derive_seed(cfg.seed, kCastingStream), u64(index));
  std::string last;
  for (std::size_t attempt = 0; attempt < cfg.casting.max_attempts; ++attempt) {
    Rng rng(attempt == 0 ? base : derive_seed(base, u64(attempt)));
    auto flux = sample_flux_profile(pc, rng);
    auto disp = sample_displacement_profile(pc, rng);
    auto s = solver.run(flux, disp);
    if (s.ok) {
      if (attempts) *attempts = attempt + 1;
      return {std::move(flux.values), std::move(disp.values), std::move(s.temperature), std::move(s.stress)};
    }
    last = s.failure;
  }
  throw SolverError("casting sample " + std::to_string(index) + " failed after " +
                    std::to_string(cfg.casting.max_attempts) + " profile draws: " + last);
}

CastingDataset generate_casting(const RunConfig& cfg, std::size_t threads, const Progress& progress) {
  cfg.validate();
  CastingDataset d;
  const std::size_t n = cfg.casting.samples;
  d.samples.resize(n);
  d.attempts.assign(n, 0);
  parallel_for(
      n, threads, [&](std::size_t i) { d.samples[i] = generate_casting_sample(cfg, i, &d.attempts[i]); }, progress);
  const auto state = cast::CastingSolver(cfg.casting.solver).initial_state();
  for (double x : state.x) {
    d.coords.push_back(x / cfg.casting.solver.thickness);
    d.coords.push_back(0.0);
  }
  return d;
}

io::TensorContainer to_container(const CastingDataset& d) {
  const std::size_t n = d.samples.size(), N = d.nodes();
  if (n == 0) throw FormatError("empty casting dataset");
  const std::size_t L = d.samples.front().flux.size();
  std::vector<double> flux, disp, temp, stress, attempts;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = d.samples[i];
    if (s.flux.size() != L || s.displacement.size() != L || s.temperature.size() != N || s.stress.size() != N) {
      throw FormatError("casting sample " + std::to_string(i) + " has inconsistent lengths");
    }
    flux.insert(flux.end(), s.flux.begin(), s.flux.end());
    disp.insert(disp.end(), s.displacement.begin(), s.displacement.end());
    temp.insert(temp.end(), s.temperature.begin(), s.temperature.end());
    stress.insert(stress.end(), s.stress.begin(), s.stress.end());
    attempts.push_back(i < d.attempts.size() ? static_cast<double>(d.attempts[i]) : 1.0);
  }
  io::TensorContainer c;
  c.put_text("kind", "casting");
  c.put_f64("coords", d.coords, {u64(N), 2});
  c.put_f64("flux", flux, {u64(n), u64(L)});
  c.put_f64("displacement", disp, {u64(n), u64(L)});
  c.put_f64("temperature", temp, {u64(n), u64(N)});
  c.put_f64("stress", stress, {u64(n), u64(N)});
  c.put_f64("attempts", attempts, {u64(n)});
  return c;
}

CastingDataset casting_from_container(const io::TensorContainer& c) {
  for (const char* name : {"kind", "coords", "flux", "displacement", "temperature", "stress"}) require(c, name);
  if (c.get_text("kind") != "casting") throw FormatError("not a casting dataset");
  const auto& fe = c.at("flux").extents;
  const auto& te = c.at("temperature").extents;
  if (fe.size() != 2 || te.size() != 2 || fe[0] != te[0] || c.at("displacement").extents != fe ||
      c.at("stress").extents != te || c.at("coords").extents != std::vector<std::uint64_t>{te[1], 2}) {
    throw FormatError("casting dataset entries have inconsistent extents");
  }
  const std::size_t n = fe[0], L = fe[1], N = te[1];
  CastingDataset d;
  d.coords = c.get_f64_values("coords");
  const auto flux = c.get_f64_values("flux"), disp = c.get_f64_values("displacement");
  const auto temp = c.get_f64_values("temperature"), stress = c.get_f64_values("stress");
  for (std::size_t i = 0; i < n; ++i) {
    d.samples.push_back({row_block(flux, i, L), row_block(disp, i, L), row_block(temp, i, N), row_block(stress, i, N)});
  }
  if (c.contains("attempts")) {
    for (double a : c.get_f64_values("attempts")) d.attempts.push_back(static_cast<std::size_t>(a));
  }
  return d;
}

// ----------------------------------------------------------------------- am

std::vector<std::uint8_t> generate_am_design(const RunConfig& cfg, std::size_t design) {
  Rng rng(derive_seed(derive_seed(cfg.seed, kAmStream), u64(design)));
  const double vf = uniform(rng, cfg.am.volume_fraction.lo, cfg.am.volume_fraction.hi);
  return am::generate_design(rng, vf, cfg.am.design).cells;
}

resunet::Sample simulate_am_sample(const RunConfig& cfg, const std::vector<std::uint8_t>& mask, double velocity) {
  am::DesignMask m;
  m.cells = mask;
  am::ProcessParams p = cfg.am.process;
  p.velocity = velocity;
  auto s = am::simulate_deposition(m, p, cfg.am.deposition);
  return {mask, velocity, std::move(s.temperature), std::move(s.stress)};
}

AmDataset generate_am(const RunConfig& cfg, std::size_t threads, const Progress& progress) {
  cfg.validate();
  const std::size_t designs = cfg.am.designs, nv = cfg.am.velocities.size();
  std::vector<std::vector<std::uint8_t>> masks(designs);
  parallel_for(designs, threads, [&](std::size_t d) { masks[d] = generate_am_design(cfg, d); });
  AmDataset out;
  out.velocities = cfg.am.velocities;
  out.samples.resize(designs * nv);
  parallel_for(
      designs * nv, threads,
      [&](std::size_t i) { out.samples[i] = simulate_am_sample(cfg, masks[i / nv], cfg.am.velocities[i % nv]); },
      progress);
  return out;
}

io::TensorContainer to_container(const AmDataset& d) {
  const std::size_t n = d.samples.size();
  if (n == 0) throw FormatError("empty AM dataset");
  const std::size_t P = d.samples.front().mask.size();
  const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(P))));
  if (side * side != P) throw FormatError("AM masks must be square");
  std::vector<std::uint8_t> masks;
  std::vector<double> vel, temp, stress;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = d.samples[i];
    if (s.mask.size() != P || s.temperature.size() != P || s.stress.size() != P) {
      throw FormatError("AM sample " + std::to_string(i) + " has inconsistent lengths");
    }
    masks.insert(masks.end(), s.mask.begin(), s.mask.end());
    vel.push_back(s.velocity);
    temp.insert(temp.end(), s.temperature.begin(), s.temperature.end());
    stress.insert(stress.end(), s.stress.begin(), s.stress.end());
  }
  io::TensorContainer c;
  c.put_text("kind", "am");
  c.put_f64("velocities", d.velocities, {u64(d.velocities.size())});
  c.put_u8("mask", masks, {u64(n), u64(side), u64(side)});
  c.put_f64("velocity", vel, {u64(n)});
  c.put_f64("temperature", temp, {u64(n), u64(P)});
  c.put_f64("stress", stress, {u64(n), u64(P)});
  return c;
}

AmDataset am_from_container(const io::TensorContainer& c) {
  for (const char* name : {"kind", "velocities", "mask", "velocity", "temperature", "stress"}) require(c, name);
  if (c.get_text("kind") != "am") throw FormatError("not an AM dataset");
  const auto& me = c.at("mask").extents;
  if (me.size() != 3) throw FormatError("mask must be [n x side x side]");
  const std::size_t n = me[0], P = me[1] * me[2];
  const std::vector<std::uint64_t> field{n, P};
  if (c.at("temperature").extents != field || c.at("stress").extents != field ||
      c.at("velocity").extents != std::vector<std::uint64_t>{n}) {
    throw FormatError("AM dataset entries have inconsistent extents");
  }
  AmDataset d;
  d.velocities = c.get_f64_values("velocities");
  const auto masks = c.get_u8("mask");
  const auto vel = c.get_f64_values("velocity");
  const auto temp = c.get_f64_values("temperature"), stress = c.get_f64_values("stress");
  for (std::size_t i = 0; i < n; ++i) {
    resunet::Sample s;
    s.mask.assign(masks.begin() + static_cast<std::ptrdiff_t>(i * P), masks.begin() + static_cast<std::ptrdiff_t>((i + 1) * P));
    s.velocity = vel[i];
    s.temperature = row_block(temp, i, P);
    s.stress = row_block(stress, i, P);
    d.samples.push_back(std::move(s));
  }
  return d;
}

// ----------------------------------------------------------------- manifest

std::string Manifest::to_text() const {
  std::string out;
  for (const auto& [k, v] : values) out += k + " = " + v + "\n";
  return out;
}

Manifest Manifest::parse(const std::string& text) {
  Manifest m;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw FormatError("manifest line without ' = ': " + line);
    m.values[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return m;
}

const std::string& Manifest::at(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw FormatError("manifest has no '" + key + "'");
  return it->second;
}

void write_dataset(const std::filesystem::path& dir, const std::string& kind, const io::TensorContainer& data,
                   const RunConfig& cfg) {
  const auto bytes = data.serialize();
  Manifest m;
  m.values["kind"] = kind;
  m.values["format"] = "ODN1 v" + std::to_string(io::TensorContainer::kVersion);
  m.values["seed"] = std::to_string(cfg.seed);
  if (kind == "casting") {
    m.values["samples"] = std::to_string(data.at("temperature").extents[0]);
    m.values["nodes"] = std::to_string(data.at("temperature").extents[1]);
  } else {
    m.values["samples"] = std::to_string(data.at("temperature").extents[0]);
    m.values["pixels"] = std::to_string(data.at("temperature").extents[1]);
  }
  std::stringstream echo(cfg.to_text(kind == "casting" ? "casting." : "am.") +
                         (kind == "casting" ? cfg.to_text("profile.") : std::string()));
  std::string line;
  while (std::getline(echo, line)) {
    const auto eq = line.find(" = ");
    m.values["config." + line.substr(0, eq)] = line.substr(eq + 3);
  }
  m.values["checksum." + std::string(kDatasetFile)] = hex32(io::crc32(bytes));
  for (const auto& [name, entry] : data.entries()) m.values["checksum.entry." + name] = hex32(io::crc32(entry.payload));
  std::filesystem::create_directories(dir);
  io::write_atomic(dir / kDatasetFile, bytes);
  io::write_atomic(dir / kManifestFile, m.to_text());
}

std::pair<std::string, io::TensorContainer> read_dataset(const std::filesystem::path& dir) {
  const auto mbytes = io::read_file(dir / kManifestFile);
  const Manifest m = Manifest::parse(std::string(mbytes.begin(), mbytes.end()));
  const auto bytes = io::read_file(dir / kDatasetFile);
  if (hex32(io::crc32(bytes)) != m.at("checksum." + std::string(kDatasetFile))) {
    throw FormatError("dataset checksum does not match the manifest in " + dir.string());
  }
  auto c = io::TensorContainer::parse(bytes);
  const std::string kind = m.at("kind");
  if (c.get_text("kind") != kind) throw FormatError("manifest kind disagrees with the dataset");
  return {kind, std::move(c)};
}

}  // namespace odn::pipeline
