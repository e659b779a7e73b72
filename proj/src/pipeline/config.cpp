#include "odn/pipeline/config.hpp"

#include <charconv>
#include <functional>
#include <set>
#include <sstream>

#include "odn/core/error.hpp"
#include "odn/pipeline/container.hpp"

namespace odn::pipeline {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::string format_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format(v[i]);
  return s;
}

Band parse_band(const std::string& key, const std::string& v) {
  auto l = parse_list(key, v);
  if (l.size() != 2) throw ConfigError(key + ": expected 'lo,hi'");
  return {l[0], l[1]};
}

struct Field {
  std::string key;
  std::string description;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

Field real(std::string key, std::string doc, std::function<double&(RunConfig&)> ref) {
  return {key, std::move(doc), [ref](const RunConfig& c) { return format(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_double(key, v); }};
}

template <class U>
Field integer(std::string key, std::string doc, std::function<U&(RunConfig&)> ref) {
  return {key, std::move(doc),
          [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = static_cast<U>(parse_unsigned(key, v)); }};
}

Field flag(std::string key, std::string doc, std::function<bool&(RunConfig&)> ref) {
  return {key, std::move(doc), [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_bool(key, v); }};
}

Field band(std::string key, std::string doc, std::function<Band&(RunConfig&)> ref) {
  return {key, std::move(doc),
          [ref](const RunConfig& c) {
            const Band& b = ref(const_cast<RunConfig&>(c));
            return format(b.lo) + "," + format(b.hi);
          },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_band(key, v); }};
}

Field list(std::string key, std::string doc, std::function<std::vector<double>&(RunConfig&)> ref) {
  return {key, std::move(doc), [ref](const RunConfig& c) { return format_list(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_list(key, v); }};
}

Field sizes(std::string key, std::string doc, std::function<std::vector<std::size_t>&(RunConfig&)> ref) {
  return {key, std::move(doc),
          [ref](const RunConfig& c) {
            std::string s;
            for (std::size_t v : ref(const_cast<RunConfig&>(c))) s += (s.empty() ? "" : ",") + std::to_string(v);
            return s;
          },
          [ref, key](RunConfig& c, const std::string& v) {
            std::vector<std::size_t> out;
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ',')) out.push_back(parse_unsigned(key, trim(item)));
            if (out.empty()) throw ConfigError(key + ": empty list");
            ref(c) = std::move(out);
          }};
}

Field text(std::string key, std::string doc, std::function<std::string&(RunConfig&)> ref) {
  return {key, std::move(doc), [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); },
          [ref](RunConfig& c, const std::string& v) { ref(c) = v; }};
}

using Z = std::size_t;
using U64 = std::uint64_t;

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back(integer<U64>("seed", "master seed; every sample derives its own stream from it", [](RunConfig& c) -> U64& { return c.seed; }));
    f.push_back(integer<Z>("threads", "worker threads for dataset generation (content does not depend on it)", [](RunConfig& c) -> Z& { return c.threads; }));
    f.push_back(real("split.ratio", "training share of the seeded train/test split", [](RunConfig& c) -> double& { return c.split_ratio; }));
    f.push_back(real("report.casting_clip", "casting percentile cases rank only the best clip% of test samples", [](RunConfig& c) -> double& { return c.casting_clip; }));
    f.push_back(real("report.am_clip", "AM percentile cases rank only the best clip% of test samples", [](RunConfig& c) -> double& { return c.am_clip; }));
    f.push_back(integer<Z>("bench.samples", "fresh samples timed per pipeline by `bench`", [](RunConfig& c) -> Z& { return c.bench_samples; }));
    f.push_back(integer<Z>("bench.inference_batch", "inputs per timed inference call, cycled from the fresh samples", [](RunConfig& c) -> Z& { return c.bench_batch; }));

    f.push_back(integer<Z>("casting.samples", "number of casting samples", [](RunConfig& c) -> Z& { return c.casting.samples; }));
    f.push_back(integer<Z>("casting.max_attempts", "profile draws per sample before giving up", [](RunConfig& c) -> Z& { return c.casting.max_attempts; }));
    f.push_back(integer<Z>("casting.nodes", "slice nodes", [](RunConfig& c) -> Z& { return c.casting.solver.nodes; }));
    f.push_back(real("casting.thickness", "slice thickness, m", [](RunConfig& c) -> double& { return c.casting.solver.thickness; }));
    f.push_back(real("casting.duration", "simulated time, s", [](RunConfig& c) -> double& { return c.casting.solver.duration; }));
    f.push_back(integer<Z>("casting.steps", "time steps", [](RunConfig& c) -> Z& { return c.casting.solver.steps; }));
    f.push_back(real("casting.initial_temperature", "pour temperature, deg C", [](RunConfig& c) -> double& { return c.casting.solver.initial_temperature; }));
    f.push_back(real("casting.coupling", "net lateral force per mm of mould displacement, MPa m, scaled by solid fraction", [](RunConfig& c) -> double& { return c.casting.solver.coupling; }));
    f.push_back(real("casting.thermal_tolerance", "relative residual of the implicit thermal step", [](RunConfig& c) -> double& { return c.casting.solver.thermal_tolerance; }));
    f.push_back(integer<Z>("casting.max_newton", "Newton iteration cap", [](RunConfig& c) -> Z& { return c.casting.solver.max_newton; }));
    f.push_back(real("casting.force_tolerance", "net-force tolerance, MPa m", [](RunConfig& c) -> double& { return c.casting.solver.force_tolerance; }));
    f.push_back(text("casting.properties", "steel property table; empty uses the built-in values", [](RunConfig& c) -> std::string& { return c.casting.solver.properties_path; }));
    f.push_back(real("casting.carbon", "carbon content, wt%", [](RunConfig& c) -> double& { return c.casting.solver.grade.carbon_pct; }));
    f.push_back(real("casting.solidus", "deg C", [](RunConfig& c) -> double& { return c.casting.solver.grade.solidus; }));
    f.push_back(real("casting.liquidus", "deg C", [](RunConfig& c) -> double& { return c.casting.solver.grade.liquidus; }));
    f.push_back(real("casting.delta_transition", "below this the solid holds no delta-ferrite, deg C", [](RunConfig& c) -> double& { return c.casting.solver.grade.delta_transition; }));

    f.push_back(integer<Z>("profile.control_points", "random control points per history", [](RunConfig& c) -> Z& { return c.casting.profile.control_points; }));
    f.push_back(band("profile.flux_start", "initial heat flux band, MW/m^2", [](RunConfig& c) -> Band& { return c.casting.profile.flux_start; }));
    f.push_back(band("profile.flux_end", "final heat flux band, MW/m^2", [](RunConfig& c) -> Band& { return c.casting.profile.flux_end; }));
    f.push_back(band("profile.displacement_start", "initial displacement band, mm", [](RunConfig& c) -> Band& { return c.casting.profile.displacement_start; }));
    f.push_back(band("profile.displacement_end", "final displacement band, mm", [](RunConfig& c) -> Band& { return c.casting.profile.displacement_end; }));
    f.push_back(real("profile.gamma", "Gaussian RBF shape, 1/s; 0 picks half the inverse control spacing", [](RunConfig& c) -> double& { return c.casting.profile.gamma; }));
    f.push_back(flag("profile.enforce_trend", "flux non-increasing, displacement non-decreasing", [](RunConfig& c) -> bool& { return c.casting.profile.enforce_trend; }));

    f.push_back(integer<Z>("am.designs", "random designs; each is simulated at every velocity", [](RunConfig& c) -> Z& { return c.am.designs; }));
    f.push_back(list("am.velocities", "scan velocities, mm/s", [](RunConfig& c) -> std::vector<double>& { return c.am.velocities; }));
    f.push_back(band("am.volume_fraction", "design volume-fraction band", [](RunConfig& c) -> Band& { return c.am.volume_fraction; }));
    f.push_back(real("am.vf_tolerance", "accepted deviation from the drawn volume fraction", [](RunConfig& c) -> double& { return c.am.design.vf_tolerance; }));
    f.push_back(real("am.smoothing", "random-field blur, pixels", [](RunConfig& c) -> double& { return c.am.design.smoothing; }));
    f.push_back(integer<int>("am.max_retries", "design redraws before a generation error", [](RunConfig& c) -> int& { return c.am.design.max_retries; }));
    f.push_back(real("am.laser_power", "W", [](RunConfig& c) -> double& { return c.am.process.laser_power; }));
    f.push_back(real("am.absorption", "absorbed share of the laser power", [](RunConfig& c) -> double& { return c.am.process.absorption; }));
    f.push_back(real("am.total_time", "total print time, s", [](RunConfig& c) -> double& { return c.am.process.total_time; }));
    f.push_back(integer<Z>("am.layers", "deposited layers", [](RunConfig& c) -> Z& { return c.am.process.layers; }));
    f.push_back(real("am.design_length", "scan length per layer, mm", [](RunConfig& c) -> double& { return c.am.process.design_length; }));
    f.push_back(real("am.pixel", "pixel pitch, m", [](RunConfig& c) -> double& { return c.am.deposition.pixel; }));
    f.push_back(real("am.depth", "out-of-plane slab depth, m", [](RunConfig& c) -> double& { return c.am.deposition.depth; }));
    f.push_back(real("am.convection", "film coefficient, W/(m^2 K)", [](RunConfig& c) -> double& { return c.am.deposition.convection; }));
    f.push_back(real("am.emissivity", "surface emissivity", [](RunConfig& c) -> double& { return c.am.deposition.emissivity; }));
    f.push_back(real("am.ambient", "deg C", [](RunConfig& c) -> double& { return c.am.deposition.ambient; }));
    f.push_back(real("am.substrate", "deg C", [](RunConfig& c) -> double& { return c.am.deposition.substrate; }));
    f.push_back(flag("am.substrate_coupled", "bottom row exchanges heat with the substrate", [](RunConfig& c) -> bool& { return c.am.deposition.substrate_coupled; }));
    f.push_back(real("am.stability", "fraction of the explicit time-step limit", [](RunConfig& c) -> double& { return c.am.deposition.stability; }));
    f.push_back(real("am.min_substep", "smallest sub-step before a solver error, s", [](RunConfig& c) -> double& { return c.am.deposition.min_substep; }));

    f.push_back(integer<Z>("sdeeponet.units_wide", "first and last GRU width", [](RunConfig& c) -> Z& { return c.sdeeponet.arch.units_wide; }));
    f.push_back(integer<Z>("sdeeponet.units_narrow", "middle GRU width", [](RunConfig& c) -> Z& { return c.sdeeponet.arch.units_narrow; }));
    f.push_back(integer<Z>("sdeeponet.trunk_width", "trunk layer width", [](RunConfig& c) -> Z& { return c.sdeeponet.arch.trunk_width; }));
    f.push_back(integer<Z>("sdeeponet.trunk_depth", "hidden trunk layers", [](RunConfig& c) -> Z& { return c.sdeeponet.arch.trunk_depth; }));
    f.push_back(integer<U64>("sdeeponet.init_seed", "weight initialisation seed", [](RunConfig& c) -> U64& { return c.sdeeponet.arch.seed; }));
    f.push_back(integer<Z>("sdeeponet.iterations", "optimiser steps", [](RunConfig& c) -> Z& { return c.sdeeponet.train.iterations; }));
    f.push_back(integer<Z>("sdeeponet.batch", "mini-batch size", [](RunConfig& c) -> Z& { return c.sdeeponet.train.batch; }));
    f.push_back(real("sdeeponet.learning_rate", "Adam step size", [](RunConfig& c) -> double& { return c.sdeeponet.train.learning_rate; }));
    f.push_back(integer<U64>("sdeeponet.train_seed", "mini-batch shuffling seed", [](RunConfig& c) -> U64& { return c.sdeeponet.train.seed; }));

    f.push_back(sizes("resunet.channels", "channels per resolution level, finest first", [](RunConfig& c) -> std::vector<Z>& { return c.resunet.arch.channels; }));
    f.push_back(integer<Z>("resunet.hidden", "hidden dimension shared by branch and trunk", [](RunConfig& c) -> Z& { return c.resunet.arch.hidden; }));
    f.push_back(integer<Z>("resunet.branch_width", "branch layer width", [](RunConfig& c) -> Z& { return c.resunet.arch.branch_width; }));
    f.push_back(integer<Z>("resunet.branch_depth", "hidden branch layers", [](RunConfig& c) -> Z& { return c.resunet.arch.branch_depth; }));
    f.push_back(integer<U64>("resunet.init_seed", "weight initialisation seed", [](RunConfig& c) -> U64& { return c.resunet.arch.seed; }));
    f.push_back(integer<Z>("resunet.iterations", "optimiser steps", [](RunConfig& c) -> Z& { return c.resunet.train.iterations; }));
    f.push_back(integer<Z>("resunet.batch", "mini-batch size", [](RunConfig& c) -> Z& { return c.resunet.train.batch; }));
    f.push_back(real("resunet.learning_rate", "Adam step size", [](RunConfig& c) -> double& { return c.resunet.train.learning_rate; }));
    f.push_back(flag("resunet.step_decay", "halve the step size at 1/3 and 2/3 of the budget", [](RunConfig& c) -> bool& { return c.resunet.train.step_decay; }));
    f.push_back(integer<U64>("resunet.train_seed", "mini-batch shuffling seed", [](RunConfig& c) -> U64& { return c.resunet.train.seed; }));
    return f;
  }();
  return all;
}

const Field& find(const std::string& key) {
  for (const Field& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown key '" + key + "'");
}

}  // namespace

std::vector<KeyInfo> config_keys() {
  std::vector<KeyInfo> out;
  for (const Field& f : fields()) out.push_back({f.key, f.description});
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) { find(key).set(*this, value); }

std::string RunConfig::get(const std::string& key) const { return find(key).get(*this); }

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::set<std::string> seen;
  std::stringstream ss(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(ss, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(number) + ": '" + key + "' set twice");
    try {
      c.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = io::read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return parse(std::string(bytes.begin(), bytes.end()));
}

std::string RunConfig::to_text() const { return to_text(""); }

std::string RunConfig::to_text(const std::string& prefix) const {
  std::string out;
  for (const Field& f : fields()) {
    if (f.key.compare(0, prefix.size(), prefix) != 0) continue;
    out += f.key + " = " + f.get(*this) + "\n";
  }
  return out;
}

void RunConfig::validate() const {
  try {
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("split.ratio must lie in (0, 1)");
    for (double clip : {casting_clip, am_clip}) {
      if (!(clip > 0.0 && clip <= 100.0)) throw ConfigError("report clip percentages must lie in (0, 100]");
    }
    if (threads == 0) throw ConfigError("threads must be at least 1");
    if (bench_samples == 0 || bench_batch == 0) throw ConfigError("bench sizes must be positive");
    if (casting.samples == 0) throw ConfigError("casting.samples must be positive");
    if (casting.max_attempts == 0) throw ConfigError("casting.max_attempts must be positive");
    casting.solver.validate();
    casting.profile.validate();
    if (am.designs == 0) throw ConfigError("am.designs must be positive");
    if (am.velocities.empty()) throw ConfigError("am.velocities must not be empty");
    if (!(am.volume_fraction.lo >= 0.3 && am.volume_fraction.hi <= 0.7 && am.volume_fraction.lo <= am.volume_fraction.hi)) {
      throw ConfigError("am.volume_fraction must lie within [0.3, 0.7]");
    }
    for (double v : am.velocities) {
      am::ProcessParams p = am.process;
      p.velocity = v;
      p.validate();
      am::cooling_time(p);
    }
    am.deposition.validate();
    sdeeponet.arch.validate();
    resunet.arch.validate();
    if (sdeeponet.train.batch == 0 || resunet.train.batch == 0) throw ConfigError("batch sizes must be positive");
    if (!(sdeeponet.train.learning_rate >= 0.0) || !(resunet.train.learning_rate >= 0.0)) {
      throw ConfigError("learning rates must be non-negative");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace odn::pipeline
