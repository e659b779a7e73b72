#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "odn/am/am.hpp"
#include "odn/cast/slice.hpp"
#include "odn/model/resunet.hpp"
#include "odn/model/sdeeponet.hpp"
#include "odn/profile/profile.hpp"

namespace odn::pipeline {

struct CastingSection {
  std::size_t samples = 500;
  std::size_t max_attempts = 5;  // fresh profiles tried before a sample is declared failed
  cast::CastConfig solver;
  ProfileConfig profile;
};

struct AmSection {
  std::size_t designs = 60;  // every design is simulated at every velocity
  std::vector<double> velocities{7.5, 10.0, 12.5, 15.0, 17.5};
  Band volume_fraction{0.3, 0.7};
  am::DesignConfig design;
  am::ProcessParams process;
  am::DepositionConfig deposition;

  std::size_t samples() const { return designs * velocities.size(); }
};

struct SdeeponetSection {
  sdeeponet::Config arch;
  sdeeponet::TrainConfig train;
};

struct ResunetSection {
  resunet::Config arch;
  resunet::TrainConfig train;
};

/// Everything a run depends on. Text form: one `key = value` per line, `#`
/// starts a comment, dotted keys name sections. Unknown or repeated keys are
/// rejected.
struct RunConfig {
  std::uint64_t seed = 7;
  std::size_t threads = 1;
  double split_ratio = 0.8;
  double casting_clip = 90.0;  // percentile-case ranking keeps the best clip% of samples
  double am_clip = 100.0;
  std::size_t bench_samples = 5;
  std::size_t bench_batch = 100;  // inputs per timed inference call

  CastingSection casting;
  AmSection am;
  SdeeponetSection sdeeponet;
  ResunetSection resunet;

  void validate() const;

  /// Applies `key = value` lines on top of the defaults.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  /// Applies one assignment, e.g. from a command-line override.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// Every key with its current value, in a stable order, re-parseable.
  std::string to_text() const;
  /// Only keys whose name starts with `prefix`.
  std::string to_text(const std::string& prefix) const;
};

struct KeyInfo {
  std::string key;
  std::string description;
};
/// All recognised keys, in documentation order.
std::vector<KeyInfo> config_keys();

}  // namespace odn::pipeline
