#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "odn/model/resunet.hpp"
#include "odn/model/sdeeponet.hpp"
#include "odn/pipeline/config.hpp"
#include "odn/pipeline/container.hpp"

namespace odn::pipeline {

/// Seeded shuffle of 0..n-1; the first round(n * ratio) indices train.
/// Both parts are non-empty and kept in ascending order.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_dataset(std::size_t n, double ratio,
                                                                            std::uint64_t seed);

using Progress = std::function<void(std::size_t done, std::size_t total)>;

struct CastingDataset {
  std::vector<double> coords;  // nodes x 2, (x / thickness, 0)
  std::vector<sdeeponet::Sample> samples;
  std::vector<std::size_t> attempts;  // profile draws used by each sample

  std::size_t nodes() const { return coords.size() / 2; }
};

/// One casting sample from its own derived stream; redraws the profiles when
/// the solver fails, up to cfg.casting.max_attempts, then throws SolverError.
sdeeponet::Sample generate_casting_sample(const RunConfig& cfg, std::size_t index, std::size_t* attempts = nullptr);
CastingDataset generate_casting(const RunConfig& cfg, std::size_t threads, const Progress& progress = {});
io::TensorContainer to_container(const CastingDataset& d);
CastingDataset casting_from_container(const io::TensorContainer& c);

struct AmDataset {
  std::vector<double> velocities;  // the configured list
  std::vector<resunet::Sample> samples;  // design-major: sample = design * velocities + v
};

std::vector<std::uint8_t> generate_am_design(const RunConfig& cfg, std::size_t design);
resunet::Sample simulate_am_sample(const RunConfig& cfg, const std::vector<std::uint8_t>& mask, double velocity);
AmDataset generate_am(const RunConfig& cfg, std::size_t threads, const Progress& progress = {});
io::TensorContainer to_container(const AmDataset& d);
AmDataset am_from_container(const io::TensorContainer& c);

/// Key = value text stored next to a dataset: kind, counts, seed, the
/// generator configuration and CRC-32 checksums.
struct Manifest {
  std::map<std::string, std::string> values;

  std::string to_text() const;
  static Manifest parse(const std::string& text);
  const std::string& at(const std::string& key) const;
};

inline constexpr const char* kDatasetFile = "dataset.odn";
inline constexpr const char* kManifestFile = "manifest.txt";

/// Writes dataset.odn and manifest.txt into `dir`.
void write_dataset(const std::filesystem::path& dir, const std::string& kind, const io::TensorContainer& data,
                   const RunConfig& cfg);
/// Loads dataset.odn, verifies it against the manifest and returns it with
/// the manifest's kind.
std::pair<std::string, io::TensorContainer> read_dataset(const std::filesystem::path& dir);

/// Runs fn(i) for i in [0, n) on `threads` workers; the first exception is
/// rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn,
                  const Progress& progress = {});

}  // namespace odn::pipeline
