#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "odn/metrics/metrics.hpp"
#include "odn/model/resunet.hpp"
#include "odn/model/sdeeponet.hpp"
#include "odn/pipeline/config.hpp"
#include "odn/pipeline/dataset.hpp"

// The CLI subcommands as library calls. Errors surface as odn exceptions;
// tools/odn maps them to exit codes.
namespace odn::pipeline {

namespace fs = std::filesystem;

// ----------------------------------------------------------------- datasets

CastingDataset gen_casting(const RunConfig& cfg, const fs::path& out, std::ostream* log = nullptr);
AmDataset gen_am(const RunConfig& cfg, const fs::path& out, std::ostream* log = nullptr);

CastingDataset load_casting(const fs::path& dir);
AmDataset load_am(const fs::path& dir);

std::vector<const sdeeponet::Sample*> pick(const CastingDataset& d, const std::vector<std::size_t>& ids);
std::vector<const resunet::Sample*> pick(const AmDataset& d, const std::vector<std::size_t>& ids);

// --------------------------------------------------------------- checkpoints

inline constexpr const char* kModelFile = "model.odn";
inline constexpr const char* kHistoryFile = "history.csv";

struct Checkpoint {
  std::string arch;  // "sdeeponet" or "resunet"
  io::TensorContainer model;
  std::vector<std::size_t> train, test;
  std::vector<double> history;
  bool aborted = false;
  std::string reason;
  std::string config;  // RunConfig text the model was trained with

  static Checkpoint load(const fs::path& path);
  void save(const fs::path& path) const;
};

struct TrainOutcome {
  Checkpoint checkpoint;
  double seconds = 0.0;
};

/// Splits the dataset in `data`, trains, writes model.odn and history.csv
/// into `out`. An aborted run is still saved, then TrainingAbort is thrown.
TrainOutcome train(const RunConfig& cfg, const std::string& arch, const fs::path& data, const fs::path& out,
                   std::ostream* log = nullptr);

// ---------------------------------------------------------------- evaluation

struct Evaluation {
  std::string arch;
  metrics::EvalReport report;  // components "temperature" and "stress"
  std::vector<double> axis;    // casting: node x / thickness
  std::size_t side = 0;        // am: grid side
  // Per component, per evaluated sample: display fields. Casting: all nodes.
  // AM: side*side with NaN on void.
  std::array<std::vector<metrics::Field>, 2> truth, pred;
};

/// Metrics over every node (casting) or over material pixels only (AM).
Evaluation evaluate(const Checkpoint& ckpt, const fs::path& data, const std::vector<std::size_t>& ids,
                    double clip_percent);

/// report.csv plus case and histogram SVGs.
void write_reports(const fs::path& dir, const Evaluation& e);

/// eval subcommand: test split by default, every sample with `all`.
Evaluation eval(const RunConfig& cfg, const fs::path& model, const fs::path& data, const fs::path& out, bool all,
                std::ostream* log = nullptr);

/// predictions.odn with [n x nodes x 2] physical-unit fields and the indices.
void predict(const fs::path& model, const fs::path& data, const fs::path& out, bool all);

// --------------------------------------------------------------- gradients

struct GradReport {
  std::vector<std::pair<std::string, double>> rows;
  double worst = 0.0;
  double seconds = 0.0;
  bool passed = false;
};
GradReport gradcheck(std::ostream* log = nullptr);

// ------------------------------------------------------------------- sweep

struct SweepOutcome {
  resunet::SweepResult result;
  std::vector<std::size_t> designs;  // dataset sample index holding each mask
  bool monotone = false;             // average max stress non-decreasing in velocity
};
/// Max predicted stress for every distinct mask of the test split at every
/// configured velocity; writes sweep.csv and sweep.txt into `out`.
SweepOutcome sweep(const RunConfig& cfg, const fs::path& model, const fs::path& data, const fs::path& out,
                   std::ostream* log = nullptr);

// ------------------------------------------------------------------- bench

struct BenchResult {
  std::string pipeline;
  std::size_t generated = 0;
  std::size_t inferred = 0;
  double generation_per_sample = 0.0;  // s
  double inference_per_sample = 0.0;   // s
  double ratio() const { return generation_per_sample / inference_per_sample; }
};

/// Times fresh single-threaded sample generation against batched inference
/// of the same samples. Without a checkpoint an untrained network of the
/// configured architecture is timed; weights do not change the cost.
BenchResult bench_casting(const RunConfig& cfg, const fs::path& model = {});
BenchResult bench_am(const RunConfig& cfg, const fs::path& model = {});
std::string bench_csv(const std::vector<BenchResult>& rows);

}  // namespace odn::pipeline
