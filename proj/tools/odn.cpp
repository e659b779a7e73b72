// odn: dataset generation, training, evaluation and benchmarking.
#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "odn/core/error.hpp"
#include "odn/core/runtime.hpp"
#include "odn/pipeline/commands.hpp"
#include "odn/pipeline/container.hpp"

namespace pl = odn::pipeline;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kSolver = 4, kAbort = 5 };

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config, "run configuration file (key = value lines)")->check(CLI::ExistingFile);
    app->add_option("-s,--set", overrides, "override one key, e.g. --set resunet.iterations=500")->take_all();
    app->add_option("--seed", seed, "master seed");
    app->add_option("--threads", threads, "generation worker threads");
  }

  pl::RunConfig build() const {
    pl::RunConfig cfg = config.empty() ? pl::RunConfig{} : pl::RunConfig::load(config);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw odn::ConfigError("override '" + kv + "' is not key=value");
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t"), b = s.find_last_not_of(" \t");
        return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
      };
      cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    cfg.validate();
    return cfg;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Operator-network surrogates for continuous casting and additive manufacturing"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  Common common;
  std::string out, data, model, arch, pipeline = "both", prefix;
  std::optional<std::size_t> n, designs, iterations;
  bool all = false;

  auto* gen_c = app.add_subcommand("gen-casting", "generate the casting dataset (dataset.odn + manifest.txt)");
  common.attach(gen_c);
  gen_c->add_option("-o,--out", out, "output directory")->required();
  gen_c->add_option("-n,--n", n, "number of samples");

  auto* gen_a = app.add_subcommand("gen-am", "generate the AM dataset: every design at every velocity");
  common.attach(gen_a);
  gen_a->add_option("-o,--out", out, "output directory")->required();
  gen_a->add_option("--designs", designs, "number of random designs");

  auto* tr = app.add_subcommand("train", "split a dataset and train a model");
  common.attach(tr);
  tr->add_option("--arch", arch, "sdeeponet (casting) or resunet (AM)")
      ->required()
      ->check(CLI::IsMember({"sdeeponet", "resunet"}));
  tr->add_option("-d,--data", data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("-o,--out", out, "run directory for model.odn and history.csv")->required();
  tr->add_option("--iterations", iterations, "optimiser steps");

  auto* ev = app.add_subcommand("eval", "metrics, percentile-case plots and error histograms");
  common.attach(ev);
  ev->add_option("-m,--model", model, "checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("-d,--data", data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("-o,--out", out, "report directory")->required();
  ev->add_flag("--all", all, "evaluate every sample instead of the test split");

  auto* pr = app.add_subcommand("predict", "write predicted fields to a container");
  pr->add_option("-m,--model", model, "checkpoint")->required()->check(CLI::ExistingFile);
  pr->add_option("-d,--data", data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  pr->add_option("-o,--out", out, "output file")->required();
  pr->add_flag("--all", all, "predict every sample instead of the test split");

  auto* gc = app.add_subcommand("gradcheck", "central-difference checks of every op and both tiny models");

  auto* sw = app.add_subcommand("sweep", "max stress of the test designs at every configured velocity");
  common.attach(sw);
  sw->add_option("-m,--model", model, "resunet checkpoint")->required()->check(CLI::ExistingFile);
  sw->add_option("-d,--data", data, "AM dataset directory")->required()->check(CLI::ExistingDirectory);
  sw->add_option("-o,--out", out, "output directory")->required();

  std::string casting_model, am_model;
  auto* be = app.add_subcommand("bench", "per-sample generation time against per-sample inference time");
  common.attach(be);
  be->add_option("--pipeline", pipeline, "casting, am or both")->check(CLI::IsMember({"casting", "am", "both"}));
  be->add_option("--casting-model", casting_model, "sdeeponet checkpoint (default: untrained network)")
      ->check(CLI::ExistingFile);
  be->add_option("--am-model", am_model, "resunet checkpoint (default: untrained network)")->check(CLI::ExistingFile);
  be->add_option("-o,--out", out, "also write the table as CSV");

  auto* df = app.add_subcommand("defaults", "print every configuration key with its default");
  df->add_option("--prefix", prefix, "only keys starting with this");
  bool describe = false;
  df->add_flag("--describe", describe, "print descriptions as comments");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  std::ostream* log = &std::cerr;

  if (*gen_c) {
    auto cfg = common.build();
    if (n) {
      cfg.casting.samples = *n;
      cfg.validate();
    }
    pl::gen_casting(cfg, out, log);
  } else if (*gen_a) {
    auto cfg = common.build();
    if (designs) {
      cfg.am.designs = *designs;
      cfg.validate();
    }
    pl::gen_am(cfg, out, log);
  } else if (*tr) {
    auto cfg = common.build();
    if (iterations) {
      cfg.sdeeponet.train.iterations = *iterations;
      cfg.resunet.train.iterations = *iterations;
      cfg.validate();
    }
    pl::train(cfg, arch, data, out, log);
  } else if (*ev) {
    pl::eval(common.build(), model, data, out, all, log);
  } else if (*pr) {
    pl::predict(model, data, out, all);
  } else if (*gc) {
    if (!pl::gradcheck(&std::cout).passed) return kSolver;
  } else if (*sw) {
    pl::sweep(common.build(), model, data, out, &std::cout);
  } else if (*be) {
    const auto cfg = common.build();
    std::vector<pl::BenchResult> rows;
    if (pipeline != "am") rows.push_back(pl::bench_casting(cfg, casting_model));
    if (pipeline != "casting") rows.push_back(pl::bench_am(cfg, am_model));
    const std::string csv = pl::bench_csv(rows);
    std::cout << csv;
    for (const auto& r : rows) {
      std::cout << r.pipeline << ": inference is " << r.ratio() << "x faster than generation per sample\n";
    }
    if (!out.empty()) odn::io::write_atomic(out, csv);
  } else if (*df) {
    if (!describe) {
      std::cout << pl::RunConfig{}.to_text(prefix);
    } else {
      const pl::RunConfig cfg;
      for (const auto& k : pl::config_keys()) {
        if (k.key.rfind(prefix, 0) != 0) continue;
        std::cout << "# " << k.description << '\n' << k.key << " = " << cfg.get(k.key) << "\n\n";
      }
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  odn::configure_allocator();
  try {
    return run(argc, argv);
  } catch (const odn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const odn::ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const odn::FormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const odn::CheckpointError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const odn::SolverError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return kSolver;
  } catch (const odn::GenerationError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return kSolver;
  } catch (const odn::TrainingAbort& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return kAbort;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
