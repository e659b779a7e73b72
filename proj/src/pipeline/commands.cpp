#include "odn/pipeline/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "odn/core/error.hpp"
#include "odn/pipeline/gradsuite.hpp"
#include "odn/pipeline/svg.hpp"

namespace odn::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

constexpr std::array<const char*, 2> kComponents{"temperature", "stress"};
constexpr std::size_t kFreshOffset = 1'000'000;  // bench samples never collide with dataset indices

Progress progress_to(std::ostream* log, const std::string& what) {
  if (!log) return {};
  return [log, what](std::size_t done, std::size_t total) {
    const std::size_t step = std::max<std::size_t>(1, total / 10);
    if (done % step == 0 || done == total) *log << what << ": " << done << "/" << total << std::endl;
  };
}

std::vector<double> as_doubles(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

std::vector<std::size_t> as_indices(const std::vector<double>& v) {
  std::vector<std::size_t> out;
  for (double x : v) out.push_back(static_cast<std::size_t>(x));
  return out;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

std::string kind_for(const std::string& arch) {
  if (arch == "sdeeponet") return "casting";
  if (arch == "resunet") return "am";
  throw ConfigError("unknown architecture '" + arch + "' (expected sdeeponet or resunet)");
}

std::string architecture_of(const io::TensorContainer& c) {
  if (!c.contains("meta/arch")) throw CheckpointError("checkpoint has no architecture record");
  const std::string meta = c.get_text("meta/arch");
  if (meta.find("kind=sdeeponet") != std::string::npos) return "sdeeponet";
  if (meta.find("kind=resunet") != std::string::npos) return "resunet";
  throw CheckpointError("unrecognised architecture record");
}

std::string percent(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << v << "%";
  return os.str();
}

}  // namespace

// ----------------------------------------------------------------- datasets

CastingDataset gen_casting(const RunConfig& cfg, const fs::path& out, std::ostream* log) {
  const auto t0 = Clock::now();
  auto d = generate_casting(cfg, cfg.threads, progress_to(log, "casting samples"));
  write_dataset(out, "casting", to_container(d), cfg);
  if (log) {
    const std::size_t redraws = std::accumulate(d.attempts.begin(), d.attempts.end(), std::size_t{0}) - d.samples.size();
    *log << "wrote " << d.samples.size() << " casting samples (" << d.nodes() << " nodes, " << redraws
         << " profile redraws) to " << out.string() << " in " << std::fixed << std::setprecision(1) << seconds_since(t0)
         << " s" << std::defaultfloat << std::endl;
  }
  return d;
}

AmDataset gen_am(const RunConfig& cfg, const fs::path& out, std::ostream* log) {
  const auto t0 = Clock::now();
  auto d = generate_am(cfg, cfg.threads, progress_to(log, "am samples"));
  write_dataset(out, "am", to_container(d), cfg);
  if (log) {
    *log << "wrote " << d.samples.size() << " AM samples (" << cfg.am.designs << " designs x " << d.velocities.size()
         << " velocities) to " << out.string() << " in " << std::fixed << std::setprecision(1) << seconds_since(t0)
         << " s" << std::defaultfloat << std::endl;
  }
  return d;
}

CastingDataset load_casting(const fs::path& dir) {
  auto [kind, c] = read_dataset(dir);
  if (kind != "casting") throw FormatError(dir.string() + " holds a '" + kind + "' dataset, expected casting");
  return casting_from_container(c);
}

AmDataset load_am(const fs::path& dir) {
  auto [kind, c] = read_dataset(dir);
  if (kind != "am") throw FormatError(dir.string() + " holds a '" + kind + "' dataset, expected am");
  return am_from_container(c);
}

std::vector<const sdeeponet::Sample*> pick(const CastingDataset& d, const std::vector<std::size_t>& ids) {
  std::vector<const sdeeponet::Sample*> out;
  for (std::size_t i : ids) out.push_back(&d.samples.at(i));
  return out;
}

std::vector<const resunet::Sample*> pick(const AmDataset& d, const std::vector<std::size_t>& ids) {
  std::vector<const resunet::Sample*> out;
  for (std::size_t i : ids) out.push_back(&d.samples.at(i));
  return out;
}

// --------------------------------------------------------------- checkpoints

Checkpoint Checkpoint::load(const fs::path& path) {
  Checkpoint c;
  try {
    c.model = io::TensorContainer::load(path);
  } catch (const FormatError& e) {
    throw CheckpointError(e.what());
  }
  for (const char* name : {"run/train", "run/test", "run/history", "run/status", "run/config"}) {
    if (!c.model.contains(name)) throw CheckpointError(path.string() + " has no '" + name + "'");
  }
  c.arch = architecture_of(c.model);
  c.train = as_indices(c.model.get_f64_values("run/train"));
  c.test = as_indices(c.model.get_f64_values("run/test"));
  c.history = c.model.get_f64_values("run/history");
  const std::string status = c.model.get_text("run/status");
  c.aborted = status != "ok";
  if (c.aborted) c.reason = status;
  c.config = c.model.get_text("run/config");
  return c;
}

void Checkpoint::save(const fs::path& path) const {
  io::TensorContainer out = model;
  out.put_f64("run/train", as_doubles(train), {train.size()});
  out.put_f64("run/test", as_doubles(test), {test.size()});
  out.put_f64("run/history", history, {history.size()});
  out.put_text("run/status", aborted ? (reason.empty() ? std::string("aborted") : reason) : std::string("ok"));
  out.put_text("run/config", config);
  out.save(path);
}

TrainOutcome train(const RunConfig& cfg, const std::string& arch, const fs::path& data, const fs::path& out,
                   std::ostream* log) {
  const std::string kind = kind_for(arch);
  TrainOutcome o;
  Checkpoint& ck = o.checkpoint;
  ck.arch = arch;
  ck.config = cfg.to_text();
  const auto t0 = Clock::now();
  if (kind == "casting") {
    const auto d = load_casting(data);
    std::tie(ck.train, ck.test) = split_dataset(d.samples.size(), cfg.split_ratio, cfg.seed);
    if (log) *log << "training sdeeponet on " << ck.train.size() << " samples, " << cfg.sdeeponet.train.iterations << " iterations" << std::endl;
    sdeeponet::Model m(cfg.sdeeponet.arch, d.coords);
    if (log) {
      *log << "parameters: " << m.network().parameters().scalar_count() << " (branch "
           << m.network().branch_parameter_count() << ", trunk " << m.network().trunk_parameter_count() << ")"
           << std::endl;
    }
    auto r = m.train(pick(d, ck.train), cfg.sdeeponet.train);
    ck.model = m.to_container();
    ck.history = std::move(r.history);
    ck.aborted = r.aborted;
    ck.reason = r.reason;
  } else {
    const auto d = load_am(data);
    std::tie(ck.train, ck.test) = split_dataset(d.samples.size(), cfg.split_ratio, cfg.seed);
    if (log) *log << "training resunet on " << ck.train.size() << " samples, " << cfg.resunet.train.iterations << " iterations" << std::endl;
    resunet::Model m(cfg.resunet.arch);
    if (log) *log << "parameters: " << m.network().parameters().scalar_count() << std::endl;
    auto r = m.train(pick(d, ck.train), cfg.resunet.train);
    ck.model = m.to_container();
    ck.history = std::move(r.history);
    ck.aborted = r.aborted;
    ck.reason = r.reason;
  }
  o.seconds = seconds_since(t0);
  fs::create_directories(out);
  ck.save(out / kModelFile);
  std::ostringstream hist;
  hist << std::setprecision(10) << "iteration,loss\n";
  for (std::size_t i = 0; i < ck.history.size(); ++i) hist << i << ',' << ck.history[i] << '\n';
  io::write_atomic(out / kHistoryFile, hist.str());
  if (log) {
    *log << "trained in " << std::fixed << std::setprecision(1) << o.seconds << " s" << std::defaultfloat
         << std::setprecision(6);
    if (!ck.history.empty()) *log << ", final loss " << ck.history.back();
    *log << std::endl;
  }
  if (ck.aborted) throw TrainingAbort("training stopped after " + std::to_string(ck.history.size()) + " iterations: " + ck.reason);
  return o;
}

// ---------------------------------------------------------------- evaluation

Evaluation evaluate(const Checkpoint& ckpt, const fs::path& data, const std::vector<std::size_t>& ids,
                    double clip_percent) {
  if (ids.size() < 2) throw ParameterError("evaluation needs at least two samples");
  Evaluation e;
  e.arch = ckpt.arch;
  std::array<std::vector<metrics::Field>, 2> truth, pred;  // metric fields
  if (ckpt.arch == "sdeeponet") {
    const auto d = load_casting(data);
    const auto m = sdeeponet::Model::from_container(ckpt.model);
    if (m.nodes() != d.nodes()) throw FormatError("checkpoint and dataset disagree on the node count");
    const auto p = m.predict(pick(d, ids));
    for (std::size_t k = 0; k < d.nodes(); ++k) e.axis.push_back(d.coords[2 * k]);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto& s = d.samples[ids[i]];
      truth[0].push_back(s.temperature);
      truth[1].push_back(s.stress);
      metrics::Field t(d.nodes()), sg(d.nodes());
      for (std::size_t k = 0; k < d.nodes(); ++k) {
        t[k] = p[i][2 * k];
        sg[k] = p[i][2 * k + 1];
      }
      pred[0].push_back(std::move(t));
      pred[1].push_back(std::move(sg));
    }
    e.truth = truth;
    e.pred = pred;
  } else {
    const auto d = load_am(data);
    const auto m = resunet::Model::from_container(ckpt.model);
    const auto p = m.predict(pick(d, ids));
    const std::size_t P = d.samples.front().mask.size();
    e.side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(P))));
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto& s = d.samples[ids[i]];
      std::array<metrics::Field, 2> mt, mp, dt, dp;
      for (auto& f : dt) f.assign(P, nan);
      for (auto& f : dp) f.assign(P, nan);
      for (std::size_t k = 0; k < P; ++k) {
        if (!s.mask[k]) continue;
        const double tv[2] = {s.temperature[k], s.stress[k]};
        for (std::size_t c = 0; c < 2; ++c) {
          mt[c].push_back(tv[c]);
          mp[c].push_back(p[i][2 * k + c]);
          dt[c][k] = tv[c];
          dp[c][k] = p[i][2 * k + c];
        }
      }
      for (std::size_t c = 0; c < 2; ++c) {
        truth[c].push_back(std::move(mt[c]));
        pred[c].push_back(std::move(mp[c]));
        e.truth[c].push_back(std::move(dt[c]));
        e.pred[c].push_back(std::move(dp[c]));
      }
    }
  }
  e.report.clip_percent = clip_percent;
  e.report.ids = ids;
  for (std::size_t c = 0; c < 2; ++c) {
    e.report.components.push_back(metrics::evaluate_component(kComponents[c], truth[c], pred[c], clip_percent));
  }
  return e;
}

void write_reports(const fs::path& dir, const Evaluation& e) {
  fs::create_directories(dir);
  io::write_atomic(dir / "report.csv", metrics::to_csv(e.report));
  static const char* case_names[5] = {"best", "25th percentile", "median", "75th percentile", "worst"};
  for (std::size_t c = 0; c < e.report.components.size(); ++c) {
    const auto& comp = e.report.components[c];
    const auto cases = comp.cases.as_array();
    const std::string unit = c == 0 ? "deg C" : "MPa";
    auto label = [&](std::size_t k) {
      const std::size_t row = cases[k];
      return std::string(case_names[k]) + " #" + std::to_string(e.report.ids[row]) + ", rel L2 " +
             percent(comp.rel_l2[row]);
    };
    std::string doc;
    if (e.arch == "sdeeponet") {
      std::vector<svg::LinePanel> panels;
      for (std::size_t k = 0; k < 5; ++k) {
        const std::size_t row = cases[k];
        panels.push_back({label(k), e.axis,
                          {{"truth", e.truth[c][row], "#222222", false}, {"prediction", e.pred[c][row], "#d1495b", true}}});
      }
      doc = svg::line_panels(comp.name + " (" + unit + "), percentile cases", "x / thickness", panels);
    } else {
      std::vector<svg::HeatPanel> panels;
      for (std::size_t k = 0; k < 5; ++k) {
        const std::size_t row = cases[k];
        const auto& t = e.truth[c][row];
        const auto& p = e.pred[c][row];
        double lo = std::numeric_limits<double>::infinity(), hi = -lo, emax = 0.0;
        std::vector<double> err(t.size());
        for (std::size_t q = 0; q < t.size(); ++q) {
          err[q] = std::fabs(t[q] - p[q]);
          if (!std::isfinite(t[q])) continue;
          lo = std::min({lo, t[q], p[q]});
          hi = std::max({hi, t[q], p[q]});
          emax = std::max(emax, err[q]);
        }
        if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
        panels.push_back({label(k) + ": truth", t, e.side, e.side, lo, hi});
        panels.push_back({"prediction", p, e.side, e.side, lo, hi});
        panels.push_back({"|error|", err, e.side, e.side, 0.0, emax > 0 ? emax : 1.0});
      }
      doc = svg::heatmap_grid(comp.name + " (" + unit + "), percentile cases", panels, 3);
    }
    io::write_atomic(dir / ("cases_" + comp.name + ".svg"), doc);
    io::write_atomic(dir / ("hist_" + comp.name + "_mae.svg"),
                     svg::histogram(comp.name + ": per-sample MAE", "MAE (" + unit + ")", comp.mae));
    io::write_atomic(dir / ("hist_" + comp.name + "_rel_l2.svg"),
                     svg::histogram(comp.name + ": per-sample relative L2 error", "relative L2 error (%)", comp.rel_l2));
  }
}

Evaluation eval(const RunConfig& cfg, const fs::path& model, const fs::path& data, const fs::path& out, bool all,
                std::ostream* log) {
  const auto ckpt = Checkpoint::load(model);
  std::vector<std::size_t> ids = ckpt.test;
  if (all) ids = all_indices(ckpt.train.size() + ckpt.test.size());
  auto e = evaluate(ckpt, data, ids, ckpt.arch == "sdeeponet" ? cfg.casting_clip : cfg.am_clip);
  write_reports(out, e);
  if (log) {
    for (const auto& c : e.report.components) {
      *log << c.name << ": CoP " << c.cop << ", mean MAE " << c.average_mae << ", MRL2E " << percent(c.mrl2e.percent)
           << ", MRAE " << percent(c.mrae.percent) << std::endl;
    }
    *log << "reports written to " << out.string() << std::endl;
  }
  return e;
}

void predict(const fs::path& model, const fs::path& data, const fs::path& out, bool all) {
  const auto ckpt = Checkpoint::load(model);
  std::vector<std::size_t> ids = all ? all_indices(ckpt.train.size() + ckpt.test.size()) : ckpt.test;
  std::vector<std::vector<double>> p;
  if (ckpt.arch == "sdeeponet") {
    const auto d = load_casting(data);
    p = sdeeponet::Model::from_container(ckpt.model).predict(pick(d, ids));
  } else {
    const auto d = load_am(data);
    p = resunet::Model::from_container(ckpt.model).predict(pick(d, ids));
  }
  std::vector<double> flat;
  for (const auto& row : p) flat.insert(flat.end(), row.begin(), row.end());
  io::TensorContainer c;
  c.put_text("kind", "predictions/" + ckpt.arch);
  c.put_f64("ids", as_doubles(ids), {ids.size()});
  c.put_f64("fields", flat, {ids.size(), p.empty() ? 0 : p.front().size() / 2, 2});
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  c.save(out);
}

// --------------------------------------------------------------- gradients

GradReport gradcheck(std::ostream* log) {
  const auto t0 = Clock::now();
  GradReport r;
  for (auto batch : {op_gradient_checks(), model_gradient_checks()}) {
    for (auto& g : batch) {
      r.rows.emplace_back(g.name, g.error);
      r.worst = std::max(r.worst, g.error);
      if (log) *log << std::left << std::setw(28) << g.name << std::scientific << std::setprecision(2) << g.error
                    << (g.error < kGradTolerance ? "" : "  FAIL") << std::defaultfloat << '\n';
    }
  }
  r.seconds = seconds_since(t0);
  r.passed = r.worst < kGradTolerance;
  if (log) {
    *log << r.rows.size() << " checks, worst relative error " << std::scientific << std::setprecision(2) << r.worst
         << std::defaultfloat << " (tolerance " << kGradTolerance << "), " << std::fixed << std::setprecision(1)
         << r.seconds << " s" << std::defaultfloat << std::endl;
  }
  return r;
}

// ------------------------------------------------------------------- sweep

SweepOutcome sweep(const RunConfig& cfg, const fs::path& model, const fs::path& data, const fs::path& out,
                   std::ostream* log) {
  const auto ckpt = Checkpoint::load(model);
  if (ckpt.arch != "resunet") throw ConfigError("the velocity sweep needs a resunet checkpoint");
  const auto d = load_am(data);
  const auto m = resunet::Model::from_container(ckpt.model);
  SweepOutcome o;
  std::set<std::vector<std::uint8_t>> seen;
  std::vector<std::vector<std::uint8_t>> masks;
  for (std::size_t i : ckpt.test) {
    if (seen.insert(d.samples[i].mask).second) {
      masks.push_back(d.samples[i].mask);
      o.designs.push_back(i);
    }
  }
  o.result = resunet::velocity_sweep(m, masks, cfg.am.velocities);
  const auto& r = o.result;
  o.monotone = true;
  for (std::size_t v = 1; v < r.average.size(); ++v) o.monotone = o.monotone && r.average[v] >= r.average[v - 1];

  std::ostringstream csv;
  csv << std::setprecision(10) << "sample";
  for (double v : r.velocities) csv << ",v" << v;
  csv << '\n';
  for (std::size_t k = 0; k < masks.size(); ++k) {
    csv << o.designs[k];
    for (double s : r.max_stress[k]) csv << ',' << s;
    csv << '\n';
  }
  csv << "average";
  for (double a : r.average) csv << ',' << a;
  csv << '\n';

  std::ostringstream txt;
  txt << "velocity_mm_s  average_max_stress_MPa\n";
  for (std::size_t v = 0; v < r.velocities.size(); ++v) {
    txt << std::setw(13) << r.velocities[v] << "  " << std::fixed << std::setprecision(2) << r.average[v]
        << std::defaultfloat << std::setprecision(6) << '\n';
  }
  const std::size_t last = r.velocities.size() - 1;
  auto line = [&](const char* what, std::size_t k) {
    txt << what << " design at " << r.velocities[last] << " mm/s: sample " << o.designs[k] << ", max stress "
        << std::fixed << std::setprecision(2) << r.max_stress[k][last] << std::defaultfloat << std::setprecision(6) << " MPa\n";
  };
  line("max", r.max_design);
  line("median", r.median_design);
  line("min", r.min_design);
  txt << "average max stress " << (o.monotone ? "increases" : "does not increase") << " monotonically with velocity\n";

  fs::create_directories(out);
  io::write_atomic(out / "sweep.csv", csv.str());
  io::write_atomic(out / "sweep.txt", txt.str());
  if (log) *log << txt.str() << std::flush;
  return o;
}

// ------------------------------------------------------------------- bench

BenchResult bench_casting(const RunConfig& cfg, const fs::path& model) {
  BenchResult b;
  b.pipeline = "casting";
  const std::size_t k = cfg.bench_samples;
  std::vector<sdeeponet::Sample> fresh;
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < k; ++i) fresh.push_back(generate_casting_sample(cfg, kFreshOffset + i));
  b.generated = k;
  b.generation_per_sample = seconds_since(t0) / static_cast<double>(k);

  std::vector<const sdeeponet::Sample*> inputs;
  for (std::size_t i = 0; i < cfg.bench_batch; ++i) inputs.push_back(&fresh[i % k]);
  auto run = [&](const sdeeponet::Model& m) {
    m.predict({inputs.begin(), inputs.begin() + std::min<std::ptrdiff_t>(8, static_cast<std::ptrdiff_t>(inputs.size()))});
    const auto t1 = Clock::now();
    m.predict(inputs);
    return seconds_since(t1);
  };
  double elapsed;
  if (!model.empty()) {
    elapsed = run(sdeeponet::Model::from_container(Checkpoint::load(model).model));
  } else {
    std::vector<double> coords;
    for (double x : cast::CastingSolver(cfg.casting.solver).initial_state().x) {
      coords.push_back(x / cfg.casting.solver.thickness);
      coords.push_back(0.0);
    }
    sdeeponet::Model m(cfg.sdeeponet.arch, coords);
    sdeeponet::TrainConfig fit_only = cfg.sdeeponet.train;
    fit_only.iterations = 0;
    m.train(inputs.size() >= 2 ? inputs : std::vector<const sdeeponet::Sample*>{inputs[0], inputs[0]}, fit_only);
    elapsed = run(m);
  }
  b.inferred = inputs.size();
  b.inference_per_sample = elapsed / static_cast<double>(inputs.size());
  return b;
}

BenchResult bench_am(const RunConfig& cfg, const fs::path& model) {
  BenchResult b;
  b.pipeline = "am";
  const std::size_t k = cfg.bench_samples;
  std::vector<resunet::Sample> fresh;
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < k; ++i) {
    const auto mask = generate_am_design(cfg, kFreshOffset + i);
    fresh.push_back(simulate_am_sample(cfg, mask, cfg.am.velocities[i % cfg.am.velocities.size()]));
  }
  b.generated = k;
  b.generation_per_sample = seconds_since(t0) / static_cast<double>(k);

  std::vector<const resunet::Sample*> inputs;
  for (std::size_t i = 0; i < cfg.bench_batch; ++i) inputs.push_back(&fresh[i % k]);
  auto run = [&](const resunet::Model& m) {
    m.predict({inputs.begin(), inputs.begin() + std::min<std::ptrdiff_t>(8, static_cast<std::ptrdiff_t>(inputs.size()))});
    const auto t1 = Clock::now();
    m.predict(inputs);
    return seconds_since(t1);
  };
  double elapsed;
  if (!model.empty()) {
    elapsed = run(resunet::Model::from_container(Checkpoint::load(model).model));
  } else {
    resunet::Model m(cfg.resunet.arch);
    resunet::TrainConfig fit_only = cfg.resunet.train;
    fit_only.iterations = 0;
    m.train(inputs.size() >= 2 ? inputs : std::vector<const resunet::Sample*>{inputs[0], inputs[0]}, fit_only);
    elapsed = run(m);
  }
  b.inferred = inputs.size();
  b.inference_per_sample = elapsed / static_cast<double>(inputs.size());
  return b;
}

std::string bench_csv(const std::vector<BenchResult>& rows) {
  std::ostringstream os;
  os << std::setprecision(6) << "pipeline,generated,inferred,generation_s_per_sample,inference_s_per_sample,ratio\n";
  for (const auto& b : rows) {
    os << b.pipeline << ',' << b.generated << ',' << b.inferred << ',' << b.generation_per_sample << ','
       << b.inference_per_sample << ',' << b.ratio() << '\n';
  }
  return os.str();
}

}  // namespace odn::pipeline
