#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "odn/core/error.hpp"
#include "odn/pipeline/commands.hpp"
#include "odn/pipeline/svg.hpp"

using namespace odn;
using namespace odn::pipeline;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() / ("odn_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path operator/(const std::string& s) const { return path / s; }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void flip_byte(const fs::path& p, std::size_t offset) {
  auto bytes = io::read_file(p);
  bytes.at(offset) ^= 0x5a;
  io::write_atomic(p, bytes);
}

RunConfig small_casting(std::size_t n) {
  RunConfig cfg;
  cfg.casting.samples = n;
  cfg.casting.solver.nodes = 16;
  cfg.casting.solver.steps = 80;
  return cfg;
}

}  // namespace

TEST_CASE("container round trip is bit exact for every dtype") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  std::vector<double> d(37);
  for (auto& x : d) x = u(gen);
  d[3] = std::numeric_limits<double>::quiet_NaN();
  d[4] = -0.0;
  d[5] = std::numeric_limits<double>::denorm_min();
  std::vector<float> f(12);
  for (auto& x : f) x = static_cast<float>(u(gen));
  std::vector<std::uint8_t> b{0, 1, 255, 7};

  io::TensorContainer c;
  c.put_f64("a/doubles", d, {37});
  c.put_f32("floats", f, {3, 4});
  c.put_u8("mask", b, {2, 2});
  c.put_text("note", "h\xc3\xa9llo");
  const auto bytes = c.serialize();
  const auto back = io::TensorContainer::parse(bytes);
  CHECK(back.serialize() == bytes);
  const auto d2 = back.get_f64_values("a/doubles");
  REQUIRE(d2.size() == d.size());
  CHECK(std::memcmp(d2.data(), d.data(), d.size() * sizeof(double)) == 0);
  const auto f2 = back.get_f32("floats");
  CHECK(std::memcmp(f2.data(), f.data(), f.size() * sizeof(float)) == 0);
  CHECK(back.get_u8("mask") == b);
  CHECK(back.at("floats").extents == std::vector<std::uint64_t>{3, 4});
  CHECK(back.get_text("note") == "h\xc3\xa9llo");
}

TEST_CASE("container header layout") {
  io::TensorContainer c;
  const double v = 1.5;
  c.put_f64("x", std::span<const double>(&v, 1), {1});
  const auto bytes = c.serialize();
  // magic, version, count, name len, name, dtype, rank, extent, payload, crc
  REQUIRE(bytes.size() == 4 + 4 + 4 + 4 + 1 + 1 + 4 + 8 + 8 + 4);
  CHECK(std::memcmp(bytes.data(), "ODN1", 4) == 0);
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 1);
  CHECK(bytes[12] == 1);
  CHECK(bytes[16] == 'x');
  CHECK(bytes[17] == 2);
  CHECK(bytes[18] == 1);
  CHECK(bytes[22] == 1);
  double back;
  std::memcpy(&back, bytes.data() + 30, 8);
  CHECK(back == 1.5);
}

TEST_CASE("container rejects corruption, bad magic, truncation and wrong version") {
  io::TensorContainer c;
  std::vector<double> d(64, 2.0);
  c.put_f64("d", d, {8, 8});
  const auto good = c.serialize();

  auto corrupt = good;
  corrupt[40] ^= 0x01;
  CHECK_THROWS_AS(io::TensorContainer::parse(corrupt), FormatError);

  auto magic = good;
  magic[0] = 'X';
  CHECK_THROWS_AS(io::TensorContainer::parse(magic), FormatError);

  auto cut = good;
  cut.resize(cut.size() - 20);
  CHECK_THROWS_AS(io::TensorContainer::parse(cut), FormatError);
  CHECK_THROWS_AS(io::TensorContainer::parse(std::vector<std::uint8_t>(good.begin(), good.begin() + 6)), FormatError);

  auto version = good;
  version[4] = 9;
  CHECK_THROWS_AS(io::TensorContainer::parse(version), FormatError);
}

TEST_CASE("split_dataset") {
  const auto [train, test] = split_dataset(10, 0.8, 7);
  CHECK(train.size() == 8);
  CHECK(test.size() == 2);
  std::set<std::size_t> all(train.begin(), train.end());
  for (auto i : test) CHECK(all.insert(i).second);
  CHECK(all.size() == 10);
  CHECK(*all.rbegin() == 9);

  CHECK(split_dataset(10, 0.8, 7) == split_dataset(10, 0.8, 7));
  bool differs = false;
  for (std::uint64_t s = 8; s < 20 && !differs; ++s) differs = split_dataset(10, 0.8, s).second != test;
  CHECK(differs);

  const auto big = split_dataset(500, 0.8, 1);
  CHECK(big.first.size() == 400);
  CHECK(std::is_sorted(big.second.begin(), big.second.end()));

  CHECK_THROWS_AS(split_dataset(1, 0.8, 1), ParameterError);
  CHECK_THROWS_AS(split_dataset(10, 0.0, 1), ParameterError);
  CHECK_THROWS_AS(split_dataset(10, 1.0, 1), ParameterError);
  const auto tiny = split_dataset(2, 0.99, 1);
  CHECK(tiny.first.size() == 1);
  CHECK(tiny.second.size() == 1);
}

TEST_CASE("config text round trip and strict parsing") {
  const RunConfig defaults;
  const auto text = defaults.to_text();
  CHECK(RunConfig::parse(text).to_text() == text);

  auto cfg = RunConfig::parse("# comment\nseed = 11  # trailing\n\nresunet.channels = 8,16\nam.velocities = 10, 12.5\n");
  CHECK(cfg.seed == 11);
  CHECK(cfg.get("resunet.channels") == "8,16");
  CHECK(cfg.am.velocities == std::vector<double>{10.0, 12.5});

  CHECK_THROWS_AS(RunConfig::parse("no_such_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("seed = 1\nseed = 2\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("seed 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("seed = 1x\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("split.ratio = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("report.casting_clip = 0\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("profile.enforce_trend = maybe\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("am.volume_fraction = 0.2,0.5\n"), ConfigError);

  RunConfig c;
  c.set("sdeeponet.iterations", "17");
  CHECK(c.sdeeponet.train.iterations == 17);
  CHECK(c.get("sdeeponet.iterations") == "17");
  CHECK_THROWS_AS(c.set("bogus", "1"), ConfigError);
  CHECK(defaults.casting_clip == 90.0);
  CHECK(defaults.am_clip == 100.0);
  CHECK(defaults.split_ratio == 0.8);
}

TEST_CASE("every config key is listed and documented") {
  const auto keys = config_keys();
  const auto text = RunConfig{}.to_text();
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == keys.size());
  const std::string doc = slurp(fs::path(ODN_SOURCE_DIR) / "docs" / "config.md");
  for (const auto& k : keys) {
    CHECK_MESSAGE(!k.description.empty(), k.key);
    CHECK_MESSAGE(doc.find("`" + k.key + "`") != std::string::npos, k.key);
  }
}

TEST_CASE("manifest text round trip") {
  Manifest m;
  m.values["kind"] = "casting";
  m.values["config.seed"] = "7";
  const auto back = Manifest::parse(m.to_text());
  CHECK(back.values == m.values);
  CHECK(back.at("kind") == "casting");
  CHECK_THROWS_AS(back.at("missing"), FormatError);
}

TEST_CASE("casting dataset: reproducible, thread independent, verified on load") {
  TempDir tmp("casting");
  auto cfg = small_casting(4);
  gen_casting(cfg, tmp / "a");
  gen_casting(cfg, tmp / "b");
  CHECK(slurp(tmp / "a" / kDatasetFile) == slurp(tmp / "b" / kDatasetFile));
  CHECK(slurp(tmp / "a" / kManifestFile) == slurp(tmp / "b" / kManifestFile));

  cfg.threads = 3;
  gen_casting(cfg, tmp / "c");
  CHECK(slurp(tmp / "a" / kDatasetFile) == slurp(tmp / "c" / kDatasetFile));

  // sample content depends only on (seed, index)
  cfg.threads = 1;
  cfg.casting.samples = 2;
  const auto two = generate_casting(cfg, 1);
  const auto four = load_casting(tmp / "a");
  CHECK(two.samples[1].stress == four.samples[1].stress);
  CHECK(four.samples.size() == 4);
  CHECK(four.nodes() == 16);
  CHECK(four.coords[0] == 0.0);
  CHECK(four.coords[2 * 15] == doctest::Approx(1.0));

  const auto manifest = Manifest::parse(slurp(tmp / "a" / kManifestFile));
  CHECK(manifest.at("kind") == "casting");
  CHECK(manifest.at("seed") == "7");
  CHECK(manifest.at("samples") == "4");

  CHECK_THROWS_AS(load_am(tmp / "a"), FormatError);
  flip_byte(tmp / "b" / kDatasetFile, 100);
  CHECK_THROWS_AS(load_casting(tmp / "b"), FormatError);
  fs::remove(tmp / "c" / kManifestFile);
  CHECK_THROWS(load_casting(tmp / "c"));
}

TEST_CASE("manifest checksum must match the dataset file") {
  TempDir tmp("manifest");
  const auto cfg = small_casting(2);
  gen_casting(cfg, tmp / "a");
  auto text = slurp(tmp / "a" / kManifestFile);
  auto m = Manifest::parse(text);
  m.values["checksum.dataset.odn"] = "00000000";
  io::write_atomic(tmp / "a" / kManifestFile, m.to_text());
  CHECK_THROWS_AS(load_casting(tmp / "a"), FormatError);
}

TEST_CASE("parallel_for covers every index and rethrows") {
  std::vector<int> hits(50, 0);
  parallel_for(50, 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_for(20, 3,
                               [](std::size_t i) {
                                 if (i == 11) throw SolverError("boom");
                               }),
                  SolverError);
}

TEST_CASE("checkpoint round trip keeps split, history and status") {
  TempDir tmp("ckpt");
  sdeeponet::Config arch;
  arch.sequence = 5;
  arch.units_wide = 4;
  arch.units_narrow = 3;
  arch.trunk_width = 6;
  arch.trunk_depth = 2;
  sdeeponet::Model m(arch, {0.0, 0.0, 0.5, 0.0, 1.0, 0.0});
  Checkpoint ck;
  ck.arch = "sdeeponet";
  ck.model = m.to_container();
  ck.train = {0, 2, 3};
  ck.test = {1};
  ck.history = {3.0, 2.0, 1.5};
  ck.aborted = true;
  ck.reason = "non-finite loss";
  ck.config = "seed = 3\n";
  ck.save(tmp / "m.odn");
  const auto back = Checkpoint::load(tmp / "m.odn");
  CHECK(back.arch == "sdeeponet");
  CHECK(back.train == ck.train);
  CHECK(back.test == ck.test);
  CHECK(back.history == ck.history);
  CHECK(back.aborted);
  CHECK(back.reason == "non-finite loss");
  CHECK(back.config == ck.config);

  io::TensorContainer bare = m.to_container();
  bare.save(tmp / "bare.odn");
  CHECK_THROWS_AS(Checkpoint::load(tmp / "bare.odn"), CheckpointError);
  flip_byte(tmp / "m.odn", 20);
  CHECK_THROWS_AS(Checkpoint::load(tmp / "m.odn"), CheckpointError);
}

TEST_CASE("reports of a perfect prediction give CoP 1 and all case plots") {
  TempDir tmp("report");
  Evaluation e;
  e.arch = "sdeeponet";
  e.axis = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::array<std::vector<metrics::Field>, 2> fields;
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      metrics::Field f;
      for (double x : e.axis) f.push_back(100.0 * (c + 1) + std::sin(3.0 * x + static_cast<double>(i)));
      fields[c].push_back(f);
    }
  }
  e.truth = fields;
  e.pred = fields;
  e.report.clip_percent = 90.0;
  e.report.ids = {10, 11, 12, 13, 14, 15};
  e.report.components.push_back(metrics::evaluate_component("temperature", fields[0], fields[0], 90.0));
  e.report.components.push_back(metrics::evaluate_component("stress", fields[1], fields[1], 90.0));
  write_reports(tmp.path, e);

  const auto csv = slurp(tmp / "report.csv");
  const auto at = csv.find("\ntemperature,");
  REQUIRE(at != std::string::npos);
  std::vector<std::string> cols;
  std::stringstream row(csv.substr(at + 1, csv.find('\n', at + 1) - at - 1));
  for (std::string cell; std::getline(row, cell, ',');) cols.push_back(cell);
  REQUIRE(cols.size() == 12);
  CHECK(std::stod(cols[1]) == 0.0);
  CHECK(std::stod(cols[4]) == 1.0);
  for (int k = 6; k <= 10; ++k) CHECK(std::stoul(cols[k]) >= 10);

  for (const char* f : {"cases_temperature.svg", "cases_stress.svg", "hist_temperature_mae.svg",
                        "hist_stress_rel_l2.svg"}) {
    const auto svg = slurp(tmp / f);
    CHECK(svg.rfind("<?xml", 0) == 0);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
  }
  CHECK(slurp(tmp / "cases_temperature.svg").find("worst #") != std::string::npos);
}

TEST_CASE("svg helpers escape text and skip NaN cells") {
  CHECK(svg::escape("a<b & \"c\">") == "a&lt;b &amp; &quot;c&quot;&gt;");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<svg::HeatPanel> panels{{"p", {1.0, nan, 2.0, nan}, 2, 2, 0.0, 2.0}};
  const auto doc = svg::heatmap_grid("t", panels, 1);
  std::size_t cells = 0;
  for (std::size_t at = doc.find("fill=\"#"); at != std::string::npos; at = doc.find("fill=\"#", at + 1)) ++cells;
  CHECK(cells == 2);
  const std::vector<double> values{1.0, 2.0, 2.0, nan};
  CHECK(svg::histogram("h", "x", values, 4).find("<rect") != std::string::npos);
}

TEST_CASE("training writes checkpoint and history, eval reads them back") {
  TempDir tmp("train");
  auto cfg = small_casting(5);
  cfg.sdeeponet.arch.units_wide = 4;
  cfg.sdeeponet.arch.units_narrow = 3;
  cfg.sdeeponet.arch.trunk_width = 8;
  cfg.sdeeponet.arch.trunk_depth = 2;
  cfg.sdeeponet.train.iterations = 5;
  cfg.sdeeponet.train.batch = 2;
  gen_casting(cfg, tmp / "data");
  const auto outcome = train(cfg, "sdeeponet", tmp / "data", tmp / "run");
  CHECK(outcome.checkpoint.train.size() == 4);
  CHECK(outcome.checkpoint.test.size() == 1);
  CHECK(outcome.checkpoint.history.size() == 5);
  const auto hist = slurp(tmp / "run" / kHistoryFile);
  CHECK(hist.rfind("iteration,loss\n", 0) == 0);
  CHECK(std::count(hist.begin(), hist.end(), '\n') == 6);

  const auto again = train(cfg, "sdeeponet", tmp / "data", tmp / "run2");
  CHECK(slurp(tmp / "run" / kModelFile) == slurp(tmp / "run2" / kModelFile));

  const auto e = eval(cfg, tmp / "run" / kModelFile, tmp / "data", tmp / "eval", true);
  CHECK(e.report.samples() == 5);
  CHECK(fs::exists(tmp / "eval" / "report.csv"));
  predict(tmp / "run" / kModelFile, tmp / "data", tmp / "pred.odn", false);
  const auto p = io::TensorContainer::load(tmp / "pred.odn");
  CHECK(p.at("fields").extents == std::vector<std::uint64_t>{1, 16, 2});

  CHECK_THROWS_AS(train(cfg, "resunet", tmp / "data", tmp / "run3"), FormatError);
  CHECK_THROWS_AS(train(cfg, "gru", tmp / "data", tmp / "run3"), ConfigError);
}
