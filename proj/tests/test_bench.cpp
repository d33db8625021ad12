#include <cmath>
#include <sstream>

#include "doctest.h"
#include "evinc/bench.hpp"
#include "evinc/models.hpp"

using namespace evinc;

namespace {

SynthConfig small_scene() {
  SynthConfig cfg;
  cfg.sensor = {36, 48};
  cfg.rate_hz = 8000;
  cfg.duration_us = 200'000;
  return cfg;
}

ModelSpec small_model(float tp) {
  PlainCnnConfig cfg;
  cfg.depth = 2;
  cfg.channels = 4;
  cfg.threshold = tp;
  cfg.input = {2, 36, 48};
  return build_plain_cnn(cfg);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

TEST_CASE("synth is deterministic and seed dependent") {
  auto cfg = small_scene();
  auto a = synth_events(cfg), b = synth_events(cfg);
  CHECK(encode_evb(a) == encode_evb(b));
  cfg.seed = 2;
  CHECK_FALSE(encode_evb(synth_events(cfg)) == encode_evb(a));
}

TEST_CASE("synth with zero duration is empty") {
  auto cfg = small_scene();
  cfg.duration_us = 0;
  auto s = synth_events(cfg);
  CHECK(s.empty());
  CHECK(decode_evb(encode_evb(s)).sensor() == cfg.sensor);
}

TEST_CASE("synth rate on the default scene") {
  SynthConfig cfg;
  auto s = synth_events(cfg);
  const double rate = double(s.size()) / (double(cfg.duration_us) * 1e-6);
  CHECK(rate >= 0.8 * cfg.rate_hz);
  CHECK(rate <= 1.2 * cfg.rate_hz);
  CHECK(s.sensor() == SensorSize{180, 240});
  int pos = 0;
  for (const auto& e : s.events()) pos += e.p > 0;
  CHECK(pos > 0);
  CHECK(pos < int(s.size()));
}

TEST_CASE("parse_mode") {
  CHECK(parse_mode("dense") == RunMode::Dense);
  CHECK(parse_mode("incr") == RunMode::Incr);
  CHECK(parse_mode("both") == RunMode::Both);
  CHECK_THROWS_AS(parse_mode("fast"), Error);
}

TEST_CASE("dense mode records every window without drift") {
  auto ev = synth_events(small_scene());
  auto spec = small_model(0.1f);
  RunConfig cfg;
  cfg.mode = RunMode::Dense;
  cfg.max_steps = 10;
  auto rep = run_benchmark(spec, random_weights(spec, 1), ev, cfg);
  REQUIRE(rep.records.size() == 10);
  for (const auto& r : rep.records) {
    CHECK_FALSE(r.drift.has_value());
    CHECK(r.wall_dense_us.has_value());
    CHECK(r.performed_flops == r.dense_equiv_flops);
  }
  std::ostringstream csv;
  rep.write_csv(csv);
  std::istringstream in(csv.str());
  std::string header;
  std::getline(in, header);
  CHECK(header.find("drift") == std::string::npos);
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 10);
  CHECK(rep.flop_reduction_percent() == 0.0);
}

TEST_CASE("both mode at t_p = 0 has no drift") {
  auto ev = synth_events(small_scene());
  auto spec = small_model(0.0f);
  RunConfig cfg;
  cfg.max_steps = 40;
  auto rep = run_benchmark(spec, random_weights(spec, 1), ev, cfg);
  REQUIRE(rep.records.size() == 40);
  for (const auto& r : rep.records) {
    REQUIRE(r.drift.has_value());
    CHECK(*r.drift <= 1e-4f);
  }
  CHECK(rep.records[0].refreshed);
  CHECK_FALSE(rep.records[1].refreshed);
}

TEST_CASE("refresh interval marks the right steps") {
  auto ev = synth_events(small_scene());
  auto spec = small_model(0.3f);
  RunConfig cfg;
  cfg.max_steps = 25;
  cfg.refresh_n = 8;
  auto rep = run_benchmark(spec, random_weights(spec, 1), ev, cfg);
  for (const auto& r : rep.records) {
    CHECK(r.refreshed == (r.step % 8 == 0));
    if (r.refreshed) CHECK(*r.drift <= 1e-4f);
  }
}

TEST_CASE("report is self-consistent") {
  auto ev = synth_events(small_scene());
  auto spec = small_model(0.1f);
  RunConfig cfg;
  cfg.max_steps = 30;
  auto rep = run_benchmark(spec, random_weights(spec, 1), ev, cfg);

  std::ostringstream csv;
  rep.write_csv(csv);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  const auto cols = split_line(line);
  int perf_col = -1, dense_col = -1;
  for (int i = 0; i < int(cols.size()); ++i) {
    if (cols[i] == "performed_flops") perf_col = i;
    if (cols[i] == "dense_equiv_flops") dense_col = i;
  }
  REQUIRE(perf_col >= 0);
  REQUIRE(dense_col >= 0);
  double perf = 0, dense = 0;
  while (std::getline(in, line)) {
    const auto cells = split_line(line);
    CHECK(cells.size() == cols.size());
    perf += std::stod(cells[perf_col]);
    dense += std::stod(cells[dense_col]);
  }
  CHECK(rep.flop_reduction_percent() == doctest::Approx(100.0 * (1.0 - perf / dense)));

  const auto summary = rep.summary_text();
  CHECK(summary.find("flop_reduction_percent") != std::string::npos);
  CHECK(summary.find("seed") != std::string::npos);
}

TEST_CASE("runs are reproducible") {
  auto ev = synth_events(small_scene());
  auto spec = small_model(0.1f);
  RunConfig cfg;
  cfg.max_steps = 15;
  auto a = run_benchmark(spec, random_weights(spec, 1), ev, cfg);
  auto b = run_benchmark(spec, random_weights(spec, 1), ev, cfg);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].performed_flops == b.records[i].performed_flops);
    CHECK(*a.records[i].drift == *b.records[i].drift);
  }
}

TEST_CASE("single-value sweep matches run") {
  auto ev = synth_events(small_scene());
  auto spec = small_model(0.1f);
  auto w = random_weights(spec, 1);
  RunConfig cfg;
  cfg.max_steps = 15;
  cfg.threshold = 0.05f;
  auto rep = run_benchmark(spec, w, ev, cfg);
  auto rows = run_sweep(spec, w, ev, cfg, SweepParam::Threshold, {0.05});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].flop_reduction_percent == rep.flop_reduction_percent());
  CHECK(rows[0].mean_drift == rep.mean_drift());
  CHECK_THROWS_AS(run_sweep(spec, w, ev, cfg, SweepParam::Threshold, {}), Error);
}

TEST_CASE("mismatched model input is a shape error") {
  auto ev = synth_events(small_scene());
  auto spec = small_model(0.1f);
  RunConfig cfg;
  cfg.encoder = Encoder::voxel(5);
  CHECK_THROWS_AS(run_benchmark(spec, random_weights(spec, 1), ev, cfg), ShapeError);
}

TEST_CASE("refreshing every step keeps drift at zero") {
  auto ev = synth_events(small_scene());
  auto spec = small_model(0.3f);
  RunConfig cfg;
  cfg.max_steps = 20;
  cfg.refresh_n = 1;
  auto rep = run_benchmark(spec, random_weights(spec, 1), ev, cfg);
  for (const auto& r : rep.records) {
    CHECK(r.refreshed);
    CHECK(*r.drift <= 1e-4f);
  }
}

TEST_CASE("input sparsity falls as the shift grows") {
  SynthConfig scene;
  scene.duration_us = 400'000;
  auto ev = synth_events(scene);
  PlainCnnConfig mc;
  mc.depth = 1;
  mc.channels = 2;
  auto spec = build_plain_cnn(mc);
  RunConfig cfg;
  cfg.mode = RunMode::Incr;
  cfg.max_steps = 15;
  auto rows = run_sweep(spec, random_weights(spec, 1), ev, cfg, SweepParam::Shift, {1000, 5000, 20000});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].mean_input_false_fraction >= rows[1].mean_input_false_fraction);
  CHECK(rows[1].mean_input_false_fraction >= rows[2].mean_input_false_fraction);
}
