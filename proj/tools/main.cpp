// evinc command-line harness.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "evinc/evinc.hpp"

using namespace evinc;
namespace fs = std::filesystem;

namespace {

struct ModelOptions {
  std::string model = "plain";
  std::string weights;
  std::string events;
  std::string encoder = "count";
  std::string tile;
  std::optional<float> tp;
  std::uint64_t seed = 1;
};

struct RunOptions {
  std::uint64_t window_us = 50'000;
  std::uint64_t shift_us = 1'000;
  int refresh_n = 64;
  std::string mode = "both";
  int steps = -1;
  std::string out;
};

TileShape parse_tile(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    TileShape t{std::stoi(text.substr(0, x)), std::stoi(text.substr(x + 1))};
    validate(t);
    return t;
  } catch (const std::logic_error&) {
    throw Error("bad tile shape '" + text + "', expected HxW");
  }
}

int level_suffix(const std::string& name, const std::string& prefix, int fallback) {
  if (name.size() == prefix.size()) return fallback;
  if (name[prefix.size()] != ':') throw Error("unknown model '" + name + "'");
  try {
    return std::stoi(name.substr(prefix.size() + 1));
  } catch (const std::logic_error&) {
    throw Error("bad model parameter in '" + name + "'");
  }
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

/// Builtin name ("plain[:depth]", "unet[:levels]", "delayed-unet[:levels]") or a model file.
ModelSpec resolve_model(const ModelOptions& o, Shape input) {
  const float tp = o.tp.value_or(0.1f);
  const TileShape tile = o.tile.empty() ? TileShape{} : parse_tile(o.tile);
  ModelSpec spec;
  if (starts_with(o.model, "delayed-unet")) {
    UNetConfig cfg;
    cfg.levels = level_suffix(o.model, "delayed-unet", cfg.levels);
    cfg.input = input;
    cfg.threshold = tp;
    cfg.tile = tile;
    spec = build_delayed_unet(cfg);
  } else if (starts_with(o.model, "unet")) {
    UNetConfig cfg;
    cfg.levels = level_suffix(o.model, "unet", cfg.levels);
    cfg.input = input;
    cfg.threshold = tp;
    cfg.tile = tile;
    spec = build_unet(cfg);
  } else if (starts_with(o.model, "plain") && !fs::exists(o.model)) {
    PlainCnnConfig cfg;
    cfg.depth = level_suffix(o.model, "plain", cfg.depth);
    cfg.input = input;
    cfg.threshold = tp;
    cfg.tile = tile;
    spec = build_plain_cnn(cfg);
  } else {
    spec = load_model(o.model);
    if (!o.tile.empty()) spec.tile = tile;
    if (o.tp) spec.set_threshold(*o.tp);
  }
  return spec;
}

EventStream load_stream(const ModelOptions& o) {
  if (o.events.empty()) {
    SynthConfig cfg;
    cfg.seed = o.seed;
    return synth_events(cfg);
  }
  return read_events(o.events, format_for(o.events));
}

WeightSet resolve_weights(const ModelOptions& o, const ModelSpec& spec) {
  return o.weights.empty() ? random_weights(spec, o.seed) : load_weights(o.weights);
}

RunConfig make_run_config(const ModelOptions& m, const RunOptions& r) {
  RunConfig cfg;
  cfg.encoder = Encoder::parse(m.encoder);
  cfg.window_us = r.window_us;
  cfg.shift_us = r.shift_us;
  cfg.threshold = m.tp;
  cfg.refresh_n = r.refresh_n;
  cfg.mode = parse_mode(r.mode);
  cfg.max_steps = r.steps;
  cfg.seed = m.seed;
  return cfg;
}

void add_model_options(CLI::App* cmd, ModelOptions& o) {
  cmd->add_option("--model", o.model, "Model file, or plain[:depth], unet[:levels], delayed-unet[:levels]")
      ->capture_default_str();
  cmd->add_option("--weights", o.weights, "Weight manifest (default: seeded random weights)");
  cmd->add_option("--events", o.events, "Event file, .evb or .csv (default: synthetic scene from --seed)");
  cmd->add_option("--encoder", o.encoder, "count, timestamp or voxel:B")->capture_default_str();
  cmd->add_option("--tile", o.tile, "Tile shape HxW (default 6x6 for builtin models)");
  cmd->add_option("--tp", o.tp, "Threshold parameter for every sparsify node");
  cmd->add_option("--seed", o.seed, "Seed for random weights and the synthetic scene")->capture_default_str();
}

void add_run_options(CLI::App* cmd, RunOptions& r) {
  cmd->add_option("--window-us", r.window_us, "Window length in microseconds")->capture_default_str();
  cmd->add_option("--shift-us", r.shift_us, "Window shift in microseconds")->capture_default_str();
  cmd->add_option("--refresh-n", r.refresh_n, "Refresh every N incremental steps, 0 = never")->capture_default_str();
  cmd->add_option("--steps", r.steps, "Stop after this many steps (default: whole stream)");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  return os;
}

std::string provenance(const ModelOptions& m) {
  std::ostringstream os;
  os << "model_source = " << m.model << "\n";
  os << "weights = " << (m.weights.empty() ? "random" : m.weights) << "\n";
  os << "events = " << (m.events.empty() ? "synthetic" : m.events) << "\n";
  return os.str();
}

struct Prepared {
  EventStream events;
  ModelSpec spec;
  WeightSet weights;
};

Prepared prepare(const ModelOptions& m) {
  Prepared p;
  p.events = load_stream(m);
  const Encoder enc = Encoder::parse(m.encoder);
  p.spec = resolve_model(m, {enc.channels(), p.events.sensor().height, p.events.sensor().width});
  p.weights = resolve_weights(m, p.spec);
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incremental sparse CNN inference on event streams"};
  app.require_subcommand(1);

  // synth
  SynthConfig synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic moving-edge event stream");
  synth_cmd->add_option("--seed", synth.seed, "Scene seed")->capture_default_str();
  synth_cmd->add_option("--duration-us", synth.duration_us, "Stream length in microseconds")->capture_default_str();
  synth_cmd->add_option("--rate", synth.rate_hz, "Mean event rate in Hz")->capture_default_str();
  synth_cmd->add_option("--objects", synth.n_objects, "Number of moving rectangles")->capture_default_str();
  synth_cmd->add_option("--height", synth.sensor.height, "Sensor rows")->capture_default_str();
  synth_cmd->add_option("--width", synth.sensor.width, "Sensor columns")->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output file (.evb, or .csv)")->required();

  // run
  ModelOptions run_model;
  RunOptions run_opts;
  auto* run_cmd = app.add_subcommand("run", "Replay sliding windows through a model");
  add_model_options(run_cmd, run_model);
  add_run_options(run_cmd, run_opts);
  run_cmd->add_option("--mode", run_opts.mode, "dense, incr or both")->capture_default_str();
  run_cmd->add_option("--out", run_opts.out, "Per-step CSV; the summary goes next to it as <out>.summary.txt");

  // sweep
  ModelOptions sweep_model;
  RunOptions sweep_opts;
  std::string sweep_param;
  std::vector<double> sweep_values;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run once per parameter value and tabulate summaries");
  add_model_options(sweep_cmd, sweep_model);
  add_run_options(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--mode", sweep_opts.mode, "dense, incr or both")->capture_default_str();
  sweep_cmd->add_option("--param", sweep_param, "tp or shift")->required()->check(CLI::IsMember({"tp", "shift"}));
  sweep_cmd->add_option("--values", sweep_values, "Comma-separated values")->required()->delimiter(',');
  sweep_cmd->add_option("--out", sweep_opts.out, "Output CSV (default: stdout)");

  // drift
  ModelOptions drift_model;
  RunOptions drift_opts;
  auto* drift_cmd = app.add_subcommand("drift", "Per-step drift against the dense oracle");
  add_model_options(drift_cmd, drift_model);
  add_run_options(drift_cmd, drift_opts);
  drift_cmd->add_option("--out", drift_opts.out, "Output CSV (default: stdout)");

  // gen-weights
  ModelOptions gen_model;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-weights", "Write seeded random weights for a model");
  add_model_options(gen_cmd, gen_model);
  gen_cmd->add_option("--out", gen_out, "Manifest path; the blob is written next to it")->required();

  // export-model
  ModelOptions export_model;
  std::string export_out;
  auto* export_cmd = app.add_subcommand("export-model", "Write a model spec as text");
  add_model_options(export_cmd, export_model);
  export_cmd->add_option("--out", export_out, "Output path (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) {
      const auto events = synth_events(synth);
      write_events(events, synth_out, format_for(synth_out));
      std::printf("wrote %zu events to %s\n", events.size(), synth_out.c_str());
    } else if (run_cmd->parsed()) {
      const auto p = prepare(run_model);
      const auto report = run_benchmark(p.spec, p.weights, p.events, make_run_config(run_model, run_opts));
      const std::string summary = provenance(run_model) + report.summary_text();
      if (!run_opts.out.empty()) {
        auto csv = open_out(run_opts.out);
        report.write_csv(csv);
        open_out(run_opts.out + ".summary.txt") << summary;
      }
      std::cout << summary;
    } else if (sweep_cmd->parsed()) {
      const auto p = prepare(sweep_model);
      const auto param = sweep_param == "tp" ? SweepParam::Threshold : SweepParam::Shift;
      const auto rows = run_sweep(p.spec, p.weights, p.events, make_run_config(sweep_model, sweep_opts), param, sweep_values);
      if (sweep_opts.out.empty()) {
        write_sweep_csv(std::cout, param, rows);
      } else {
        auto os = open_out(sweep_opts.out);
        write_sweep_csv(os, param, rows);
      }
    } else if (drift_cmd->parsed()) {
      const auto p = prepare(drift_model);
      auto cfg = make_run_config(drift_model, drift_opts);
      cfg.mode = RunMode::Both;
      const auto report = run_benchmark(p.spec, p.weights, p.events, cfg);
      if (drift_opts.out.empty()) {
        write_drift_csv(std::cout, report);
      } else {
        auto os = open_out(drift_opts.out);
        write_drift_csv(os, report);
      }
    } else if (gen_cmd->parsed()) {
      const auto p = prepare(gen_model);
      save_weights(p.weights, gen_out);
      std::printf("wrote %zu tensors to %s\n", p.weights.size(), gen_out.c_str());
    } else if (export_cmd->parsed()) {
      const SensorSize sensor = export_model.events.empty() ? SynthConfig{}.sensor : load_stream(export_model).sensor();
      const Encoder enc = Encoder::parse(export_model.encoder);
      const auto spec = resolve_model(export_model, {enc.channels(), sensor.height, sensor.width});
      if (export_out.empty()) std::cout << to_text(spec);
      else open_out(export_out) << to_text(spec);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "evinc: %s\n", e.what());
    return 1;
  }
  return 0;
}
