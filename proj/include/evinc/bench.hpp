#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "evinc/events.hpp"
#include "evinc/graph.hpp"

namespace evinc {

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

/// Bright rectangles drifting across the sensor and bouncing off its
/// borders. Events arrive as a Poisson process of `rate_hz`; most fire on
/// object edges (leading edges +1, trailing -1), the rest are uniform noise.
struct SynthConfig {
  std::uint64_t seed = 1;
  std::uint64_t duration_us = 1'000'000;
  double rate_hz = 20'000.0;
  int n_objects = 3;
  SensorSize sensor{180, 240};
  double noise_fraction = 0.05;
};

EventStream synth_events(const SynthConfig& cfg);

// ---------------------------------------------------------------------------
// Sliding-window replay
// ---------------------------------------------------------------------------

enum class RunMode { Dense, Incr, Both };

const char* mode_name(RunMode m);
RunMode parse_mode(const std::string& text);

struct RunConfig {
  Encoder encoder = Encoder::count();
  std::uint64_t window_us = 50'000;
  std::uint64_t shift_us = 1'000;
  std::optional<float> threshold;  // overrides every sparsify node when set
  int refresh_n = 64;              // 0 = never refresh
  RunMode mode = RunMode::Both;
  int max_steps = -1;              // -1 = every full window in the stream
  std::uint64_t seed = 0;          // recorded for reproduction only
};

struct StepRecord {
  int step = 0;
  std::uint64_t tau_us = 0;
  bool refreshed = false;  // this step ran a dense pass (step 0 or refresh)
  std::optional<double> wall_dense_us;
  std::optional<double> wall_incr_us;
  std::uint64_t performed_flops = 0;
  std::uint64_t dense_equiv_flops = 0;
  std::optional<double> input_false_fraction;
  std::optional<float> drift;
  std::vector<double> conv_input_false_fraction;  // aligned with BenchReport::conv_ids
};

struct BenchReport {
  // Run metadata.
  std::string model;
  RunConfig config;
  float threshold = 0.0f;  // effective value of the first sparsify node
  TileShape tile;

  std::vector<std::string> conv_ids;
  std::vector<StepRecord> records;

  std::uint64_t total_performed() const;
  std::uint64_t total_dense_equiv() const;
  /// 100 * (1 - sum performed / sum dense_equiv) over every record.
  double flop_reduction_percent() const;
  double mean_drift() const;   // NaN when no drift was measured
  double max_drift() const;
  double mean_wall_incr_us() const;
  double mean_wall_dense_us() const;
  double mean_input_false_fraction() const;  // over incremental steps
  /// Mean false-tile fraction entering conv `id` over incremental steps.
  double mean_conv_false_fraction(const std::string& id) const;

  void write_csv(std::ostream& os) const;
  std::string summary_text() const;
};

BenchReport run_benchmark(const ModelSpec& spec, const WeightSet& weights, const EventStream& events,
                          const RunConfig& cfg);

enum class SweepParam { Threshold, Shift };

struct SweepRow {
  double value = 0.0;
  double flop_reduction_percent = 0.0;
  double mean_drift = 0.0;
  double mean_wall_incr_us = 0.0;
  double mean_input_false_fraction = 0.0;
};

std::vector<SweepRow> run_sweep(const ModelSpec& spec, const WeightSet& weights, const EventStream& events,
                                const RunConfig& base, SweepParam param, const std::vector<double>& values);

void write_sweep_csv(std::ostream& os, SweepParam param, const std::vector<SweepRow>& rows);

/// step,tau_us,drift,refresh
void write_drift_csv(std::ostream& os, const BenchReport& report);

}  // namespace evinc
