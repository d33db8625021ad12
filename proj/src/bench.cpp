#include "evinc/bench.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "evinc/random.hpp"

namespace evinc {

namespace {

struct Rect {
  double x0, y0, vx, vy;  // px, px/s
  int w, h;
};

// Position along [0, span] for a point moving at v from p0, reflecting at both ends.
double bounce(double p0, double v, double t, double span) {
  if (span <= 0.0) return 0.0;
  double p = std::fmod(p0 + v * t, 2.0 * span);
  if (p < 0.0) p += 2.0 * span;
  return p <= span ? p : 2.0 * span - p;
}

double elapsed_us(std::chrono::steady_clock::time_point a, std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double, std::micro>(b - a).count();
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

EventStream synth_events(const SynthConfig& cfg) {
  const int H = cfg.sensor.height, W = cfg.sensor.width;
  if (H < 1 || W < 1) throw Error("synthetic sensor must be at least 1x1");
  if (cfg.rate_hz < 0.0) throw Error("event rate must be >= 0");
  if (cfg.n_objects < 0) throw Error("object count must be >= 0");
  std::mt19937_64 rng(cfg.seed);
  auto uni = [&] { return unit_double(rng()); };

  std::vector<Rect> objects;
  for (int i = 0; i < cfg.n_objects; ++i) {
    Rect r;
    r.w = std::min(W, 15 + int(uni() * 30));
    r.h = std::min(H, 15 + int(uni() * 30));
    r.x0 = uni() * (W - r.w);
    r.y0 = uni() * (H - r.h);
    const double speed = 40.0 + uni() * 120.0;
    const double angle = uni() * 2.0 * 3.14159265358979323846;
    r.vx = speed * std::cos(angle);
    r.vy = speed * std::sin(angle);
    objects.push_back(r);
  }

  std::vector<Event> events;
  if (cfg.rate_hz > 0.0 && cfg.duration_us > 0) {
    events.reserve(std::size_t(cfg.rate_hz * double(cfg.duration_us) * 1e-6 * 1.1) + 16);
    const double mean_gap_us = 1e6 / cfg.rate_hz;
    double t = 0.0;
    for (;;) {
      t += -std::log(1.0 - uni()) * mean_gap_us;
      if (t >= double(cfg.duration_us)) break;
      Event e;
      e.t = std::uint64_t(t);
      if (objects.empty() || uni() < cfg.noise_fraction) {
        e.x = std::uint16_t(std::min(W - 1, int(uni() * W)));
        e.y = std::uint16_t(std::min(H - 1, int(uni() * H)));
        e.p = uni() < 0.5 ? -1 : 1;
      } else {
        const Rect& r = objects[std::min(int(objects.size()) - 1, int(uni() * double(objects.size())))];
        const double ts = t * 1e-6;
        const double left = bounce(r.x0, r.vx, ts, W - r.w);
        const double top = bounce(r.y0, r.vy, ts, H - r.h);
        // Velocity sign after reflections: compare with a slightly later position.
        const double dx = bounce(r.x0, r.vx, ts + 1e-4, W - r.w) - left;
        const double dy = bounce(r.y0, r.vy, ts + 1e-4, H - r.h) - top;
        const double perimeter = 2.0 * (r.w + r.h);
        const double u = uni() * perimeter;
        double px, py;
        int pol;
        if (u < r.w) {  // top edge
          px = left + u, py = top, pol = dy < 0 ? 1 : -1;
        } else if (u < 2.0 * r.w) {  // bottom edge
          px = left + (u - r.w), py = top + r.h - 1, pol = dy > 0 ? 1 : -1;
        } else if (u < 2.0 * r.w + r.h) {  // left edge
          px = left, py = top + (u - 2.0 * r.w), pol = dx < 0 ? 1 : -1;
        } else {  // right edge
          px = left + r.w - 1, py = top + (u - 2.0 * r.w - r.h), pol = dx > 0 ? 1 : -1;
        }
        e.x = std::uint16_t(std::clamp(int(px), 0, W - 1));
        e.y = std::uint16_t(std::clamp(int(py), 0, H - 1));
        e.p = std::int8_t(pol);
      }
      events.push_back(e);
    }
  }
  return EventStream(cfg.sensor, std::move(events));
}

const char* mode_name(RunMode m) {
  switch (m) {
    case RunMode::Dense: return "dense";
    case RunMode::Incr: return "incr";
    case RunMode::Both: return "both";
  }
  return "?";
}

RunMode parse_mode(const std::string& text) {
  if (text == "dense") return RunMode::Dense;
  if (text == "incr") return RunMode::Incr;
  if (text == "both") return RunMode::Both;
  throw Error("unknown mode '" + text + "' (expected dense, incr or both)");
}

std::uint64_t BenchReport::total_performed() const {
  std::uint64_t n = 0;
  for (const auto& r : records) n += r.performed_flops;
  return n;
}

std::uint64_t BenchReport::total_dense_equiv() const {
  std::uint64_t n = 0;
  for (const auto& r : records) n += r.dense_equiv_flops;
  return n;
}

double BenchReport::flop_reduction_percent() const {
  const auto dense = total_dense_equiv();
  if (dense == 0) return 0.0;
  return 100.0 * (1.0 - double(total_performed()) / double(dense));
}

double BenchReport::mean_drift() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : records)
    if (r.drift) sum += *r.drift, ++n;
  return n ? sum / n : nan();
}

double BenchReport::max_drift() const {
  double m = nan();
  for (const auto& r : records)
    if (r.drift && !(m >= *r.drift)) m = *r.drift;
  return m;
}

double BenchReport::mean_wall_incr_us() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : records)
    if (r.wall_incr_us) sum += *r.wall_incr_us, ++n;
  return n ? sum / n : nan();
}

double BenchReport::mean_wall_dense_us() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : records)
    if (r.wall_dense_us) sum += *r.wall_dense_us, ++n;
  return n ? sum / n : nan();
}

double BenchReport::mean_input_false_fraction() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : records)
    if (r.input_false_fraction) sum += *r.input_false_fraction, ++n;
  return n ? sum / n : nan();
}

double BenchReport::mean_conv_false_fraction(const std::string& id) const {
  const auto it = std::find(conv_ids.begin(), conv_ids.end(), id);
  if (it == conv_ids.end()) throw Error("no conv node '" + id + "' in report");
  const std::size_t k = std::size_t(it - conv_ids.begin());
  double sum = 0.0;
  int n = 0;
  for (const auto& r : records)
    if (r.step > 0 && k < r.conv_input_false_fraction.size()) sum += r.conv_input_false_fraction[k], ++n;
  return n ? sum / n : nan();
}

namespace {

template <class T>
void cell(std::ostream& os, const std::optional<T>& v) {
  os << ',';
  if (v) os << *v;
}

}  // namespace

void BenchReport::write_csv(std::ostream& os) const {
  const bool with_drift = config.mode == RunMode::Both;
  const auto old_precision = os.precision(9);
  os << "step,tau_us,refresh,wall_dense_us,wall_incr_us,performed_flops,dense_equiv_flops,input_false_frac";
  if (with_drift) os << ",drift";
  for (const auto& id : conv_ids) os << ",fft_" << id;
  os << '\n';
  for (const auto& r : records) {
    os << r.step << ',' << r.tau_us << ',' << int(r.refreshed);
    cell(os, r.wall_dense_us);
    cell(os, r.wall_incr_us);
    os << ',' << r.performed_flops << ',' << r.dense_equiv_flops;
    cell(os, r.input_false_fraction);
    if (with_drift) cell(os, r.drift);
    for (double f : r.conv_input_false_fraction) os << ',' << f;
    os << '\n';
  }
  os.precision(old_precision);
}

std::string BenchReport::summary_text() const {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "model = " << model << "\n";
  os << "mode = " << mode_name(config.mode) << "\n";
  os << "seed = " << config.seed << "\n";
  os << "encoder = " << config.encoder.name() << "\n";
  os << "window_us = " << config.window_us << "\n";
  os << "shift_us = " << config.shift_us << "\n";
  os << "tp = " << threshold << "\n";
  os << "tile = " << tile.h << "x" << tile.w << "\n";
  os << "refresh_n = " << config.refresh_n << "\n";
  os << "steps = " << records.size() << "\n";
  os << "performed_flops = " << total_performed() << "\n";
  os << "dense_equiv_flops = " << total_dense_equiv() << "\n";
  os << "flop_reduction_percent = " << flop_reduction_percent() << "\n";
  os << "mean_input_false_frac = " << mean_input_false_fraction() << "\n";
  os << "mean_wall_dense_us = " << mean_wall_dense_us() << "\n";
  os << "mean_wall_incr_us = " << mean_wall_incr_us() << "\n";
  if (config.mode == RunMode::Both) {
    os << "mean_drift = " << mean_drift() << "\n";
    os << "max_drift = " << max_drift() << "\n";
  }
  return os.str();
}

BenchReport run_benchmark(const ModelSpec& spec_in, const WeightSet& weights, const EventStream& events,
                          const RunConfig& cfg) {
  if (cfg.window_us == 0 || cfg.shift_us == 0) throw Error("window and shift must be > 0");
  if (cfg.refresh_n < 0) throw Error("refresh interval must be >= 0");
  ModelSpec spec = spec_in;
  if (cfg.threshold) spec.set_threshold(*cfg.threshold);
  const Shape want{cfg.encoder.channels(), events.sensor().height, events.sensor().width};
  if (spec.input_shape != want)
    throw ShapeError("model input " + to_string(spec.input_shape) + " does not match encoded events " + to_string(want));

  Graph graph(spec, weights);
  graph.set_refresh_interval(cfg.refresh_n);
  const FlopCounter dense_flops = graph.dense_pass_flops();

  BenchReport report;
  report.model = spec.name;
  report.config = cfg;
  report.tile = spec.tile;
  for (const auto& n : spec.nodes)
    if (n.op == OpKind::Sparsify) {
      report.threshold = n.threshold;
      break;
    }
  const auto order = graph.execution_order();
  for (const auto& id : order)
    if (spec.find(id)->op == OpKind::Conv) report.conv_ids.push_back(id);

  const std::uint64_t start = events.empty() ? 0 : events.events().front().t;
  const std::uint64_t last = events.empty() ? 0 : events.events().back().t;
  int steps = cfg.max_steps;
  if (steps < 0) {
    const std::uint64_t first_end = start + cfg.window_us;
    steps = last < first_end ? 1 : int((last - first_end) / cfg.shift_us) + 1;
  }

  using clock = std::chrono::steady_clock;
  Tensor prev;
  for (int step = 0; step < steps; ++step) {
    StepRecord rec;
    rec.step = step;
    rec.tau_us = start + cfg.window_us + std::uint64_t(step) * cfg.shift_us;
    const Tensor x = encode(slice_window(events, rec.tau_us, cfg.window_us), cfg.encoder);
    std::optional<IncrementTensor> dx;
    if (step > 0) {
      dx = step_increment(prev, x, spec.tile);
      rec.input_false_fraction = dx->mask.false_fraction();
    }

    if (cfg.mode == RunMode::Dense) {
      const auto t0 = clock::now();
      const Tensor y = graph.evaluate(x);
      rec.wall_dense_us = elapsed_us(t0, clock::now());
      rec.performed_flops = dense_flops.performed;
      rec.dense_equiv_flops = dense_flops.dense_equiv;
      rec.refreshed = true;
      rec.conv_input_false_fraction.assign(report.conv_ids.size(), 0.0);
    } else {
      if (step == 0) {
        const auto t0 = clock::now();
        graph.dense_pass(x);
        rec.wall_incr_us = elapsed_us(t0, clock::now());
        rec.performed_flops = dense_flops.performed;
        rec.dense_equiv_flops = dense_flops.dense_equiv;
        rec.refreshed = true;
        rec.conv_input_false_fraction.assign(report.conv_ids.size(), 0.0);
      } else {
        const auto t0 = clock::now();
        StepResult r = graph.incr_step(*dx);
        if (r.refresh_due) graph.refresh(x);
        rec.wall_incr_us = elapsed_us(t0, clock::now());
        rec.refreshed = r.refresh_due;
        rec.performed_flops = r.flops.total.performed + (r.refresh_due ? dense_flops.performed : 0);
        rec.dense_equiv_flops = r.flops.total.dense_equiv;
        for (const auto& id : report.conv_ids)
          for (const auto& s : r.sparsity)
            if (s.id == id) rec.conv_input_false_fraction.push_back(s.input_false_fraction);
      }
      if (cfg.mode == RunMode::Both) {
        const auto t0 = clock::now();
        const Tensor oracle = graph.evaluate(x);
        rec.wall_dense_us = elapsed_us(t0, clock::now());
        rec.drift = graph.drift(oracle);
      }
    }
    report.records.push_back(std::move(rec));
    prev = x;
  }
  return report;
}

std::vector<SweepRow> run_sweep(const ModelSpec& spec, const WeightSet& weights, const EventStream& events,
                                const RunConfig& base, SweepParam param, const std::vector<double>& values) {
  if (values.empty()) throw Error("sweep needs at least one value");
  std::vector<SweepRow> rows;
  for (double v : values) {
    RunConfig cfg = base;
    if (param == SweepParam::Threshold) {
      if (v < 0.0) throw Error("threshold must be >= 0");
      cfg.threshold = float(v);
    } else {
      if (v < 1.0) throw Error("shift must be >= 1 us");
      cfg.shift_us = std::uint64_t(v);
    }
    const BenchReport r = run_benchmark(spec, weights, events, cfg);
    rows.push_back({v, r.flop_reduction_percent(), r.mean_drift(), r.mean_wall_incr_us(), r.mean_input_false_fraction()});
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, SweepParam param, const std::vector<SweepRow>& rows) {
  const auto old_precision = os.precision(9);
  os << (param == SweepParam::Threshold ? "tp" : "shift_us")
     << ",flop_reduction_percent,mean_drift,mean_wall_incr_us,mean_input_false_frac\n";
  for (const auto& r : rows)
    os << r.value << ',' << r.flop_reduction_percent << ',' << r.mean_drift << ',' << r.mean_wall_incr_us << ','
       << r.mean_input_false_fraction << '\n';
  os.precision(old_precision);
}

void write_drift_csv(std::ostream& os, const BenchReport& report) {
  const auto old_precision = os.precision(9);
  os << "step,tau_us,drift,refresh\n";
  for (const auto& r : report.records) {
    os << r.step << ',' << r.tau_us;
    cell(os, r.drift);
    os << ',' << int(r.refreshed) << '\n';
  }
  os.precision(old_precision);
}

}  // namespace evinc
