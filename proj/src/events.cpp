#include "evinc/events.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace evinc {

namespace {

void check_event(const Event& e, const SensorSize& s, const std::string& where) {
  if (e.x >= s.width || e.y >= s.height)
    throw FormatError(where + ": event at (x=" + std::to_string(e.x) + ", y=" + std::to_string(e.y) +
                      ") outside sensor " + std::to_string(s.height) + "x" + std::to_string(s.width));
  if (e.p != 1 && e.p != -1) throw FormatError(where + ": polarity must be -1 or +1, got " + std::to_string(e.p));
}

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(std::uint8_t((std::uint64_t(v) >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return T(v);
}

constexpr std::size_t kEvbHeader = 4 + 2 + 2 + 8;
constexpr std::size_t kEvbRecord = 8 + 2 + 2 + 1;

template <class T>
T parse_field(std::string_view text, std::size_t line, const char* name) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw FormatError("line " + std::to_string(line) + ": bad " + name + " field '" + std::string(text) + "'");
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

EventStream read_csv(const std::filesystem::path& path, std::optional<SensorSize> sensor) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || trim(line) != "t_us,x,y,p")
    throw FormatError(path.string() + " line 1: expected header 't_us,x,y,p'");
  std::vector<Event> events;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view row = trim(line);
    if (row.empty()) continue;
    std::string_view fields[4];
    std::size_t n = 0;
    while (n < 4) {
      const auto comma = row.find(',');
      fields[n++] = trim(row.substr(0, comma));
      if (comma == std::string_view::npos) {
        row = {};
        break;
      }
      row.remove_prefix(comma + 1);
    }
    if (n != 4 || !row.empty())
      throw FormatError(path.string() + " line " + std::to_string(lineno) + ": expected 4 fields");
    Event e;
    e.t = parse_field<std::uint64_t>(fields[0], lineno, "t_us");
    e.x = parse_field<std::uint16_t>(fields[1], lineno, "x");
    e.y = parse_field<std::uint16_t>(fields[2], lineno, "y");
    const int p = parse_field<int>(fields[3], lineno, "p");
    if (p != 1 && p != -1)
      throw FormatError(path.string() + " line " + std::to_string(lineno) + ": polarity must be -1 or +1");
    e.p = std::int8_t(p);
    if (sensor) check_event(e, *sensor, path.string() + " line " + std::to_string(lineno));
    events.push_back(e);
  }
  if (!sensor) {
    SensorSize inferred{0, 0};
    for (const Event& e : events) {
      inferred.height = std::max(inferred.height, int(e.y) + 1);
      inferred.width = std::max(inferred.width, int(e.x) + 1);
    }
    sensor = inferred;
  }
  return EventStream(*sensor, std::move(events));
}

void write_csv(const EventStream& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "t_us,x,y,p\n";
  for (const Event& e : s.events()) out << e.t << ',' << e.x << ',' << e.y << ',' << int(e.p) << '\n';
  if (!out) throw FormatError("write failed: " + path.string());
}

}  // namespace

EventStream::EventStream(SensorSize sensor, std::vector<Event> events)
    : sensor_(sensor), events_(std::move(events)) {
  if (sensor.height < 0 || sensor.width < 0 || sensor.height > 65536 || sensor.width > 65536)
    throw FormatError("invalid sensor size");
  for (std::size_t i = 0; i < events_.size(); ++i) check_event(events_[i], sensor_, "event " + std::to_string(i));
  if (!std::is_sorted(events_.begin(), events_.end(), [](const Event& a, const Event& b) { return a.t < b.t; }))
    std::stable_sort(events_.begin(), events_.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
}

EventWindow slice_window(const EventStream& s, std::uint64_t end_us, std::uint64_t length_us) {
  if (length_us == 0) throw Error("window length must be > 0");
  auto ev = s.events();
  const auto by_time = [](const Event& e, std::uint64_t t) { return e.t < t; };
  auto last = std::upper_bound(ev.begin(), ev.end(), end_us,
                               [](std::uint64_t t, const Event& e) { return t < e.t; });
  auto first = ev.begin();
  if (end_us >= length_us) first = std::lower_bound(ev.begin(), last, end_us - length_us + 1, by_time);
  EventWindow w;
  w.events = std::span<const Event>(first, last);
  w.end_us = end_us;
  w.length_us = length_us;
  w.sensor = s.sensor();
  return w;
}

Encoder Encoder::voxel(int bins) {
  if (bins < 1) throw Error("voxel grid needs at least one bin");
  return {Kind::VoxelGrid, bins};
}

Encoder Encoder::parse(const std::string& text) {
  if (text == "count") return count();
  if (text == "timestamp") return timestamp();
  if (text.rfind("voxel:", 0) == 0) {
    int bins = 0;
    const std::string_view rest(text.data() + 6, text.size() - 6);
    auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), bins);
    if (ec != std::errc() || ptr != rest.data() + rest.size()) throw Error("bad encoder '" + text + "'");
    return voxel(bins);
  }
  throw Error("unknown encoder '" + text + "' (expected count, timestamp or voxel:B)");
}

std::string Encoder::name() const {
  switch (kind) {
    case Kind::EventCount: return "count";
    case Kind::RecentTimestamp: return "timestamp";
    case Kind::VoxelGrid: return "voxel:" + std::to_string(bins);
  }
  return "?";
}

Tensor encode(const EventWindow& w, const Encoder& enc) {
  Tensor out(enc.channels(), w.sensor.height, w.sensor.width);
  const double begin = double(w.begin_us());
  const double length = double(w.length_us);
  switch (enc.kind) {
    case Encoder::Kind::EventCount:
      for (const Event& e : w.events) out(e.p > 0 ? 0 : 1, e.y, e.x) += 1.0f;
      break;
    case Encoder::Kind::RecentTimestamp:
      // Events are time-sorted, so the last write per pixel is the most recent.
      for (const Event& e : w.events) out(e.p > 0 ? 0 : 1, e.y, e.x) = float((double(e.t) - begin) / length);
      break;
    case Encoder::Kind::VoxelGrid: {
      const int bins = enc.bins;
      for (const Event& e : w.events) {
        const double tstar = (double(e.t) - begin) * double(bins - 1) / length;
        const int lo = int(std::floor(tstar));
        for (int b = std::max(0, lo); b <= std::min(bins - 1, lo + 1); ++b) {
          const double weight = std::max(0.0, 1.0 - std::abs(double(b) - tstar));
          if (weight > 0.0) out(b, e.y, e.x) += float(e.p * weight);
        }
      }
      break;
    }
  }
  return out;
}

IncrementTensor step_increment(const Tensor& prev, const Tensor& cur, TileShape tile) {
  if (prev.shape() != cur.shape())
    throw ShapeError("step_increment: " + to_string(prev.shape()) + " vs " + to_string(cur.shape()));
  Tensor diff(cur.shape(), cur.array() - prev.array());
  return IncrementTensor::from_values(std::move(diff), tile);
}

EventFormat format_for(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return ext == ".csv" ? EventFormat::Csv : EventFormat::Evb;
}

std::vector<std::uint8_t> encode_evb(const EventStream& s) {
  std::vector<std::uint8_t> out;
  out.reserve(kEvbHeader + kEvbRecord * s.size());
  for (char c : {'E', 'V', 'B', '1'}) out.push_back(std::uint8_t(c));
  put_le<std::uint16_t>(out, std::uint16_t(s.sensor().height));
  put_le<std::uint16_t>(out, std::uint16_t(s.sensor().width));
  put_le<std::uint64_t>(out, s.size());
  for (const Event& e : s.events()) {
    put_le<std::uint64_t>(out, e.t);
    put_le<std::uint16_t>(out, e.x);
    put_le<std::uint16_t>(out, e.y);
    put_le<std::uint8_t>(out, std::uint8_t(e.p));
  }
  return out;
}

EventStream decode_evb(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kEvbHeader) throw FormatError("EVB: truncated header (" + std::to_string(bytes.size()) + " bytes)");
  if (!std::equal(bytes.begin(), bytes.begin() + 4, "EVB1")) throw FormatError("EVB: bad magic at offset 0");
  SensorSize sensor{get_le<std::uint16_t>(&bytes[4]), get_le<std::uint16_t>(&bytes[6])};
  const std::uint64_t count = get_le<std::uint64_t>(&bytes[8]);
  const std::size_t body = bytes.size() - kEvbHeader;
  if (count > body / kEvbRecord || body != count * kEvbRecord)
    throw FormatError("EVB: header declares " + std::to_string(count) + " records but " + std::to_string(body) +
                      " payload bytes follow offset " + std::to_string(kEvbHeader));
  std::vector<Event> events(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t off = kEvbHeader + i * kEvbRecord;
    const std::uint8_t* r = &bytes[off];
    Event& e = events[i];
    e.t = get_le<std::uint64_t>(r);
    e.x = get_le<std::uint16_t>(r + 8);
    e.y = get_le<std::uint16_t>(r + 10);
    e.p = std::int8_t(r[12]);
    check_event(e, sensor, "EVB record " + std::to_string(i) + " at offset " + std::to_string(off));
  }
  return EventStream(sensor, std::move(events));
}

EventStream read_events(const std::filesystem::path& path, EventFormat format, std::optional<SensorSize> csv_sensor) {
  if (format == EventFormat::Csv) return read_csv(path, csv_sensor);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_evb(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_events(const EventStream& s, const std::filesystem::path& path, EventFormat format) {
  if (format == EventFormat::Csv) return write_csv(s, path);
  const auto bytes = encode_evb(s);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw FormatError("write failed: " + path.string());
}

}  // namespace evinc
