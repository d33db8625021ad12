#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evinc/tensor.hpp"

namespace evinc {

struct Event {
  std::uint64_t t = 0;  // microseconds
  std::uint16_t x = 0;  // column
  std::uint16_t y = 0;  // row
  std::int8_t p = 1;    // polarity, -1 or +1

  friend bool operator==(const Event&, const Event&) = default;
};

struct SensorSize {
  int height = 0;
  int width = 0;

  friend bool operator==(const SensorSize&, const SensorSize&) = default;
};

/// Immutable, time-sorted, bounds-checked event sequence.
class EventStream {
 public:
  EventStream() = default;
  /// Validates bounds and polarity; stable-sorts by timestamp.
  EventStream(SensorSize sensor, std::vector<Event> events);

  const SensorSize& sensor() const { return sensor_; }
  std::span<const Event> events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

  friend bool operator==(const EventStream&, const EventStream&) = default;

 private:
  SensorSize sensor_;
  std::vector<Event> events_;
};

/// Events with end_us - length_us < t <= end_us.
struct EventWindow {
  std::span<const Event> events;
  std::uint64_t end_us = 0;
  std::uint64_t length_us = 0;
  SensorSize sensor;

  std::int64_t begin_us() const { return std::int64_t(end_us) - std::int64_t(length_us); }
};

EventWindow slice_window(const EventStream& s, std::uint64_t end_us, std::uint64_t length_us);

struct Encoder {
  enum class Kind { EventCount, RecentTimestamp, VoxelGrid };

  Kind kind = Kind::EventCount;
  int bins = 1;  // VoxelGrid only

  static Encoder count() { return {Kind::EventCount, 1}; }
  static Encoder timestamp() { return {Kind::RecentTimestamp, 1}; }
  static Encoder voxel(int bins);
  /// "count", "timestamp" or "voxel:B".
  static Encoder parse(const std::string& text);

  int channels() const { return kind == Kind::VoxelGrid ? bins : 2; }
  std::string name() const;
};

/// EventCount:      ch0 = #(p=+1), ch1 = #(p=-1) per pixel.
/// RecentTimestamp: ch0/ch1 = (t - begin)/length of the latest event per polarity, 0 if none.
/// VoxelGrid:       bin b += p * max(0, 1 - |b - t*|), t* = (t - begin)(B-1)/length.
Tensor encode(const EventWindow& w, const Encoder& enc);

/// values = cur - prev, exact tile mask.
IncrementTensor step_increment(const Tensor& prev, const Tensor& cur, TileShape tile);

enum class EventFormat { Evb, Csv };

/// Picks the format from the extension (".csv" is CSV, anything else EVB).
EventFormat format_for(const std::filesystem::path& path);

/// EVB carries the sensor size. CSV does not: pass it, or it is inferred as
/// (max y + 1, max x + 1).
EventStream read_events(const std::filesystem::path& path, EventFormat format,
                        std::optional<SensorSize> csv_sensor = std::nullopt);
void write_events(const EventStream& s, const std::filesystem::path& path, EventFormat format);

std::vector<std::uint8_t> encode_evb(const EventStream& s);
EventStream decode_evb(std::span<const std::uint8_t> bytes);

}  // namespace evinc
