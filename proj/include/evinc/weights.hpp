#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "evinc/model_spec.hpp"

namespace evinc {

struct WeightTensor {
  std::vector<int> shape;
  Eigen::ArrayXf values;  // row-major in shape order

  std::size_t numel() const;
};

using WeightSet = std::map<std::string, WeightTensor>;

/// One line of a weight manifest. Offsets and lengths are in bytes into the
/// blob, which holds little-endian float32.
struct ManifestEntry {
  std::string name;
  std::vector<int> shape;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

struct WeightManifest {
  std::filesystem::path blob;  // resolved against the manifest's directory
  std::vector<ManifestEntry> entries;
};

WeightManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir);
std::string to_text(const WeightManifest& m);

/// Reads the manifest and its blob. Names must be unique; every entry must
/// fit the blob and match 4 * numel(shape) bytes.
WeightSet load_weights(const std::filesystem::path& manifest_path);

/// Writes `manifest_path` plus a blob next to it (same stem, ".bin").
void save_weights(const WeightSet& weights, const std::filesystem::path& manifest_path);

/// Seeded uniform He-style initialization for every tensor the spec needs.
/// Each tensor's stream depends only on (seed, name), so specs that share a
/// layer name and shape get identical values for it.
WeightSet random_weights(const ModelSpec& spec, std::uint64_t seed);

}  // namespace evinc
