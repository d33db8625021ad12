#include "evinc/weights.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>

#include "evinc/random.hpp"

namespace evinc {

namespace {

std::vector<int> parse_dims(const std::string& v, const std::string& where) {
  std::vector<int> dims;
  std::istringstream is(v);
  for (std::string item; std::getline(is, item, ',');) {
    int d = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), d);
    if (ec != std::errc() || p != item.data() + item.size() || d < 1)
      throw FormatError(where + ": bad shape '" + v + "'");
    dims.push_back(d);
  }
  if (dims.empty()) throw FormatError(where + ": empty shape");
  return dims;
}

std::uint64_t parse_u64(const std::string& v, const std::string& where) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw FormatError(where + ": expected integer, got '" + v + "'");
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::size_t product(const std::vector<int>& dims) {
  std::size_t n = 1;
  for (int d : dims) n *= std::size_t(d);
  return n;
}

}  // namespace

std::size_t WeightTensor::numel() const { return product(shape); }

WeightManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir) {
  WeightManifest m;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  bool header = false, blob = false;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string where = "manifest line " + std::to_string(lineno);
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (!header) {
      if (tok.size() != 2 || tok[0] != "evinc-weights" || tok[1] != "1")
        throw FormatError(where + ": expected header 'evinc-weights 1'");
      header = true;
    } else if (tok[0] == "blob" && tok.size() == 2) {
      m.blob = base_dir / tok[1];
      blob = true;
    } else if (tok[0] == "tensor" && tok.size() == 5) {
      ManifestEntry e;
      e.name = tok[1];
      bool have_shape = false, have_offset = false, have_length = false;
      for (std::size_t i = 2; i < tok.size(); ++i) {
        const auto eq = tok[i].find('=');
        const std::string key = tok[i].substr(0, eq);
        const std::string val = eq == std::string::npos ? "" : tok[i].substr(eq + 1);
        if (key == "shape") e.shape = parse_dims(val, where), have_shape = true;
        else if (key == "offset") e.offset = parse_u64(val, where), have_offset = true;
        else if (key == "length") e.length = parse_u64(val, where), have_length = true;
        else throw FormatError(where + ": unknown key '" + key + "'");
      }
      if (!have_shape || !have_offset || !have_length)
        throw FormatError(where + ": tensor needs shape=, offset= and length=");
      m.entries.push_back(std::move(e));
    } else {
      throw FormatError(where + ": unrecognized line");
    }
  }
  if (!header) throw FormatError("manifest is empty");
  if (!blob) throw FormatError("manifest has no blob line");
  return m;
}

std::string to_text(const WeightManifest& m) {
  std::ostringstream os;
  os << "evinc-weights 1\n";
  os << "blob " << m.blob.filename().string() << "\n";
  for (const auto& e : m.entries) {
    os << "tensor " << e.name << " shape=";
    for (std::size_t i = 0; i < e.shape.size(); ++i) os << (i ? "," : "") << e.shape[i];
    os << " offset=" << e.offset << " length=" << e.length << "\n";
  }
  return os.str();
}

WeightSet load_weights(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("cannot open weight manifest " + manifest_path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const WeightManifest m = parse_manifest(ss.str(), manifest_path.parent_path());

  std::ifstream bin(m.blob, std::ios::binary);
  if (!bin) throw FormatError("cannot open weight blob " + m.blob.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  WeightSet out;
  for (const auto& e : m.entries) {
    const std::size_t n = product(e.shape);
    if (e.length != 4 * n)
      throw FormatError("weight '" + e.name + "': length " + std::to_string(e.length) + " bytes does not match shape (" +
                        std::to_string(4 * n) + " bytes)");
    if (e.offset > bytes.size() || e.length > bytes.size() - e.offset)
      throw FormatError("weight '" + e.name + "': range [" + std::to_string(e.offset) + ", " +
                        std::to_string(e.offset + e.length) + ") exceeds blob size " + std::to_string(bytes.size()));
    WeightTensor t{e.shape, Eigen::ArrayXf(Eigen::Index(n))};
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned char* p = &bytes[e.offset + 4 * i];
      const std::uint32_t u = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
                              std::uint32_t(p[3]) << 24;
      t.values[Eigen::Index(i)] = std::bit_cast<float>(u);
    }
    if (!out.emplace(e.name, std::move(t)).second) throw FormatError("weight '" + e.name + "' listed twice");
  }
  return out;
}

void save_weights(const WeightSet& weights, const std::filesystem::path& manifest_path) {
  WeightManifest m;
  m.blob = manifest_path;
  m.blob.replace_extension(".bin");
  std::vector<unsigned char> bytes;
  for (const auto& [name, t] : weights) {
    if (t.numel() != std::size_t(t.values.size())) throw ShapeError("weight '" + name + "' data/shape mismatch");
    m.entries.push_back({name, t.shape, bytes.size(), 4 * std::uint64_t(t.values.size())});
    for (Eigen::Index i = 0; i < t.values.size(); ++i) {
      const auto u = std::bit_cast<std::uint32_t>(t.values[i]);
      for (int b = 0; b < 4; ++b) bytes.push_back((u >> (8 * b)) & 0xff);
    }
  }
  std::ofstream bin(m.blob, std::ios::binary);
  if (!bin) throw FormatError("cannot write " + m.blob.string());
  bin.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  std::ofstream man(manifest_path);
  if (!man) throw FormatError("cannot write " + manifest_path.string());
  man << to_text(m);
  if (!bin || !man) throw FormatError("write failed for " + manifest_path.string());
}

WeightSet random_weights(const ModelSpec& spec, std::uint64_t seed) {
  WeightSet out;
  for (const auto& req : required_weights(spec)) {
    std::mt19937_64 rng(seed ^ fnv1a(req.name));
    WeightTensor t{req.shape, Eigen::ArrayXf(Eigen::Index(product(req.shape)))};
    const bool is_bias = req.shape.size() == 1;
    const std::size_t fan_in = is_bias ? 1 : product(req.shape) / std::size_t(req.shape[0]);
    const float bound = is_bias ? 0.1f : std::sqrt(6.0f / float(fan_in));
    for (Eigen::Index i = 0; i < t.values.size(); ++i) t.values[i] = bound * (2.0f * unit_float(rng()) - 1.0f);
    out.emplace(req.name, std::move(t));
  }
  return out;
}

}  // namespace evinc
