#pragma once

// Descriptor sources: a simplified Scan Context extractor with its ring key,
// a smooth synthetic descriptor field, and the KDSC / CSV descriptor files.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kfsample/core.hpp"
#include "kfsample/error.hpp"
#include "kfsample/rng.hpp"
#include "kfsample/terms.hpp"

namespace kfs {

struct ScanContextConfig {
  std::size_t rings = 20;
  std::size_t sectors = 60;
  double max_range = 80.0;

  void validate() const {
    if (rings < 1 || sectors < 1) throw InvalidArgument("scan context needs at least one ring and sector");
    if (!(max_range > 0.0)) throw InvalidArgument("scan context max_range must be positive");
  }
  std::size_t length() const noexcept { return rings * sectors; }
};

/// Polar height grid, flattened ring-major. Each cell holds the highest z of
/// the points falling in it, 0 when empty. Range is planar; points at or
/// beyond max_range are dropped. Azimuth is atan2(y, x) in [0, 2π).
inline Descriptor scan_context(const PointCloud& cloud, const ScanContextConfig& config = {}) {
  config.validate();
  constexpr double kEmpty = -std::numeric_limits<double>::infinity();
  std::vector<double> cells(config.length(), kEmpty);
  const double two_pi = 2.0 * std::numbers::pi;
  for (const auto& p : cloud) {
    const double x = p.x, y = p.y;
    const double range = std::sqrt(x * x + y * y);
    if (!(range < config.max_range)) continue;
    double az = std::atan2(y, x);
    if (az < 0.0) az += two_pi;
    auto ring = static_cast<std::size_t>(std::floor(static_cast<double>(config.rings) * range / config.max_range));
    auto sector = static_cast<std::size_t>(std::floor(static_cast<double>(config.sectors) * az / two_pi));
    ring = std::min(ring, config.rings - 1);
    sector = std::min(sector, config.sectors - 1);
    double& cell = cells[ring * config.sectors + sector];
    cell = std::max(cell, static_cast<double>(p.z));
  }
  for (double& c : cells)
    if (c == kEmpty) c = 0.0;
  return Descriptor(std::move(cells));
}

/// Fraction of non-zero cells per ring. Invariant to cyclic sector shifts.
inline Descriptor ring_key(const Descriptor& sc, const ScanContextConfig& config = {}) {
  config.validate();
  if (sc.size() != config.length()) {
    throw InvalidArgument("ring key input has length " + std::to_string(sc.size()) + ", expected " +
                          std::to_string(config.length()));
  }
  std::vector<double> out(config.rings, 0.0);
  for (std::size_t r = 0; r < config.rings; ++r) {
    std::size_t nz = 0;
    for (std::size_t s = 0; s < config.sectors; ++s) nz += sc[r * config.sectors + s] != 0.0 ? 1 : 0;
    out[r] = static_cast<double>(nz) / static_cast<double>(config.sectors);
  }
  return Descriptor(std::move(out));
}

/// Euclidean distance minimized over cyclic sector shifts of `b`. Opt-in
/// alternative for Scan Context retrieval; the optimization terms always use
/// plain Euclidean distance.
inline double sector_shift_distance(std::span<const double> a, std::span<const double> b,
                                    const ScanContextConfig& config = {}) {
  if (a.size() != config.length() || b.size() != config.length()) {
    throw InvalidArgument("sector shift distance needs scan context sized descriptors");
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t shift = 0; shift < config.sectors; ++shift) {
    double s = 0.0;
    for (std::size_t r = 0; r < config.rings; ++r)
      for (std::size_t c = 0; c < config.sectors; ++c) {
        const double d = a[r * config.sectors + c] - b[r * config.sectors + (c + shift) % config.sectors];
        s += d * d;
      }
    best = std::min(best, s);
  }
  return std::sqrt(best);
}

struct SyntheticFieldConfig {
  std::size_t dimension = 64;
  std::vector<Vec3> frequencies;  ///< rad / m, one per component
  std::vector<double> phases;     ///< rad
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  /// Random field: horizontal wave vectors with magnitude in
  /// [0.1, 1] · max_frequency, small vertical part, uniform phases.
  static SyntheticFieldConfig random(std::size_t dimension, std::uint64_t seed, double max_frequency = 0.5,
                                     double noise_sigma = 0.0) {
    if (dimension < 1) throw InvalidArgument("synthetic field dimension must be >= 1");
    SyntheticFieldConfig c;
    c.dimension = dimension;
    c.seed = seed;
    c.noise_sigma = noise_sigma;
    Rng rng(seed);
    for (std::size_t m = 0; m < dimension; ++m) {
      const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double mag = rng.uniform(0.1, 1.0) * max_frequency;
      const double vertical = rng.uniform(-0.1, 0.1) * max_frequency;
      c.frequencies.push_back({mag * std::cos(heading), mag * std::sin(heading), vertical});
      c.phases.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
    }
    return c;
  }

  void validate() const {
    if (dimension < 1) throw InvalidArgument("synthetic field dimension must be >= 1");
    if (frequencies.size() != dimension || phases.size() != dimension) {
      throw InvalidArgument("synthetic field needs one frequency and phase per component");
    }
    if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise sigma must be non-negative");
  }
};

/// Component m = cos(f_m · p + φ_m), plus N(0, σ²) noise drawn from `noise`
/// when σ > 0.
inline Descriptor synthetic_descriptor(const Vec3& position, const SyntheticFieldConfig& config,
                                       Rng* noise = nullptr) {
  config.validate();
  std::vector<double> out(config.dimension);
  for (std::size_t m = 0; m < config.dimension; ++m) {
    out[m] = std::cos(config.frequencies[m].dot(position) + config.phases[m]);
    if (config.noise_sigma > 0.0 && noise) out[m] += noise->gaussian(0.0, config.noise_sigma);
  }
  return Descriptor(std::move(out));
}

// --- Descriptor files -------------------------------------------------------
//
// KDSC: "KDSC", u32 version (1), u32 N, u32 M, then N*M float32 row-major.
// All integers and floats little-endian.

inline constexpr char kKdscMagic[4] = {'K', 'D', 'S', 'C'};
inline constexpr std::uint32_t kKdscVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<std::uint32_t>(f)); }

inline float get_f32(const unsigned char* b) { return std::bit_cast<float>(get_u32(b)); }

inline std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());
  return bytes;
}

inline bool has_extension(const std::filesystem::path& p, std::string_view ext) {
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e == ext;
}

}  // namespace detail

inline void write_descriptors_kdsc(const std::filesystem::path& path, const DescriptorMatrix& d) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kKdscMagic, 4);
  detail::put_u32(out, kKdscVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(d.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(d.cols()));
  for (double v : d.data()) detail::put_f32(out, static_cast<float>(v));
  if (!out) throw IoError("write failure on " + path.string());
}

inline DescriptorMatrix read_descriptors_kdsc(const std::filesystem::path& path) {
  const auto bytes = detail::read_all(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kKdscMagic, 4) != 0) {
    throw IoError(path.string() + ": not a KDSC descriptor file (bad magic)");
  }
  const auto version = detail::get_u32(bytes.data() + 4);
  if (version != kKdscVersion) {
    throw IoError(path.string() + ": unsupported KDSC version " + std::to_string(version));
  }
  const std::size_t n = detail::get_u32(bytes.data() + 8);
  const std::size_t m = detail::get_u32(bytes.data() + 12);
  if (n > 0 && m == 0) throw IoError(path.string() + ": descriptor dimension is zero");
  if (bytes.size() != 16 + 4 * n * m) {
    throw IoError(path.string() + ": header declares " + std::to_string(n) + "x" + std::to_string(m) +
                  " values but payload has " + std::to_string(bytes.size() - 16) + " bytes");
  }
  std::vector<double> data(n * m);
  for (std::size_t i = 0; i < n * m; ++i) {
    const float f = detail::get_f32(bytes.data() + 16 + 4 * i);
    if (!std::isfinite(f)) {
      throw DataError(path.string() + ": non-finite value at row " + std::to_string(i / m) + ", column " +
                      std::to_string(i % m));
    }
    data[i] = f;
  }
  return DescriptorMatrix(n, m, std::move(data));
}

inline void write_descriptors_csv(const std::filesystem::path& path, const DescriptorMatrix& d) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(17);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    for (std::size_t c = 0; c < d.cols(); ++c) {
      if (c) out << ',';
      out << d(r, c);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failure on " + path.string());
}

inline DescriptorMatrix read_descriptors_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<double> data;
  std::size_t cols = 0, rows = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t count = 0;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": not a number: '" + tok + "'");
      }
      if (tok.find_first_not_of(" \t", used) != std::string::npos) {
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": not a number: '" + tok + "'");
      }
      if (!std::isfinite(v)) throw DataError(path.string() + ":" + std::to_string(line_no) + ": non-finite value");
      data.push_back(v);
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                    " values, found " + std::to_string(count));
    }
    ++rows;
  }
  return DescriptorMatrix(rows, cols, std::move(data));
}

/// Loads a descriptor matrix (.csv as CSV, anything else as KDSC). When
/// expected_count is given the row count must match.
inline DescriptorMatrix load_descriptors(const std::filesystem::path& path,
                                         std::optional<std::size_t> expected_count = std::nullopt) {
  if (!std::filesystem::exists(path)) throw IoError("descriptor file not found: " + path.string());
  auto d = detail::has_extension(path, ".csv") ? read_descriptors_csv(path) : read_descriptors_kdsc(path);
  if (expected_count && d.rows() != *expected_count) {
    throw DataError(path.string() + ": expected " + std::to_string(*expected_count) + " descriptors, found " +
                    std::to_string(d.rows()));
  }
  return d;
}

}  // namespace kfs
