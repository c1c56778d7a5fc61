#pragma once

// Domain types shared by every module: poses, descriptors, keyframes, the
// accumulated keyframe store with its spatial index, and sessions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kfsample/error.hpp"

namespace kfs {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend constexpr Vec3 operator-(const Vec3& a, const Vec3& b) noexcept {
    return {a.x - b.x, a.y - b.y, a.z - b.z};
  }
  friend constexpr Vec3 operator+(const Vec3& a, const Vec3& b) noexcept {
    return {a.x + b.x, a.y + b.y, a.z + b.z};
  }
  friend constexpr Vec3 operator*(double s, const Vec3& a) noexcept {
    return {s * a.x, s * a.y, s * a.z};
  }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;

  constexpr double dot(const Vec3& o) const noexcept { return x * o.x + y * o.y + z * o.z; }
  double norm() const noexcept { return std::sqrt(dot(*this)); }
  bool finite() const noexcept {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

/// Unit quaternion, stored (x, y, z, w).
struct Quaternion {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double w = 1.0;

  double norm() const noexcept { return std::sqrt(x * x + y * y + z * z + w * w); }
  friend constexpr bool operator==(const Quaternion&, const Quaternion&) = default;

  static Quaternion from_yaw(double yaw) noexcept {
    return {0.0, 0.0, std::sin(0.5 * yaw), std::cos(0.5 * yaw)};
  }
};

/// Rigid pose. Only the translation takes part in distances; the orientation
/// is carried for I/O.
class Pose {
 public:
  Pose() = default;

  explicit Pose(Vec3 position, Quaternion orientation = {}) : position_(position) {
    if (!position.finite()) throw DataError("pose position is not finite");
    const double n = orientation.norm();
    if (!std::isfinite(n) || n < 1e-12) throw DataError("pose quaternion is degenerate");
    orientation_ = {orientation.x / n, orientation.y / n, orientation.z / n, orientation.w / n};
  }

  const Vec3& position() const noexcept { return position_; }
  const Quaternion& orientation() const noexcept { return orientation_; }

  friend bool operator==(const Pose&, const Pose&) = default;

 private:
  Vec3 position_{};
  Quaternion orientation_{};
};

/// Euclidean distance between the translations of two poses, in meters.
inline double pose_distance(const Pose& a, const Pose& b) noexcept {
  return (a.position() - b.position()).norm();
}

/// Minimum arc-length step; repeated poses would otherwise produce a zero
/// spacing in the finite-difference grid.
inline constexpr double kMinArcStep = 1e-6;

/// Running path length over a pose sequence. Steps shorter than kMinArcStep
/// are clamped up so the result is strictly increasing.
inline std::vector<double> cumulative_arclength(std::span<const Pose> poses) {
  if (poses.empty()) throw InvalidArgument("empty pose sequence");
  std::vector<double> out(poses.size());
  out[0] = 0.0;
  for (std::size_t i = 1; i < poses.size(); ++i) {
    out[i] = out[i - 1] + std::max(pose_distance(poses[i - 1], poses[i]), kMinArcStep);
  }
  return out;
}

/// Fixed-length descriptor vector. Held in double precision in memory.
class Descriptor {
 public:
  Descriptor() = default;
  explicit Descriptor(std::vector<double> values) : values_(std::move(values)) {
    for (double v : values_) {
      if (!std::isfinite(v)) throw DataError("descriptor contains a non-finite value");
    }
  }
  Descriptor(std::initializer_list<double> values) : Descriptor(std::vector<double>(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }

  friend bool operator==(const Descriptor&, const Descriptor&) = default;

 private:
  std::vector<double> values_;
};

/// Row-major N x M matrix; row i is the descriptor of frame/keyframe i.
class DescriptorMatrix {
 public:
  DescriptorMatrix() = default;
  DescriptorMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DescriptorMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw InvalidArgument("descriptor matrix data size mismatch");
  }

  static DescriptorMatrix from_rows(std::span<const Descriptor> rows) {
    if (rows.empty()) return {};
    DescriptorMatrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m.cols_) throw InvalidArgument("descriptor dimension mismatch");
      std::copy(rows[i].values().begin(), rows[i].values().end(), m.row(i).begin());
    }
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  Descriptor descriptor(std::size_t r) const {
    auto v = row(r);
    return Descriptor(std::vector<double>(v.begin(), v.end()));
  }

  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const DescriptorMatrix&, const DescriptorMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// One LiDAR return in the sensor frame, meters. Intensity is carried but unused.
struct Point {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;
  float intensity = 0.0f;

  friend bool operator==(const Point&, const Point&) = default;
};

using PointCloud = std::vector<Point>;

using KeyframeId = std::uint64_t;

/// (pose, scan, descriptor) triplet. The scan is held by reference only.
struct Keyframe {
  KeyframeId id = 0;
  Pose pose;
  Descriptor descriptor;
  std::optional<std::filesystem::path> scan_ref;
};

/// Append-only keyframe collection with an exact radius index over positions.
///
/// The index is a uniform hash grid. Appends invalidate nothing; readers may
/// query concurrently between appends.
class KeyframeStore {
 public:
  explicit KeyframeStore(double cell_size = 5.0) : cell_size_(cell_size) {
    if (!(cell_size > 0.0)) throw InvalidArgument("cell size must be positive");
  }

  /// Appends the keyframe unless its id is already present. Returns true when added.
  bool append(Keyframe kf) {
    if (!index_of_.emplace(kf.id, keyframes_.size()).second) return false;
    if (dimension_ == 0) {
      dimension_ = kf.descriptor.size();
    } else if (kf.descriptor.size() != dimension_) {
      index_of_.erase(kf.id);
      throw InvalidArgument("keyframe descriptor dimension differs from store dimension");
    }
    grid_[cell_of(kf.pose.position())].push_back(keyframes_.size());
    keyframes_.push_back(std::move(kf));
    return true;
  }

  bool contains(KeyframeId id) const noexcept { return index_of_.count(id) != 0; }
  const Keyframe& at(KeyframeId id) const {
    auto it = index_of_.find(id);
    if (it == index_of_.end()) throw InvalidArgument("unknown keyframe id " + std::to_string(id));
    return keyframes_[it->second];
  }

  std::size_t size() const noexcept { return keyframes_.size(); }
  bool empty() const noexcept { return keyframes_.empty(); }
  std::span<const Keyframe> keyframes() const noexcept { return keyframes_; }

  std::vector<KeyframeId> ids() const {
    std::vector<KeyframeId> out;
    out.reserve(keyframes_.size());
    for (const auto& k : keyframes_) out.push_back(k.id);
    return out;
  }

  /// Ids of keyframes within `radius` (inclusive) of `center`, ascending.
  std::vector<KeyframeId> radius_query(const Vec3& center, double radius) const {
    if (!(radius > 0.0)) throw InvalidArgument("radius must be positive");
    std::vector<KeyframeId> out;
    const auto lo = cell_of(center - Vec3{radius, radius, radius});
    const auto hi = cell_of(center + Vec3{radius, radius, radius});
    const double span = static_cast<double>(hi[0] - lo[0] + 1) * static_cast<double>(hi[1] - lo[1] + 1) *
                        static_cast<double>(hi[2] - lo[2] + 1);
    auto consider = [&](std::size_t idx) {
      const auto& k = keyframes_[idx];
      if ((k.pose.position() - center).norm() <= radius) out.push_back(k.id);
    };
    if (span > static_cast<double>(grid_.size())) {
      for (std::size_t i = 0; i < keyframes_.size(); ++i) consider(i);
    } else {
      for (auto cx = lo[0]; cx <= hi[0]; ++cx)
        for (auto cy = lo[1]; cy <= hi[1]; ++cy)
          for (auto cz = lo[2]; cz <= hi[2]; ++cz) {
            auto it = grid_.find({cx, cy, cz});
            if (it == grid_.end()) continue;
            for (std::size_t idx : it->second) consider(idx);
          }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<KeyframeId> radius_query(const Pose& center, double radius) const {
    return radius_query(center.position(), radius);
  }

 private:
  using Cell = std::array<std::int64_t, 3>;
  struct CellHash {
    std::size_t operator()(const Cell& c) const noexcept {
      std::uint64_t h = 1469598103934665603ULL;
      for (auto v : c) {
        h ^= static_cast<std::uint64_t>(v);
        h *= 1099511628211ULL;
      }
      return static_cast<std::size_t>(h);
    }
  };

  Cell cell_of(const Vec3& p) const noexcept {
    return {static_cast<std::int64_t>(std::floor(p.x / cell_size_)),
            static_cast<std::int64_t>(std::floor(p.y / cell_size_)),
            static_cast<std::int64_t>(std::floor(p.z / cell_size_))};
  }

  double cell_size_;
  std::size_t dimension_ = 0;
  std::vector<Keyframe> keyframes_;
  std::unordered_map<KeyframeId, std::size_t> index_of_;
  std::unordered_map<Cell, std::vector<std::size_t>, CellHash> grid_;
};

/// One mapping or query sequence.
struct Session {
  std::vector<Pose> poses;
  std::optional<DescriptorMatrix> descriptors;
  std::optional<std::vector<std::filesystem::path>> scan_paths;
  std::vector<double> timestamps;

  std::size_t frame_count() const noexcept { return poses.size(); }

  void validate() const {
    if (descriptors && descriptors->rows() != poses.size()) {
      throw DataError("session has " + std::to_string(poses.size()) + " poses but " +
                      std::to_string(descriptors->rows()) + " descriptors");
    }
    if (scan_paths && scan_paths->size() != poses.size()) {
      throw DataError("session has " + std::to_string(poses.size()) + " poses but " +
                      std::to_string(scan_paths->size()) + " scans");
    }
    if (!timestamps.empty() && timestamps.size() != poses.size()) {
      throw DataError("session timestamp count differs from pose count");
    }
  }

  /// Keyframe view of frame i; ids are frame indices.
  Keyframe keyframe(std::size_t i) const {
    if (!descriptors) throw DataError("session has no descriptors");
    Keyframe k{static_cast<KeyframeId>(i), poses.at(i), descriptors->descriptor(i), std::nullopt};
    if (scan_paths) k.scan_ref = (*scan_paths)[i];
    return k;
  }
};

}  // namespace kfs
