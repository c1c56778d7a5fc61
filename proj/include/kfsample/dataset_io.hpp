#pragma once

// Dataset ingestion and result emission: KITTI / TUM pose text, 16-byte
// point records, synthetic sessions, PR/summary CSV and an SVG PR plot.
//
// Quaternions are (x, y, z, w) everywhere.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kfsample/core.hpp"
#include "kfsample/descriptors.hpp"
#include "kfsample/error.hpp"
#include "kfsample/evaluation.hpp"
#include "kfsample/rng.hpp"

namespace kfs {

enum class PoseFormat { kitti_matrix, tum_quaternion };

struct DatasetLayout {
  PoseFormat pose_format = PoseFormat::kitti_matrix;
  std::filesystem::path pose_path;
  std::optional<std::filesystem::path> scan_dir;
  std::optional<std::filesystem::path> descriptor_path;
};

struct TimedPose {
  double timestamp = 0.0;
  Pose pose;
};

namespace detail {

inline std::vector<double> parse_numbers(const std::string& line, const std::filesystem::path& path,
                                         std::size_t line_no) {
  std::vector<double> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || !std::isfinite(v)) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": invalid number '" + tok + "'");
    }
    out.push_back(v);
  }
  return out;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

/// Writes `content` to a sibling temp file and renames it over `path`.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failure on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

/// Shepperd's method; the input must be a rotation matrix.
inline Quaternion quaternion_from_rotation(const std::array<std::array<double, 3>, 3>& r) {
  const double tr = r[0][0] + r[1][1] + r[2][2];
  Quaternion q;
  if (tr > 0.0) {
    const double s = 2.0 * std::sqrt(1.0 + tr);
    q = {(r[2][1] - r[1][2]) / s, (r[0][2] - r[2][0]) / s, (r[1][0] - r[0][1]) / s, 0.25 * s};
  } else if (r[0][0] > r[1][1] && r[0][0] > r[2][2]) {
    const double s = 2.0 * std::sqrt(1.0 + r[0][0] - r[1][1] - r[2][2]);
    q = {0.25 * s, (r[0][1] + r[1][0]) / s, (r[0][2] + r[2][0]) / s, (r[2][1] - r[1][2]) / s};
  } else if (r[1][1] > r[2][2]) {
    const double s = 2.0 * std::sqrt(1.0 + r[1][1] - r[0][0] - r[2][2]);
    q = {(r[0][1] + r[1][0]) / s, 0.25 * s, (r[1][2] + r[2][1]) / s, (r[0][2] - r[2][0]) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + r[2][2] - r[0][0] - r[1][1]);
    q = {(r[0][2] + r[2][0]) / s, (r[1][2] + r[2][1]) / s, 0.25 * s, (r[1][0] - r[0][1]) / s};
  }
  if (q.w < 0.0) q = {-q.x, -q.y, -q.z, -q.w};
  return q;
}

inline std::array<std::array<double, 3>, 3> rotation_from_quaternion(const Quaternion& q) {
  const double x = q.x, y = q.y, z = q.z, w = q.w;
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
           {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
           {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
}

/// One pose per line: 12 numbers, the row-major 3x4 [R | t].
inline std::vector<Pose> read_kitti_poses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pose file " + path.string());
  std::vector<Pose> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto v = detail::parse_numbers(line, path, line_no);
    if (v.size() != 12) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 12 values, found " +
                    std::to_string(v.size()));
    }
    const std::array<std::array<double, 3>, 3> r{{{v[0], v[1], v[2]}, {v[4], v[5], v[6]}, {v[8], v[9], v[10]}}};
    out.emplace_back(Vec3{v[3], v[7], v[11]}, quaternion_from_rotation(r));
  }
  return out;
}

inline std::string format_kitti_poses(std::span<const Pose> poses) {
  std::string s;
  for (const auto& p : poses) {
    const auto r = rotation_from_quaternion(p.orientation());
    const auto& t = p.position();
    const double row[12] = {r[0][0], r[0][1], r[0][2], t.x, r[1][0], r[1][1], r[1][2], t.y,
                            r[2][0], r[2][1], r[2][2], t.z};
    for (int i = 0; i < 12; ++i) {
      if (i) s += ' ';
      s += detail::format_double(row[i]);
    }
    s += '\n';
  }
  return s;
}

inline void write_kitti_poses(const std::filesystem::path& path, std::span<const Pose> poses) {
  atomic_write(path, format_kitti_poses(poses));
}

/// Lines "t tx ty tz qx qy qz qw"; '#' starts a comment line. Timestamps
/// must be strictly increasing.
inline std::vector<TimedPose> read_tum_poses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pose file " + path.string());
  std::vector<TimedPose> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto v = detail::parse_numbers(line, path, line_no);
    if (v.size() != 8) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 8 values, found " +
                    std::to_string(v.size()));
    }
    if (!out.empty() && !(v[0] > out.back().timestamp)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": timestamps not strictly increasing");
    }
    try {
      out.push_back({v[0], Pose(Vec3{v[1], v[2], v[3]}, Quaternion{v[4], v[5], v[6], v[7]})});
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::string format_tum_poses(std::span<const TimedPose> poses) {
  std::string s;
  for (const auto& tp : poses) {
    const auto& t = tp.pose.position();
    const auto& q = tp.pose.orientation();
    for (double v : {tp.timestamp, t.x, t.y, t.z, q.x, q.y, q.z}) s += detail::format_double(v) + ' ';
    s += detail::format_double(q.w) + '\n';
  }
  return s;
}

inline void write_tum_poses(const std::filesystem::path& path, std::span<const TimedPose> poses) {
  atomic_write(path, format_tum_poses(poses));
}

/// Little-endian float32 quadruples (x, y, z, intensity).
inline PointCloud read_pointcloud_bin(const std::filesystem::path& path) {
  const auto bytes = detail::read_all(path);
  if (bytes.size() % 16 != 0) {
    throw IoError(path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of 16");
  }
  PointCloud cloud(bytes.size() / 16);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const unsigned char* b = bytes.data() + 16 * i;
    cloud[i] = {detail::get_f32(b), detail::get_f32(b + 4), detail::get_f32(b + 8), detail::get_f32(b + 12)};
  }
  return cloud;
}

inline void write_pointcloud_bin(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ostringstream os(std::ios::binary);
  for (const auto& p : cloud) {
    detail::put_f32(os, p.x);
    detail::put_f32(os, p.y);
    detail::put_f32(os, p.z);
    detail::put_f32(os, p.intensity);
  }
  atomic_write(path, os.str());
}

/// Sorted list of *.bin files in a scan directory.
inline std::vector<std::filesystem::path> list_scans(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("scan directory not found: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && detail::has_extension(e.path(), ".bin")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Reads poses, optional descriptors and optional scan list into a session.
inline Session load_session(const DatasetLayout& layout) {
  Session s;
  if (!std::filesystem::exists(layout.pose_path)) throw IoError("pose file not found: " + layout.pose_path.string());
  if (layout.pose_format == PoseFormat::kitti_matrix) {
    s.poses = read_kitti_poses(layout.pose_path);
  } else {
    for (auto& tp : read_tum_poses(layout.pose_path)) {
      s.timestamps.push_back(tp.timestamp);
      s.poses.push_back(tp.pose);
    }
  }
  if (layout.descriptor_path) s.descriptors = load_descriptors(*layout.descriptor_path, s.poses.size());
  if (layout.scan_dir) s.scan_paths = list_scans(*layout.scan_dir);
  s.validate();
  return s;
}

// --- Synthetic sessions ------------------------------------------------------

enum class TrajectoryShape { loop, figure_eight, line };

struct SyntheticSessionSpec {
  TrajectoryShape shape = TrajectoryShape::loop;
  double length = 200.0;        ///< meters per lap
  double frame_spacing = 0.5;   ///< meters
  std::size_t revisit_laps = 1;
  SyntheticFieldConfig descriptor = SyntheticFieldConfig::random(64, 0);
  double pose_noise_sigma = 0.0;  ///< meters, horizontal
  double start_offset = 0.0;      ///< meters along the path
  double frame_period = 0.1;      ///< seconds between frames
  std::uint64_t seed = 0;

  void validate() const {
    if (!(frame_spacing > 0.0)) throw InvalidArgument("frame spacing must be positive");
    if (!(length > 0.0)) throw InvalidArgument("length must be positive");
    if (revisit_laps < 1) throw InvalidArgument("revisit_laps must be >= 1");
    if (!(pose_noise_sigma >= 0.0)) throw InvalidArgument("pose noise must be non-negative");
    descriptor.validate();
  }
};

namespace detail {

/// Arc-length parametrization of the lemniscate x = a sin t, y = a sin t cos t.
class FigureEight {
 public:
  explicit FigureEight(double lap_length) {
    constexpr std::size_t kSamples = 8192;
    t_.resize(kSamples + 1);
    s_.resize(kSamples + 1);
    double s = 0.0;
    Vec3 prev = raw(0.0);
    for (std::size_t i = 0; i <= kSamples; ++i) {
      const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(kSamples);
      const Vec3 p = raw(t);
      s += (p - prev).norm();
      prev = p;
      t_[i] = t;
      s_[i] = s;
    }
    scale_ = lap_length / s_.back();
    for (double& v : s_) v *= scale_;
  }

  Vec3 at(double lap_s) const {
    auto it = std::lower_bound(s_.begin(), s_.end(), lap_s);
    if (it == s_.begin()) return scale_ * raw(0.0);
    if (it == s_.end()) return scale_ * raw(t_.back());
    const auto i = static_cast<std::size_t>(it - s_.begin());
    const double f = (lap_s - s_[i - 1]) / (s_[i] - s_[i - 1]);
    return scale_ * raw(t_[i - 1] + f * (t_[i] - t_[i - 1]));
  }

 private:
  static Vec3 raw(double t) { return {std::sin(t), std::sin(t) * std::cos(t), 0.0}; }

  std::vector<double> t_, s_;
  double scale_ = 1.0;
};

}  // namespace detail

/// Poses along the named shape every frame_spacing meters for revisit_laps
/// laps (out and back for lines), with descriptors from the synthetic field
/// at each (noisy) position. Pure function of the spec.
inline Session generate_synthetic_session(const SyntheticSessionSpec& spec) {
  spec.validate();
  const double lap = spec.length;
  const double total = lap * static_cast<double>(spec.revisit_laps);
  const bool closed = spec.shape != TrajectoryShape::line;
  const auto count = static_cast<std::size_t>(std::floor(total / spec.frame_spacing + 1e-9)) + (closed ? 0 : 1);
  std::optional<detail::FigureEight> eight;
  if (spec.shape == TrajectoryShape::figure_eight) eight.emplace(lap);

  auto position_at = [&](double s) -> Vec3 {
    const double laps_done = std::floor(s / lap + 1e-12);
    double local = std::max(0.0, s - laps_done * lap);
    switch (spec.shape) {
      case TrajectoryShape::line: {
        const auto k = static_cast<long long>(laps_done);
        if (k % 2 == 1) local = lap - local;
        if (local > lap) local = lap;
        return {local, 0.0, 0.0};
      }
      case TrajectoryShape::loop: {
        const double radius = lap / (2.0 * std::numbers::pi);
        const double theta = local / radius;
        return {radius * std::cos(theta), radius * std::sin(theta), 0.0};
      }
      case TrajectoryShape::figure_eight:
        return eight->at(local);
    }
    return {};
  };

  Rng pose_rng(spec.seed);
  Rng desc_rng(spec.seed ^ 0x5eed5eed5eed5eedULL);
  Session session;
  DescriptorMatrix desc(count, spec.descriptor.dimension);
  for (std::size_t i = 0; i < count; ++i) {
    const double s = spec.start_offset + static_cast<double>(i) * spec.frame_spacing;
    Vec3 p = position_at(s);
    const Vec3 ahead = position_at(s + 1e-3);
    const Vec3 behind = position_at(std::max(0.0, s - 1e-3));
    const Vec3 tangent = ahead - behind;
    const double yaw = std::atan2(tangent.y, tangent.x);
    if (spec.pose_noise_sigma > 0.0) {
      p.x += pose_rng.gaussian(0.0, spec.pose_noise_sigma);
      p.y += pose_rng.gaussian(0.0, spec.pose_noise_sigma);
    }
    session.poses.emplace_back(p, Quaternion::from_yaw(yaw));
    session.timestamps.push_back(static_cast<double>(i) * spec.frame_period);
    const auto d = synthetic_descriptor(p, spec.descriptor, &desc_rng);
    std::copy(d.values().begin(), d.values().end(), desc.row(i).begin());
  }
  session.descriptors = std::move(desc);
  return session;
}

// --- Results ------------------------------------------------------------------

inline std::string format_pr_csv(std::span<const PrPoint> points) {
  std::string s = "threshold,precision,recall\n";
  for (const auto& p : points) {
    s += detail::format_double(p.threshold) + ',' + detail::format_double(p.precision) + ',' +
         detail::format_double(p.recall) + '\n';
  }
  return s;
}

inline std::vector<PrPoint> read_pr_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "threshold,precision,recall") {
    throw IoError(path.string() + ": missing PR header");
  }
  std::vector<PrPoint> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    const auto v = detail::parse_numbers(line, path, line_no);
    if (v.size() != 3) throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 3 columns");
    out.push_back({v[0], v[1], v[2]});
  }
  return out;
}

/// One-row summary. Pass std::nullopt for the wall time to leave the column
/// empty (keeps the file reproducible).
inline std::string format_summary_csv(const EvalReport& r, std::optional<double> wall_time) {
  std::string s = "auc,f1_max,memory_ratio,query_wall_time,tp,fp,fn,tn\n";
  s += detail::format_double(r.auc) + ',' + detail::format_double(r.f1_max) + ',' +
       detail::format_double(r.memory_ratio) + ',' + (wall_time ? detail::format_double(*wall_time) : "") + ',' +
       std::to_string(r.counts.tp) + ',' + std::to_string(r.counts.fp) + ',' + std::to_string(r.counts.fn) + ',' +
       std::to_string(r.counts.tn) + '\n';
  return s;
}

/// Precision (y) against recall (x) on [0, 1] x [0, 1].
inline std::string format_svg_plot(std::span<const PrPoint> points, const std::string& title = "Precision-Recall") {
  constexpr double W = 480, H = 400, L = 60, R = 20, T = 40, B = 50;
  const double pw = W - L - R, ph = H - T - B;
  auto px = [&](double r) { return L + std::clamp(r, 0.0, 1.0) * pw; };
  auto py = [&](double p) { return T + (1.0 - std::clamp(p, 0.0, 1.0)) * ph; };
  auto num = [](double v) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << v;
    return os.str();
  };
  std::vector<PrPoint> sorted(points.begin(), points.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const PrPoint& a, const PrPoint& b) { return a.recall < b.recall; });

  std::string escaped;
  for (char c : title) {
    switch (c) {
      case '&': escaped += "&amp;"; break;
      case '<': escaped += "&lt;"; break;
      case '>': escaped += "&gt;"; break;
      default: escaped += c;
    }
  }

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << escaped << "</text>\n"
     << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    os << "<line x1=\"" << num(px(v)) << "\" y1=\"" << T + ph << "\" x2=\"" << num(px(v)) << "\" y2=\""
       << T + ph + 5 << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << num(px(v)) << "\" y=\"" << T + ph + 20 << "\" text-anchor=\"middle\" font-size=\"12\">"
       << num(v) << "</text>\n"
       << "<line x1=\"" << L - 5 << "\" y1=\"" << num(py(v)) << "\" x2=\"" << L << "\" y2=\"" << num(py(v))
       << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << L - 8 << "\" y=\"" << num(py(v) + 4) << "\" text-anchor=\"end\" font-size=\"12\">" << num(v)
       << "</text>\n";
  }
  os << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-size=\"13\">Recall</text>\n"
     << "<text x=\"16\" y=\"" << T + ph / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
     << T + ph / 2 << ")\">Precision</text>\n";
  os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i) os << ' ';
    os << num(px(sorted[i].recall)) << ',' << num(py(sorted[i].precision));
  }
  os << "\"/>\n</svg>\n";
  return os.str();
}

inline void write_svg_plot(std::span<const PrPoint> points, const std::filesystem::path& out_path,
                           const std::string& title = "Precision-Recall") {
  atomic_write(out_path, format_svg_plot(points, title));
}

/// pr.csv and summary.csv in out_dir.
inline void write_results(const EvalReport& report, const std::filesystem::path& out_dir,
                          bool record_wall_time = true) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  atomic_write(out_dir / "pr.csv", format_pr_csv(report.pr_points));
  atomic_write(out_dir / "summary.csv",
               format_summary_csv(report, record_wall_time ? std::optional(report.query_wall_time) : std::nullopt));
}

}  // namespace kfs
