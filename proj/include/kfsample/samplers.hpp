#pragma once

// Keyframe samplers behind one interface: keep-all, constant distance,
// spaciousness-adaptive distance, scan-entropy change, and the sliding-window
// optimizer.
//
// The spaciousness and entropy samplers are reimplementations at the level a
// comparison needs, not ports of their original systems.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "kfsample/core.hpp"
#include "kfsample/dataset_io.hpp"
#include "kfsample/error.hpp"
#include "kfsample/window_optimizer.hpp"

namespace kfs {

enum class SamplerMethod { all, constant, spaciousness, entropy, optimized };

inline const char* to_string(SamplerMethod m) noexcept {
  switch (m) {
    case SamplerMethod::all: return "all";
    case SamplerMethod::constant: return "constant";
    case SamplerMethod::spaciousness: return "spaciousness";
    case SamplerMethod::entropy: return "entropy";
    case SamplerMethod::optimized: return "optimized";
  }
  return "?";
}

inline std::optional<SamplerMethod> parse_sampler_method(const std::string& s) {
  for (auto m : {SamplerMethod::all, SamplerMethod::constant, SamplerMethod::spaciousness, SamplerMethod::entropy,
                 SamplerMethod::optimized}) {
    if (s == to_string(m)) return m;
  }
  return std::nullopt;
}

struct SamplerConfig {
  SamplerMethod method = SamplerMethod::all;
  double constant_interval = 1.0;
  std::array<double, 3> spaciousness_thresholds{5.0, 10.0, 20.0};
  std::array<double, 4> spaciousness_intervals{0.5, 1.0, 5.0, 10.0};
  double spaciousness_smoothing = 0.95;
  double entropy_threshold = 0.05;  ///< nats
  std::size_t entropy_bins = 64;
  WindowConfig window{};

  void validate() const {
    if (!(constant_interval >= 0.0)) throw InvalidArgument("constant interval must be non-negative");
    for (std::size_t i = 1; i < spaciousness_thresholds.size(); ++i) {
      if (!(spaciousness_thresholds[i] > spaciousness_thresholds[i - 1])) {
        throw InvalidArgument("spaciousness thresholds must be ascending");
      }
    }
    for (double v : spaciousness_intervals) {
      if (!(v > 0.0)) throw InvalidArgument("spaciousness intervals must be positive");
    }
    if (!(spaciousness_smoothing > 0.0 && spaciousness_smoothing < 1.0)) {
      throw InvalidArgument("spaciousness smoothing must lie in (0, 1)");
    }
    if (!(entropy_threshold >= 0.0)) throw InvalidArgument("entropy threshold must be non-negative");
    if (entropy_bins < 1) throw InvalidArgument("entropy bins must be >= 1");
    if (method == SamplerMethod::optimized) window.validate();
  }
};

struct SamplerOutput {
  std::vector<KeyframeId> selected_ids;  ///< ascending
  /// Per-frame diagnostic: spaciousness (m), entropy (nats) or the objective
  /// of the cycle that stored the frame. NaN where not applicable.
  std::vector<double> per_frame_state;
};

/// Point cloud of frame i.
using ScanProvider = std::function<PointCloud(std::size_t)>;

inline ScanProvider scans_from_session(const Session& s, const char* who) {
  if (!s.scan_paths) throw DataError(std::string(who) + " requires point clouds");
  const auto paths = *s.scan_paths;
  return [paths](std::size_t i) { return read_pointcloud_bin(paths.at(i)); };
}

inline SamplerOutput sample_all(const Session& session) {
  SamplerOutput out;
  out.selected_ids.resize(session.frame_count());
  for (std::size_t i = 0; i < session.frame_count(); ++i) out.selected_ids[i] = i;
  out.per_frame_state.assign(session.frame_count(), std::numeric_limits<double>::quiet_NaN());
  return out;
}

namespace detail {

/// Keeps frame 0, then every frame at which the path length accumulated since
/// the last kept frame reaches interval_of(i).
template <typename IntervalFn>
std::vector<KeyframeId> keep_by_travel(const Session& session, IntervalFn&& interval_of) {
  std::vector<KeyframeId> ids;
  if (session.frame_count() == 0) return ids;
  ids.push_back(0);
  double travelled = 0.0;
  for (std::size_t i = 1; i < session.frame_count(); ++i) {
    travelled += pose_distance(session.poses[i - 1], session.poses[i]);
    if (travelled >= interval_of(i)) {
      ids.push_back(i);
      travelled = 0.0;
    }
  }
  return ids;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

inline std::vector<double> point_ranges(const PointCloud& cloud) {
  std::vector<double> r;
  r.reserve(cloud.size());
  for (const auto& p : cloud) {
    r.push_back(std::sqrt(static_cast<double>(p.x) * p.x + static_cast<double>(p.y) * p.y +
                          static_cast<double>(p.z) * p.z));
  }
  return r;
}

}  // namespace detail

inline SamplerOutput sample_constant(const Session& session, double interval) {
  if (!(interval >= 0.0)) throw InvalidArgument("constant interval must be non-negative");
  SamplerOutput out;
  out.selected_ids = detail::keep_by_travel(session, [interval](std::size_t) { return interval; });
  out.per_frame_state.assign(session.frame_count(), std::numeric_limits<double>::quiet_NaN());
  return out;
}

/// Median point range of a scan (meters); 0 for an empty scan.
inline double spaciousness_signal(const PointCloud& scan) { return detail::median(detail::point_ranges(scan)); }

/// Interval of the threshold band containing the spaciousness value.
inline double spaciousness_interval(double spaciousness, const SamplerConfig& config) {
  std::size_t band = 0;
  while (band < config.spaciousness_thresholds.size() && spaciousness >= config.spaciousness_thresholds[band]) ++band;
  return config.spaciousness_intervals[band];
}

/// Smoothed spaciousness m_k = s·m_{k-1} + (1 − s)·median_k, started at the
/// first frame's median; the live band interval drives the distance rule.
inline SamplerOutput sample_spaciousness(const Session& session, const SamplerConfig& config,
                                         const ScanProvider& scans) {
  config.validate();
  SamplerOutput out;
  const std::size_t n = session.frame_count();
  out.per_frame_state.resize(n);
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double raw = spaciousness_signal(scans(i));
    m = i == 0 ? raw : config.spaciousness_smoothing * m + (1.0 - config.spaciousness_smoothing) * raw;
    out.per_frame_state[i] = m;
  }
  out.selected_ids = detail::keep_by_travel(
      session, [&](std::size_t i) { return spaciousness_interval(out.per_frame_state[i], config); });
  return out;
}

inline SamplerOutput sample_spaciousness(const Session& session, const SamplerConfig& config) {
  return sample_spaciousness(session, config, scans_from_session(session, "spaciousness"));
}

/// Shannon entropy (nats) of the range histogram over `bins` equal-width bins
/// spanning [0, max range of the scan].
inline double scan_entropy(const PointCloud& scan, std::size_t bins) {
  if (bins < 1) throw InvalidArgument("entropy bins must be >= 1");
  const auto ranges = detail::point_ranges(scan);
  if (ranges.empty()) return 0.0;
  const double max_range = *std::max_element(ranges.begin(), ranges.end());
  if (!(max_range > 0.0)) return 0.0;
  std::vector<std::size_t> hist(bins, 0);
  for (double r : ranges) {
    auto b = static_cast<std::size_t>(r / max_range * static_cast<double>(bins));
    hist[std::min(b, bins - 1)]++;
  }
  double h = 0.0;
  const double total = static_cast<double>(ranges.size());
  for (auto c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h;
}

/// Keeps frame 0 and every frame whose entropy differs from the last kept
/// frame's by at least the threshold.
inline SamplerOutput sample_entropy(const Session& session, const SamplerConfig& config, const ScanProvider& scans) {
  config.validate();
  SamplerOutput out;
  const std::size_t n = session.frame_count();
  out.per_frame_state.resize(n);
  double last = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double h = scan_entropy(scans(i), config.entropy_bins);
    out.per_frame_state[i] = h;
    if (i == 0 || std::abs(h - last) >= config.entropy_threshold) {
      out.selected_ids.push_back(i);
      last = h;
    }
  }
  return out;
}

inline SamplerOutput sample_entropy(const Session& session, const SamplerConfig& config) {
  return sample_entropy(session, config, scans_from_session(session, "entropy"));
}

/// Runs the sliding-window optimizer over the session in frame order.
inline SamplerOutput sample_optimized(const Session& session, const WindowConfig& config,
                                      std::vector<CycleRecord>* cycles = nullptr) {
  config.validate();
  if (!session.descriptors) throw DataError("optimized sampling requires descriptors for every frame");
  session.validate();
  OptimizerState state;
  for (std::size_t i = 0; i < session.frame_count(); ++i) process_frame(state, session.keyframe(i), config);
  finalize(state, config);

  SamplerOutput out;
  out.selected_ids = state.store.ids();
  std::sort(out.selected_ids.begin(), out.selected_ids.end());
  out.per_frame_state.assign(session.frame_count(), std::numeric_limits<double>::quiet_NaN());
  for (const auto& c : state.cycles) {
    for (auto id : c.selected_ids) {
      if (id < out.per_frame_state.size() && std::isnan(out.per_frame_state[id])) {
        out.per_frame_state[id] = c.objective_value;
      }
    }
  }
  if (cycles) *cycles = std::move(state.cycles);
  return out;
}

/// Dispatches on config.method. Scan-based methods read the session's scans
/// unless a provider is given.
inline SamplerOutput run_sampler(const Session& session, const SamplerConfig& config,
                                 const ScanProvider& scans = {}) {
  config.validate();
  switch (config.method) {
    case SamplerMethod::all: return sample_all(session);
    case SamplerMethod::constant: return sample_constant(session, config.constant_interval);
    case SamplerMethod::spaciousness:
      return scans ? sample_spaciousness(session, config, scans) : sample_spaciousness(session, config);
    case SamplerMethod::entropy:
      return scans ? sample_entropy(session, config, scans) : sample_entropy(session, config);
    case SamplerMethod::optimized: return sample_optimized(session, config.window);
  }
  return {};
}

}  // namespace kfs
