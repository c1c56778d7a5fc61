#pragma once

// Retrieval evaluation for global place recognition (GPR) and loop closure
// detection (LCD): top-1 retrieval by descriptor distance, a threshold sweep
// into precision/recall points, PR-AUC, F1-max, memory ratio and query time.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kfsample/core.hpp"
#include "kfsample/descriptors.hpp"
#include "kfsample/error.hpp"
#include "kfsample/terms.hpp"

namespace kfs {

enum class EvalTask { gpr, lcd };

struct EvalConfig {
  double tp_radius = 5.0;  ///< meters
  std::size_t lcd_k = 25;
  std::size_t lcd_exclusion_frames = 100;
  std::optional<double> lcd_exclusion_seconds;  ///< overrides frames when timestamps exist
  EvalTask task = EvalTask::gpr;
  std::size_t thresholds = 200;
  std::optional<ScanContextConfig> sector_shift;  ///< opt-in shift-minimized distance

  void validate() const {
    if (!(tp_radius > 0.0)) throw InvalidArgument("tp_radius must be positive");
    if (lcd_k < 1) throw InvalidArgument("lcd_k must be >= 1");
    if (thresholds < 1) throw InvalidArgument("thresholds must be >= 1");
  }
};

struct PrPoint {
  double threshold = 0.0;
  double precision = 1.0;
  double recall = 0.0;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct EvalReport {
  std::vector<PrPoint> pr_points;  ///< ascending threshold
  double auc = 0.0;
  double f1_max = 0.0;
  double memory_ratio = 1.0;
  double query_wall_time = 0.0;  ///< seconds
  Confusion counts;              ///< at the F1-max threshold
  std::size_t queries = 0;       ///< evaluated queries
  std::size_t map_size = 0;
};

/// Top-1 retrieval result of one query.
struct QueryOutcome {
  double distance = 0.0;     ///< descriptor distance to the retrieved keyframe
  bool gt_positive = false;  ///< some map keyframe lies within tp_radius
  bool correct = false;      ///< retrieved keyframe lies within tp_radius
};

inline double harmonic_f1(double precision, double recall) noexcept {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

inline double f1_max(std::span<const PrPoint> points) {
  if (points.empty()) throw InvalidArgument("f1_max needs at least one PR point");
  double best = 0.0;
  for (const auto& p : points) best = std::max(best, harmonic_f1(p.precision, p.recall));
  return best;
}

/// Trapezoidal area under precision(recall) after sorting by recall and
/// keeping the highest precision per recall value; clipped to [0, 1].
inline double auc(std::span<const PrPoint> points) {
  if (points.size() < 2) throw InvalidArgument("auc needs at least two PR points");
  std::vector<std::pair<double, double>> rp;
  rp.reserve(points.size());
  for (const auto& p : points) rp.emplace_back(p.recall, p.precision);
  std::sort(rp.begin(), rp.end());
  std::vector<std::pair<double, double>> uniq;
  for (const auto& [r, p] : rp) {
    if (!uniq.empty() && uniq.back().first == r) {
      uniq.back().second = std::max(uniq.back().second, p);
    } else {
      uniq.emplace_back(r, p);
    }
  }
  double area = 0.0;
  for (std::size_t i = 1; i < uniq.size(); ++i) {
    area += (uniq[i].first - uniq[i - 1].first) * 0.5 * (uniq[i].second + uniq[i - 1].second);
  }
  return std::clamp(area, 0.0, 1.0);
}

/// AUC of a sweep curve, extended flat to recall 0 from its lowest-recall
/// point. A curve that never leaves a single recall value has zero area.
inline double curve_auc(std::span<const PrPoint> points) {
  if (points.empty()) return 0.0;
  std::vector<PrPoint> ext(points.begin(), points.end());
  auto lowest = std::min_element(ext.begin(), ext.end(), [](const PrPoint& a, const PrPoint& b) {
    return a.recall < b.recall || (a.recall == b.recall && a.precision > b.precision);
  });
  if (lowest->recall > 0.0) ext.push_back({0.0, lowest->precision, 0.0});
  double lo = ext.front().recall, hi = lo;
  for (const auto& p : ext) {
    lo = std::min(lo, p.recall);
    hi = std::max(hi, p.recall);
  }
  if (hi == lo) return 0.0;
  return auc(ext);
}

inline double memory_ratio(std::size_t selected_count, std::size_t total_count) {
  if (total_count == 0) throw InvalidArgument("memory ratio undefined for zero total frames");
  if (selected_count == 0 || selected_count > total_count) {
    throw InvalidArgument("memory ratio needs 0 < selected <= total");
  }
  return static_cast<double>(selected_count) / static_cast<double>(total_count);
}

/// Thresholds at `count` evenly spaced quantiles (linear interpolation) of the
/// observed distances, ascending.
inline std::vector<double> quantile_thresholds(std::vector<double> distances, std::size_t count) {
  std::vector<double> out;
  if (distances.empty()) return out;
  std::sort(distances.begin(), distances.end());
  const std::size_t n = distances.size();
  for (std::size_t k = 0; k < count; ++k) {
    const double q = count == 1 ? 1.0 : static_cast<double>(k) / static_cast<double>(count - 1);
    const double pos = q * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    out.push_back(distances[lo] + frac * (distances[hi] - distances[lo]));
  }
  return out;
}

inline Confusion confusion_at(std::span<const QueryOutcome> outcomes, double threshold) {
  Confusion c;
  for (const auto& o : outcomes) {
    const bool predicted = o.distance <= threshold;
    if (predicted && o.correct) ++c.tp;
    if (predicted && !o.correct) ++c.fp;
    if (o.gt_positive && (!predicted || !o.correct)) ++c.fn;
    if (!o.gt_positive && !predicted) ++c.tn;
  }
  return c;
}

/// Precision is 1 when nothing is predicted; recall is 0 when there are no
/// ground-truth positives.
inline PrPoint pr_point(const Confusion& c, double threshold) {
  PrPoint p{threshold, 1.0, 0.0};
  if (c.tp + c.fp > 0) p.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) p.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return p;
}

/// Sweeps the decision threshold over the outcomes and fills the PR part of a report.
inline EvalReport summarize(std::span<const QueryOutcome> outcomes, std::size_t threshold_count) {
  EvalReport r;
  r.queries = outcomes.size();
  std::vector<double> distances;
  distances.reserve(outcomes.size());
  for (const auto& o : outcomes) distances.push_back(o.distance);
  double best = -1.0;
  for (double t : quantile_thresholds(std::move(distances), threshold_count)) {
    const auto c = confusion_at(outcomes, t);
    const auto p = pr_point(c, t);
    r.pr_points.push_back(p);
    const double f1 = harmonic_f1(p.precision, p.recall);
    if (f1 > best) {
      best = f1;
      r.counts = c;
    }
  }
  r.f1_max = r.pr_points.empty() ? 0.0 : f1_max(r.pr_points);
  r.auc = curve_auc(r.pr_points);
  return r;
}

/// Keyframes used as the retrieval database: parallel poses and descriptors.
struct MapSet {
  std::vector<Pose> poses;
  DescriptorMatrix descriptors;
  std::vector<KeyframeId> ids;

  std::size_t size() const noexcept { return poses.size(); }

  static MapSet from_session(const Session& s, std::span<const KeyframeId> ids) {
    if (!s.descriptors) throw DataError("map session has no descriptors");
    MapSet m;
    m.descriptors = DescriptorMatrix(ids.size(), s.descriptors->cols());
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (ids[r] >= s.frame_count()) throw DataError("map id " + std::to_string(ids[r]) + " out of range");
      m.poses.push_back(s.poses[ids[r]]);
      auto src = s.descriptors->row(ids[r]);
      std::copy(src.begin(), src.end(), m.descriptors.row(r).begin());
      m.ids.push_back(ids[r]);
    }
    return m;
  }

  static MapSet from_session(const Session& s) {
    std::vector<KeyframeId> all(s.frame_count());
    std::iota(all.begin(), all.end(), KeyframeId{0});
    return from_session(s, all);
  }
};

namespace detail {

inline double retrieval_distance(std::span<const double> a, std::span<const double> b, const EvalConfig& config) {
  return config.sector_shift ? sector_shift_distance(a, b, *config.sector_shift) : descriptor_distance(a, b);
}

}  // namespace detail

/// Every query is matched against the whole map.
inline EvalReport evaluate_gpr(const MapSet& map, const Session& query, const EvalConfig& config) {
  config.validate();
  if (map.size() == 0 || query.frame_count() == 0) throw InvalidArgument("GPR needs nonempty map and query sets");
  if (!query.descriptors) throw DataError("query session has no descriptors");
  if (map.descriptors.cols() != query.descriptors->cols()) {
    throw InvalidArgument("map descriptors have dimension " + std::to_string(map.descriptors.cols()) +
                          " but query descriptors have " + std::to_string(query.descriptors->cols()));
  }

  std::vector<QueryOutcome> outcomes(query.frame_count());
  std::vector<std::size_t> best(query.frame_count(), 0);
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t q = 0; q < query.frame_count(); ++q) {
    double dmin = std::numeric_limits<double>::infinity();
    const auto qd = query.descriptors->row(q);
    for (std::size_t i = 0; i < map.size(); ++i) {
      const double d = detail::retrieval_distance(qd, map.descriptors.row(i), config);
      if (d < dmin) {
        dmin = d;
        best[q] = i;
      }
    }
    outcomes[q].distance = dmin;
  }
  const auto t1 = std::chrono::steady_clock::now();

  for (std::size_t q = 0; q < query.frame_count(); ++q) {
    const auto& qp = query.poses[q];
    outcomes[q].correct = pose_distance(map.poses[best[q]], qp) <= config.tp_radius;
    bool any = outcomes[q].correct;
    for (std::size_t i = 0; i < map.size() && !any; ++i) any = pose_distance(map.poses[i], qp) <= config.tp_radius;
    outcomes[q].gt_positive = any;
  }

  auto report = summarize(outcomes, config.thresholds);
  report.query_wall_time = std::chrono::duration<double>(t1 - t0).count();
  report.map_size = map.size();
  return report;
}

/// In-session retrieval: each frame queries the sampled keyframes older than
/// the exclusion window, takes its lcd_k nearest by descriptor distance and
/// keeps the best. Frames without candidates are not evaluated.
inline EvalReport evaluate_lcd(const Session& session, std::span<const KeyframeId> selected_ids,
                               const EvalConfig& config) {
  config.validate();
  session.validate();
  if (!session.descriptors) throw DataError("LCD session has no descriptors");
  std::vector<KeyframeId> ids(selected_ids.begin(), selected_ids.end());
  std::sort(ids.begin(), ids.end());
  for (auto id : ids) {
    if (id >= session.frame_count()) throw DataError("selected id " + std::to_string(id) + " out of range");
  }
  const bool by_time = config.lcd_exclusion_seconds && !session.timestamps.empty();
  auto is_old_enough = [&](KeyframeId cand, std::size_t q) {
    if (by_time) return session.timestamps[q] - session.timestamps[cand] > *config.lcd_exclusion_seconds;
    return cand < q && q - cand > config.lcd_exclusion_frames;
  };

  std::vector<QueryOutcome> outcomes;
  std::vector<std::pair<double, KeyframeId>> scored;
  std::size_t available = 0;
  double sweep_seconds = 0.0;
  for (std::size_t q = 0; q < session.frame_count(); ++q) {
    while (available < ids.size() && is_old_enough(ids[available], q)) ++available;
    if (available == 0) continue;

    const auto t0 = std::chrono::steady_clock::now();
    scored.clear();
    const auto qd = session.descriptors->row(q);
    for (std::size_t i = 0; i < available; ++i) {
      scored.emplace_back(detail::retrieval_distance(qd, session.descriptors->row(ids[i]), config), ids[i]);
    }
    const std::size_t k = std::min(config.lcd_k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());
    sweep_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    QueryOutcome o;
    o.distance = scored.front().first;
    o.correct = pose_distance(session.poses[scored.front().second], session.poses[q]) <= config.tp_radius;
    bool any = o.correct;
    for (std::size_t i = 0; i < available && !any; ++i) {
      any = pose_distance(session.poses[ids[i]], session.poses[q]) <= config.tp_radius;
    }
    o.gt_positive = any;
    outcomes.push_back(o);
  }

  auto report = summarize(outcomes, config.thresholds);
  report.query_wall_time = sweep_seconds;
  report.map_size = ids.size();
  return report;
}

struct QueryBenchmark {
  double seconds = 0.0;
  std::size_t comparisons = 0;
  std::size_t map_size = 0;
  double checksum = 0.0;  ///< sum of top-1 distances; keeps the sweep observable
};

/// Wall time of the all-queries x all-map linear distance sweep.
inline QueryBenchmark query_benchmark(const DescriptorMatrix& map, const DescriptorMatrix& queries) {
  QueryBenchmark b;
  b.map_size = map.rows();
  if (map.rows() > 0 && queries.rows() > 0 && map.cols() != queries.cols()) {
    throw InvalidArgument("map and query descriptor dimensions differ");
  }
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < map.rows(); ++i) {
      dmin = std::min(dmin, descriptor_distance(queries.row(q), map.row(i)));
      ++b.comparisons;
    }
    if (map.rows() > 0) b.checksum += dmin;
  }
  b.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return b;
}

struct TermsSummary {
  double rho = 0.0;
  double pi = 0.0;
  std::size_t windows = 0;  ///< windows averaged into pi
};

/// ρ over the whole selected set (frame order) and π averaged over every run
/// of `window` consecutive selected keyframes. A set shorter than `window`
/// counts as one window.
inline TermsSummary measure_terms(const Session& session, std::span<const KeyframeId> selected_ids,
                                  std::size_t window = 10) {
  if (!session.descriptors) throw DataError("terms need descriptors");
  if (window < 2) throw InvalidArgument("terms window must be at least 2");
  std::vector<KeyframeId> ids(selected_ids.begin(), selected_ids.end());
  std::sort(ids.begin(), ids.end());
  if (ids.size() < 2) throw InvalidArgument("terms need at least two selected keyframes");
  std::vector<Pose> poses;
  DescriptorMatrix d(ids.size(), session.descriptors->cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= session.frame_count()) throw DataError("selected id " + std::to_string(ids[r]) + " out of range");
    poses.push_back(session.poses[ids[r]]);
    auto src = session.descriptors->row(ids[r]);
    std::copy(src.begin(), src.end(), d.row(r).begin());
  }
  TermsSummary t;
  t.rho = redundancy(d);
  const std::size_t w = std::min(window, ids.size());
  double sum = 0.0;
  for (std::size_t start = 0; start + w <= ids.size(); ++start) {
    DescriptorMatrix part(w, d.cols());
    for (std::size_t r = 0; r < w; ++r) std::copy(d.row(start + r).begin(), d.row(start + r).end(), part.row(r).begin());
    sum += preservation(std::span<const Pose>(poses).subspan(start, w), part);
    ++t.windows;
  }
  t.pi = sum / static_cast<double>(t.windows);
  return t;
}

}  // namespace kfs
