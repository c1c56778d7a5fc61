#pragma once

// Sliding-window keyframe optimization.
//
// Frames are buffered into a window of N keyframes. When the window is full
// it is extended with previously stored keyframes that revisit the same area,
// every anchored subset whose consecutive pose gaps lie in [δl, δu] is scored
// with (ρ + α)/(π − β), and the minimizer is merged into the store. The last
// selected window keyframe becomes the anchor of the next window, and the
// unselected keyframes after it are re-evaluated there.
//
// Indices are 0-based in code. slide_amount() takes the 1-based index of the
// last selected keyframe so its result matches s = N − (i_n − 1).

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kfsample/core.hpp"
#include "kfsample/error.hpp"
#include "kfsample/terms.hpp"

namespace kfs {

struct WindowConfig {
  std::size_t window_size = 10;
  double delta_lower = 1.0;  ///< meters
  double delta_upper = 5.0;  ///< meters
  ObjectiveParams params{};
  std::size_t extension_cap_extra = 5;
  /// Stored keyframes count as revisit neighbors of a window keyframe only
  /// when the path travelled between them exceeds this (meters). Keeps the
  /// keyframes selected just before the window from being treated as revisits.
  double revisit_min_travel = 10.0;
  /// Optional pre-gate: frames closer than this to the last accepted frame
  /// are skipped. 0 disables it.
  double min_motion = 0.0;

  void validate() const {
    if (window_size < 2) throw InvalidArgument("window size must be at least 2");
    if (!(delta_lower > 0.0) || !(delta_lower <= delta_upper)) {
      throw InvalidArgument("distance limits must satisfy 0 < delta_lower <= delta_upper");
    }
    if (!(revisit_min_travel >= 0.0) || !(min_motion >= 0.0)) {
      throw InvalidArgument("revisit_min_travel and min_motion must be non-negative");
    }
    params.validate();
  }

  std::size_t extended_capacity() const noexcept { return window_size + extension_cap_extra; }
};

struct SubsetSelection {
  std::vector<std::size_t> indices;  ///< into the (extended) window; indices[0] == 0
  double objective_value = 0.0;
  bool relaxed = false;  ///< chosen without the distance limits
};

using Subset = std::vector<std::size_t>;

/// Every subset containing index 0, of size >= 2, whose consecutive selected
/// poses are between δl and δu apart (inclusive). Depth-first; a partial
/// chain is extended only through admissible gaps. Output is in DFS
/// (lexicographic) order.
inline std::vector<Subset> enumerate_feasible_subsets(std::span<const Pose> poses, const WindowConfig& config) {
  std::vector<Subset> out;
  const std::size_t n = poses.size();
  if (n < 2) return out;

  std::vector<std::vector<std::uint8_t>> admissible(n, std::vector<std::uint8_t>(n, 0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = pose_distance(poses[i], poses[j]);
      admissible[i][j] = (d >= config.delta_lower && d <= config.delta_upper) ? 1 : 0;
    }

  Subset chain{0};
  auto dfs = [&](auto&& self, std::size_t last) -> void {
    for (std::size_t next = last + 1; next < n; ++next) {
      if (!admissible[last][next]) continue;
      chain.push_back(next);
      out.push_back(chain);
      self(self, next);
      chain.pop_back();
    }
  };
  dfs(dfs, 0);
  return out;
}

inline std::vector<Subset> enumerate_feasible_subsets(std::span<const Keyframe> window, const WindowConfig& config) {
  std::vector<Pose> poses;
  poses.reserve(window.size());
  for (const auto& k : window) poses.push_back(k.pose);
  return enumerate_feasible_subsets(poses, config);
}

/// All subsets containing index 0 with size >= 2, distance limits ignored.
inline std::vector<Subset> enumerate_anchored_subsets(std::size_t n) {
  std::vector<Subset> out;
  if (n < 2) return out;
  Subset chain{0};
  auto dfs = [&](auto&& self, std::size_t last) -> void {
    for (std::size_t next = last + 1; next < n; ++next) {
      chain.push_back(next);
      out.push_back(chain);
      self(self, next);
      chain.pop_back();
    }
  };
  dfs(dfs, 0);
  return out;
}

/// Scores one subset of a window given as parallel pose / descriptor arrays.
inline double subset_objective(std::span<const Pose> poses, const DescriptorMatrix& descriptors,
                               std::span<const std::size_t> subset, const ObjectiveParams& params) {
  std::vector<Pose> sub_poses;
  sub_poses.reserve(subset.size());
  DescriptorMatrix sub(subset.size(), descriptors.cols());
  for (std::size_t r = 0; r < subset.size(); ++r) {
    sub_poses.push_back(poses[subset[r]]);
    auto src = descriptors.row(subset[r]);
    std::copy(src.begin(), src.end(), sub.row(r).begin());
  }
  return objective_value(redundancy(sub), preservation(sub_poses, sub), params);
}

/// True when candidate (value, subset) beats incumbent: lower objective, then
/// smaller subset, then lexicographically smaller indices.
inline bool better_selection(double value, const Subset& subset, double best_value, const Subset& best) {
  if (value != best_value) return value < best_value;
  if (subset.size() != best.size()) return subset.size() < best.size();
  return subset < best;
}

struct OptimizeStats {
  std::size_t candidates = 0;
};

/// Minimizes the objective over the feasible subsets of the window. When no
/// subset satisfies the distance limits, falls back to all anchored subsets
/// and flags the selection as relaxed.
inline SubsetSelection optimize_window(std::span<const Keyframe> window, const WindowConfig& config,
                                       OptimizeStats* stats = nullptr) {
  if (window.size() < 2) throw InvalidArgument("window needs at least two keyframes");
  config.params.validate();

  std::vector<Pose> poses;
  std::vector<Descriptor> descs;
  poses.reserve(window.size());
  descs.reserve(window.size());
  for (const auto& k : window) {
    poses.push_back(k.pose);
    descs.push_back(k.descriptor);
  }
  const auto descriptors = DescriptorMatrix::from_rows(descs);

  SubsetSelection sel;
  auto candidates = enumerate_feasible_subsets(poses, config);
  if (candidates.empty()) {
    candidates = enumerate_anchored_subsets(window.size());
    sel.relaxed = true;
  }
  if (stats) stats->candidates = candidates.size();

  double best_value = std::numeric_limits<double>::infinity();
  const Subset* best = nullptr;
  for (const auto& s : candidates) {
    const double v = subset_objective(poses, descriptors, s, config.params);
    if (!best || better_selection(v, s, best_value, *best)) {
      best_value = v;
      best = &s;
    }
  }
  sel.indices = *best;
  sel.objective_value = best_value;
  return sel;
}

/// s = N − (i_n − 1) for a window whose last selected keyframe has 1-based
/// index i_n. This is also the number of keyframes carried into the next
/// window (k_{i_n} .. k_N); N − s fresh frames complete it.
inline std::size_t slide_amount(std::size_t last_selected_one_based, const WindowConfig& config) {
  if (last_selected_one_based < 1 || last_selected_one_based > config.window_size) {
    throw InvalidArgument("last selected index out of range [1, N]");
  }
  return config.window_size - (last_selected_one_based - 1);
}

/// Current window plus revisit neighbors, in optimization order.
struct KeyframeWindow {
  struct Slot {
    bool neighbor = false;
    std::size_t index = 0;  ///< into entries or extension
  };

  std::vector<Keyframe> entries;    ///< entries[0] is the anchor
  std::vector<Keyframe> extension;  ///< stored keyframes near the window
  std::vector<Slot> order;          ///< combined sequence; empty means entries only

  std::size_t size() const noexcept { return entries.size() + extension.size(); }

  std::vector<Keyframe> sequence() const {
    std::vector<Keyframe> out;
    out.reserve(size());
    if (order.empty()) return entries;
    for (const auto& s : order) out.push_back(s.neighbor ? extension[s.index] : entries[s.index]);
    return out;
  }

  Slot slot(std::size_t i) const { return order.empty() ? Slot{false, i} : order[i]; }
};

struct CycleRecord {
  std::size_t step = 0;
  std::vector<KeyframeId> window_ids;    ///< optimization order
  std::vector<KeyframeId> selected_ids;  ///< optimization order
  std::vector<Pose> selected_poses;
  std::size_t neighbor_count = 0;
  std::size_t candidates = 0;
  double objective_value = 0.0;
  bool relaxed = false;
  double elapsed_ms = 0.0;
};

struct OptimizerState {
  KeyframeStore store;
  KeyframeWindow window;
  std::vector<Keyframe> deferred;
  std::size_t step = 0;

  std::unordered_map<KeyframeId, double> travel;  ///< path length at each seen keyframe
  std::optional<KeyframeId> last_id;
  std::optional<Pose> last_pose;
  std::optional<Pose> last_accepted_pose;
  double path_length = 0.0;

  std::vector<CycleRecord> cycles;
};

/// Appends to the window every stored keyframe within δu of a window keyframe
/// (travel rule applied), ordered so that each neighbor sits immediately
/// before its nearest window keyframe, or immediately after the anchor when
/// the anchor is nearest. When the extended set would exceed N + 5, the last
/// window keyframes move to state.deferred (at least two entries are kept);
/// any remaining excess neighbors are dropped farthest first.
inline KeyframeWindow extend_with_neighbors(OptimizerState& state, const WindowConfig& config) {
  KeyframeWindow win;
  win.entries = state.window.entries;
  if (state.store.empty() || win.entries.empty()) return win;

  std::unordered_set<KeyframeId> in_window;
  for (const auto& k : win.entries) in_window.insert(k.id);

  auto travel_of = [&](KeyframeId id) {
    auto it = state.travel.find(id);
    return it == state.travel.end() ? 0.0 : it->second;
  };
  auto qualifies = [&](const Keyframe& stored, const Keyframe& w) {
    return pose_distance(stored.pose, w.pose) <= config.delta_upper &&
           std::abs(travel_of(w.id) - travel_of(stored.id)) > config.revisit_min_travel;
  };

  std::vector<KeyframeId> candidate_ids;
  {
    std::unordered_set<KeyframeId> seen;
    for (const auto& w : win.entries) {
      for (KeyframeId id : state.store.radius_query(w.pose, config.delta_upper)) {
        if (in_window.count(id) || seen.count(id)) continue;
        if (!qualifies(state.store.at(id), w)) continue;
        seen.insert(id);
        candidate_ids.push_back(id);
      }
    }
    std::sort(candidate_ids.begin(), candidate_ids.end());
  }

  // Neighbors of the current (possibly shortened) entries: (id, nearest entry, distance).
  struct Attached {
    KeyframeId id;
    std::size_t entry;
    double distance;
  };
  auto attach = [&](std::size_t entry_count) {
    std::vector<Attached> out;
    for (KeyframeId id : candidate_ids) {
      const auto& s = state.store.at(id);
      std::optional<Attached> best;
      for (std::size_t e = 0; e < entry_count; ++e) {
        if (!qualifies(s, win.entries[e])) continue;
        const double d = pose_distance(s.pose, win.entries[e].pose);
        if (!best || d < best->distance) best = Attached{id, e, d};
      }
      if (best) out.push_back(*best);
    }
    return out;
  };

  const std::size_t cap = config.extended_capacity();
  std::size_t entry_count = win.entries.size();
  auto attached = attach(entry_count);
  while (entry_count > 2 && entry_count + attached.size() > cap) {
    --entry_count;
    attached = attach(entry_count);
  }
  if (entry_count < win.entries.size()) {
    state.deferred.insert(state.deferred.begin(), win.entries.begin() + static_cast<std::ptrdiff_t>(entry_count),
                          win.entries.end());
    win.entries.resize(entry_count);
  }
  if (entry_count + attached.size() > cap) {
    std::stable_sort(attached.begin(), attached.end(), [](const Attached& a, const Attached& b) {
      if (a.distance != b.distance) return a.distance < b.distance;
      return a.id < b.id;
    });
    attached.resize(cap - entry_count);
    std::sort(attached.begin(), attached.end(), [](const Attached& a, const Attached& b) { return a.id < b.id; });
  }
  if (attached.empty()) return win;

  std::vector<std::vector<std::size_t>> before(entry_count);
  for (const auto& a : attached) {
    before[a.entry].push_back(win.extension.size());
    win.extension.push_back(state.store.at(a.id));
  }
  win.order.push_back({false, 0});
  for (std::size_t x : before[0]) win.order.push_back({true, x});
  for (std::size_t e = 1; e < entry_count; ++e) {
    for (std::size_t x : before[e]) win.order.push_back({true, x});
    win.order.push_back({false, e});
  }
  return win;
}

/// Merges the selection into the store and slides the window: the last
/// selected window keyframe becomes the anchor, followed by the unselected
/// window keyframes after it and then any deferred keyframes. If no window
/// keyframe besides the anchor was selected (only revisit neighbors were),
/// the last window keyframe becomes the anchor.
inline void advance_window(OptimizerState& state, const KeyframeWindow& window, const SubsetSelection& selection) {
  std::optional<std::size_t> last_entry;
  for (std::size_t i : selection.indices) {
    const auto slot = window.slot(i);
    const Keyframe& k = slot.neighbor ? window.extension[slot.index] : window.entries[slot.index];
    state.store.append(k);
    if (!slot.neighbor) last_entry = slot.index;
  }
  std::size_t p = last_entry.value_or(0);
  if (p == 0) p = window.entries.size() - 1;

  std::vector<Keyframe> next(window.entries.begin() + static_cast<std::ptrdiff_t>(p), window.entries.end());
  next.insert(next.end(), state.deferred.begin(), state.deferred.end());
  state.deferred.clear();
  state.window = KeyframeWindow{};
  state.window.entries = std::move(next);
  ++state.step;
}

namespace detail {

inline void run_cycle(OptimizerState& state, const WindowConfig& config, bool extend) {
  const auto t0 = std::chrono::steady_clock::now();
  KeyframeWindow win = extend ? extend_with_neighbors(state, config) : state.window;
  const auto seq = win.sequence();
  OptimizeStats stats;
  const auto sel = optimize_window(seq, config, &stats);
  const auto t1 = std::chrono::steady_clock::now();

  CycleRecord rec;
  rec.step = state.step;
  for (const auto& k : seq) rec.window_ids.push_back(k.id);
  for (std::size_t i : sel.indices) {
    rec.selected_ids.push_back(seq[i].id);
    rec.selected_poses.push_back(seq[i].pose);
  }
  rec.neighbor_count = win.extension.size();
  rec.candidates = stats.candidates;
  rec.objective_value = sel.objective_value;
  rec.relaxed = sel.relaxed;
  rec.elapsed_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  state.cycles.push_back(std::move(rec));

  advance_window(state, win, sel);
}

}  // namespace detail

/// Feeds one frame. Runs an optimization cycle when the window fills up.
inline void process_frame(OptimizerState& state, Keyframe frame, const WindowConfig& config) {
  if (state.last_id && frame.id <= *state.last_id) {
    throw InvalidArgument("frame id " + std::to_string(frame.id) + " is not greater than previous id " +
                          std::to_string(*state.last_id));
  }
  if (!state.window.entries.empty() && frame.descriptor.size() != state.window.entries.front().descriptor.size()) {
    throw InvalidArgument("frame descriptor dimension differs from session dimension");
  }
  if (state.last_pose) state.path_length += pose_distance(*state.last_pose, frame.pose);
  state.last_pose = frame.pose;
  state.last_id = frame.id;

  if (config.min_motion > 0.0 && state.last_accepted_pose &&
      pose_distance(*state.last_accepted_pose, frame.pose) < config.min_motion) {
    return;
  }
  state.last_accepted_pose = frame.pose;
  state.travel[frame.id] = state.path_length;
  state.window.entries.push_back(std::move(frame));

  if (state.window.entries.size() >= config.window_size) detail::run_cycle(state, config, true);
}

/// Flushes the partial last window: one optimization cycle when at least two
/// keyframes are buffered, or the single buffered keyframe appended as is.
inline const KeyframeStore& finalize(OptimizerState& state, const WindowConfig& config) {
  auto& entries = state.window.entries;
  entries.insert(entries.end(), state.deferred.begin(), state.deferred.end());
  state.deferred.clear();
  if (entries.size() >= 2) {
    detail::run_cycle(state, config, false);
  } else if (entries.size() == 1) {
    state.store.append(entries.front());
  }
  state.window = KeyframeWindow{};
  return state.store;
}

/// Convenience owner of an OptimizerState with a fixed configuration.
class SlidingWindowOptimizer {
 public:
  explicit SlidingWindowOptimizer(WindowConfig config) : config_(config) { config_.validate(); }

  void push(Keyframe frame) { process_frame(state_, std::move(frame), config_); }
  const KeyframeStore& finish() { return finalize(state_, config_); }

  const OptimizerState& state() const noexcept { return state_; }
  const WindowConfig& config() const noexcept { return config_; }

 private:
  WindowConfig config_;
  OptimizerState state_;
};

}  // namespace kfs
