#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "kfsample/kfsample.hpp"

namespace kfs::fixtures {

inline Pose at(double x, double y = 0.0, double z = 0.0) { return Pose(Vec3{x, y, z}); }

inline Keyframe keyframe(KeyframeId id, double x, std::vector<double> desc, double y = 0.0) {
  return Keyframe{id, at(x, y), Descriptor(std::move(desc)), std::nullopt};
}

/// Random-walk window: heading drifts slowly, steps uniform in [min_step, max_step].
inline std::vector<Keyframe> random_window(Rng& rng, std::size_t n, std::size_t dim, double min_step = 0.3,
                                           double max_step = 2.2) {
  std::vector<Keyframe> w;
  Vec3 p{rng.uniform(-50, 50), rng.uniform(-50, 50), 0.0};
  double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> d(dim);
    for (auto& v : d) v = rng.uniform(-1.0, 1.0);
    w.push_back(Keyframe{i, Pose(p), Descriptor(std::move(d)), std::nullopt});
    heading += rng.uniform(-0.4, 0.4);
    const double step = rng.uniform(min_step, max_step);
    p = p + Vec3{step * std::cos(heading), step * std::sin(heading), rng.uniform(-0.05, 0.05)};
  }
  return w;
}

inline std::vector<Pose> poses_of(const std::vector<Keyframe>& w) {
  std::vector<Pose> p;
  for (const auto& k : w) p.push_back(k.pose);
  return p;
}

inline Session line_session(const std::vector<double>& xs, std::size_t dim = 2) {
  Session s;
  DescriptorMatrix d(xs.size(), dim);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    s.poses.push_back(at(xs[i]));
    for (std::size_t c = 0; c < dim; ++c) d(i, c) = std::sin(0.3 * xs[i] + static_cast<double>(c));
  }
  s.descriptors = d;
  return s;
}

inline SyntheticSessionSpec loop_spec(std::size_t laps, double spacing, std::uint64_t seed, double length = 200.0,
                                      std::size_t dim = 32) {
  SyntheticSessionSpec spec;
  spec.shape = TrajectoryShape::loop;
  spec.length = length;
  spec.frame_spacing = spacing;
  spec.revisit_laps = laps;
  spec.descriptor = SyntheticFieldConfig::random(dim, seed, 0.5);
  spec.seed = seed;
  return spec;
}

}  // namespace kfs::fixtures
