#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "kfsample/kfsample.hpp"
#include "test_support.hpp"

using namespace kfs;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "kfsample_io_tests";
  fs::create_directories(dir);
  return dir / name;
}

fs::path write_text(const std::string& name, const std::string& text) {
  const auto p = scratch(name);
  std::ofstream(p, std::ios::trunc) << text;
  return p;
}

/// Tag balance of a small XML document: every element opened is closed in
/// order, attributes are quoted, and there is exactly one root.
bool well_formed_xml(const std::string& doc) {
  std::vector<std::string> stack;
  std::size_t roots = 0;
  std::size_t i = 0;
  while ((i = doc.find('<', i)) != std::string::npos) {
    const auto close = doc.find('>', i);
    if (close == std::string::npos) return false;
    std::string tag = doc.substr(i + 1, close - i - 1);
    i = close + 1;
    if (tag.starts_with("?")) {
      if (!tag.ends_with("?")) return false;
      continue;
    }
    if (std::count(tag.begin(), tag.end(), '"') % 2 != 0) return false;
    if (tag.starts_with("/")) {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    const bool self_closing = tag.ends_with("/");
    const std::string name = tag.substr(0, tag.find_first_of(" /"));
    if (stack.empty()) ++roots;
    if (!self_closing) stack.push_back(name);
  }
  return stack.empty() && roots == 1;
}

}  // namespace

TEST(KittiPoses, Examples) {
  const auto p = write_text("kitti.txt",
                            "1 0 0 0 0 1 0 0 0 0 1 0\n"
                            "1 0 0 1 0 1 0 2 0 0 1 3\n"
                            "0 -1 0 0 1 0 0 0 0 0 1 0\n");
  const auto poses = read_kitti_poses(p);
  ASSERT_EQ(poses.size(), 3u);
  EXPECT_EQ(poses[0].position().norm(), 0.0);
  EXPECT_EQ(poses[0].orientation().w, 1.0);
  EXPECT_EQ(poses[1].position().x, 1.0);
  EXPECT_EQ(poses[1].position().y, 2.0);
  EXPECT_EQ(poses[1].position().z, 3.0);
  const auto& q = poses[2].orientation();
  EXPECT_NEAR(q.x, 0.0, 1e-9);
  EXPECT_NEAR(q.y, 0.0, 1e-9);
  EXPECT_NEAR(q.z, std::sqrt(0.5), 1e-9);
  EXPECT_NEAR(q.w, std::sqrt(0.5), 1e-9);
}

TEST(KittiPoses, ErrorsNameTheLine) {
  const auto p = write_text("kitti_bad.txt", "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1\n");
  try {
    read_kitti_poses(p);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  const auto q = write_text("kitti_nan.txt", "1 0 0 x 0 1 0 0 0 0 1 0\n");
  EXPECT_THROW(read_kitti_poses(q), IoError);
}

TEST(KittiPoses, RoundTripRandomRotations) {
  Rng rng(3);
  std::vector<Pose> poses;
  for (int i = 0; i < 200; ++i) {
    Quaternion q{rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian()};
    poses.emplace_back(Vec3{rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(-5, 5)}, q);
  }
  const auto p = scratch("kitti_rt.txt");
  write_kitti_poses(p, poses);
  const auto back = read_kitti_poses(p);
  ASSERT_EQ(back.size(), poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    EXPECT_NEAR(pose_distance(back[i], poses[i]), 0.0, 1e-12);
    const auto& a = back[i].orientation();
    const auto& b = poses[i].orientation();
    const double dot = a.x * b.x + a.y * b.y + a.z * b.z + a.w * b.w;
    EXPECT_NEAR(std::abs(dot), 1.0, 1e-12);
  }
}

TEST(TumPoses, Examples) {
  const auto p = write_text("tum.txt", "# header\n0 0 0 0 0 0 0 1\n0.5 1 2 3 0 0 0 2\n");
  const auto poses = read_tum_poses(p);
  ASSERT_EQ(poses.size(), 2u);
  EXPECT_EQ(poses[0].timestamp, 0.0);
  EXPECT_EQ(poses[0].pose.orientation().w, 1.0);
  EXPECT_EQ(poses[1].pose.orientation().w, 1.0);  // renormalized
  EXPECT_TRUE(read_tum_poses(write_text("tum_comments.txt", "# a\n# b\n")).empty());
  EXPECT_THROW(read_tum_poses(write_text("tum_order.txt", "1 0 0 0 0 0 0 1\n1 0 0 0 0 0 0 1\n")), DataError);
}

TEST(TumPoses, RoundTrip) {
  Rng rng(4);
  std::vector<TimedPose> poses;
  double t = 1.0e9;
  for (int i = 0; i < 300; ++i) {
    t += rng.uniform(0.01, 0.2);
    Quaternion q{rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian()};
    poses.push_back({t, Pose(Vec3{rng.uniform(-1e3, 1e3), rng.uniform(-1e3, 1e3), rng.uniform(-10, 10)}, q)});
  }
  const auto p = scratch("tum_rt.txt");
  write_tum_poses(p, poses);
  const auto back = read_tum_poses(p);
  ASSERT_EQ(back.size(), poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    EXPECT_NEAR(back[i].timestamp, poses[i].timestamp, 1e-12 * poses[i].timestamp);
    EXPECT_NEAR(pose_distance(back[i].pose, poses[i].pose), 0.0, 1e-12);
    EXPECT_NEAR(back[i].pose.orientation().x, poses[i].pose.orientation().x, 1e-12);
    EXPECT_NEAR(back[i].pose.orientation().w, poses[i].pose.orientation().w, 1e-12);
  }
}

TEST(PointCloudBin, Examples) {
  const auto empty = scratch("empty.bin");
  std::ofstream(empty, std::ios::binary | std::ios::trunc);
  EXPECT_TRUE(read_pointcloud_bin(empty).empty());

  const auto one = scratch("one.bin");
  {
    std::ofstream out(one, std::ios::binary | std::ios::trunc);
    // 1.0, 2.0, 3.0, 0.5 as little-endian float32
    const unsigned char bytes[16] = {0, 0, 0x80, 0x3f, 0, 0, 0, 0x40, 0, 0, 0x40, 0x40, 0, 0, 0, 0x3f};
    out.write(reinterpret_cast<const char*>(bytes), 16);
  }
  const auto cloud = read_pointcloud_bin(one);
  ASSERT_EQ(cloud.size(), 1u);
  EXPECT_EQ(cloud[0].x, 1.0F);
  EXPECT_EQ(cloud[0].y, 2.0F);
  EXPECT_EQ(cloud[0].z, 3.0F);
  EXPECT_EQ(cloud[0].intensity, 0.5F);

  const auto odd = scratch("odd.bin");
  std::ofstream(odd, std::ios::binary | std::ios::trunc) << "12345";
  EXPECT_THROW(read_pointcloud_bin(odd), IoError);
}

TEST(PointCloudBin, RoundTripBitIdentical) {
  Rng rng(5);
  PointCloud cloud;
  for (int i = 0; i < 10000; ++i) {
    cloud.push_back({static_cast<float>(rng.gaussian(0, 30)), static_cast<float>(rng.gaussian(0, 30)),
                     static_cast<float>(rng.gaussian(0, 2)), static_cast<float>(rng.uniform())});
  }
  const auto p = scratch("cloud.bin");
  write_pointcloud_bin(p, cloud);
  const auto back = read_pointcloud_bin(p);
  ASSERT_EQ(back.size(), cloud.size());
  EXPECT_EQ(std::memcmp(back.data(), cloud.data(), cloud.size() * sizeof(Point)), 0);
}

TEST(LoadSession, CountsMustAgree) {
  const auto dir = scratch("session");
  fs::create_directories(dir);
  std::vector<Pose> poses{fixtures::at(0), fixtures::at(1), fixtures::at(2)};
  write_kitti_poses(dir / "poses.txt", poses);
  write_descriptors_kdsc(dir / "desc.kdsc", DescriptorMatrix(3, 4));
  DatasetLayout layout;
  layout.pose_path = dir / "poses.txt";
  layout.descriptor_path = dir / "desc.kdsc";
  const auto s = load_session(layout);
  EXPECT_EQ(s.frame_count(), 3u);
  EXPECT_EQ(s.descriptors->cols(), 4u);

  write_descriptors_kdsc(dir / "desc4.kdsc", DescriptorMatrix(4, 4));
  layout.descriptor_path = dir / "desc4.kdsc";
  EXPECT_THROW(load_session(layout), DataError);

  layout.pose_path = dir / "nope.txt";
  EXPECT_THROW(load_session(layout), IoError);
}

TEST(Synthetic, LineCountsFrames) {
  SyntheticSessionSpec spec;
  spec.shape = TrajectoryShape::line;
  spec.length = 10;
  spec.frame_spacing = 1;
  spec.descriptor = SyntheticFieldConfig::random(4, 0);
  const auto s = generate_synthetic_session(spec);
  ASSERT_EQ(s.frame_count(), 11u);
  EXPECT_NEAR(cumulative_arclength(s.poses).back(), 10.0, 1e-12);
}

TEST(Synthetic, LoopRevisitsWithinNoise) {
  for (auto shape : {TrajectoryShape::loop, TrajectoryShape::figure_eight}) {
    SyntheticSessionSpec spec;
    spec.shape = shape;
    spec.length = 120;
    spec.frame_spacing = 0.5;
    spec.revisit_laps = 2;
    spec.descriptor = SyntheticFieldConfig::random(8, 2);
    const auto clean = generate_synthetic_session(spec);
    const std::size_t per_lap = 240;
    ASSERT_EQ(clean.frame_count(), 2 * per_lap);
    for (std::size_t i = 0; i < per_lap; ++i) EXPECT_NEAR(pose_distance(clean.poses[i], clean.poses[i + per_lap]), 0.0, 1e-9);

    spec.pose_noise_sigma = 0.05;
    const auto noisy = generate_synthetic_session(spec);
    for (std::size_t i = 0; i < per_lap; ++i) EXPECT_LT(pose_distance(noisy.poses[i], noisy.poses[i + per_lap]), 0.05 * 10);
  }
}

TEST(Synthetic, SpacingAlongThePath) {
  SyntheticSessionSpec spec;
  spec.shape = TrajectoryShape::figure_eight;
  spec.length = 100;
  spec.frame_spacing = 1.0;
  spec.descriptor = SyntheticFieldConfig::random(4, 0);
  const auto s = generate_synthetic_session(spec);
  for (std::size_t i = 1; i < s.frame_count(); ++i) {
    EXPECT_LE(pose_distance(s.poses[i - 1], s.poses[i]), 1.0 + 1e-6);
    EXPECT_GT(pose_distance(s.poses[i - 1], s.poses[i]), 0.9);
  }
}

TEST(Synthetic, DeterministicPerSeed) {
  auto spec = fixtures::loop_spec(2, 0.5, 42, 80.0, 16);
  spec.pose_noise_sigma = 0.1;
  spec.descriptor.noise_sigma = 0.05;
  const auto a = generate_synthetic_session(spec);
  const auto b = generate_synthetic_session(spec);
  ASSERT_EQ(a.frame_count(), b.frame_count());
  EXPECT_EQ(*a.descriptors, *b.descriptors);
  for (std::size_t i = 0; i < a.frame_count(); ++i) {
    EXPECT_EQ(a.poses[i].position().x, b.poses[i].position().x);
    EXPECT_EQ(a.poses[i].position().y, b.poses[i].position().y);
  }
  spec.seed = 43;
  EXPECT_NE(*generate_synthetic_session(spec).descriptors, *a.descriptors);
}

TEST(Results, PrCsvRoundTrip) {
  EvalReport r;
  r.pr_points = {{0.1, 1.0, 0.25}, {0.3, 2.0 / 3.0, 0.5}, {1.0 / 3.0, 0.6, 0.75}};
  const auto dir = scratch("results");
  write_results(r, dir, false);
  std::ifstream in(dir / "pr.csv");
  std::string all((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(std::count(all.begin(), all.end(), '\n'), 4);
  const auto back = read_pr_csv(dir / "pr.csv");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(back[i].threshold, r.pr_points[i].threshold, 1e-9);
    EXPECT_NEAR(back[i].precision, r.pr_points[i].precision, 1e-9);
    EXPECT_NEAR(back[i].recall, r.pr_points[i].recall, 1e-9);
  }
  std::ifstream sin(dir / "summary.csv");
  std::string header, row;
  std::getline(sin, header);
  std::getline(sin, row);
  EXPECT_EQ(header, "auc,f1_max,memory_ratio,query_wall_time,tp,fp,fn,tn");
  EXPECT_EQ(row, "0,0,1,,0,0,0,0");
}

TEST(Results, SvgWellFormed) {
  const std::vector<PrPoint> pts{{0, 1, 0.1}, {1, 0.8, 0.5}, {2, 0.4, 0.9}};
  const auto svg = format_svg_plot(pts, "a < b & c");
  EXPECT_TRUE(well_formed_xml(svg));
  EXPECT_NE(svg.find("a &lt; b &amp; c"), std::string::npos);
  EXPECT_FALSE(well_formed_xml("<svg><g></svg>"));
  const auto p = scratch("plot.svg");
  write_svg_plot(pts, p);
  EXPECT_TRUE(fs::exists(p));
  EXPECT_FALSE(fs::exists(p.string() + ".tmp"));
}
