// kfsample command-line tool: sample, evaluate, terms, synth, bench.
//
// Exit codes: 0 ok, 2 bad arguments, 3 I/O failure, 4 data validation.

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "kfsample/kfsample.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "0.1.0";

enum Exit { kOk = 0, kBadArgs = 2, kIo = 3, kData = 4 };

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw kfs::IoError("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

/// Flat key = value manifest. Keys under "timing." are the only ones that
/// may differ between two runs with identical inputs.
class Manifest {
 public:
  void set(const std::string& k, const std::string& v) { lines_.emplace_back(k, v); }
  void input(const std::string& name, const fs::path& p) {
    set("input." + name + ".path", p.string());
    set("input." + name + ".sha256", sha256_file(p));
  }
  void output(const fs::path& p) { set("output." + p.filename().string() + ".sha256", sha256_file(p)); }
  void timing(const std::string& k, double v) { set("timing." + k, fmt(v)); }

  void write(const fs::path& out_dir) const {
    std::string s;
    for (const auto& [k, v] : lines_) s += k + " = " + v + "\n";
    kfs::atomic_write(out_dir / "manifest.txt", s);
  }

 private:
  std::vector<std::pair<std::string, std::string>> lines_;
};

/// Remembers every option bound on a subcommand so the resolved values can
/// be frozen into the manifest.
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* add(const std::string& name, T& var, const std::string& desc) {
    auto* opt = app_->add_option("--" + name, var, desc)->capture_default_str();
    opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    if (name != "out") printers_.emplace_back(name, [&var] { return show(var); });
    return opt;
  }
  CLI::Option* flag(const std::string& name, bool& var, const std::string& desc) {
    auto* opt = app_->add_flag("--" + name, var, desc);
    opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    printers_.emplace_back(name, [&var] { return std::string(var ? "true" : "false"); });
    return opt;
  }
  void freeze(Manifest& m) const {
    for (const auto& [name, print] : printers_) m.set("config." + name, print());
  }
  CLI::App* app() const { return app_; }

 private:
  static std::string show(const std::string& v) { return v; }
  static std::string show(double v) { return fmt(v); }
  template <typename T>
  static std::string show(const T& v) {
    return std::to_string(v);
  }

  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<std::string()>>> printers_;
};

struct DataFlags {
  std::string poses, pose_format = "kitti", descriptors, scans;

  void bind(Options& o, bool need_descriptors) {
    o.add("poses", poses, "pose file")->required();
    o.add("pose-format", pose_format, "kitti | tum")->check(CLI::IsMember({"kitti", "tum"}));
    auto* d = o.add("descriptors", descriptors, "descriptor file (.kdsc or .csv)");
    if (need_descriptors) d->required();
    o.add("scans", scans, "directory of .bin point clouds");
  }

  kfs::Session load(Manifest& m, const std::string& prefix = "") const {
    kfs::DatasetLayout layout;
    layout.pose_path = poses;
    layout.pose_format = pose_format == "tum" ? kfs::PoseFormat::tum_quaternion : kfs::PoseFormat::kitti_matrix;
    if (!descriptors.empty()) layout.descriptor_path = descriptors;
    if (!scans.empty()) layout.scan_dir = scans;
    auto s = kfs::load_session(layout);
    m.input(prefix + "poses", poses);
    if (!descriptors.empty()) m.input(prefix + "descriptors", descriptors);
    if (!scans.empty()) {
      m.set("input." + prefix + "scans.path", scans);
      m.set("input." + prefix + "scans.count", std::to_string(s.scan_paths->size()));
    }
    return s;
  }
};

std::vector<kfs::KeyframeId> read_ids(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw kfs::IoError("cannot open " + path.string());
  std::vector<kfs::KeyframeId> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    unsigned long long v = 0;
    std::string rest;
    if (!(ss >> v) || (ss >> rest)) {
      throw kfs::IoError(path.string() + ":" + std::to_string(line_no) + ": expected one keyframe id");
    }
    ids.push_back(static_cast<kfs::KeyframeId>(v));
  }
  return ids;
}

std::vector<kfs::KeyframeId> all_ids(const kfs::Session& s) {
  std::vector<kfs::KeyframeId> ids(s.frame_count());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  return ids;
}

fs::path prepare_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw kfs::IoError("cannot create " + out + ": " + ec.message());
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- sample ------------------------------------------------------------------

struct SampleArgs {
  DataFlags data;
  std::string method = "all", out;
  double interval = 1.0, alpha = 1.0, beta = 1.0, dl = 1.0, du = 5.0;
  std::size_t window = 10;
  double revisit_travel = 10.0, min_motion = 0.0, smoothing = 0.95, entropy_threshold = 0.05;
  std::size_t entropy_bins = 64;
  std::uint64_t seed = 0;
};

void bind_sample(Options& o, SampleArgs& a) {
  a.data.bind(o, false);
  o.add("method", a.method, "all | constant | spaciousness | entropy | optimized")
      ->check(CLI::IsMember({"all", "constant", "spaciousness", "entropy", "optimized"}));
  o.add("interval", a.interval, "constant sampler interval (m)");
  o.add("alpha", a.alpha, "objective alpha");
  o.add("beta", a.beta, "objective beta");
  o.add("window", a.window, "window size N");
  o.add("dl", a.dl, "lower distance limit (m)");
  o.add("du", a.du, "upper distance limit (m)");
  o.add("revisit-travel", a.revisit_travel, "path length before a stored keyframe counts as a revisit (m)");
  o.add("min-motion", a.min_motion, "skip frames closer than this to the last accepted one (m)");
  o.add("smoothing", a.smoothing, "spaciousness smoothing factor");
  o.add("entropy-threshold", a.entropy_threshold, "entropy change that triggers a keyframe (nats)");
  o.add("entropy-bins", a.entropy_bins, "range histogram bins");
  o.add("seed", a.seed, "random seed");
  o.add("out", a.out, "output directory")->required();
}

int run_sample(const Options& o, const SampleArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  Manifest m;
  m.set("command", "sample");
  m.set("tool_version", kToolVersion);
  o.freeze(m);

  kfs::SamplerConfig cfg;
  cfg.method = *kfs::parse_sampler_method(a.method);
  cfg.constant_interval = a.interval;
  cfg.spaciousness_smoothing = a.smoothing;
  cfg.entropy_threshold = a.entropy_threshold;
  cfg.entropy_bins = a.entropy_bins;
  cfg.window.window_size = a.window;
  cfg.window.delta_lower = a.dl;
  cfg.window.delta_upper = a.du;
  cfg.window.params = {a.alpha, a.beta};
  cfg.window.revisit_min_travel = a.revisit_travel;
  cfg.window.min_motion = a.min_motion;
  cfg.validate();

  const auto session = a.data.load(m);
  const auto out_dir = prepare_out(a.out);

  kfs::SamplerOutput result;
  std::vector<kfs::CycleRecord> cycles;
  if (cfg.method == kfs::SamplerMethod::optimized) {
    result = kfs::sample_optimized(session, cfg.window, &cycles);
  } else {
    result = kfs::run_sampler(session, cfg);
  }

  std::string ids;
  for (auto id : result.selected_ids) ids += std::to_string(id) + "\n";
  kfs::atomic_write(out_dir / "ids.txt", ids);

  std::vector<char> selected(session.frame_count(), 0);
  for (auto id : result.selected_ids) selected[id] = 1;
  std::string diag = "frame,state,selected\n";
  for (std::size_t i = 0; i < session.frame_count(); ++i) {
    const double v = result.per_frame_state[i];
    diag += std::to_string(i) + "," + (std::isnan(v) ? "" : fmt(v)) + "," + (selected[i] ? "1" : "0") + "\n";
  }
  kfs::atomic_write(out_dir / "diagnostics.csv", diag);
  m.output(out_dir / "ids.txt");
  m.output(out_dir / "diagnostics.csv");

  if (cfg.method == kfs::SamplerMethod::optimized) {
    std::string c = "step,window_size,neighbors,candidates,selected,objective,relaxed\n";
    double lo = 0, hi = 0, sum = 0;
    for (std::size_t i = 0; i < cycles.size(); ++i) {
      const auto& r = cycles[i];
      c += std::to_string(r.step) + "," + std::to_string(r.window_ids.size()) + "," +
           std::to_string(r.neighbor_count) + "," + std::to_string(r.candidates) + "," +
           std::to_string(r.selected_ids.size()) + "," + fmt(r.objective_value) + "," + (r.relaxed ? "1" : "0") + "\n";
      lo = i == 0 ? r.elapsed_ms : std::min(lo, r.elapsed_ms);
      hi = std::max(hi, r.elapsed_ms);
      sum += r.elapsed_ms;
    }
    kfs::atomic_write(out_dir / "cycles.csv", c);
    m.output(out_dir / "cycles.csv");
    m.set("result.cycles", std::to_string(cycles.size()));
    if (!cycles.empty()) {
      m.timing("window_ms_min", lo);
      m.timing("window_ms_mean", sum / static_cast<double>(cycles.size()));
      m.timing("window_ms_max", hi);
    }
  }
  m.set("result.frames", std::to_string(session.frame_count()));
  m.set("result.selected", std::to_string(result.selected_ids.size()));
  m.timing("wall_seconds", seconds_since(t0));
  m.write(out_dir);
  std::cout << "selected " << result.selected_ids.size() << " of " << session.frame_count() << " frames\n";
  return kOk;
}

// --- evaluate ----------------------------------------------------------------

struct EvaluateArgs {
  DataFlags data;
  std::string ids, query_poses, query_pose_format = "kitti", query_descriptors, task = "gpr", out;
  double tp_radius = 5.0, exclusion_seconds = 0.0;
  std::size_t k = 25, exclusion = 100, thresholds = 200;
  bool sector_shift = false, record_wall_time = false;
  std::uint64_t seed = 0;
};

void bind_evaluate(Options& o, EvaluateArgs& a) {
  a.data.bind(o, true);
  o.add("ids", a.ids, "selected keyframe ids (default: every frame)");
  o.add("query-poses", a.query_poses, "query pose file for gpr (default: the map session)");
  o.add("query-pose-format", a.query_pose_format, "kitti | tum")->check(CLI::IsMember({"kitti", "tum"}));
  o.add("query-descriptors", a.query_descriptors, "query descriptor file");
  o.add("task", a.task, "gpr | lcd")->check(CLI::IsMember({"gpr", "lcd"}));
  o.add("tp-radius", a.tp_radius, "true-positive radius (m)");
  o.add("k", a.k, "lcd candidates per query");
  o.add("exclusion", a.exclusion, "lcd exclusion window (frames)");
  o.add("exclusion-seconds", a.exclusion_seconds, "lcd exclusion window (s), used when > 0 and timestamps exist");
  o.add("thresholds", a.thresholds, "number of quantile thresholds");
  o.flag("sector-shift", a.sector_shift, "use the sector-shift minimized scan context distance");
  o.flag("record-wall-time", a.record_wall_time, "write query wall time into summary.csv");
  o.add("seed", a.seed, "random seed");
  o.add("out", a.out, "output directory")->required();
}

int run_evaluate(const Options& o, const EvaluateArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  Manifest m;
  m.set("command", "evaluate");
  m.set("tool_version", kToolVersion);
  o.freeze(m);

  kfs::EvalConfig cfg;
  cfg.task = a.task == "lcd" ? kfs::EvalTask::lcd : kfs::EvalTask::gpr;
  cfg.tp_radius = a.tp_radius;
  cfg.lcd_k = a.k;
  cfg.lcd_exclusion_frames = a.exclusion;
  if (a.exclusion_seconds > 0.0) cfg.lcd_exclusion_seconds = a.exclusion_seconds;
  cfg.thresholds = a.thresholds;
  if (a.sector_shift) cfg.sector_shift = kfs::ScanContextConfig{};
  cfg.validate();
  if (cfg.task == kfs::EvalTask::lcd && !a.query_poses.empty()) {
    throw kfs::InvalidArgument("--query-poses applies to the gpr task only");
  }
  if (a.query_poses.empty() != a.query_descriptors.empty()) {
    throw kfs::InvalidArgument("--query-poses and --query-descriptors go together");
  }

  const auto session = a.data.load(m);
  std::vector<kfs::KeyframeId> ids;
  if (a.ids.empty()) {
    ids = all_ids(session);
  } else {
    ids = read_ids(a.ids);
    m.input("ids", a.ids);
  }
  const auto out_dir = prepare_out(a.out);

  kfs::EvalReport report;
  if (cfg.task == kfs::EvalTask::gpr) {
    const auto map = kfs::MapSet::from_session(session, ids);
    if (a.query_poses.empty()) {
      report = kfs::evaluate_gpr(map, session, cfg);
    } else {
      DataFlags q;
      q.poses = a.query_poses;
      q.pose_format = a.query_pose_format;
      q.descriptors = a.query_descriptors;
      report = kfs::evaluate_gpr(map, q.load(m, "query."), cfg);
    }
  } else {
    report = kfs::evaluate_lcd(session, ids, cfg);
  }
  report.memory_ratio = kfs::memory_ratio(ids.size(), session.frame_count());

  kfs::write_results(report, out_dir, a.record_wall_time);
  kfs::write_svg_plot(report.pr_points, out_dir / "pr.svg",
                      std::string(cfg.task == kfs::EvalTask::gpr ? "GPR" : "LCD") + " precision-recall");
  m.output(out_dir / "pr.csv");
  m.output(out_dir / "summary.csv");
  m.output(out_dir / "pr.svg");
  m.set("result.auc", fmt(report.auc));
  m.set("result.f1_max", fmt(report.f1_max));
  m.set("result.memory_ratio", fmt(report.memory_ratio));
  m.set("result.queries", std::to_string(report.queries));
  m.timing("query_seconds", report.query_wall_time);
  m.timing("wall_seconds", seconds_since(t0));
  m.write(out_dir);
  std::cout << "auc " << fmt(report.auc) << "\nf1_max " << fmt(report.f1_max) << "\nmemory_ratio "
            << fmt(report.memory_ratio) << "\n";
  return kOk;
}

// --- terms -------------------------------------------------------------------

struct TermsArgs {
  DataFlags data;
  std::string ids, out;
  std::size_t window = 10;
  std::uint64_t seed = 0;
};

void bind_terms(Options& o, TermsArgs& a) {
  a.data.bind(o, true);
  o.add("ids", a.ids, "selected keyframe ids (default: every frame)");
  o.add("window", a.window, "keyframes per preservation window");
  o.add("seed", a.seed, "random seed");
  o.add("out", a.out, "optional output directory for terms.txt and the manifest");
}

int run_terms(const Options& o, const TermsArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  Manifest m;
  m.set("command", "terms");
  m.set("tool_version", kToolVersion);
  o.freeze(m);
  const auto session = a.data.load(m);
  std::vector<kfs::KeyframeId> ids;
  if (a.ids.empty()) {
    ids = all_ids(session);
  } else {
    ids = read_ids(a.ids);
    m.input("ids", a.ids);
  }
  const auto t = kfs::measure_terms(session, ids, a.window);
  const std::string text = "rho = " + fmt(t.rho) + "\npi = " + fmt(t.pi) + "\nwindows = " + std::to_string(t.windows) +
                           "\nkeyframes = " + std::to_string(ids.size()) + "\n";
  std::cout << text;
  if (!a.out.empty()) {
    const auto out_dir = prepare_out(a.out);
    kfs::atomic_write(out_dir / "terms.txt", text);
    m.output(out_dir / "terms.txt");
    m.timing("wall_seconds", seconds_since(t0));
    m.write(out_dir);
  }
  return kOk;
}

// --- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string shape = "loop", pose_format = "kitti", descriptor_format = "kdsc", out;
  double length = 200.0, spacing = 0.5, pose_noise = 0.0, desc_noise = 0.0, max_frequency = 0.5, period = 0.1;
  std::size_t laps = 1, dim = 64;
  std::uint64_t seed = 0;
};

void bind_synth(Options& o, SynthArgs& a) {
  o.add("shape", a.shape, "loop | figure_eight | line")->check(CLI::IsMember({"loop", "figure_eight", "line"}));
  o.add("length", a.length, "path length per lap (m)");
  o.add("spacing", a.spacing, "frame spacing (m)");
  o.add("laps", a.laps, "number of laps");
  o.add("dim", a.dim, "descriptor dimension");
  o.add("max-frequency", a.max_frequency, "largest descriptor field wave number (rad/m)");
  o.add("pose-noise", a.pose_noise, "horizontal pose noise sigma (m)");
  o.add("desc-noise", a.desc_noise, "descriptor noise sigma");
  o.add("period", a.period, "seconds between frames");
  o.add("pose-format", a.pose_format, "kitti | tum")->check(CLI::IsMember({"kitti", "tum"}));
  o.add("descriptor-format", a.descriptor_format, "kdsc | csv")->check(CLI::IsMember({"kdsc", "csv"}));
  o.add("seed", a.seed, "random seed");
  o.add("out", a.out, "output directory")->required();
}

kfs::SyntheticSessionSpec synth_spec(const std::string& shape, double length, double spacing, std::size_t laps,
                                     std::size_t dim, double max_frequency, std::uint64_t seed) {
  kfs::SyntheticSessionSpec spec;
  spec.shape = shape == "line"           ? kfs::TrajectoryShape::line
               : shape == "figure_eight" ? kfs::TrajectoryShape::figure_eight
                                         : kfs::TrajectoryShape::loop;
  spec.length = length;
  spec.frame_spacing = spacing;
  spec.revisit_laps = laps;
  spec.descriptor = kfs::SyntheticFieldConfig::random(dim, seed, max_frequency);
  spec.seed = seed;
  return spec;
}

int run_synth(const Options& o, const SynthArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  Manifest m;
  m.set("command", "synth");
  m.set("tool_version", kToolVersion);
  o.freeze(m);
  auto spec = synth_spec(a.shape, a.length, a.spacing, a.laps, a.dim, a.max_frequency, a.seed);
  spec.pose_noise_sigma = a.pose_noise;
  spec.descriptor.noise_sigma = a.desc_noise;
  spec.frame_period = a.period;
  spec.validate();
  const auto s = kfs::generate_synthetic_session(spec);
  const auto out_dir = prepare_out(a.out);

  const fs::path poses = out_dir / "poses.txt";
  if (a.pose_format == "tum") {
    std::vector<kfs::TimedPose> tp;
    for (std::size_t i = 0; i < s.frame_count(); ++i) tp.push_back({s.timestamps[i], s.poses[i]});
    kfs::write_tum_poses(poses, tp);
  } else {
    kfs::write_kitti_poses(poses, s.poses);
  }
  const fs::path desc = out_dir / (a.descriptor_format == "csv" ? "descriptors.csv" : "descriptors.kdsc");
  if (a.descriptor_format == "csv") {
    kfs::write_descriptors_csv(desc, *s.descriptors);
  } else {
    kfs::write_descriptors_kdsc(desc, *s.descriptors);
  }
  m.output(poses);
  m.output(desc);
  m.set("result.frames", std::to_string(s.frame_count()));
  m.timing("wall_seconds", seconds_since(t0));
  m.write(out_dir);
  std::cout << "wrote " << s.frame_count() << " frames to " << out_dir.string() << "\n";
  return kOk;
}

// --- bench -------------------------------------------------------------------

struct BenchArgs {
  std::string shape = "loop", out;
  double length = 200.0, spacing = 0.5, alpha = 1.0, beta = 1.0, dl = 1.0, du = 5.0;
  std::size_t laps = 2, dim = 64, window = 10;
  std::uint64_t seed = 0;
};

void bind_bench(Options& o, BenchArgs& a) {
  o.add("shape", a.shape, "loop | figure_eight | line")->check(CLI::IsMember({"loop", "figure_eight", "line"}));
  o.add("length", a.length, "path length per lap (m)");
  o.add("spacing", a.spacing, "frame spacing (m)");
  o.add("laps", a.laps, "number of laps");
  o.add("dim", a.dim, "descriptor dimension");
  o.add("window", a.window, "window size N");
  o.add("alpha", a.alpha, "objective alpha");
  o.add("beta", a.beta, "objective beta");
  o.add("dl", a.dl, "lower distance limit (m)");
  o.add("du", a.du, "upper distance limit (m)");
  o.add("seed", a.seed, "random seed");
  o.add("out", a.out, "optional output directory for bench.txt and the manifest");
}

int run_bench(const Options& o, const BenchArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  Manifest m;
  m.set("command", "bench");
  m.set("tool_version", kToolVersion);
  o.freeze(m);
  kfs::WindowConfig cfg;
  cfg.window_size = a.window;
  cfg.delta_lower = a.dl;
  cfg.delta_upper = a.du;
  cfg.params = {a.alpha, a.beta};
  cfg.validate();
  const auto spec = synth_spec(a.shape, a.length, a.spacing, a.laps, a.dim, 0.5, a.seed);
  const auto s = kfs::generate_synthetic_session(spec);

  std::vector<kfs::CycleRecord> cycles;
  const auto out = kfs::sample_optimized(s, cfg, &cycles);
  if (cycles.empty()) throw kfs::DataError("session too short for a single optimization window");
  double lo = cycles.front().elapsed_ms, hi = lo, sum = 0.0;
  for (const auto& c : cycles) {
    lo = std::min(lo, c.elapsed_ms);
    hi = std::max(hi, c.elapsed_ms);
    sum += c.elapsed_ms;
  }
  const double mean = sum / static_cast<double>(cycles.size());

  kfs::DescriptorMatrix selected(out.selected_ids.size(), s.descriptors->cols());
  for (std::size_t r = 0; r < out.selected_ids.size(); ++r) {
    const auto src = s.descriptors->row(out.selected_ids[r]);
    std::copy(src.begin(), src.end(), selected.row(r).begin());
  }
  const auto q_all = kfs::query_benchmark(*s.descriptors, *s.descriptors);
  const auto q_sel = kfs::query_benchmark(selected, *s.descriptors);

  std::ostringstream text;
  text << "frames " << s.frame_count() << "\nwindows " << cycles.size() << "\nselected " << out.selected_ids.size()
       << "\nwindow_ms_min " << fmt(lo) << "\nwindow_ms_mean " << fmt(mean) << "\nwindow_ms_max " << fmt(hi)
       << "\nquery_seconds_all " << fmt(q_all.seconds) << "\nquery_seconds_selected " << fmt(q_sel.seconds) << "\n";
  std::cout << text.str();
  if (!a.out.empty()) {
    const auto out_dir = prepare_out(a.out);
    kfs::atomic_write(out_dir / "bench.txt", text.str());
    m.set("result.frames", std::to_string(s.frame_count()));
    m.set("result.windows", std::to_string(cycles.size()));
    m.timing("window_ms_min", lo);
    m.timing("window_ms_mean", mean);
    m.timing("window_ms_max", hi);
    m.timing("query_seconds_all", q_all.seconds);
    m.timing("query_seconds_selected", q_sel.seconds);
    m.timing("wall_seconds", seconds_since(t0));
    m.write(out_dir);
  }
  return kOk;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Turns a `key = value` file into `--key=value` arguments. Blank lines and
/// lines starting with '#' are skipped; values may be quoted.
std::vector<std::string> config_arguments(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw kfs::IoError("cannot open config file " + path.string());
  std::vector<std::string> args;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw kfs::IoError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty() || key == "config") {
      throw kfs::InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": invalid key");
    }
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

/// Command line with the config file (if any) expanded in front of the
/// subcommand's own flags, so that flags given later win.
std::vector<std::string> expand_arguments(int argc, char** argv) {
  std::vector<std::string> rest(argv + 1, argv + argc);
  std::vector<std::string> config;
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    if (rest[i] == "--config") {
      if (i + 1 >= rest.size()) throw kfs::InvalidArgument("--config needs a file");
      config = config_arguments(rest[++i]);
    } else if (rest[i].starts_with("--config=")) {
      config = config_arguments(rest[i].substr(9));
    } else {
      kept.push_back(rest[i]);
    }
  }
  if (!kept.empty() && !config.empty()) kept.insert(kept.begin() + 1, config.begin(), config.end());
  return kept;
}

CLI::App* subcommand(CLI::App& app, const std::string& name, const std::string& desc) {
  auto* sub = app.add_subcommand(name, desc);
  // Expanded before parsing; registered so that it shows up in --help.
  sub->add_option("--config", "plain key = value file; command-line flags take precedence");
  return sub;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keyframe sampling for lidar place recognition"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  SampleArgs sample;
  EvaluateArgs evaluate;
  TermsArgs terms;
  SynthArgs synth;
  BenchArgs bench;
  Options sample_opts(subcommand(app, "sample", "select keyframes from a session"));
  Options evaluate_opts(subcommand(app, "evaluate", "place recognition or loop closure evaluation"));
  Options terms_opts(subcommand(app, "terms", "redundancy and preservation of a keyframe set"));
  Options synth_opts(subcommand(app, "synth", "write a synthetic session"));
  Options bench_opts(subcommand(app, "bench", "time the window optimizer and the query sweep"));
  bind_sample(sample_opts, sample);
  bind_evaluate(evaluate_opts, evaluate);
  bind_terms(terms_opts, terms);
  bind_synth(synth_opts, synth);
  bind_bench(bench_opts, bench);

  try {
    auto args = expand_arguments(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const kfs::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const kfs::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadArgs;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadArgs;
  }

  try {
    if (sample_opts.app()->parsed()) return run_sample(sample_opts, sample);
    if (evaluate_opts.app()->parsed()) return run_evaluate(evaluate_opts, evaluate);
    if (terms_opts.app()->parsed()) return run_terms(terms_opts, terms);
    if (synth_opts.app()->parsed()) return run_synth(synth_opts, synth);
    if (bench_opts.app()->parsed()) return run_bench(bench_opts, bench);
  } catch (const kfs::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadArgs;
  } catch (const kfs::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const kfs::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kBadArgs;
}
