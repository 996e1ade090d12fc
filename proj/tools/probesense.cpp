// probesense command-line front end.
//
//   probesense simulate        --config FILE --out DIR [--seed N]
//   probesense track           DATASET --out DIR [--config FILE]
//   probesense losses          --config FILE --out DIR [--seed N]
//   probesense gc3d            --config FILE --out DIR [--seed N]
//   probesense decode-sl       --config FILE --out DIR [--seed N]
//   probesense train-regressor --config FILE --out DIR [--seed N]
//   probesense eval            --config FILE --out DIR
//
// Results go to files in --out and to standard output; progress goes to
// standard error. Exit status: 0 success, 1 runtime or data failure, 2 usage
// or configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "probesense/config.hpp"
#include "probesense/error.hpp"
#include "probesense/geom3d.hpp"
#include "probesense/imageio.hpp"
#include "probesense/losses.hpp"
#include "probesense/metrics.hpp"
#include "probesense/regress.hpp"
#include "probesense/sim.hpp"
#include "probesense/structlight.hpp"
#include "probesense/track.hpp"

namespace fs = std::filesystem;
using namespace probesense;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Raised for bad inputs that are the caller's fault (missing files,
/// empty datasets); maps to the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void log(const std::string& msg) { std::cerr << "probesense: " << msg << '\n'; }

/// Typed access to a key=value file that records every resolved value and
/// rejects keys nobody asked for.
class Params {
 public:
  Params() = default;
  explicit Params(KeyValues kv) : kv_(std::move(kv)) {}

  static Params load(const std::string& path) {
    if (path.empty()) return Params{};
    if (!fs::is_regular_file(path)) throw UsageError("config file not found: " + path);
    return Params(KeyValues::parse(io::read_file(path)));
  }

  double real(const std::string& k, double def) { return note(k, kv_.get_double(k, def)); }
  long long integer(const std::string& k, long long def) {
    const long long v = kv_.get_int(k, def);
    put(k, std::to_string(v));
    return v;
  }
  bool flag(const std::string& k, bool def) {
    const bool v = kv_.get_bool(k, def);
    put(k, v ? "true" : "false");
    return v;
  }
  std::string text(const std::string& k, const std::string& def) {
    const std::string v = kv_.get_string(k, def);
    put(k, v);
    return v;
  }
  std::vector<double> list(const std::string& k, const std::vector<double>& def) {
    const auto v = kv_.get_list(k, def);
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + num(v[i]);
    put(k, s);
    return v;
  }
  std::string path(const std::string& k, bool required = true) {
    const std::string v = kv_.get_string(k, "");
    if (required && v.empty()) throw ConfigError("missing required key '" + k + "'", 0, k);
    put(k, v);
    return v;
  }

  /// Rejects unknown keys; call after every key has been read.
  void finish() const {
    std::set<std::string> known;
    for (const auto& [k, v] : resolved_) known.insert(k);
    kv_.require_known(known);
  }

  std::string echo() const {
    std::string out;
    for (const auto& [k, v] : resolved_) out += k + "=" + v + "\n";
    return out;
  }

 private:
  double note(const std::string& k, double v) {
    put(k, num(v));
    return v;
  }
  void put(const std::string& k, const std::string& v) {
    for (auto& [key, val] : resolved_)
      if (key == k) {
        val = v;
        return;
      }
    resolved_.emplace_back(k, v);
  }

  KeyValues kv_;
  std::vector<std::pair<std::string, std::string>> resolved_;
};

struct Common {
  std::string config;
  std::string out;
  std::optional<long long> seed;
};

void prepare_out(const Common& c, const Params& p) {
  fs::create_directories(c.out);
  io::write_file_atomic(fs::path(c.out) / "config_resolved.txt", p.echo());
}

std::uint64_t seed_of(Params& p, const Common& c, long long def) {
  const long long s = p.integer("seed", c.seed.value_or(def));
  const long long v = c.seed ? *c.seed : s;
  if (c.seed) p.integer("seed", v);  // the flag wins and is what gets echoed
  return static_cast<std::uint64_t>(v);
}

/// Loads a colour or grey image by extension, as grey.
ImageGray load_gray(const std::string& path) {
  if (!fs::is_regular_file(path)) throw UsageError("input not found: " + path);
  const auto ext = fs::path(path).extension().string();
  if (ext == ".ppm") return to_gray(io::read_ppm(path));
  if (ext == ".pgm") return io::read_pgm(path);
  if (ext == ".pfm") return io::read_pfm(path);
  throw UsageError("unsupported image type: " + path);
}

ImageGray load_pfm(const std::string& path) {
  if (!fs::is_regular_file(path)) throw UsageError("input not found: " + path);
  return io::read_pfm(path);
}

StereoRig load_rig(const std::string& path) {
  if (!fs::is_regular_file(path)) throw UsageError("rig file not found: " + path);
  return sim::parse_rig(io::read_file(path));
}

void write_csv(const fs::path& path, const std::vector<std::pair<std::string, double>>& rows) {
  io::write_file_atomic(path, report_csv(rows));
}

void print_rows(const std::vector<std::pair<std::string, double>>& rows) {
  for (const auto& [k, v] : rows) std::cout << k << "=" << num(v) << '\n';
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const Common& c) {
  Params p = Params::load(c.config);
  sim::DatasetSpec spec;
  const std::uint64_t seed = seed_of(p, c, 1);
  spec.n_frames = static_cast<int>(p.integer("n_frames", 10));
  spec.n_surfaces = static_cast<int>(p.integer("n_surfaces", 1));
  spec.smooth = p.flag("smooth", false);
  spec.pose_seed = seed;
  spec.scene.seed = seed;
  const auto split = p.list("split", {0.8, 0.1, 0.1});
  if (split.size() != 3) throw ConfigError("split expects three fractions", 0, "split");
  spec.split = {split[0], split[1], split[2]};
  const int width = static_cast<int>(p.integer("width", 512));
  if (width < 32 || width > 512) throw ConfigError("width must be in 32..512", 0, "width");
  spec.scene.rig = sim::scaled_rig(sim::default_rig(), width);
  spec.scene.rig.baseline = p.real("baseline", spec.scene.rig.baseline);
  spec.scene.heightfield.base = p.real("surface_depth", spec.scene.heightfield.base);
  spec.scene.heightfield.amplitude = p.real("surface_amplitude", spec.scene.heightfield.amplitude);
  spec.scene.heightfield.frequency = p.real("surface_frequency", spec.scene.heightfield.frequency);
  spec.scene.heightfield.seed = static_cast<std::uint64_t>(p.integer("surface_seed", 1));
  spec.scene.texture_seed = static_cast<std::uint64_t>(p.integer("texture_seed", 2));
  spec.scene.laser = p.flag("laser", false);
  spec.scene.render_right = p.flag("render_right", true);
  spec.scene.erase_fraction = p.real("erase_fraction", 0.0);
  spec.scene.supersample = static_cast<int>(p.integer("supersample", 3));
  spec.sampling.depth_min = p.real("depth_min", spec.sampling.depth_min);
  spec.sampling.depth_max = p.real("depth_max", spec.sampling.depth_max);
  const std::string marker_path = p.path("marker", false);
  if (!marker_path.empty()) {
    if (!fs::is_regular_file(marker_path)) throw UsageError("marker file not found: " + marker_path);
    spec.scene.geometry.marker = marker::read_marker_spec(marker_path);
  }
  p.finish();
  if (spec.n_frames < 1 || spec.n_surfaces < 1) throw ConfigError("n_frames and n_surfaces must be positive", 0);
  if (!(spec.scene.erase_fraction >= 0 && spec.scene.erase_fraction <= 0.5))
    throw ConfigError("erase_fraction must be in [0, 0.5]", 0, "erase_fraction");
  prepare_out(c, p);
  log("rendering " + std::to_string(spec.n_frames) + " frames");
  const auto rows = sim::make_dataset(spec, c.out);
  std::cout << (fs::path(c.out) / "manifest.csv").string() << '\n';
  log("wrote " + std::to_string(rows.size()) + " frames");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// track

struct Dataset {
  fs::path dir;
  StereoRig rig;
  marker::MarkerSpec marker;
  sim::ProbeGeometry geometry;
  std::vector<sim::ManifestRow> rows;
};

Dataset load_dataset(const std::string& dir) {
  Dataset d;
  d.dir = dir;
  if (!fs::is_directory(dir)) throw UsageError("dataset directory not found: " + dir);
  const fs::path manifest = d.dir / "manifest.csv";
  if (!fs::is_regular_file(manifest)) throw UsageError("no manifest.csv in " + dir);
  d.rig = load_rig((d.dir / "rig.txt").string());
  if (fs::is_regular_file(d.dir / "marker.txt")) d.marker = marker::read_marker_spec(d.dir / "marker.txt");
  d.geometry.marker = d.marker;
  if (fs::is_regular_file(d.dir / "probe.txt"))
    d.geometry = sim::parse_geometry(io::read_file(d.dir / "probe.txt"), d.marker);
  d.rows = sim::parse_manifest(io::read_file(manifest));
  if (d.rows.empty()) throw UsageError("dataset has no frames: " + dir);
  return d;
}

int cmd_track(const Common& c, const std::string& dataset_dir) {
  Params p = Params::load(c.config);
  track::TrackerOptions opt;
  opt.fallback = p.flag("fallback", true);
  opt.refine_jointly = p.flag("refine_jointly", false);
  opt.max_consistency_px = p.real("max_consistency_px", opt.max_consistency_px);
  const double min_success = p.real("min_success", 0.9);
  p.finish();
  const Dataset d = load_dataset(dataset_dir);
  prepare_out(c, p);
  track::Tracker tracker(d.rig.left, d.marker, opt);
  std::string csv =
      "frame,ok,source,fallback,reproj_rms,tx,ty,tz,rx,ry,rz,rotation_error_deg,translation_error_mm,failure\n";
  std::size_t ok = 0;
  for (const auto& row : d.rows) {
    const fs::path img = d.dir / row.path_left;
    if (!fs::is_regular_file(img)) throw UsageError("missing frame image: " + img.string());
    const auto r = tracker.process(io::read_ppm(img));
    csv += std::to_string(row.frame) + "," + (r.ok ? "1" : "0");
    if (r.ok) {
      ++ok;
      const Vec3 aa = r.pose.axis_angle();
      const double rot = rad2deg(rotation_angle(r.pose.rotation.transpose() * row.pose.rotation));
      const double trans = (r.pose.translation - row.pose.translation).norm();
      csv += std::string(",") + (r.source == pose::PatternKind::Dots ? "dots" : "vertices") + "," +
             (r.from_fallback ? "1" : "0") + "," + num(r.reproj);
      for (double v : {r.pose.translation.x(), r.pose.translation.y(), r.pose.translation.z(), aa.x(), aa.y(),
                       aa.z(), rot, trans})
        csv += "," + num(v);
      csv += ",\n";
    } else {
      std::string why = r.failure;
      for (char& ch : why)
        if (ch == ',' || ch == '\n') ch = ';';
      csv += ",,,,,,,,,,,," + why + "\n";
      log("frame " + std::to_string(row.frame) + ": " + r.failure);
    }
  }
  io::write_file_atomic(fs::path(c.out) / "poses.csv", csv);
  const double rate = static_cast<double>(ok) / static_cast<double>(d.rows.size());
  std::cout << "frames=" << d.rows.size() << "\nsucceeded=" << ok << "\nsuccess_rate=" << num(rate) << '\n';
  return rate >= min_success ? kExitOk : kExitRuntime;
}

// ---------------------------------------------------------------------------
// losses and gc3d

int cmd_losses(const Common& c) {
  Params p = Params::load(c.config);
  const std::uint64_t seed = seed_of(p, c, 1);
  const auto left = load_gray(p.path("left"));
  const auto right = load_gray(p.path("right"));
  const auto d_l = load_pfm(p.path("disparity_left"));
  const auto d_r = load_pfm(p.path("disparity_right"));
  const std::string rig_path = p.path("rig", false);
  LossWeights w;
  w.gamma = p.real("gamma", w.gamma);
  w.alpha_ds = p.real("alpha_ds", w.alpha_ds);
  const long long points = p.integer("gc3d_points", 1000);
  p.finish();
  w.validate();
  if (!left.same_shape(right) || !left.same_shape(d_l) || !left.same_shape(d_r))
    fail(Errc::DimensionMismatch, "images and disparity maps must share one size");
  prepare_out(c, p);
  const auto rec_l = warp_by_disparity(right, d_l);
  const auto rec_r = warp_by_disparity(left, negated(d_r));
  StereoComponents sc;
  sc.ap_l = appearance_loss(left, rec_l.image, w.gamma, rec_l.coverage);
  sc.ap_r = appearance_loss(right, rec_r.image, w.gamma, rec_r.coverage);
  sc.ds_l = smoothness_loss(d_l, left);
  sc.ds_r = smoothness_loss(d_r, right);
  sc.lr_r = lr_consistency_loss(negated(d_l), d_r);
  std::vector<std::pair<std::string, double>> rows{
      {"appearance_left", sc.ap_l},  {"appearance_right", sc.ap_r}, {"smoothness_left", sc.ds_l},
      {"smoothness_right", sc.ds_r}, {"lr_consistency", sc.lr_r}};
  if (!rig_path.empty()) {
    sc.gc3d = gc3d_loss(d_l, d_r, load_rig(rig_path), seed, static_cast<std::size_t>(points));
    rows.emplace_back("gc3d", sc.gc3d);
  }
  rows.emplace_back("total_m3depth", total_m3depth(sc, w));
  write_csv(fs::path(c.out) / "losses.csv", rows);
  print_rows(rows);
  return kExitOk;
}

int cmd_gc3d(const Common& c) {
  Params p = Params::load(c.config);
  const std::uint64_t seed = seed_of(p, c, 1);
  auto d_l = load_pfm(p.path("disparity_left"));
  const auto d_r = load_pfm(p.path("disparity_right"));
  const StereoRig rig = load_rig(p.path("rig"));
  const double bias = p.real("bias_left", 0.0);
  const long long points = p.integer("points", 1000);
  const long long iters = p.integer("max_iterations", 50);
  p.finish();
  if (points < 3 || iters < 1) throw ConfigError("points >= 3 and max_iterations >= 1 required", 0);
  prepare_out(c, p);
  for (double& v : d_l.data)
    if (v > kDisparityEps) v += bias;
  const double loss = gc3d_loss(d_l, d_r, rig, seed, static_cast<std::size_t>(points), static_cast<int>(iters));
  const std::vector<std::pair<std::string, double>> rows{{"gc3d", loss}};
  write_csv(fs::path(c.out) / "gc3d.csv", rows);
  print_rows(rows);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// structured light

structlight::PatternStack load_stack(const fs::path& dir, int n_bits) {
  structlight::PatternStack s;
  s.n_bits = n_bits;
  char name[64];
  for (int b = 0; b < n_bits; ++b) {
    std::snprintf(name, sizeof name, "bit_%02d.pgm", b);
    const auto pat = load_gray((dir / name).string());
    std::snprintf(name, sizeof name, "bit_%02d_inv.pgm", b);
    const auto inv = load_gray((dir / name).string());
    s.gray_bits.emplace_back(pat, inv);
  }
  for (int k = 0; k < 3; ++k) {
    std::snprintf(name, sizeof name, "phase_%d.pgm", k);
    s.phase_images.push_back(load_gray((dir / name).string()));
  }
  return s;
}

void save_stack(const fs::path& dir, const structlight::PatternStack& s) {
  fs::create_directories(dir);
  char name[64];
  for (int b = 0; b < s.n_bits; ++b) {
    std::snprintf(name, sizeof name, "bit_%02d.pgm", b);
    io::write_pgm(dir / name, s.gray_bits[static_cast<std::size_t>(b)].first);
    std::snprintf(name, sizeof name, "bit_%02d_inv.pgm", b);
    io::write_pgm(dir / name, s.gray_bits[static_cast<std::size_t>(b)].second);
  }
  for (int k = 0; k < 3; ++k) {
    std::snprintf(name, sizeof name, "phase_%d.pgm", k);
    io::write_pgm(dir / name, s.phase_images[static_cast<std::size_t>(k)]);
  }
}

int cmd_decode_sl(const Common& c) {
  Params p = Params::load(c.config);
  sim::SlConfig cfg;
  const std::uint64_t seed = seed_of(p, c, 1);
  const std::string stack_dir = p.path("stack", false);
  cfg.n_bits = static_cast<int>(p.integer("n_bits", cfg.n_bits));
  const double margin = p.real("margin", 0.05);
  const double threshold = p.real("modulation_threshold", 0.1);
  cfg.camera.fx = cfg.camera.fy = p.real("camera_f", cfg.camera.fx);
  cfg.projector.intrinsics.fx = cfg.projector.intrinsics.fy = p.real("projector_f", cfg.projector.intrinsics.fx);
  cfg.projector.intrinsics.cx = p.real("projector_cx", cfg.projector.intrinsics.cx);
  cfg.projector.pose.translation.x() = p.real("projector_baseline", cfg.projector.pose.translation.x());
  cfg.heightfield.amplitude = p.real("surface_amplitude", cfg.heightfield.amplitude);
  cfg.heightfield.seed = seed;
  p.finish();
  prepare_out(c, p);
  structlight::PatternStack stack;
  std::optional<sim::SlBundle> truth;
  if (stack_dir.empty()) {
    truth = sim::render_sl_sequence(cfg);
    stack = truth->stack;
    save_stack(fs::path(c.out) / "stack", stack);
  } else {
    stack = load_stack(stack_dir, cfg.n_bits);
  }
  const auto decoded = structlight::decode_gray(stack, margin);
  Mask mask = decoded.confident;
  if (stack.phase_images.size() == 3) {
    const auto t = structlight::modulation_depth(stack.phase_images[0], stack.phase_images[1], stack.phase_images[2]);
    const Mask reliable = structlight::uncertainty_mask(t, threshold);
    for (std::size_t i = 0; i < mask.size(); ++i) mask.data[i] = mask.data[i] && reliable.data[i];
  }
  const auto depth = structlight::triangulate(decoded.columns, mask, cfg.camera, cfg.projector);
  Image<std::uint16_t> cols(decoded.columns.width, decoded.columns.height);
  for (std::size_t i = 0; i < cols.size(); ++i)
    cols.data[i] = decoded.columns.data[i] < 0 ? 0 : static_cast<std::uint16_t>(decoded.columns.data[i] + 1);
  io::write_file_atomic(fs::path(c.out) / "columns.pgm", io::encode_pgm16(cols));
  io::write_pfm(fs::path(c.out) / "depth.pfm", depth.depth);
  io::write_mask(fs::path(c.out) / "valid.pgm", depth.valid);
  std::size_t valid = 0;
  for (auto v : depth.valid.data) valid += v;
  std::vector<std::pair<std::string, double>> rows{
      {"valid_fraction", static_cast<double>(valid) / static_cast<double>(depth.valid.size())}};
  if (truth) {
    double worst = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < depth.valid.size(); ++i) {
      if (!depth.valid.data[i]) continue;
      const double e = std::abs(depth.depth.data[i] - truth->depth.data[i]);
      worst = std::max(worst, e);
      sum += e;
    }
    rows.emplace_back("depth_error_mean_mm", valid ? sum / static_cast<double>(valid) : 0.0);
    rows.emplace_back("depth_error_max_mm", worst);
  }
  write_csv(fs::path(c.out) / "report.csv", rows);
  print_rows(rows);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// regressor

struct RegressorFrames {
  std::vector<Sample> samples;
  std::vector<Vec2> targets;
  std::vector<std::string> split;
  std::vector<ImageGray> images;
  std::vector<AxisSample> axes;
};

RegressorFrames regressor_frames(const Dataset& d, int grid, const std::string& only_split) {
  RegressorFrames f;
  for (const auto& row : d.rows) {
    if (!row.has_gt || (!only_split.empty() && row.split != only_split)) continue;
    const ImageGray img = to_gray_no_red(io::read_ppm(d.dir / row.path_left));
    const AxisSample axis = sample_axis(io::read_mask(d.dir / row.path_mask));
    f.samples.push_back(make_sample(img, axis, row.gt2, grid));
    f.targets.push_back(row.gt2);
    f.split.push_back(row.split);
    f.images.push_back(img);
    f.axes.push_back(axis);
  }
  return f;
}

int cmd_train_regressor(const Common& c) {
  Params p = Params::load(c.config);
  TrainConfig t = TrainConfig::desk();
  t.seed = seed_of(p, c, 1);
  const std::string dataset = p.path("dataset");
  t.epochs = static_cast<int>(p.integer("epochs", t.epochs));
  t.learning_rate = p.real("learning_rate", t.learning_rate);
  t.batch_size = static_cast<int>(p.integer("batch_size", t.batch_size));
  t.halve_at = static_cast<int>(p.integer("halve_at", t.halve_at));
  t.quarter_at = static_cast<int>(p.integer("quarter_at", t.quarter_at));
  t.weight_decay = p.real("weight_decay", t.weight_decay);
  const auto hidden = p.list("hidden", {128, 64});
  const int grid = static_cast<int>(p.integer("grid", kDescriptorGrid));
  p.finish();
  t.hidden.clear();
  for (double h : hidden) {
    if (!(h >= 1) || h != std::floor(h)) throw ConfigError("hidden sizes must be positive integers", 0, "hidden");
    t.hidden.push_back(static_cast<int>(h));
  }
  t.validate();
  const Dataset d = load_dataset(dataset);
  prepare_out(c, p);
  const auto frames = regressor_frames(d, grid, "train");
  if (frames.samples.empty()) throw UsageError("dataset has no training frames with ground truth");
  log("training on " + std::to_string(frames.samples.size()) + " frames");
  const auto r = train(frames.samples, t);
  io::write_file_atomic(fs::path(c.out) / "model.txt", serialize(r.net));
  std::string curve = "epoch,loss\n";
  for (std::size_t e = 0; e < r.loss_curve.size(); ++e) curve += std::to_string(e) + "," + num(r.loss_curve[e]) + "\n";
  io::write_file_atomic(fs::path(c.out) / "loss_curve.csv", curve);
  std::cout << "final_loss=" << num(r.loss_curve.back()) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const Common& c) {
  Params p = Params::load(c.config);
  const std::string mode = p.text("mode", "depth");
  std::vector<std::pair<std::string, double>> rows;
  if (mode == "depth") {
    const auto pred = load_pfm(p.path("pred"));
    const auto gt = load_pfm(p.path("gt"));
    p.finish();
    prepare_out(c, p);
    Mask pv(pred.width, pred.height), gv(gt.width, gt.height);
    for (std::size_t i = 0; i < pv.size(); ++i) pv.data[i] = pred.data[i] > 0;
    for (std::size_t i = 0; i < gv.size(); ++i) gv.data[i] = gt.data[i] > 0;
    rows = report_rows(depth_metrics(pred, gt, pv, gv));
  } else if (mode == "overlap") {
    const std::string pa = p.path("pred");
    const std::string ga = p.path("gt");
    p.finish();
    for (const auto& f : {pa, ga})
      if (!fs::is_regular_file(f)) throw UsageError("input not found: " + f);
    prepare_out(c, p);
    const auto o = iou_dice(io::read_mask(pa), io::read_mask(ga));
    rows = {{"iou", o.iou}, {"dice", o.dice}};
  } else if (mode == "regressor") {
    const std::string model = p.path("model");
    const std::string dataset = p.path("dataset");
    const std::string split = p.text("split", "test");
    const int grid = static_cast<int>(p.integer("grid", kDescriptorGrid));
    p.finish();
    if (!fs::is_regular_file(model)) throw UsageError("model not found: " + model);
    const Mlp net = parse_mlp(io::read_file(model));
    const Dataset d = load_dataset(dataset);
    prepare_out(c, p);
    const auto frames = regressor_frames(d, grid, split);
    if (frames.samples.empty()) throw UsageError("no frames with ground truth in split '" + split + "'");
    std::vector<Vec2> pred, centre;
    const Vec2 mid(0.5 * (d.rig.left.width - 1), 0.5 * (d.rig.left.height - 1));
    for (std::size_t i = 0; i < frames.samples.size(); ++i) {
      pred.push_back(predict_intersection(net, frames.images[i], frames.axes[i], grid));
      centre.push_back(mid);
    }
    const auto s = point_error_stats(pred, frames.targets);
    const auto b = point_error_stats(centre, frames.targets);
    rows = {{"frames", static_cast<double>(pred.size())}, {"mean_px", s.mean},         {"std_px", s.std},
            {"median_px", s.median},                      {"r2", s.r2},                {"baseline_median_px", b.median}};
  } else {
    throw ConfigError("mode must be depth, overlap or regressor", 0, "mode");
  }
  write_csv(fs::path(c.out) / "report.csv", rows);
  print_rows(rows);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"probesense: marker tracking, stereo depth losses and sensing-area tools"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Common common;
  std::string dataset_dir;
  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", common.config, "key=value configuration file");
    if (config_required) opt->required();
    sub->add_option("--out", common.out, "output directory")->required();
    sub->add_option("--seed", common.seed, "overrides the seed key of the configuration");
  };

  auto* simulate = app.add_subcommand("simulate", "render a synthetic stereo dataset");
  add_common(simulate, false);
  auto* trackc = app.add_subcommand("track", "detect the marker and estimate the probe pose per frame");
  add_common(trackc, false);
  trackc->add_option("dataset", dataset_dir, "dataset directory written by simulate")->required();
  auto* losses = app.add_subcommand("losses", "evaluate the stereo loss terms on one image pair");
  add_common(losses, true);
  auto* gc3d = app.add_subcommand("gc3d", "ICP residual between left and right point clouds");
  add_common(gc3d, true);
  auto* decode = app.add_subcommand("decode-sl", "decode a structured-light stack into depth");
  add_common(decode, false);
  auto* trainc = app.add_subcommand("train-regressor", "train the sensing-area regressor");
  add_common(trainc, true);
  auto* evalc = app.add_subcommand("eval", "depth, overlap or regressor metrics");
  add_common(evalc, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(common);
    if (*trackc) return cmd_track(common, dataset_dir);
    if (*losses) return cmd_losses(common);
    if (*gc3d) return cmd_gc3d(common);
    if (*decode) return cmd_decode_sl(common);
    if (*trainc) return cmd_train_regressor(common);
    if (*evalc) return cmd_eval(common);
  } catch (const ConfigError& e) {
    log(std::string("configuration error: ") + e.what());
    return kExitUsage;
  } catch (const UsageError& e) {
    log(e.what());
    return kExitUsage;
  } catch (const Error& e) {
    log(e.what());
    return e.code() == Errc::Parse ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    log(e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
