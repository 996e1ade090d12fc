#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <stdexcept>

#include "cli_harness.hpp"
#include "probesense/imageio.hpp"
#include "probesense/sim.hpp"

using namespace probesense;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / (std::string("probesense_cli_") + info->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path path(const std::string& name) const { return root_ / name; }

  fs::path config(const std::string& name, const std::string& text) const {
    const fs::path p = path(name);
    cli::write_text(p, text);
    return p;
  }

  cli::Run run(const std::vector<std::string>& args) const { return cli::run(args, root_ / "io"); }

  /// Constant-disparity maps of a fronto-parallel plane plus a matching rig.
  void write_plane(double disparity) const {
    io::write_pfm(path("dl.pfm"), ImageGray(64, 48, disparity));
    io::write_pfm(path("dr.pfm"), ImageGray(64, 48, disparity));
    cli::write_text(path("rig.txt"), sim::format_rig(sim::scaled_rig(sim::default_rig(), 64)));
  }

  fs::path root_;
};

double value_of(const std::string& out, const std::string& key) {
  const auto at = out.find(key + "=");
  if (at == std::string::npos) throw std::runtime_error("missing " + key + " in output:\n" + out);
  return std::strtod(out.c_str() + at + key.size() + 1, nullptr);
}

}  // namespace

TEST_F(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run({}).exit_code, 2);
  EXPECT_EQ(run({"no-such-command"}).exit_code, 2);
  EXPECT_EQ(run({"simulate"}).exit_code, 2);  // --out is required
  EXPECT_EQ(run({"gc3d", "--out", path("o").string()}).exit_code, 2);  // --config is required
  EXPECT_EQ(run({"gc3d", "--config", path("absent.txt").string(), "--out", path("o").string()}).exit_code, 2);
  EXPECT_EQ(run({"track", path("absent").string(), "--out", path("o").string()}).exit_code, 2);
  fs::create_directories(path("empty"));
  EXPECT_EQ(run({"track", path("empty").string(), "--out", path("o").string()}).exit_code, 2);
}

TEST_F(Cli, UnknownKeyIsNamedWithItsLine) {
  const auto cfg = config("sim.txt", "n_frames=1\nwidth=64\nframes_per_second=30\n");
  const auto r = run({"simulate", "--config", cfg.string(), "--out", path("o").string()});
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("frames_per_second"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("o") / "manifest.csv"));
}

TEST_F(Cli, MalformedValueIsAConfigError) {
  const auto cfg = config("sim.txt", "n_frames=two\n");
  const auto r = run({"simulate", "--config", cfg.string(), "--out", path("o").string()});
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("line 1"), std::string::npos) << r.err;
}

TEST_F(Cli, SimulateWritesFramesAndRepeatsByteForByte) {
  const auto cfg = config("sim.txt", "n_frames=3\nwidth=96\nsupersample=1\n");
  const auto a = run({"simulate", "--config", cfg.string(), "--out", path("a").string()});
  ASSERT_EQ(a.exit_code, 0) << a.err;
  const auto b = run({"simulate", "--config", cfg.string(), "--out", path("b").string()});
  ASSERT_EQ(b.exit_code, 0) << b.err;
  EXPECT_EQ(cli::snapshot(path("a")), cli::snapshot(path("b")));
  EXPECT_EQ(sim::parse_manifest(io::read_file(path("a") / "manifest.csv")).size(), 3u);
  EXPECT_NE(a.out.find("manifest.csv"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("a") / "config_resolved.txt"));
  // A different seed gives a different dataset.
  const auto c = run({"simulate", "--config", cfg.string(), "--out", path("c").string(), "--seed", "9"});
  ASSERT_EQ(c.exit_code, 0);
  EXPECT_NE(cli::snapshot(path("a")), cli::snapshot(path("c")));
  EXPECT_NE(io::read_file(path("c") / "config_resolved.txt").find("seed=9"), std::string::npos);
}

TEST_F(Cli, TrackRecoversPosesOnASimulatedSet) {
  const auto cfg = config("sim.txt", "n_frames=3\nrender_right=false\nsupersample=2\n");
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--out", path("ds").string()}).exit_code, 0);
  const auto r = run({"track", path("ds").string(), "--out", path("t").string()});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(value_of(r.out, "success_rate"), 1.0);
  const std::string csv = io::read_file(path("t") / "poses.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

  // An unreachable success requirement turns the same run into a data failure.
  const auto strict = config("strict.txt", "min_success=1.5\n");
  EXPECT_EQ(run({"track", path("ds").string(), "--out", path("t2").string(), "--config", strict.string()}).exit_code,
            1);
}

TEST_F(Cli, Gc3dOnIntegerPlaneIsZeroAndGrowsWithBias) {
  write_plane(8.0);
  const std::string base = "disparity_left=" + path("dl.pfm").string() + "\ndisparity_right=" +
                           path("dr.pfm").string() + "\nrig=" + path("rig.txt").string() + "\n";
  const auto cfg = config("gc3d.txt", base);
  const auto r = run({"gc3d", "--config", cfg.string(), "--out", path("o").string()});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const double zero = value_of(r.out, "gc3d");
  EXPECT_LT(zero, 1e-6);
  const auto biased = config("gc3d_bias.txt", base + "bias_left=1\n");
  const auto rb = run({"gc3d", "--config", biased.string(), "--out", path("ob").string()});
  ASSERT_EQ(rb.exit_code, 0) << rb.err;
  EXPECT_GT(value_of(rb.out, "gc3d"), zero);
  EXPECT_EQ(io::read_file(path("o") / "gc3d.csv").substr(0, 6), "metric");
}

TEST_F(Cli, LossesOnSimulatedPair) {
  const auto cfg = config("sim.txt", "n_frames=1\nwidth=96\nsupersample=1\n");
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--out", path("ds").string()}).exit_code, 0);
  const fs::path ds = path("ds");
  const auto row = sim::parse_manifest(io::read_file(ds / "manifest.csv")).at(0);
  const std::string disp_right = (ds / row.path_disparity_right).string();
  const auto lc = config("losses.txt", "left=" + (ds / row.path_left).string() + "\nright=" +
                                           (ds / row.path_right).string() + "\ndisparity_left=" +
                                           (ds / row.path_disparity).string() + "\ndisparity_right=" + disp_right +
                                           "\nrig=" + (ds / "rig.txt").string() + "\n");
  const auto r = run({"losses", "--config", lc.string(), "--out", path("o").string()});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_LT(value_of(r.out, "lr_consistency"), 0.05);
  EXPECT_LT(value_of(r.out, "appearance_left"), 0.1);
  EXPECT_GE(value_of(r.out, "gc3d"), 0.0);
  const auto again = run({"losses", "--config", lc.string(), "--out", path("o2").string()});
  EXPECT_EQ(cli::snapshot(path("o")), cli::snapshot(path("o2")));
}

TEST_F(Cli, DecodeStructuredLight) {
  const auto r = run({"decode-sl", "--out", path("o").string()});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_LT(value_of(r.out, "depth_error_max_mm"), 0.1);
  EXPECT_GT(value_of(r.out, "valid_fraction"), 0.5);
  // Decoding the saved stack again gives the same depth map.
  const auto cfg = config("sl.txt", "stack=" + (path("o") / "stack").string() + "\n");
  const auto s = run({"decode-sl", "--config", cfg.string(), "--out", path("o2").string()});
  ASSERT_EQ(s.exit_code, 0) << s.err;
  EXPECT_EQ(io::read_file(path("o") / "depth.pfm"), io::read_file(path("o2") / "depth.pfm"));
}

TEST_F(Cli, EvalDepthAndOverlap) {
  ImageGray d(16, 12, 50.0);
  for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += static_cast<double>(i % 7);
  io::write_pfm(path("d.pfm"), d);
  auto cfg = config("e.txt", "pred=" + path("d.pfm").string() + "\ngt=" + path("d.pfm").string() + "\n");
  auto r = run({"eval", "--config", cfg.string(), "--out", path("o").string()});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  for (const char* k : {"abs_rel", "sq_rel", "rmse", "rmse_log"}) EXPECT_EQ(value_of(r.out, k), 0.0) << k;
  for (const char* k : {"delta1", "delta2", "delta3"}) EXPECT_EQ(value_of(r.out, k), 1.0) << k;

  Mask a(4, 1), b(4, 1);
  a.data = {1, 1, 0, 0};
  b.data = {0, 1, 1, 0};
  io::write_mask(path("a.pgm"), a);
  io::write_mask(path("b.pgm"), b);
  cfg = config("o.txt", "mode=overlap\npred=" + path("a.pgm").string() + "\ngt=" + path("b.pgm").string() + "\n");
  r = run({"eval", "--config", cfg.string(), "--out", path("o2").string()});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NEAR(value_of(r.out, "iou"), 1.0 / 3.0, 1e-9);
  EXPECT_NEAR(value_of(r.out, "dice"), 0.5, 1e-9);

  cfg = config("bad.txt", "mode=histogram\n");
  EXPECT_EQ(run({"eval", "--config", cfg.string(), "--out", path("o3").string()}).exit_code, 2);
}

TEST_F(Cli, EvalWithNoValidPixelsIsARuntimeFailure) {
  io::write_pfm(path("z.pfm"), ImageGray(8, 8, 0.0));
  io::write_pfm(path("g.pfm"), ImageGray(8, 8, 3.0));
  const auto cfg = config("e.txt", "pred=" + path("z.pfm").string() + "\ngt=" + path("g.pfm").string() + "\n");
  EXPECT_EQ(run({"eval", "--config", cfg.string(), "--out", path("o").string()}).exit_code, 1);
}

TEST_F(Cli, RegressorTrainingIsDeterministic) {
  const auto sc = config("sim.txt", "n_frames=6\nwidth=96\nsupersample=1\nrender_right=false\n");
  ASSERT_EQ(run({"simulate", "--config", sc.string(), "--out", path("ds").string()}).exit_code, 0);
  const auto tc = config("train.txt", "dataset=" + path("ds").string() + "\nepochs=20\nhidden=16\n");
  const auto a = run({"train-regressor", "--config", tc.string(), "--out", path("m1").string()});
  ASSERT_EQ(a.exit_code, 0) << a.err;
  const auto b = run({"train-regressor", "--config", tc.string(), "--out", path("m2").string()});
  ASSERT_EQ(b.exit_code, 0) << b.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(cli::snapshot(path("m1")), cli::snapshot(path("m2")));
  const auto ec = config("eval.txt", "mode=regressor\nmodel=" + (path("m1") / "model.txt").string() +
                                         "\ndataset=" + path("ds").string() + "\nsplit=train\n");
  const auto e = run({"eval", "--config", ec.string(), "--out", path("e").string()});
  ASSERT_EQ(e.exit_code, 0) << e.err;
  EXPECT_GT(value_of(e.out, "frames"), 0.0);
}
