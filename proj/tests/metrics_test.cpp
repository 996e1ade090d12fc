#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "probesense/metrics.hpp"

using namespace probesense;

namespace {

ImageGray random_depth(std::mt19937_64& rng, double lo = 5.0, double hi = 150.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ImageGray img(16, 16);
  for (double& v : img.data) v = u(rng);
  return img;
}

Mask random_mask(std::mt19937_64& rng, double p, int w = 16, int h = 16) {
  std::bernoulli_distribution b(p);
  Mask m(w, h);
  for (auto& v : m.data) v = b(rng);
  return m;
}

DepthEvalReport naive_depth(const ImageGray& p, const ImageGray& g) {
  double ar = 0, sr = 0, se = 0, sl = 0, d1 = 0, d2 = 0, d3 = 0;
  const double n = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = p.data[i], b = g.data[i];
    ar += std::fabs(a - b) / b;
    sr += (a - b) * (a - b) / b;
    se += (a - b) * (a - b);
    sl += std::pow(std::log(a) - std::log(b), 2);
    const double ratio = a > b ? a / b : b / a;
    d1 += ratio < 1.25;
    d2 += ratio < 1.5625;
    d3 += ratio < 1.953125;
  }
  return {ar / n, sr / n, std::sqrt(se / n), std::sqrt(sl / n), d1 / n, d2 / n, d3 / n};
}

}  // namespace

TEST(DepthMetrics, PerfectPrediction) {
  std::mt19937_64 rng(51);
  const ImageGray g = random_depth(rng);
  const DepthEvalReport r = depth_metrics(g, g);
  EXPECT_EQ(r.abs_rel, 0.0);
  EXPECT_EQ(r.sq_rel, 0.0);
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_EQ(r.rmse_log, 0.0);
  EXPECT_EQ(r.delta1, 1.0);
  EXPECT_EQ(r.delta2, 1.0);
  EXPECT_EQ(r.delta3, 1.0);
}

TEST(DepthMetrics, ConstantShift) {
  const DepthEvalReport r = depth_metrics(ImageGray(8, 8, 11.0), ImageGray(8, 8, 10.0));
  EXPECT_NEAR(r.rmse, 1.0, 1e-15);
  EXPECT_NEAR(r.abs_rel, 0.1, 1e-15);
  EXPECT_NEAR(r.sq_rel, 0.1, 1e-15);
}

TEST(DepthMetrics, MatchesNaiveOracleAndInvariants) {
  std::mt19937_64 rng(52);
  for (int t = 0; t < 100; ++t) {
    const ImageGray p = random_depth(rng), g = random_depth(rng);
    const DepthEvalReport r = depth_metrics(p, g), o = naive_depth(p, g);
    EXPECT_NEAR(r.abs_rel, o.abs_rel, 1e-12);
    EXPECT_NEAR(r.sq_rel, o.sq_rel, 1e-12);
    EXPECT_NEAR(r.rmse, o.rmse, 1e-12);
    EXPECT_NEAR(r.rmse_log, o.rmse_log, 1e-12);
    EXPECT_NEAR(r.delta1, o.delta1, 1e-12);
    EXPECT_NEAR(r.delta2, o.delta2, 1e-12);
    EXPECT_NEAR(r.delta3, o.delta3, 1e-12);
    EXPECT_LE(r.delta1, r.delta2);
    EXPECT_LE(r.delta2, r.delta3);
    const DepthEvalReport s = depth_metrics(g, p);
    EXPECT_EQ(s.delta1, r.delta1);
    EXPECT_EQ(s.delta2, r.delta2);
    EXPECT_EQ(s.delta3, r.delta3);
  }
}

TEST(DepthMetrics, PermutationInvariant) {
  std::mt19937_64 rng(53);
  const ImageGray p = random_depth(rng), g = random_depth(rng);
  std::vector<std::size_t> perm(p.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  ImageGray pp = p, gp = g;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    pp.data[i] = p.data[perm[i]];
    gp.data[i] = g.data[perm[i]];
  }
  const DepthEvalReport a = depth_metrics(p, g), b = depth_metrics(pp, gp);
  EXPECT_NEAR(a.abs_rel, b.abs_rel, 1e-12);
  EXPECT_NEAR(a.rmse, b.rmse, 1e-12);
  EXPECT_EQ(a.delta1, b.delta1);
}

TEST(DepthMetrics, MasksSelectTheOverlap) {
  std::mt19937_64 rng(54);
  ImageGray p = random_depth(rng), g = random_depth(rng);
  const Mask mp = random_mask(rng, 0.7), mg = random_mask(rng, 0.7);
  std::vector<double> pv, gv;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (mp.data[i] && mg.data[i]) {
      pv.push_back(p.data[i]);
      gv.push_back(g.data[i]);
    } else {
      p.data[i] = -1.0;  // must never be read
    }
  }
  ImageGray pc(static_cast<int>(pv.size()), 1), gc(static_cast<int>(gv.size()), 1);
  pc.data = pv;
  gc.data = gv;
  const DepthEvalReport a = depth_metrics(p, g, mp, mg), b = naive_depth(pc, gc);
  EXPECT_NEAR(a.rmse, b.rmse, 1e-12);
  EXPECT_NEAR(a.delta1, b.delta1, 1e-12);
}

TEST(DepthMetrics, Errors) {
  try {
    depth_metrics(ImageGray(4, 4, 1.0), ImageGray(4, 4, 1.0), Mask(4, 4), Mask(4, 4, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyOverlap);
  }
  try {
    depth_metrics(ImageGray(4, 4, 0.0), ImageGray(4, 4, 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonPositiveValue);
  }
}

TEST(SsimSummary, IdenticalPairsAndSinglePair) {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::pair<ImageGray, ImageGray>> pairs;
  for (int k = 0; k < 4; ++k) {
    ImageGray a(12, 12);
    for (double& v : a.data) v = u(rng);
    pairs.emplace_back(a, a);
  }
  const MeanStd s = ssim_summary(pairs);
  EXPECT_NEAR(s.mean, 1.0, 1e-12);
  EXPECT_NEAR(s.std, 0.0, 1e-12);
  EXPECT_EQ(ssim_summary(std::span(pairs.data(), 1)).std, 0.0);
  EXPECT_THROW(ssim_summary({}), Error);
}

TEST(SsimSummary, TwoPassRecomputation) {
  std::mt19937_64 rng(56);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::pair<ImageGray, ImageGray>> pairs;
  std::vector<double> per;
  for (int k = 0; k < 9; ++k) {
    ImageGray a(12, 12), b(12, 12);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a.data[i] = u(rng);
      b.data[i] = 0.5 * a.data[i] + 0.5 * u(rng);
    }
    const ImageGray s = ssim_block3(a, b);
    double m = 0;
    for (double v : s.data) m += v;
    per.push_back(m / static_cast<double>(s.size()));
    pairs.emplace_back(a, b);
  }
  double mean = 0;
  for (double v : per) mean += v;
  mean /= static_cast<double>(per.size());
  double var = 0;
  for (double v : per) var += (v - mean) * (v - mean);
  var /= static_cast<double>(per.size());
  const MeanStd s = ssim_summary(pairs);
  EXPECT_NEAR(s.mean, mean, 1e-12);
  EXPECT_NEAR(s.std, std::sqrt(var), 1e-12);
}

TEST(Overlap, Examples) {
  Mask a(4, 1), b(4, 1);
  EXPECT_EQ(iou_dice(a, b).iou, 1.0);
  EXPECT_EQ(iou_dice(a, b).dice, 1.0);
  a.data = {1, 1, 0, 0};
  EXPECT_EQ(iou_dice(a, a).iou, 1.0);
  EXPECT_EQ(iou_dice(a, a).dice, 1.0);
  b.data = {0, 0, 1, 1};
  EXPECT_EQ(iou_dice(a, b).iou, 0.0);
  EXPECT_EQ(iou_dice(a, b).dice, 0.0);
  b.data = {0, 1, 1, 0};
  EXPECT_DOUBLE_EQ(iou_dice(a, b).iou, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(iou_dice(a, b).dice, 0.5);
  EXPECT_THROW(iou_dice(Mask(3, 3), Mask(3, 4)), Error);
}

TEST(Overlap, IouNeverExceedsDice) {
  std::mt19937_64 rng(57);
  std::uniform_real_distribution<double> p(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const Mask a = random_mask(rng, p(rng), 8, 8), b = random_mask(rng, p(rng), 8, 8);
    const Overlap o = iou_dice(a, b);
    EXPECT_LE(o.iou, o.dice + 1e-15);
    int inter = 0, uni = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      inter += a.data[i] && b.data[i];
      uni += a.data[i] || b.data[i];
      na += a.data[i];
      nb += b.data[i];
    }
    if (uni) {
      EXPECT_DOUBLE_EQ(o.iou, double(inter) / uni);
      EXPECT_DOUBLE_EQ(o.dice, 2.0 * inter / (na + nb));
    }
  }
}

TEST(PointErrors, PerfectAndTriangle) {
  const std::vector<Vec2> pts{{1, 2}, {3, 5}, {-4, 0.5}};
  const PointErrorStats s = point_error_stats(pts, pts);
  EXPECT_EQ(s.mean, 0.0);
  EXPECT_EQ(s.median, 0.0);
  EXPECT_EQ(s.r2, 1.0);
  const std::vector<Vec2> p{{3, 4}}, g{{0, 0}};
  const PointErrorStats t = point_error_stats(p, g);
  EXPECT_DOUBLE_EQ(t.mean, 5.0);
  EXPECT_DOUBLE_EQ(t.median, 5.0);
  EXPECT_EQ(t.std, 0.0);
}

TEST(PointErrors, MatchesNaiveOracle) {
  std::mt19937_64 rng(58);
  std::normal_distribution<double> n(0.0, 20.0);
  for (int t = 0; t < 100; ++t) {
    const int count = 1 + t % 17;
    std::vector<Vec2> p, g;
    for (int i = 0; i < count; ++i) {
      g.emplace_back(100 + n(rng), 80 + n(rng));
      p.emplace_back(g.back() + Vec2(0.2 * n(rng), 0.2 * n(rng)));
    }
    std::vector<double> e;
    for (int i = 0; i < count; ++i) e.push_back(std::hypot(p[i].x() - g[i].x(), p[i].y() - g[i].y()));
    double mean = 0;
    for (double v : e) mean += v / count;
    double var = 0;
    for (double v : e) var += (v - mean) * (v - mean) / count;
    std::vector<double> sorted = e;
    std::sort(sorted.begin(), sorted.end());
    const double median = count % 2 ? sorted[count / 2] : (sorted[count / 2 - 1] + sorted[count / 2]) / 2;
    double r2 = 0;
    for (int c = 0; c < 2; ++c) {
      double m = 0;
      for (const auto& q : g) m += q(c) / count;
      double res = 0, tot = 0;
      for (int i = 0; i < count; ++i) {
        res += std::pow(p[i](c) - g[i](c), 2);
        tot += std::pow(g[i](c) - m, 2);
      }
      r2 += tot > 0 ? 1 - res / tot : (res == 0 ? 1 : 0);
    }
    const PointErrorStats s = point_error_stats(p, g);
    EXPECT_NEAR(s.mean, mean, 1e-12);
    EXPECT_NEAR(s.std, std::sqrt(var), 1e-12);
    EXPECT_NEAR(s.median, median, 1e-12);
    EXPECT_NEAR(s.r2, r2 / 2, 1e-12);
  }
}

TEST(PointErrors, LengthMismatch) {
  const std::vector<Vec2> a{{0, 0}}, b{{0, 0}, {1, 1}};
  try {
    point_error_stats(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::LengthMismatch);
  }
}

TEST(Report, CsvHeaderAndRows) {
  const std::string csv = report_csv(report_rows(depth_metrics(ImageGray(2, 2, 11.0), ImageGray(2, 2, 10.0))));
  EXPECT_EQ(csv.substr(0, 13), "metric,value\n");
  EXPECT_NE(csv.find("rmse,1\n"), std::string::npos);
  EXPECT_NE(csv.find("delta3,1\n"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 8);
}
