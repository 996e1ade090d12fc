#pragma once

// Sensing-area regression: 50 points sampled along the probe axis of a
// segmentation mask, a block-mean image descriptor, and a small fully
// connected network trained by backpropagation to predict where the probe
// axis meets the tissue in the image.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "probesense/error.hpp"
#include "probesense/geomcore.hpp"
#include "probesense/image.hpp"
#include "probesense/imageio.hpp"

namespace probesense {

constexpr int kAxisPoints = 50;
constexpr int kDescriptorGrid = 16;

struct AxisSample {
  std::array<Vec2, kAxisPoints> points;  // tip first
};

/// Principal axis of the mask pixels, sampled at 50 evenly spaced points
/// between the extreme projections. An end cut by the image border is the
/// tail; otherwise the end whose last 10% of length holds fewer pixels is
/// the (tapered) tip. Exact ties keep the smaller projection first.
inline AxisSample sample_axis(const Mask& mask, double min_ratio = 4.0) {
  std::vector<Vec2> px;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask(x, y)) px.emplace_back(x, y);
  if (px.empty()) fail(Errc::EmptyMask, "mask has no pixels");
  if (px.size() < 2) fail(Errc::NotElongated, "a single pixel has no axis");
  const PrincipalAxis axis = pca_axis(px);
  if (!(axis.major_variance >= min_ratio * axis.minor_variance))
    fail(Errc::NotElongated, "mask is not elongated enough for an axis");
  const Vec2 dir = axis.direction;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& p : px) {
    const double s = (p - axis.centroid).dot(dir);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  const double band = 0.1 * (hi - lo);
  std::size_t low_count = 0;
  std::size_t high_count = 0;
  bool low_border = false;
  bool high_border = false;
  for (const auto& p : px) {
    const double s = (p - axis.centroid).dot(dir);
    const bool border = p.x() == 0 || p.y() == 0 || p.x() == mask.width - 1 || p.y() == mask.height - 1;
    if (s <= lo + band) {
      ++low_count;
      low_border = low_border || border;
    }
    if (s >= hi - band) {
      ++high_count;
      high_border = high_border || border;
    }
  }
  const bool tip_high = low_border != high_border ? low_border : high_count < low_count;
  const double start = tip_high ? hi : lo;
  const double end = tip_high ? lo : hi;
  AxisSample out;
  for (int i = 0; i < kAxisPoints; ++i) {
    const double s = start + (end - start) * i / (kAxisPoints - 1);
    out.points[static_cast<std::size_t>(i)] = axis.centroid + s * dir;
  }
  return out;
}

/// Block means over a g x g grid, row-major. Block b spans
/// [floor(b W / g), floor((b + 1) W / g)) in each direction.
inline std::vector<double> image_descriptor(const ImageGray& img, int g = kDescriptorGrid) {
  if (g < 2) fail(Errc::DegenerateInput, "descriptor grid must be at least 2");
  if (img.width < g || img.height < g) fail(Errc::ImageTooSmall, "image smaller than the descriptor grid");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(g * g));
  for (int by = 0; by < g; ++by) {
    const int y0 = by * img.height / g;
    const int y1 = (by + 1) * img.height / g;
    for (int bx = 0; bx < g; ++bx) {
      const int x0 = bx * img.width / g;
      const int x1 = (bx + 1) * img.width / g;
      double acc = 0.0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) acc += img(x, y);
      out.push_back(std::clamp(acc / ((x1 - x0) * (y1 - y0)), 0.0, 1.0));
    }
  }
  return out;
}

/// Network input: descriptor followed by the axis points, coordinates
/// divided by the image width.
inline Eigen::VectorXd regressor_input(const std::vector<double>& descriptor, const AxisSample& axis, int width) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(descriptor.size() + 2 * kAxisPoints));
  Eigen::Index k = 0;
  for (double d : descriptor) v(k++) = d;
  for (const auto& p : axis.points) {
    v(k++) = p.x() / width;
    v(k++) = p.y() / width;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Network

/// Fully connected network, leaky rectifier (slope 0.01) on hidden layers
/// and identity output.
struct Mlp {
  std::vector<int> layer_sizes;
  std::vector<Eigen::MatrixXd> weights;  // weights[l] is sizes[l+1] x sizes[l]
  std::vector<Eigen::VectorXd> biases;

  static constexpr double kLeak = 0.01;

  static Mlp zeros(const std::vector<int>& sizes) {
    if (sizes.size() < 2) fail(Errc::ShapeMismatch, "a network needs input and output layers");
    for (int s : sizes)
      if (s < 1) fail(Errc::ShapeMismatch, "layer sizes must be positive");
    Mlp m;
    m.layer_sizes = sizes;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      m.weights.push_back(Eigen::MatrixXd::Zero(sizes[l + 1], sizes[l]));
      m.biases.push_back(Eigen::VectorXd::Zero(sizes[l + 1]));
    }
    return m;
  }

  /// He-scaled normal weights, zero biases.
  static Mlp random(const std::vector<int>& sizes, std::uint64_t seed) {
    Mlp m = zeros(sizes);
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      std::normal_distribution<double> n(0.0, std::sqrt(2.0 / sizes[l]));
      for (Eigen::Index j = 0; j < m.weights[l].cols(); ++j)
        for (Eigen::Index i = 0; i < m.weights[l].rows(); ++i) m.weights[l](i, j) = n(rng);
    }
    return m;
  }

  std::size_t layers() const { return weights.size(); }
  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layers(); ++l) n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
  }

  void validate() const {
    if (layer_sizes.size() < 2 || weights.size() + 1 != layer_sizes.size() || biases.size() != weights.size())
      fail(Errc::ShapeMismatch, "inconsistent layer count");
    for (std::size_t l = 0; l < layers(); ++l) {
      if (weights[l].rows() != layer_sizes[l + 1] || weights[l].cols() != layer_sizes[l] ||
          biases[l].size() != layer_sizes[l + 1])
        fail(Errc::ShapeMismatch, "layer " + std::to_string(l) + " has inconsistent dimensions");
      if (!weights[l].allFinite() || !biases[l].allFinite())
        fail(Errc::DegenerateInput, "non-finite network parameter");
    }
  }
};

struct MlpGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  double loss = 0.0;  // 0.5 * |out - target|^2
};

namespace detail {

inline void check_input(const Mlp& net, const Eigen::VectorXd& x) {
  if (x.size() != net.input_size())
    fail(Errc::ShapeMismatch, "input has " + std::to_string(x.size()) + " entries, network expects " +
                                  std::to_string(net.input_size()));
}

/// Activations of every layer, input first.
inline std::vector<Eigen::VectorXd> forward_all(const Mlp& net, const Eigen::VectorXd& x) {
  check_input(net, x);
  std::vector<Eigen::VectorXd> a{x};
  for (std::size_t l = 0; l < net.layers(); ++l) {
    Eigen::VectorXd z = net.weights[l] * a.back() + net.biases[l];
    if (l + 1 < net.layers()) z = z.unaryExpr([](double v) { return v > 0 ? v : Mlp::kLeak * v; });
    a.push_back(std::move(z));
  }
  return a;
}

}  // namespace detail

inline Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& x) {
  return detail::forward_all(net, x).back();
}

/// Exact gradients of 0.5 |forward(x) - target|^2.
inline MlpGradients mlp_backward(const Mlp& net, const Eigen::VectorXd& x, const Eigen::VectorXd& target) {
  if (target.size() != net.output_size()) fail(Errc::ShapeMismatch, "target size differs from the output layer");
  const auto a = detail::forward_all(net, x);
  MlpGradients g;
  g.weights.resize(net.layers());
  g.biases.resize(net.layers());
  Eigen::VectorXd delta = a.back() - target;
  g.loss = 0.5 * delta.squaredNorm();
  for (std::size_t l = net.layers(); l-- > 0;) {
    g.weights[l] = delta * a[l].transpose();
    g.biases[l] = delta;
    if (l == 0) break;
    delta = net.weights[l].transpose() * delta;
    // a[l] is the leaky-rectified output of layer l - 1; its sign equals the
    // sign of the pre-activation.
    for (Eigen::Index i = 0; i < delta.size(); ++i)
      if (!(a[l](i) > 0)) delta(i) *= Mlp::kLeak;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double learning_rate = 1e-5;
  int epochs = 700;
  int batch_size = 8;
  std::uint64_t seed = 1;
  int halve_at = 300;    // learning rate halves from this epoch
  int quarter_at = 400;  // and is a quarter of the base rate from this one
  double beta1 = 0.9;    // Adam moments
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;  // L2 coefficient added to weight gradients
  std::vector<int> hidden{128, 64};

  /// Settings for training in seconds on a few hundred samples.
  static TrainConfig desk() {
    TrainConfig c;
    c.learning_rate = 1e-3;
    c.epochs = 400;
    c.batch_size = 16;
    c.halve_at = 200;
    c.quarter_at = 300;
    return c;
  }

  void validate() const {
    if (!(learning_rate > 0) || epochs < 1 || batch_size < 1)
      fail(Errc::DegenerateInput, "learning rate, epochs and batch size must be positive");
    if (halve_at < 0 || quarter_at < halve_at) fail(Errc::DegenerateInput, "schedule epochs out of order");
    for (int h : hidden)
      if (h < 1) fail(Errc::DegenerateInput, "hidden layer sizes must be positive");
  }

  double rate_at(int epoch) const {
    if (epoch >= quarter_at) return 0.25 * learning_rate;
    if (epoch >= halve_at) return 0.5 * learning_rate;
    return learning_rate;
  }
};

struct Sample {
  Eigen::VectorXd input;
  Eigen::VectorXd target;
};

struct TrainResult {
  Mlp net;
  std::vector<double> loss_curve;  // mean 0.5 |out - target|^2 over each epoch's batches
};

/// Mini-batch Adam on 0.5 |out - target|^2 with seeded shuffling.
/// `init` replaces the seeded random initialisation when given.
inline TrainResult train(const std::vector<Sample>& data, const TrainConfig& cfg, const Mlp* init = nullptr) {
  cfg.validate();
  if (data.empty()) fail(Errc::EmptyInput, "training set is empty");
  const auto n_in = data.front().input.size();
  const auto n_out = data.front().target.size();
  for (const auto& s : data)
    if (s.input.size() != n_in || s.target.size() != n_out) fail(Errc::ShapeMismatch, "inconsistent sample sizes");
  std::vector<int> sizes{static_cast<int>(n_in)};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(static_cast<int>(n_out));
  TrainResult r;
  if (init) {
    init->validate();
    if (init->layer_sizes != sizes) fail(Errc::ShapeMismatch, "initial network does not match the data");
    r.net = *init;
  } else {
    r.net = Mlp::random(sizes, cfg.seed);
  }
  Mlp& net = r.net;
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  for (std::size_t l = 0; l < net.layers(); ++l) {
    mw.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
    vw.push_back(mw.back());
    mb.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    vb.push_back(mb.back());
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed ^ 0xa5a5a5a5ULL);
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = cfg.rate_at(epoch);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double inv = 1.0 / static_cast<double>(stop - start);
      MlpGradients acc;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& s = data[order[i]];
        MlpGradients g = mlp_backward(net, s.input, s.target);
        epoch_loss += g.loss;
        if (acc.weights.empty()) {
          acc = std::move(g);
        } else {
          for (std::size_t l = 0; l < net.layers(); ++l) {
            acc.weights[l] += g.weights[l];
            acc.biases[l] += g.biases[l];
          }
        }
      }
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t l = 0; l < net.layers(); ++l) {
        Eigen::MatrixXd gw = acc.weights[l] * inv + cfg.weight_decay * net.weights[l];
        const Eigen::VectorXd gb = acc.biases[l] * inv;
        mw[l] = cfg.beta1 * mw[l] + (1 - cfg.beta1) * gw;
        vw[l] = cfg.beta2 * vw[l] + (1 - cfg.beta2) * gw.cwiseProduct(gw);
        mb[l] = cfg.beta1 * mb[l] + (1 - cfg.beta1) * gb;
        vb[l] = cfg.beta2 * vb[l] + (1 - cfg.beta2) * gb.cwiseProduct(gb);
        net.weights[l].array() -= lr * (mw[l].array() / c1) / ((vw[l].array() / c2).sqrt() + cfg.adam_eps);
        net.biases[l].array() -= lr * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + cfg.adam_eps);
      }
    }
    r.loss_curve.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  return r;
}

/// Mean 0.5 |out - target|^2 over a sample set.
inline double evaluate_loss(const Mlp& net, const std::vector<Sample>& data) {
  if (data.empty()) fail(Errc::EmptyInput, "no samples");
  double acc = 0.0;
  for (const auto& s : data) acc += 0.5 * (mlp_forward(net, s.input) - s.target).squaredNorm();
  return acc / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Prediction

/// Descriptor of the left image without its red channel (the laser lives
/// there), plus the axis, through the network; the output is scaled back to
/// pixels and clamped into the image.
inline Vec2 predict_intersection(const Mlp& net, const ImageGray& img, const AxisSample& axis,
                                 int grid = kDescriptorGrid) {
  const Eigen::VectorXd out = mlp_forward(net, regressor_input(image_descriptor(img, grid), axis, img.width));
  if (out.size() != 2) fail(Errc::ShapeMismatch, "regressor must output two values");
  return Vec2(std::clamp(out(0) * img.width, 0.0, img.width - 1.0),
              std::clamp(out(1) * img.width, 0.0, img.height - 1.0));
}

inline Sample make_sample(const ImageGray& img, const AxisSample& axis, const Vec2& target,
                          int grid = kDescriptorGrid) {
  Sample s;
  s.input = regressor_input(image_descriptor(img, grid), axis, img.width);
  s.target = Eigen::Vector2d(target.x() / img.width, target.y() / img.width);
  return s;
}

// ---------------------------------------------------------------------------
// Text formats

/// "mlp L s0 s1 ... sL" then, per layer, the weights row by row and the
/// biases, one line each.
inline std::string serialize(const Mlp& net) {
  net.validate();
  std::ostringstream os;
  os << "mlp " << net.layer_sizes.size();
  for (int s : net.layer_sizes) os << ' ' << s;
  os << '\n';
  auto put = [&](double v, bool first) { os << (first ? "" : " ") << format_number(v); };
  for (std::size_t l = 0; l < net.layers(); ++l) {
    for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j) put(net.weights[l](i, j), j == 0);
      os << '\n';
    }
    for (Eigen::Index i = 0; i < net.biases[l].size(); ++i) put(net.biases[l](i), i == 0);
    os << '\n';
  }
  return os.str();
}

inline Mlp parse_mlp(const std::string& text) {
  std::istringstream is(text);
  std::string tag;
  std::size_t n = 0;
  if (!(is >> tag >> n) || tag != "mlp" || n < 2 || n > 64) fail(Errc::Parse, "bad model header");
  std::vector<int> sizes(n);
  for (auto& s : sizes)
    if (!(is >> s) || s < 1 || s > 100000) fail(Errc::Parse, "bad layer size");
  Mlp m = Mlp::zeros(sizes);
  for (std::size_t l = 0; l < m.layers(); ++l) {
    for (Eigen::Index i = 0; i < m.weights[l].rows(); ++i)
      for (Eigen::Index j = 0; j < m.weights[l].cols(); ++j)
        if (!(is >> m.weights[l](i, j))) fail(Errc::Parse, "truncated weights");
    for (Eigen::Index i = 0; i < m.biases[l].size(); ++i)
      if (!(is >> m.biases[l](i))) fail(Errc::Parse, "truncated biases");
  }
  if (is >> tag) fail(Errc::Parse, "trailing data after the model");
  m.validate();
  return m;
}

/// One sample per line: inputs then targets, comma separated, with a header
/// naming the columns.
inline std::string dataset_csv(const std::vector<Sample>& data) {
  if (data.empty()) fail(Errc::EmptyInput, "no samples");
  std::string out;
  const auto ni = data.front().input.size();
  const auto nt = data.front().target.size();
  for (Eigen::Index i = 0; i < ni; ++i) out += (i ? ",x" : "x") + std::to_string(i);
  for (Eigen::Index i = 0; i < nt; ++i) out += ",y" + std::to_string(i);
  out += '\n';
  for (const auto& s : data) {
    for (Eigen::Index i = 0; i < ni; ++i) out += (i ? "," : "") + format_number(s.input(i));
    for (Eigen::Index i = 0; i < nt; ++i) out += "," + format_number(s.target(i));
    out += '\n';
  }
  return out;
}

}  // namespace probesense
