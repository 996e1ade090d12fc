#pragma once

// Reference computations that need library types as inputs: a 50-digit
// finite-difference check of MLP backpropagation and a scan-and-bisect root
// finder for rays against a heightfield.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "probesense/regress.hpp"
#include "probesense/sim.hpp"

namespace oracle {

using probesense::Mlp;
using probesense::MlpGradients;

/// 0.5 |out - target|^2 of the network evaluated with 50-digit loops, with
/// one parameter optionally replaced.
inline Big big_loss(const Mlp& net, const Eigen::VectorXd& x, const Eigen::VectorXd& target, std::size_t layer,
                     bool is_bias, Eigen::Index r, Eigen::Index c, const Big& value) {
  std::vector<Big> a(x.data(), x.data() + x.size());
  for (std::size_t l = 0; l < net.layers(); ++l) {
    std::vector<Big> z(static_cast<std::size_t>(net.weights[l].rows()));
    for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i) {
      Big acc = (l == layer && is_bias && i == r) ? value : Big(net.biases[l](i));
      for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j) {
        const Big w =
            (l == layer && !is_bias && i == r && j == c) ? value : Big(net.weights[l](i, j));
        acc += w * a[static_cast<std::size_t>(j)];
      }
      if (l + 1 < net.layers() && acc < 0) acc *= Big(Mlp::kLeak);
      z[static_cast<std::size_t>(i)] = acc;
    }
    a = std::move(z);
  }
  Big loss = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Big d = a[i] - target(static_cast<Eigen::Index>(i));
    loss += d * d / 2;
  }
  return loss;
}

inline double gradient_check(const Mlp& net, const Eigen::VectorXd& x, const Eigen::VectorXd& t) {
  const MlpGradients g = mlp_backward(net, x, t);
  const Big eps("1e-5");
  double worst = 0;
  auto compare = [&](double analytic, const Big& fd) {
    const double f = static_cast<double>(fd);
    const double scale = std::max({std::abs(analytic), std::abs(f), 1e-10});
    worst = std::max(worst, std::abs(analytic - f) / scale);
  };
  for (std::size_t l = 0; l < net.layers(); ++l) {
    for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j) {
        const Big w(net.weights[l](i, j));
        compare(g.weights[l](i, j),
                (big_loss(net, x, t, l, false, i, j, w + eps) - big_loss(net, x, t, l, false, i, j, w - eps)) /
                    (2 * eps));
      }
      const Big b(net.biases[l](i));
      compare(g.biases[l](i),
              (big_loss(net, x, t, l, true, i, 0, b + eps) - big_loss(net, x, t, l, true, i, 0, b - eps)) / (2 * eps));
    }
  }
  return worst;
}

inline Mlp random_small_net(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(2, 6), depth(0, 2);
  std::vector<int> sizes{size(rng)};
  for (int i = depth(rng); i > 0; --i) sizes.push_back(size(rng));
  sizes.push_back(2);
  Mlp net = Mlp::random(sizes, rng());
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& b : net.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = n(rng);
  return net;
}

/// Sign-change scan followed by plain bisection on z(t) - h(x(t), y(t)).
inline Vec3 bisect_heightfield(const probesense::sim::Heightfield& hf, const Vec3& o, const Vec3& d) {
  auto f = [&](double t) {
    const Vec3 p = o + t * d;
    return p.z() - hf.height(p.x(), p.y());
  };
  double lo = 0.0, hi = 0.0;
  for (double t = 0.05; t < 500.0; t += 0.05) {
    if (f(t) > 0) {
      hi = t;
      lo = t - 0.05;
      break;
    }
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0 ? hi : lo) = mid;
  }
  return o + 0.5 * (lo + hi) * d;
}

}  // namespace oracle
