#pragma once

// Central finite-difference oracle for nn::Network. The scalar probed is
// L = sum(y * R) for a fixed random R, accumulated in double so that only
// the perturbed receptive field contributes rounding noise.

#include <cmath>
#include <cstdint>
#include <vector>

#include "archsim/nn/network.hpp"
#include "archsim/rng.hpp"

namespace archsim::testing {

struct GradCheck {
  double input_rel_error = 0.0;
  double param_rel_error = 0.0;  // 0 when the network has no trainable params
  std::size_t params_checked = 0;
};

inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-6});
  return std::sqrt(diff) / denom;
}

/// Inputs spread on a shuffled grid with gaps larger than the FD step and
/// kept at least 0.1 away from zero, so ReLU kinks and max-pool ties are not crossed.
inline Tensor spaced_input(const Shape& shape, std::uint64_t seed) {
  Tensor t(shape);
  Rng rng(seed, "spaced");
  const std::size_t n = t.size();
  auto perm = rng.permutation(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mag = 0.1 + 0.9 * (static_cast<double>(perm[i]) + 0.5) / static_cast<double>(n);
    t[i] = static_cast<float>(rng.below(2) ? mag : -mag);
  }
  return t;
}

inline GradCheck check_gradients(const nn::Network& net, nn::WeightMap weights, const Tensor& x, nn::Mode mode,
                                 std::uint64_t seed, double step = 1e-3) {
  Rng rng(seed, "probe");
  Tensor probe(Shape([&] {
    Shape s{x.dim(0)};
    for (auto d : net.output_shape()) s.push_back(d);
    return s;
  }()));
  for (auto& v : probe.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));

  auto objective = [&](const Tensor& in, const nn::WeightMap& w) {
    const Tensor y = net.forward(in, w, mode);
    double l = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) l += static_cast<double>(y[i]) * probe[i];
    return l;
  };

  nn::Tape tape;
  net.forward(x, weights, mode, &tape);
  std::vector<Tensor> grads;
  const Tensor dx = net.backward(probe, weights, tape, &grads);

  GradCheck out;
  {
    std::vector<double> fd(x.size()), an(x.size());
    Tensor xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const float orig = xp[i];
      const float hi = orig + static_cast<float>(step);
      const float lo = orig - static_cast<float>(step);
      xp[i] = hi;
      const double lp = objective(xp, weights);
      xp[i] = lo;
      const double lm = objective(xp, weights);
      xp[i] = orig;
      fd[i] = (lp - lm) / (static_cast<double>(hi) - static_cast<double>(lo));
      an[i] = dx[i];
    }
    out.input_rel_error = rel_error(fd, an);
  }
  std::vector<double> fd, an;
  const auto& params = net.params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].role == nn::ParamRole::kBuffer) continue;
    Tensor& w = weights.at(params[k].name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float orig = w[i];
      const float hi = orig + static_cast<float>(step);
      const float lo = orig - static_cast<float>(step);
      w[i] = hi;
      const double lp = objective(x, weights);
      w[i] = lo;
      const double lm = objective(x, weights);
      w[i] = orig;
      fd.push_back((lp - lm) / (static_cast<double>(hi) - static_cast<double>(lo)));
      an.push_back(grads[k][i]);
    }
  }
  out.params_checked = fd.size();
  if (!fd.empty()) out.param_rel_error = rel_error(fd, an);
  return out;
}

}  // namespace archsim::testing
