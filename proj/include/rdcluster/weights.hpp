#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rdcluster/errors.hpp"
#include "rdcluster/kernel.hpp"
#include "rdcluster/numeric.hpp"
#include "rdcluster/sample.hpp"

namespace rdcluster {

struct WindowConfig {
  double h = 0.0;
  int min_per_side = 3;  // observations with nonzero kernel weight per side
};

// One-sided kernel moments S*_{n,l} = (1/n) sum_g sum_i k*_h(X_gi) (X_gi/h)^l,
// with k+_h(x) = k(x/h) 1{0 <= x} / h and k-_h(x) = k(x/h) 1{x < 0} / h.
struct SideMoments {
  std::array<double, 4> plus{};
  std::array<double, 4> minus{};
};

inline SideMoments side_moments(const ClusteredSample& sample, const KernelSpec& kernel,
                                double h) {
  KahanSum plus[4], minus[4];
  const double inv_nh = 1.0 / (static_cast<double>(sample.n()) * h);
  for (std::size_t g = 0; g < sample.num_clusters(); ++g) {
    for (std::size_t i = 0; i < sample.size(g); ++i) {
      const double x = sample.x(g, i);
      const double kv = kernel(x / h);
      if (kv == 0.0) continue;
      const double base = kv * inv_nh;
      const double u = x / h;
      double p = 1.0;
      if (on_treated_side(x)) {
        for (int l = 0; l < 4; ++l, p *= u) plus[l].add(base * p);
      } else {
        for (int l = 0; l < 4; ++l, p *= u) minus[l].add(base * p);
      }
    }
  }
  SideMoments m;
  for (int l = 0; l < 4; ++l) {
    m.plus[l] = plus[l].value();
    m.minus[l] = minus[l].value();
  }
  return m;
}

//! Local linear RD weights for one bandwidth.
//!
//! w_gi = w+_gi - w-_gi with
//!   w*_gi = (1/n) k*_h(X_gi) (S*_2 - S*_1 X_gi/h) / (S*_2 S*_0 - S*_1^2).
//! Each side's weights sum to one and are orthogonal to x, so the implied
//! estimator reproduces piecewise-linear regression functions exactly.
class WeightSet {
public:
  double h = 0.0;
  SideMoments moments;
  std::vector<double> w;        // flat layout matching ClusteredSample
  std::vector<double> w_plus;
  std::vector<double> w_minus;
  std::vector<double> k_over_n;     // (1/n) k*_h(X_gi) on the unit's own side
  std::vector<std::size_t> offset;  // per-cluster offsets, offset.back() == n

  std::size_t n() const { return w.size(); }
  std::size_t num_clusters() const { return offset.empty() ? 0 : offset.size() - 1; }
  std::size_t cluster_begin(std::size_t g) const { return offset[g]; }
  std::size_t cluster_end(std::size_t g) const { return offset[g + 1]; }
};

inline void check_shape(const ClusteredSample& sample, const WeightSet& weights) {
  if (weights.n() != sample.n() || weights.offset != sample.offsets()) {
    fail(errc::shape_mismatch, "weights do not match the sample layout");
  }
}

inline WeightSet local_linear_weights(const ClusteredSample& sample, const KernelSpec& kernel,
                                      double h, const WindowConfig& cfg = {}) {
  if (!(h > 0.0)) fail(errc::invalid_config, "bandwidth must be positive");
  const int min_per_side = cfg.min_per_side > 0 ? cfg.min_per_side : 3;

  // Support check: enough in-window mass and at least two distinct x per side.
  int count[2] = {0, 0};
  double first_x[2] = {0.0, 0.0};
  bool distinct[2] = {false, false};
  for (std::size_t g = 0; g < sample.num_clusters(); ++g) {
    for (std::size_t i = 0; i < sample.size(g); ++i) {
      const double x = sample.x(g, i);
      if (kernel(x / h) == 0.0) continue;
      const int s = on_treated_side(x) ? 0 : 1;
      if (count[s] == 0) {
        first_x[s] = x;
      } else if (x != first_x[s]) {
        distinct[s] = true;
      }
      ++count[s];
    }
  }
  for (int s = 0; s < 2; ++s) {
    const char* side = s == 0 ? "treated side" : "control side";
    if (count[s] < min_per_side) {
      fail(errc::insufficient_support,
           std::string(side) + " has " + std::to_string(count[s]) +
               " in-window observations, need " + std::to_string(min_per_side));
    }
    if (!distinct[s]) {
      fail(errc::insufficient_support,
           std::string(side) + " needs at least 2 distinct x values in the window");
    }
  }

  const SideMoments m = side_moments(sample, kernel, h);
  const double den_plus = m.plus[2] * m.plus[0] - m.plus[1] * m.plus[1];
  const double den_minus = m.minus[2] * m.minus[0] - m.minus[1] * m.minus[1];
  if (den_plus <= 1e-12) {
    fail(errc::degenerate_design, "treated side: S2*S0 - S1^2 = " + std::to_string(den_plus));
  }
  if (den_minus <= 1e-12) {
    fail(errc::degenerate_design, "control side: S2*S0 - S1^2 = " + std::to_string(den_minus));
  }

  WeightSet out;
  out.h = h;
  out.moments = m;
  out.offset = sample.offsets();
  out.w.assign(sample.n(), 0.0);
  out.w_plus.assign(sample.n(), 0.0);
  out.w_minus.assign(sample.n(), 0.0);
  out.k_over_n.assign(sample.n(), 0.0);

  const double inv_nh = 1.0 / (static_cast<double>(sample.n()) * h);
  for (std::size_t g = 0; g < sample.num_clusters(); ++g) {
    for (std::size_t i = 0; i < sample.size(g); ++i) {
      const double x = sample.x(g, i);
      const double kv = kernel(x / h);
      if (kv == 0.0) continue;
      const double u = x / h;
      const std::size_t f = sample.flat_index(g, i);
      out.k_over_n[f] = kv * inv_nh;
      if (on_treated_side(x)) {
        out.w_plus[f] = kv * inv_nh * (m.plus[2] - m.plus[1] * u) / den_plus;
      } else {
        out.w_minus[f] = kv * inv_nh * (m.minus[2] - m.minus[1] * u) / den_minus;
      }
      out.w[f] = out.w_plus[f] - out.w_minus[f];
    }
  }
  return out;
}

}  // namespace rdcluster
