#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "rdcluster/errors.hpp"
#include "rdcluster/kernel.hpp"
#include "rdcluster/neighbors.hpp"
#include "rdcluster/numeric.hpp"
#include "rdcluster/sample.hpp"
#include "rdcluster/weights.hpp"

namespace rdcluster {

//! Side-specific local linear fits: intercept and slope on each side of the
//! cutoff. The RD estimate is b0_plus - b0_minus.
struct LocalFit {
  double b0_plus = 0.0;
  double b1_plus = 0.0;
  double b0_minus = 0.0;
  double b1_minus = 0.0;

  // Piecewise linear fit used for regression residuals.
  double mu_hat(double x) const {
    return x < 0.0 ? b0_minus + b1_minus * x : b0_plus + b1_plus * x;
  }
};

struct RdEstimate {
  double tau_hat = 0.0;
  LocalFit fit;
};

//! tau_hat = sum_g sum_i w_gi Y_gi, plus the side regressions behind it.
//! The fits are solved from the explicit 2x2 normal equations in the scaled
//! regressor x/h, which matches the weight formula identically.
inline RdEstimate rd_estimate(const ClusteredSample& sample, const WeightSet& weights) {
  check_shape(sample, weights);

  const double h = weights.h;
  KahanSum tau;
  KahanSum mp0, mp1, mm0, mm1;  // (1/n) sum k*_h(X) (X/h)^l Y, l = 0,1
  for (std::size_t g = 0; g < sample.num_clusters(); ++g) {
    for (std::size_t i = 0; i < sample.size(g); ++i) {
      const std::size_t f = sample.flat_index(g, i);
      const double kn = weights.k_over_n[f];
      if (kn == 0.0) {
        if (weights.w[f] != 0.0) tau.add(weights.w[f] * sample.y(g, i));
        continue;
      }
      const double y = sample.y(g, i);
      const double u = sample.x(g, i) / h;
      tau.add(weights.w[f] * y);
      if (on_treated_side(sample.x(g, i))) {
        mp0.add(kn * y);
        mp1.add(kn * u * y);
      } else {
        mm0.add(kn * y);
        mm1.add(kn * u * y);
      }
    }
  }

  const SideMoments& m = weights.moments;
  const double den_p = m.plus[2] * m.plus[0] - m.plus[1] * m.plus[1];
  const double den_m = m.minus[2] * m.minus[0] - m.minus[1] * m.minus[1];
  RdEstimate out;
  out.tau_hat = tau.value();
  out.fit.b0_plus = (m.plus[2] * mp0.value() - m.plus[1] * mp1.value()) / den_p;
  out.fit.b1_plus = (m.plus[0] * mp1.value() - m.plus[1] * mp0.value()) / (den_p * h);
  out.fit.b0_minus = (m.minus[2] * mm0.value() - m.minus[1] * mm1.value()) / den_m;
  out.fit.b1_minus = (m.minus[0] * mm1.value() - m.minus[1] * mm0.value()) / (den_m * h);
  return out;
}

//! Residuals against the piecewise-linear fit, flat sample layout.
inline std::vector<double> regression_residuals(const ClusteredSample& sample,
                                                const LocalFit& fit) {
  std::vector<double> eps(sample.n());
  for (std::size_t g = 0; g < sample.num_clusters(); ++g) {
    for (std::size_t i = 0; i < sample.size(g); ++i) {
      eps[sample.flat_index(g, i)] = sample.y(g, i) - fit.mu_hat(sample.x(g, i));
    }
  }
  return eps;
}

//! Worst-case conditional bias over twice-differentiable regression
//! functions with |mu''| <= M:
//!   b_bar(h) = -(M/2) sum_g sum_i w_gi X_gi^2 sign(X_gi),  sign(0) = 0.
struct BiasBound {
  double M = 0.0;
  double b_bar = 0.0;
};

inline BiasBound worst_case_bias(const ClusteredSample& sample, const WeightSet& weights,
                                 double M) {
  if (M < 0.0) fail(errc::negative_m, "second-derivative bound must be nonnegative");
  check_shape(sample, weights);
  KahanSum s;
  for (std::size_t g = 0; g < sample.num_clusters(); ++g) {
    for (std::size_t i = 0; i < sample.size(g); ++i) {
      const std::size_t f = sample.flat_index(g, i);
      if (weights.w[f] == 0.0) continue;
      const double x = sample.x(g, i);
      const double sign = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
      s.add(weights.w[f] * x * x * sign);
    }
  }
  return BiasBound{M, -(M / 2.0) * s.value()};
}

//! Cluster-size functional lambda_n = (h/n) sum_g n_g (n_g - 1), computed
//! from full cluster sizes, not window-restricted counts.
inline double lambda_n(const ClusteredSample& sample, double h) {
  if (!(h > 0.0)) fail(errc::invalid_config, "bandwidth must be positive");
  double acc = 0.0;
  for (std::size_t g = 0; g < sample.num_clusters(); ++g) {
    const double ng = static_cast<double>(sample.size(g));
    acc += ng * (ng - 1.0);
  }
  return h * acc / static_cast<double>(sample.n());
}

//! AMSE-optimal bandwidth h* = (V / (4 M^2 mu_bar^2))^{1/5} n^{-1/5}.
//! V is supplied by the caller (V1 or V2 from plug_in_variance_constants).
inline double optimal_bandwidth(double V, double M, const KernelConstants& constants,
                                std::size_t n) {
  if (M <= 0.0) fail(errc::zero_curvature, "no finite optimum for M <= 0");
  if (!(V > 0.0)) fail(errc::invalid_config, "variance constant must be positive");
  if (constants.mu_bar == 0.0) fail(errc::invalid_config, "mu_bar must be nonzero");
  const double ratio = V / (4.0 * M * M * constants.mu_bar * constants.mu_bar);
  return std::pow(ratio, 0.2) * std::pow(static_cast<double>(n), -0.2);
}

//! Conventional rule-of-thumb pilot bandwidth 1.84 * sd(x) * n^{-1/5}.
inline double pilot_bandwidth(const ClusteredSample& sample) {
  return 1.84 * sample.sd_x() * std::pow(static_cast<double>(sample.n()), -0.2);
}

//! Plug-in estimates of the AMSE variance constants
//!   V1 = (kappa_bar / f(0)) * (sigma^2(0+) + sigma^2(0-)),
//!   V2 = V1 + (kappa_bar / f(0)) * sum_side sigma(0*,0*) * sum_g n_g(n_g-1)/n.
//! f(0) is a triangular kernel density estimate at the cutoff; the variance
//! and covariance levels come from clustered nearest-neighbor product
//! residuals inside the pilot window (variances from per-unit products,
//! covariances from within-cluster same-side cross products).
struct VarianceConstants {
  double v1 = 0.0;
  double v2 = 0.0;
  double f0_hat = 0.0;
  double sigma2_plus = 0.0;
  double sigma2_minus = 0.0;
  double cov_plus = 0.0;
  double cov_minus = 0.0;
  double h_pilot = 0.0;
};

inline VarianceConstants plug_in_variance_constants(const ClusteredSample& sample,
                                                    const KernelSpec& kernel, double h_pilot,
                                                    int J = 3, int R = 0,
                                                    std::uint64_t seed = 0) {
  if (!(h_pilot > 0.0)) fail(errc::invalid_config, "pilot bandwidth must be positive");
  if (R <= 0) R = 12 * J;

  std::size_t per_side[2] = {0, 0};
  for (std::size_t g = 0; g < sample.num_clusters(); ++g) {
    for (std::size_t i = 0; i < sample.size(g); ++i) {
      const double x = sample.x(g, i);
      if (std::abs(x) <= h_pilot) ++per_side[on_treated_side(x) ? 0 : 1];
    }
  }
  for (int s = 0; s < 2; ++s) {
    if (per_side[s] < 20) {
      fail(errc::insufficient_support,
           std::string(s == 0 ? "treated" : "control") + " side has " +
               std::to_string(per_side[s]) + " pilot-window observations, need 20");
    }
  }

  VarianceConstants out;
  out.h_pilot = h_pilot;

  // density at the cutoff, triangular kernel
  {
    KahanSum s;
    for (std::size_t g = 0; g < sample.num_clusters(); ++g) {
      for (std::size_t i = 0; i < sample.size(g); ++i) {
        const double u = sample.x(g, i) / h_pilot;
        if (std::abs(u) < 1.0) s.add(1.0 - std::abs(u));
      }
    }
    out.f0_hat = s.value() / (static_cast<double>(sample.n()) * h_pilot);
  }

  const CompanionSets companions = select_companion_clusters(sample, h_pilot, J, R, seed);
  const NeighborPlan plan = build_neighbor_sets(sample, h_pilot, companions, J);

  KahanSum var_sum[2], cov_sum[2];
  std::size_t var_count[2] = {0, 0}, cov_count[2] = {0, 0};
  std::vector<double> d1, d2;
  for (std::size_t g = 0; g < sample.num_clusters(); ++g) {
    d1.clear();
    d2.clear();
    std::vector<int> sides;
    for (std::size_t i = 0; i < sample.size(g); ++i) {
      const double x = sample.x(g, i);
      if (std::abs(x) > h_pilot) continue;
      const std::size_t f = sample.flat_index(g, i);
      double m1 = 0.0, m2 = 0.0;
      for (const UnitRef& r : plan.n1[f]) m1 += sample.y(r.g, r.i);
      for (const UnitRef& r : plan.n2[f]) m2 += sample.y(r.g, r.i);
      m1 /= static_cast<double>(plan.n1[f].size());
      m2 /= static_cast<double>(plan.n2[f].size());
      const double y = sample.y(g, i);
      d1.push_back(y - m1);
      d2.push_back(y - m2);
      sides.push_back(on_treated_side(x) ? 0 : 1);
    }
    for (std::size_t a = 0; a < d1.size(); ++a) {
      var_sum[sides[a]].add(d1[a] * d2[a]);
      ++var_count[sides[a]];
      for (std::size_t b = 0; b < d1.size(); ++b) {
        if (a == b || sides[a] != sides[b]) continue;
        cov_sum[sides[a]].add(d1[a] * d2[b]);
        ++cov_count[sides[a]];
      }
    }
  }
  out.sigma2_plus = var_sum[0].value() / static_cast<double>(var_count[0]);
  out.sigma2_minus = var_sum[1].value() / static_cast<double>(var_count[1]);
  out.cov_plus = cov_count[0] ? cov_sum[0].value() / static_cast<double>(cov_count[0]) : 0.0;
  out.cov_minus = cov_count[1] ? cov_sum[1].value() / static_cast<double>(cov_count[1]) : 0.0;

  const KernelConstants kc = kernel_constants(kernel);
  double pair_rate = 0.0;  // sum_g n_g (n_g - 1) / n
  for (std::size_t g = 0; g < sample.num_clusters(); ++g) {
    const double ng = static_cast<double>(sample.size(g));
    pair_rate += ng * (ng - 1.0);
  }
  pair_rate /= static_cast<double>(sample.n());

  out.v1 = kc.kappa_bar / out.f0_hat * (out.sigma2_plus + out.sigma2_minus);
  out.v2 = out.v1 + kc.kappa_bar / out.f0_hat * (out.cov_plus + out.cov_minus) * pair_rate;
  return out;
}

}  // namespace rdcluster
