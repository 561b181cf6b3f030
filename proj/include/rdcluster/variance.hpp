#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rdcluster/errors.hpp"
#include "rdcluster/estimator.hpp"
#include "rdcluster/neighbors.hpp"
#include "rdcluster/numeric.hpp"
#include "rdcluster/sample.hpp"
#include "rdcluster/weights.hpp"

namespace rdcluster {

//! Known per-cluster conditional covariance matrices, dense n_g x n_g.
//! Used as the ground-truth variance target in simulations and tests.
class SigmaOracle {
public:
  SigmaOracle() = default;
  explicit SigmaOracle(std::vector<std::vector<double>> blocks) : blocks_(std::move(blocks)) {}

  // Random-effects covariance sigma^2 ((1-rho) I + rho 11').
  static SigmaOracle equicorrelated(const std::vector<std::size_t>& sizes, double sigma2,
                                    double rho) {
    std::vector<std::vector<double>> blocks(sizes.size());
    for (std::size_t g = 0; g < sizes.size(); ++g) {
      const std::size_t m = sizes[g];
      blocks[g].assign(m * m, sigma2 * rho);
      for (std::size_t i = 0; i < m; ++i) blocks[g][i * m + i] = sigma2;
    }
    return SigmaOracle(std::move(blocks));
  }

  std::size_t num_clusters() const { return blocks_.size(); }
  std::size_t size(std::size_t g) const {
    return static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(blocks_[g].size()))));
  }
  double at(std::size_t g, std::size_t i, std::size_t j) const {
    return blocks_[g][i * size(g) + j];
  }
  const std::vector<double>& block(std::size_t g) const { return blocks_[g]; }

  // Symmetry plus eigenvalue floor >= -tol, checked through a Cholesky
  // factorization of Sigma_g + tol I.
  void validate(double tol = 1e-10) const {
    std::vector<double> a;
    for (std::size_t g = 0; g < blocks_.size(); ++g) {
      const std::size_t m = size(g);
      if (m * m != blocks_[g].size()) fail(errc::shape_mismatch, "non-square covariance block");
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
          if (at(g, i, j) != at(g, j, i)) {
            fail(errc::invalid_config, "covariance block " + std::to_string(g) + " not symmetric");
          }
        }
      }
      a = blocks_[g];
      for (std::size_t i = 0; i < m; ++i) a[i * m + i] += tol;
      for (std::size_t i = 0; i < m; ++i) {  // in-place Cholesky
        for (std::size_t j = 0; j <= i; ++j) {
          double s = a[i * m + j];
          for (std::size_t k = 0; k < j; ++k) s -= a[i * m + k] * a[j * m + k];
          if (i == j) {
            if (s <= 0.0) {
              fail(errc::invalid_config,
                   "covariance block " + std::to_string(g) + " has an eigenvalue below -" +
                       std::to_string(tol));
            }
            a[i * m + i] = std::sqrt(s);
          } else {
            a[i * m + j] = s / a[j * m + j];
          }
        }
      }
    }
  }

private:
  std::vector<std::vector<double>> blocks_;
};

//! Conditional standard error of the RD estimator for a known covariance:
//! se^2(h) = sum_g sum_{i,j} w_gi w_gj sigma_{g,ij}.
inline double oracle_conditional_se2(const WeightSet& weights, const SigmaOracle& sigma) {
  if (weights.num_clusters() != sigma.num_clusters()) {
    fail(errc::shape_mismatch, "covariance blocks do not match the weight layout");
  }
  KahanSum total;
  for (std::size_t g = 0; g < weights.num_clusters(); ++g) {
    const std::size_t b = weights.cluster_begin(g);
    const std::size_t e = weights.cluster_end(g);
    if (sigma.size(g) != e - b) fail(errc::shape_mismatch, "covariance block size mismatch");
    for (std::size_t i = b; i < e; ++i) {
      if (weights.w[i] == 0.0) continue;
      for (std::size_t j = b; j < e; ++j) {
        if (weights.w[j] == 0.0) continue;
        total.add(weights.w[i] * weights.w[j] * sigma.at(g, i - b, j - b));
      }
    }
  }
  // floored after rounding; the quadratic form is PSD up to noise of order 1e-14
  return std::max(0.0, total.value());
}

inline double oracle_conditional_se(const WeightSet& weights, const SigmaOracle& sigma) {
  return std::sqrt(oracle_conditional_se2(weights, sigma));
}

//! Heteroskedasticity-robust (EHW) standard error; ignores clustering.
inline double se_ehw(const WeightSet& weights, std::span<const double> residuals) {
  if (residuals.size() != weights.n()) fail(errc::shape_mismatch, "residual length mismatch");
  KahanSum s;
  for (std::size_t f = 0; f < weights.n(); ++f) {
    const double t = weights.w[f] * residuals[f];
    s.add(t * t);
  }
  return std::sqrt(std::max(0.0, s.value()));
}

namespace detail {

struct SideIndex {
  std::vector<double> x;
  std::vector<std::size_t> flat;
  std::vector<int> tie_rank;
  std::vector<std::uint32_t> cluster;
  std::vector<std::uint32_t> within;
};

// In-window units on each side, sorted by x (stable tie order).
inline void build_side_index(const ClusteredSample& sample, double h, SideIndex out[2]) {
  struct Item {
    double x;
    std::size_t flat;
    int tie_rank;
    std::uint32_t cluster, within;
  };
  std::vector<Item> items[2];
  for (std::size_t g = 0; g < sample.num_clusters(); ++g) {
    for (std::size_t i = 0; i < sample.size(g); ++i) {
      const double x = sample.x(g, i);
      if (std::abs(x) > h) continue;
      items[on_treated_side(x) ? 0 : 1].push_back({x, sample.flat_index(g, i),
                                                   sample.tie_rank(g), static_cast<std::uint32_t>(g),
                                                   static_cast<std::uint32_t>(i)});
    }
  }
  for (int s = 0; s < 2; ++s) {
    std::sort(items[s].begin(), items[s].end(), [](const Item& a, const Item& b) {
      if (a.x != b.x) return a.x < b.x;
      if (a.tie_rank != b.tie_rank) return a.tie_rank < b.tie_rank;
      return a.within < b.within;
    });
    for (const Item& it : items[s]) {
      out[s].x.push_back(it.x);
      out[s].flat.push_back(it.flat);
      out[s].tie_rank.push_back(it.tie_rank);
      out[s].cluster.push_back(it.cluster);
      out[s].within.push_back(it.within);
    }
  }
}

// Exactly J nearest positions to entry `k` within one side index, self
// excluded, ties broken by (distance, tie_rank, within index).
inline void j_nearest_positions(const SideIndex& side, std::size_t k, int J,
                                std::vector<std::size_t>& out) {
  out.clear();
  const double x = side.x[k];
  std::size_t lo = k, hi = k + 1;
  while (static_cast<int>(out.size()) < J) {
    const bool has_lo = lo > 0;
    const bool has_hi = hi < side.x.size();
    if (!has_lo && !has_hi) break;
    bool take_lo;
    if (!has_lo) {
      take_lo = false;
    } else if (!has_hi) {
      take_lo = true;
    } else {
      const double dl = std::abs(x - side.x[lo - 1]);
      const double dh = std::abs(side.x[hi] - x);
      if (dl != dh) {
        take_lo = dl < dh;
      } else {
        take_lo = side.tie_rank[lo - 1] < side.tie_rank[hi] ||
                  (side.tie_rank[lo - 1] == side.tie_rank[hi] &&
                   side.within[lo - 1] <= side.within[hi]);
      }
    }
    if (take_lo) {
      out.push_back(--lo);
    } else {
      out.push_back(hi++);
    }
  }
}

}  // namespace detail

//! Classical nearest-neighbors standard error for independent data:
//! sigma2_i = (J/(J+1)) (Y_i - mean of J nearest same-side neighbors)^2,
//! se^2 = sum_i w_i^2 sigma2_i. Clusters are ignored entirely.
inline double se_nn_iid(const ClusteredSample& sample, const WeightSet& weights, int J) {
  check_shape(sample, weights);
  if (J < 1) fail(errc::invalid_config, "J must be >= 1");
  detail::SideIndex side[2];
  detail::build_side_index(sample, weights.h, side);
  for (int s = 0; s < 2; ++s) {
    if (side[s].x.size() < static_cast<std::size_t>(J) + 1) {
      fail(errc::insufficient_neighbors,
           std::string(s == 0 ? "treated" : "control") + " side has " +
               std::to_string(side[s].x.size()) + " in-window observations, need J+1");
    }
  }
  const double correction = static_cast<double>(J) / (J + 1.0);
  KahanSum se2;
  std::vector<std::size_t> nn;
  for (int s = 0; s < 2; ++s) {
    for (std::size_t k = 0; k < side[s].x.size(); ++k) {
      const std::size_t f = side[s].flat[k];
      if (weights.w[f] == 0.0) continue;
      detail::j_nearest_positions(side[s], k, J, nn);
      double mean = 0.0;
      for (std::size_t p : nn) mean += sample.y(side[s].cluster[p], side[s].within[p]);
      mean /= static_cast<double>(nn.size());
      const double yk = sample.y(side[s].cluster[k], side[s].within[k]);
      const double dev = yk - mean;
      se2.add(weights.w[f] * weights.w[f] * correction * dev * dev);
    }
  }
  return std::sqrt(std::max(0.0, se2.value()));
}

//! Naive clustered nearest-neighbors standard error. Neighbors are chosen
//! irrespective of cluster membership (same side, self excluded) and the
//! i.i.d. bias-correction factor is kept:
//!   Y^naive_i = sqrt(|N|/(1+|N|)) (Y_i - mean_N Y),
//!   se^2 = sum_g (sum_i w_gi Y^naive_gi)^2.
//! Retained as a counterexample baseline: with paired within-cluster mass
//! points the within-cluster contributions cancel exactly.
inline double se_naive_cnn(const ClusteredSample& sample, const WeightSet& weights, int J) {
  check_shape(sample, weights);
  if (J < 1) fail(errc::invalid_config, "J must be >= 1");
  detail::SideIndex side[2];
  detail::build_side_index(sample, weights.h, side);
  for (int s = 0; s < 2; ++s) {
    if (side[s].x.size() < static_cast<std::size_t>(J) + 1) {
      fail(errc::insufficient_neighbors,
           std::string(s == 0 ? "treated" : "control") + " side has " +
               std::to_string(side[s].x.size()) + " in-window observations, need J+1");
    }
  }
  std::vector<double> delta(sample.n(), 0.0);
  std::vector<std::size_t> nn;
  for (int s = 0; s < 2; ++s) {
    for (std::size_t k = 0; k < side[s].x.size(); ++k) {
      const std::size_t f = side[s].flat[k];
      if (weights.w[f] == 0.0) continue;
      detail::j_nearest_positions(side[s], k, J, nn);
      double mean = 0.0;
      for (std::size_t p : nn) mean += sample.y(side[s].cluster[p], side[s].within[p]);
      mean /= static_cast<double>(nn.size());
      const double c = std::sqrt(static_cast<double>(nn.size()) / (1.0 + nn.size()));
      delta[f] = c * (sample.y(side[s].cluster[k], side[s].within[k]) - mean);
    }
  }
  KahanSum se2;
  for (std::size_t g = 0; g < weights.num_clusters(); ++g) {
    KahanSum cluster_sum;
    for (std::size_t f = weights.cluster_begin(g); f < weights.cluster_end(g); ++f) {
      if (weights.w[f] != 0.0) cluster_sum.add(weights.w[f] * delta[f]);
    }
    const double v = cluster_sum.value();
    se2.add(v * v);
  }
  return std::sqrt(std::max(0.0, se2.value()));
}

//! Clustered nearest-neighbors (CNN) standard error:
//!   se^2 = sum_g sum_{i,j} w_gi w_gj Y^d1_gi Y^d2_gj,
//! with Y^d_gi = Y_gi - mean over N^d_gi and the two neighbor sets drawn
//! from disjoint companion clusters. No bias-correction factor. The value
//! can be negative in finite samples; the flag records that and the
//! reported se is sqrt(max(se2, 0)).
struct CnnEstimate {
  double se = 0.0;
  double se2 = 0.0;
  bool negative = false;
};

inline CnnEstimate se_cnn(const ClusteredSample& sample, const WeightSet& weights,
                          const NeighborPlan& plan) {
  check_shape(sample, weights);
  if (plan.n1.size() != sample.n() || plan.h != weights.h) {
    fail(errc::incomplete_plan, "neighbor plan does not match the sample/bandwidth");
  }
  KahanSum se2;
  for (std::size_t g = 0; g < weights.num_clusters(); ++g) {
    KahanSum s1, s2;
    for (std::size_t f = weights.cluster_begin(g); f < weights.cluster_end(g); ++f) {
      if (weights.w[f] == 0.0) continue;
      if (plan.n1[f].empty() || plan.n2[f].empty()) {
        fail(errc::incomplete_plan,
             "nonzero-weight unit without neighbor sets (flat index " + std::to_string(f) + ")");
      }
      const std::size_t g_of = g;
      const std::size_t i_of = f - weights.cluster_begin(g);
      const double y = sample.y(g_of, i_of);
      double m1 = 0.0, m2 = 0.0;
      for (const UnitRef& r : plan.n1[f]) m1 += sample.y(r.g, r.i);
      for (const UnitRef& r : plan.n2[f]) m2 += sample.y(r.g, r.i);
      m1 /= static_cast<double>(plan.n1[f].size());
      m2 /= static_cast<double>(plan.n2[f].size());
      s1.add(weights.w[f] * (y - m1));
      s2.add(weights.w[f] * (y - m2));
    }
    se2.add(s1.value() * s2.value());
  }
  CnnEstimate out;
  out.se2 = se2.value();
  out.negative = out.se2 < 0.0;
  out.se = std::sqrt(std::max(0.0, out.se2));
  return out;
}

//! Clustered regression-residual (CRR) standard error:
//!   se^2 = sum_g sum_{i,j} w_gi w_gj eps_gi eps_gj = sum_g (sum_i w_gi eps_gi)^2.
//! Residuals must come from the same local linear fit as the weights.
inline double se_crr(const ClusteredSample& sample, const WeightSet& weights,
                     std::span<const double> residuals) {
  check_shape(sample, weights);
  if (residuals.size() != sample.n()) fail(errc::shape_mismatch, "residual length mismatch");
  KahanSum se2;
  for (std::size_t g = 0; g < weights.num_clusters(); ++g) {
    KahanSum cluster_sum;
    for (std::size_t f = weights.cluster_begin(g); f < weights.cluster_end(g); ++f) {
      if (weights.w[f] != 0.0) cluster_sum.add(weights.w[f] * residuals[f]);
    }
    const double v = cluster_sum.value();
    se2.add(v * v);
  }
  return std::sqrt(se2.value());
}

inline double se_crr(const ClusteredSample& sample, const WeightSet& weights,
                     const LocalFit& fit) {
  const std::vector<double> eps = regression_residuals(sample, fit);
  return se_crr(sample, weights, eps);
}

}  // namespace rdcluster

