#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "rdcluster/errors.hpp"
#include "rdcluster/numeric.hpp"
#include "rdcluster/weights.hpp"

namespace rdcluster {

enum class ClusterVerdict { frameworks_I_II_plausible, large_cluster_regime };

inline const char* verdict_name(ClusterVerdict v) {
  return v == ClusterVerdict::frameworks_I_II_plausible ? "frameworks_I_II_plausible"
                                                        : "large_cluster_regime";
}

//! Rule-of-thumb cluster influence statistics:
//!   w_ratio_g = sum_{i,j in I_g} |w_gi w_gj| / sum_g sum_i w_gi^2
//!             = (sum_i |w_gi|)^2 / sum w^2,
//! w_max = max_g w_ratio_g, w_sum = sum_g w_ratio_g. Small w_max and w_sum
//! indicate that no cluster dominates the variance of the estimator.
struct ClusterDiagnostics {
  std::vector<double> w_ratio;
  double w_max = 0.0;
  double w_sum = 0.0;
  double eta_max = 0.1;
  double eta_sum = 10.0;
  std::optional<ClusterVerdict> verdict;
};

inline ClusterDiagnostics cluster_weight_ratios(const WeightSet& weights) {
  KahanSum denom_acc;
  for (double v : weights.w) denom_acc.add(v * v);
  const double denom = denom_acc.value();
  if (denom == 0.0) fail(errc::zero_weights, "all weights vanish");

  ClusterDiagnostics d;
  d.w_ratio.resize(weights.num_clusters());
  KahanSum num_total;
  double num_max = 0.0;
  for (std::size_t g = 0; g < weights.num_clusters(); ++g) {
    KahanSum abs_sum;
    for (std::size_t f = weights.cluster_begin(g); f < weights.cluster_end(g); ++f) {
      if (weights.w[f] != 0.0) abs_sum.add(std::abs(weights.w[f]));
    }
    const double a = abs_sum.value();
    const double num = a * a;
    d.w_ratio[g] = num / denom;
    num_total.add(num);
    if (num > num_max) num_max = num;
  }
  // single final division keeps w_sum exactly 1 for singleton designs
  d.w_sum = num_total.value() / denom;
  d.w_max = num_max / denom;
  return d;
}

//! Threshold verdict; comparisons are inclusive.
inline ClusterVerdict rule_of_thumb(ClusterDiagnostics& diag, double eta_max = 0.1,
                                    double eta_sum = 10.0) {
  diag.eta_max = eta_max;
  diag.eta_sum = eta_sum;
  const bool plausible = diag.w_max <= eta_max && diag.w_sum <= eta_sum;
  diag.verdict = plausible ? ClusterVerdict::frameworks_I_II_plausible
                           : ClusterVerdict::large_cluster_regime;
  return *diag.verdict;
}

}  // namespace rdcluster
