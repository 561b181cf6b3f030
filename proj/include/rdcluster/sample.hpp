#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rdcluster/errors.hpp"
#include "rdcluster/numeric.hpp"

namespace rdcluster {

// One input row before grouping.
struct Row {
  std::string cluster;
  double x = 0.0;
  double y = 0.0;
};

//! Clustered RD dataset: groups of (running variable, outcome) pairs.
//!
//! The running variable is stored already centered at the cutoff; every
//! estimator downstream assumes the threshold sits at zero. Observations
//! with x >= 0 are on the treated side. Immutable after construction.
class ClusteredSample {
public:
  struct Cluster {
    std::string id;
    std::vector<double> x;
    std::vector<double> y;
  };

  ClusteredSample() = default;

  ClusteredSample(std::vector<Cluster> clusters, double cutoff)
      : clusters_(std::move(clusters)), cutoff_(cutoff) {
    finalize();
  }

  std::size_t num_clusters() const { return clusters_.size(); }
  std::size_t n() const { return n_; }
  std::size_t size(std::size_t g) const { return clusters_[g].x.size(); }
  double x(std::size_t g, std::size_t i) const { return clusters_[g].x[i]; }
  double y(std::size_t g, std::size_t i) const { return clusters_[g].y[i]; }
  const std::string& cluster_id(std::size_t g) const { return clusters_[g].id; }
  const Cluster& cluster(std::size_t g) const { return clusters_[g]; }
  double cutoff() const { return cutoff_; }

  // Flat unit index; weight and residual vectors are laid out in this order.
  std::size_t flat_index(std::size_t g, std::size_t i) const { return offset_[g] + i; }
  std::size_t cluster_offset(std::size_t g) const { return offset_[g]; }
  const std::vector<std::size_t>& offsets() const { return offset_; }

  // Rank of the cluster id in lexicographic order; used as a deterministic
  // tie-breaker in nearest-neighbor searches.
  int tie_rank(std::size_t g) const { return tie_rank_[g]; }

  double sd_x() const { return sd_x_; }

private:
  void finalize() {
    offset_.resize(clusters_.size() + 1);
    offset_[0] = 0;
    for (std::size_t g = 0; g < clusters_.size(); ++g) {
      offset_[g + 1] = offset_[g] + clusters_[g].x.size();
    }
    n_ = offset_.back();

    std::vector<std::size_t> order(clusters_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return clusters_[a].id < clusters_[b].id;
    });
    tie_rank_.resize(clusters_.size());
    for (std::size_t r = 0; r < order.size(); ++r) tie_rank_[order[r]] = static_cast<int>(r);

    KahanSum s, s2;
    for (const auto& c : clusters_) {
      for (double v : c.x) {
        s.add(v);
        s2.add(v * v);
      }
    }
    if (n_ > 1) {
      const double mean = s.value() / static_cast<double>(n_);
      const double var =
          std::max(0.0, (s2.value() - static_cast<double>(n_) * mean * mean) /
                            static_cast<double>(n_ - 1));
      sd_x_ = std::sqrt(var);
    }
  }

  std::vector<Cluster> clusters_;
  std::vector<std::size_t> offset_{0};
  std::vector<int> tie_rank_;
  double cutoff_ = 0.0;
  std::size_t n_ = 0;
  double sd_x_ = 0.0;
};

//! Groups raw rows by cluster id (first-appearance order, input order kept
//! within a cluster), centers x at the cutoff and checks finiteness.
//! Repeated x values are legal, including mass points.
inline ClusteredSample validate_sample(const std::vector<Row>& raw, double cutoff = 0.0) {
  if (raw.empty()) fail(errc::empty_input, "no input rows");

  std::vector<ClusteredSample::Cluster> clusters;
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(raw.size());
  for (std::size_t r = 0; r < raw.size(); ++r) {
    const Row& row = raw[r];
    if (!is_finite(row.x) || !is_finite(row.y)) {
      fail(errc::non_finite_value, "non-finite value at row " + std::to_string(r));
    }
    auto [it, inserted] = index.try_emplace(row.cluster, clusters.size());
    if (inserted) clusters.push_back({row.cluster, {}, {}});
    auto& c = clusters[it->second];
    c.x.push_back(row.x - cutoff);
    c.y.push_back(row.y);
  }
  return ClusteredSample(std::move(clusters), cutoff);
}

// x = 0 counts as treated (the indicator is 1{0 <= x}).
inline bool on_treated_side(double x) { return x >= 0.0; }

}  // namespace rdcluster
