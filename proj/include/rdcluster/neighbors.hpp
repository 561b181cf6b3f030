#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

#include "rdcluster/errors.hpp"
#include "rdcluster/numeric.hpp"
#include "rdcluster/sample.hpp"
#include "rdcluster/weights.hpp"

namespace rdcluster {

struct UnitRef {
  std::uint32_t g = 0;
  std::uint32_t i = 0;
  friend bool operator==(const UnitRef&, const UnitRef&) = default;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic uniform in [-1, 1) from a key tuple; used for the
// mass-point jitter so that runs are reproducible given the seed.
inline double jitter_unit(std::uint64_t seed, std::uint64_t side, std::uint64_t g,
                          std::uint64_t idx) {
  std::uint64_t v = splitmix64(seed ^ splitmix64(side ^ splitmix64(g ^ splitmix64(idx))));
  return static_cast<double>(v >> 11) * (1.0 / 4503599627370496.0) - 1.0;
}

}  // namespace detail

//! Companion-cluster sets and the per-cluster support values they were
//! selected from. r1[g] and r2[g] are disjoint and never contain g itself;
//! every cluster serves as a companion for at most R others.
struct CompanionSets {
  int J = 0;
  int R = 0;
  int L = 0;  // support size cap, floor(R / (4J))
  std::vector<std::vector<std::uint32_t>> r1;
  std::vector<std::vector<std::uint32_t>> r2;
  // Support values actually used for matching (jittered if mass points
  // were detected); kept for diagnostics and the debug dump.
  std::vector<std::vector<double>> support_plus;
  std::vector<std::vector<double>> support_minus;
};

//! Per-unit nearest-neighbor sets drawn from the companion clusters.
//! n1/n2 are indexed by the flat unit index; units outside the window have
//! empty sets.
struct NeighborPlan {
  double h = 0.0;
  int J = 0;
  int R = 0;
  int L = 0;
  CompanionSets companions;
  std::vector<std::vector<UnitRef>> n1;
  std::vector<std::vector<UnitRef>> n2;
};

namespace detail {

struct SupportEntry {
  double value = 0.0;       // possibly jittered, used for distances
  std::uint32_t cluster = 0;
  int tie_rank = 0;
  std::uint32_t pos = 0;    // position within the cluster's support list
};

// J closest support entries to x among entries not in an excluded cluster.
// Ordered by (distance, tie_rank, pos); requires entries sorted by value.
template <typename Excluded>
inline bool j_closest(const std::vector<SupportEntry>& entries, double x, int J,
                      const Excluded& excluded, std::vector<const SupportEntry*>& out) {
  out.clear();
  const auto cmp = [](const SupportEntry& e, double v) { return e.value < v; };
  std::size_t hi = std::lower_bound(entries.begin(), entries.end(), x, cmp) - entries.begin();
  std::size_t lo = hi;  // candidates are entries[lo..hi) grown outward
  auto eligible_down = [&](std::size_t& idx) -> const SupportEntry* {
    while (idx > 0) {
      const SupportEntry* e = &entries[idx - 1];
      --idx;
      if (!excluded(e->cluster)) return e;
    }
    return nullptr;
  };
  auto eligible_up = [&](std::size_t& idx) -> const SupportEntry* {
    while (idx < entries.size()) {
      const SupportEntry* e = &entries[idx];
      ++idx;
      if (!excluded(e->cluster)) return e;
    }
    return nullptr;
  };
  std::size_t down = lo, up = hi;
  const SupportEntry* next_down = eligible_down(down);
  const SupportEntry* next_up = eligible_up(up);
  while (static_cast<int>(out.size()) < J && (next_down || next_up)) {
    const double dd = next_down ? std::abs(x - next_down->value) : 0.0;
    const double du = next_up ? std::abs(next_up->value - x) : 0.0;
    bool take_down;
    if (!next_down) {
      take_down = false;
    } else if (!next_up) {
      take_down = true;
    } else if (dd != du) {
      take_down = dd < du;
    } else {
      take_down = next_down->tie_rank < next_up->tie_rank ||
                  (next_down->tie_rank == next_up->tie_rank && next_down->pos <= next_up->pos);
    }
    if (take_down) {
      out.push_back(next_down);
      next_down = eligible_down(down);
    } else {
      out.push_back(next_up);
      next_up = eligible_up(up);
    }
  }
  return static_cast<int>(out.size()) == J;
}

}  // namespace detail

//! Companion-cluster selection. Each cluster's in-window running-variable
//! support is compressed to at most L = floor(R/(4J)) points per side
//! (distinct values if few, empirical quantiles otherwise), and two rounds
//! of J-nearest support matching pick the disjoint sets R1_g and R2_g.
//! The second round excludes the clusters chosen in the first, which makes
//! the two neighbor pools independent; the support cap keeps any cluster
//! from serving as a companion more than R times.
//!
//! If the support values contain mass points they are jittered by a
//! deterministic perturbation of magnitude 1e-9 * sd(x) derived from
//! `seed` before matching.
inline CompanionSets select_companion_clusters(const ClusteredSample& sample, double h, int J,
                                               int R, std::uint64_t seed = 0) {
  if (!(h > 0.0)) fail(errc::invalid_config, "bandwidth must be positive");
  if (J < 1) fail(errc::invalid_config, "J must be >= 1");
  const int L = R / (4 * J);
  if (L < 1) fail(errc::invalid_config, "R must be at least 4*J (got L = 0)");

  const std::size_t G = sample.num_clusters();
  CompanionSets out;
  out.J = J;
  out.R = R;
  out.L = L;
  out.r1.resize(G);
  out.r2.resize(G);
  out.support_plus.resize(G);
  out.support_minus.resize(G);

  // Support dimension reduction.
  std::vector<double> values;
  for (std::size_t g = 0; g < G; ++g) {
    for (int side = 0; side < 2; ++side) {
      values.clear();
      for (std::size_t i = 0; i < sample.size(g); ++i) {
        const double x = sample.x(g, i);
        if (std::abs(x) > h) continue;
        if ((side == 0) == on_treated_side(x)) values.push_back(x);
      }
      std::sort(values.begin(), values.end());
      values.erase(std::unique(values.begin(), values.end()), values.end());
      auto& support = side == 0 ? out.support_plus[g] : out.support_minus[g];
      const std::size_t l = values.size();
      if (static_cast<int>(l) <= L) {
        support = values;
      } else if (L == 1) {
        support.push_back(values[(l - 1) / 2]);
      } else {
        // lower empirical quantiles at probabilities {0, 1/(L-1), ..., 1}
        support.reserve(L);
        for (int q = 0; q < L; ++q) {
          const double p = static_cast<double>(q) / static_cast<double>(L - 1);
          const std::size_t idx = static_cast<std::size_t>(
              std::floor(p * static_cast<double>(l - 1)));
          support.push_back(values[idx]);
        }
        support.erase(std::unique(support.begin(), support.end()), support.end());
      }
    }
  }

  // Per-side pooled support arrays; jitter if any mass point shows up.
  std::vector<detail::SupportEntry> pool[2];
  std::size_t clusters_with_support[2] = {0, 0};
  for (int side = 0; side < 2; ++side) {
    for (std::size_t g = 0; g < G; ++g) {
      const auto& support = side == 0 ? out.support_plus[g] : out.support_minus[g];
      if (support.empty()) continue;
      ++clusters_with_support[side];
      for (std::uint32_t p = 0; p < support.size(); ++p) {
        pool[side].push_back({support[p], static_cast<std::uint32_t>(g),
                              sample.tie_rank(g), p});
      }
    }
    auto& entries = pool[side];
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return a.value != b.value ? a.value < b.value
                                : (a.tie_rank != b.tie_rank ? a.tie_rank < b.tie_rank
                                                            : a.pos < b.pos);
    });
    bool mass_point = false;
    for (std::size_t k = 1; k < entries.size(); ++k) {
      if (entries[k].value == entries[k - 1].value) {
        mass_point = true;
        break;
      }
    }
    if (mass_point) {
      const double scale = 1e-9 * sample.sd_x();
      for (auto& e : entries) {
        e.value += scale * detail::jitter_unit(seed, static_cast<std::uint64_t>(side),
                                               e.cluster, e.pos);
      }
      std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        return a.value != b.value ? a.value < b.value
                                  : (a.tie_rank != b.tie_rank ? a.tie_rank < b.tie_rank
                                                              : a.pos < b.pos);
      });
      // keep the jittered values visible in the per-cluster supports
      for (const auto& e : entries) {
        auto& support = side == 0 ? out.support_plus[e.cluster] : out.support_minus[e.cluster];
        support[e.pos] = e.value;
      }
      for (std::size_t g = 0; g < G; ++g) {
        auto& support = side == 0 ? out.support_plus[g] : out.support_minus[g];
        std::sort(support.begin(), support.end());
      }
    }
  }

  for (int side = 0; side < 2; ++side) {
    if (clusters_with_support[side] == 0) continue;
    if (clusters_with_support[side] < static_cast<std::size_t>(2 * J * L)) {
      fail(errc::too_few_clusters,
           std::string(side == 0 ? "treated" : "control") + " side has " +
               std::to_string(clusters_with_support[side]) +
               " clusters with in-window support, need at least " + std::to_string(2 * J * L));
    }
  }

  // Step 1 and Step 2 matching.
  std::vector<char> in_r1(G, 0);
  std::vector<const detail::SupportEntry*> picks;
  for (std::size_t g = 0; g < G; ++g) {
    auto collect = [&](int step) {
      std::vector<std::uint32_t> chosen;
      for (int side = 0; side < 2; ++side) {
        const auto& support = side == 0 ? out.support_plus[g] : out.support_minus[g];
        for (double x : support) {
          const bool ok = detail::j_closest(
              pool[side], x, J,
              [&](std::uint32_t c) {
                if (c == g) return true;
                return step == 2 && in_r1[c] != 0;
              },
              picks);
          if (!ok) {
            fail(errc::too_few_clusters,
                 "cluster " + sample.cluster_id(g) + ": fewer than J support values left in step " +
                     std::to_string(step));
          }
          for (const auto* e : picks) chosen.push_back(e->cluster);
        }
      }
      std::sort(chosen.begin(), chosen.end());
      chosen.erase(std::unique(chosen.begin(), chosen.end()), chosen.end());
      return chosen;
    };
    out.r1[g] = collect(1);
    for (std::uint32_t c : out.r1[g]) in_r1[c] = 1;
    out.r2[g] = collect(2);
    for (std::uint32_t c : out.r1[g]) in_r1[c] = 0;
  }
  return out;
}

//! Builds the two per-unit neighbor sets from the companion clusters.
//! Eligible neighbors share the unit's side of the cutoff, lie inside the
//! estimation window, and belong to a cluster in R^d_g. Each set holds the
//! J nearest eligible units, expanded to include every unit tied at the
//! J-th distance.
inline NeighborPlan build_neighbor_sets(const ClusteredSample& sample, double h,
                                        const CompanionSets& companions, int J) {
  if (J < 1) fail(errc::invalid_config, "J must be >= 1");
  const std::size_t G = sample.num_clusters();
  if (companions.r1.size() != G) fail(errc::shape_mismatch, "companion sets / sample mismatch");

  NeighborPlan plan;
  plan.h = h;
  plan.J = J;
  plan.R = companions.R;
  plan.L = companions.L;
  plan.companions = companions;
  plan.n1.resize(sample.n());
  plan.n2.resize(sample.n());

  struct Cand {
    double x;
    UnitRef ref;
    int tie_rank;
  };
  std::vector<Cand> cand;
  std::vector<std::size_t> order;

  for (std::size_t g = 0; g < G; ++g) {
    // units of g that need neighbors, by side
    bool need_side[2] = {false, false};
    for (std::size_t i = 0; i < sample.size(g); ++i) {
      const double x = sample.x(g, i);
      if (std::abs(x) <= h) need_side[on_treated_side(x) ? 0 : 1] = true;
    }
    for (int d = 0; d < 2; ++d) {
      const auto& comp = d == 0 ? companions.r1[g] : companions.r2[g];
      for (int side = 0; side < 2; ++side) {
        if (!need_side[side]) continue;
        cand.clear();
        for (std::uint32_t c : comp) {
          for (std::size_t j = 0; j < sample.size(c); ++j) {
            const double xj = sample.x(c, j);
            if (std::abs(xj) > h) continue;
            if ((side == 0) != on_treated_side(xj)) continue;
            cand.push_back({xj, {c, static_cast<std::uint32_t>(j)}, sample.tie_rank(c)});
          }
        }
        std::sort(cand.begin(), cand.end(), [](const Cand& a, const Cand& b) {
          if (a.x != b.x) return a.x < b.x;
          if (a.tie_rank != b.tie_rank) return a.tie_rank < b.tie_rank;
          return a.ref.i < b.ref.i;
        });
        for (std::size_t i = 0; i < sample.size(g); ++i) {
          const double x = sample.x(g, i);
          if (std::abs(x) > h) continue;
          if ((side == 0) != on_treated_side(x)) continue;
          if (static_cast<int>(cand.size()) < J) {
            fail(errc::no_eligible_neighbor,
                 "unit (" + sample.cluster_id(g) + "," + std::to_string(i) + ") has " +
                     std::to_string(cand.size()) + " eligible neighbors in set " +
                     std::to_string(d + 1) + ", needs " + std::to_string(J));
          }
          // J nearest plus everything tied at the J-th distance
          order.resize(cand.size());
          for (std::size_t k = 0; k < cand.size(); ++k) order[k] = k;
          std::nth_element(order.begin(), order.begin() + (J - 1), order.end(),
                           [&](std::size_t a, std::size_t b) {
                             const double da = std::abs(cand[a].x - x);
                             const double db = std::abs(cand[b].x - x);
                             if (da != db) return da < db;
                             if (cand[a].tie_rank != cand[b].tie_rank)
                               return cand[a].tie_rank < cand[b].tie_rank;
                             return cand[a].ref.i < cand[b].ref.i;
                           });
          const double dJ = std::abs(cand[order[J - 1]].x - x);
          std::vector<UnitRef>& dst = d == 0 ? plan.n1[sample.flat_index(g, i)]
                                             : plan.n2[sample.flat_index(g, i)];
          dst.clear();
          for (const Cand& c : cand) {
            if (std::abs(c.x - x) <= dJ) dst.push_back(c.ref);
          }
        }
      }
    }
  }
  return plan;
}

//! D(h): the largest distance between a nonzero-weight unit and any of its
//! matched neighbors. Bounded by 2h when matching is window-restricted.
inline double neighbor_distance_diag(const ClusteredSample& sample, const WeightSet& weights,
                                     const NeighborPlan& plan) {
  check_shape(sample, weights);
  double dmax = 0.0;
  for (std::size_t g = 0; g < sample.num_clusters(); ++g) {
    for (std::size_t i = 0; i < sample.size(g); ++i) {
      const std::size_t f = sample.flat_index(g, i);
      if (weights.w[f] == 0.0) continue;
      const double x = sample.x(g, i);
      for (const auto* set : {&plan.n1[f], &plan.n2[f]}) {
        for (const UnitRef& r : *set) {
          dmax = std::max(dmax, std::abs(x - sample.x(r.g, r.i)));
        }
      }
    }
  }
  return dmax;
}

}  // namespace rdcluster
