#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rdcluster {

//! Deterministic random stream for one replication. Streams are keyed by
//! (seed, replication) so replications can run in any order, on any number
//! of threads, and still produce identical draws.
class ReplicationRng {
public:
  ReplicationRng(std::uint64_t seed, std::uint64_t replication)
      : engine_(mix(seed, replication)) {}

  // uniform on (0, 1]
  double uniform_pos() {
    return (static_cast<double>(engine_() >> 11) + 1.0) * (1.0 / 9007199254740992.0);
  }

  // uniform on [0, 1)
  double uniform() {
    return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
  }

  // standard normal via Box-Muller (one value per call; no cached state,
  // so the stream layout does not depend on call parity)
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // standard normal truncated to [-lim, lim], by rejection
  double truncated_normal(double lim = 2.0) {
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= lim) return z;
    }
  }

private:
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t replication) {
    std::uint64_t x = seed * 0x9e3779b97f4a7c15ULL + replication + 1;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
};

}  // namespace rdcluster
