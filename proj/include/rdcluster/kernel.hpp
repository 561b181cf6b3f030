#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "rdcluster/errors.hpp"
#include "rdcluster/numeric.hpp"

namespace rdcluster {

enum class KernelKind { uniform, triangular, epanechnikov, custom };

inline const char* kernel_name(KernelKind k) {
  switch (k) {
    case KernelKind::uniform: return "uniform";
    case KernelKind::triangular: return "triangular";
    case KernelKind::epanechnikov: return "epanechnikov";
    case KernelKind::custom: return "custom";
  }
  return "custom";
}

//! Symmetric kernel density on [-1, 1]. Custom kernels must already be
//! rescaled to that support by the caller.
class KernelSpec {
public:
  static KernelSpec uniform() {
    return KernelSpec(KernelKind::uniform, [](double) { return 0.5; });
  }
  static KernelSpec triangular() {
    return KernelSpec(KernelKind::triangular, [](double v) { return 1.0 - std::abs(v); });
  }
  static KernelSpec epanechnikov() {
    return KernelSpec(KernelKind::epanechnikov, [](double v) { return 0.75 * (1.0 - v * v); });
  }
  static KernelSpec custom(std::function<double(double)> eval) {
    return KernelSpec(KernelKind::custom, std::move(eval));
  }
  static KernelSpec by_kind(KernelKind kind) {
    switch (kind) {
      case KernelKind::uniform: return uniform();
      case KernelKind::triangular: return triangular();
      case KernelKind::epanechnikov: return epanechnikov();
      default: fail(errc::invalid_config, "custom kernel requires an evaluator");
    }
  }

  KernelKind kind() const { return kind_; }

  //! k(v), exactly zero outside [-1, 1].
  double operator()(double v) const {
    if (v < -1.0 || v > 1.0) return 0.0;
    return eval_(v);
  }

private:
  KernelSpec(KernelKind kind, std::function<double(double)> eval)
      : kind_(kind), eval_(std::move(eval)) {}

  KernelKind kind_;
  std::function<double(double)> eval_;
};

inline double kernel_eval(const KernelSpec& k, double v) { return k(v); }

//! Boundary kernel constants: one-sided moments, the bias constant and the
//! variance constant of the equivalent boundary kernel.
struct KernelConstants {
  std::array<double, 4> mu_bar_j{};  // \int_0^1 k(v) v^j dv, j = 0..3
  double mu_bar = 0.0;               // (mu2^2 - mu1*mu3) / (mu2*mu0 - mu1^2)
  double kappa_bar = 0.0;            // \int_0^1 kbar(v)^2 dv
};

//! Computes the constants by adaptive quadrature (absolute tolerance 1e-10).
inline KernelConstants kernel_constants(const KernelSpec& k) {
  KernelConstants c;
  for (int j = 0; j < 4; ++j) {
    c.mu_bar_j[j] =
        integrate([&](double v) { return k(v) * std::pow(v, j); }, 0.0, 1.0, 1e-10);
  }
  const double mu0 = c.mu_bar_j[0], mu1 = c.mu_bar_j[1];
  const double mu2 = c.mu_bar_j[2], mu3 = c.mu_bar_j[3];
  const double den = mu2 * mu0 - mu1 * mu1;
  if (den <= 1e-12) fail(errc::degenerate_kernel, "mu2*mu0 - mu1^2 <= 1e-12");
  c.mu_bar = (mu2 * mu2 - mu1 * mu3) / den;
  c.kappa_bar = integrate(
      [&](double v) {
        const double kb = k(v) * (mu2 - mu1 * v) / den;
        return kb * kb;
      },
      0.0, 1.0, 1e-10);
  return c;
}

}  // namespace rdcluster
