#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "rdcluster/diagnostics.hpp"
#include "rdcluster/errors.hpp"
#include "rdcluster/estimator.hpp"
#include "rdcluster/kernel.hpp"
#include "rdcluster/neighbors.hpp"
#include "rdcluster/numeric.hpp"
#include "rdcluster/rng.hpp"
#include "rdcluster/sample.hpp"
#include "rdcluster/variance.hpp"
#include "rdcluster/weights.hpp"

namespace rdcluster {

// Asymptotic regimes the generator can emulate. The label mostly selects
// validation rules; the mechanics are determined by x_mode and the sizes.
enum class Framework { I, II, III, IV, example2 };

enum class XMode { iid_continuous, within_cluster_correlated, cluster_constant };

inline const char* framework_name(Framework f) {
  switch (f) {
    case Framework::I: return "I";
    case Framework::II: return "II";
    case Framework::III: return "III";
    case Framework::IV: return "IV";
    case Framework::example2: return "example2";
  }
  return "?";
}

inline const char* x_mode_name(XMode m) {
  switch (m) {
    case XMode::iid_continuous: return "iid_continuous";
    case XMode::within_cluster_correlated: return "within_cluster_correlated";
    case XMode::cluster_constant: return "cluster_constant";
  }
  return "?";
}

//! mu(x) = tau 1{x >= 0} + slope x + (curvature/2) x^2 sign(x).
//! |mu''| equals |curvature| on both sides of the cutoff.
struct MuSpec {
  double tau = 0.0;
  double slope = 0.0;
  double curvature = 0.0;

  double operator()(double x) const {
    const double sign = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    return (x >= 0.0 ? tau : 0.0) + slope * x + 0.5 * curvature * x * x * sign;
  }
};

//! eps_gi = sigma (sqrt(rho) a_g + sqrt(1-rho) u_gi) with independent
//! standard normal a_g, u_gi: variance sigma^2, within-cluster covariance
//! sigma^2 rho, a common covariance between any two units of a cluster.
struct ErrorSpec {
  double rho = 0.0;
  double sigma = 1.0;
};

struct DgpConfig {
  Framework framework = Framework::I;
  XMode x_mode = XMode::iid_continuous;
  long n = 0;                    // target total (checked against sizes)
  long G = 0;                    // cluster count (ignored for example2)
  std::vector<int> size_pattern; // cycled over clusters; empty -> equal n/G
  double x_corr = 0.5;           // within-cluster correlation of the x draws
  MuSpec mu;
  ErrorSpec error;
  double a = 0.0, b = 0.0;       // example2 size exponents, a >= b in (0,1)
  std::uint64_t seed = 0;
};

// truncated standard normal density on [-2, 2] at 0
inline double truncated_normal_density0() {
  return normal_pdf(0.0) / (normal_cdf(2.0) - normal_cdf(-2.0));
}

inline std::vector<std::size_t> resolve_cluster_sizes(const DgpConfig& cfg) {
  std::vector<std::size_t> sizes;
  if (cfg.framework == Framework::example2) {
    if (!(cfg.a >= cfg.b) || cfg.a <= 0.0 || cfg.a >= 1.0 || cfg.b <= 0.0 || cfg.b >= 1.0) {
      fail(errc::invalid_config, "example2 requires a >= b with a, b in (0,1)");
    }
    if (cfg.n < 2) fail(errc::invalid_config, "example2 requires n >= 2");
    const double nd = static_cast<double>(cfg.n);
    const auto singles = static_cast<std::size_t>(cfg.n - static_cast<long>(std::floor(std::pow(nd, cfg.a))));
    const auto big_count = static_cast<std::size_t>(std::floor(std::pow(nd, cfg.b)));
    const auto big_size =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::pow(nd, cfg.a - cfg.b))));
    sizes.assign(singles, 1);
    sizes.insert(sizes.end(), big_count, big_size);
    return sizes;
  }
  if (cfg.G <= 0) fail(errc::invalid_config, "G must be positive");
  if (!cfg.size_pattern.empty()) {
    sizes.resize(static_cast<std::size_t>(cfg.G));
    long total = 0;
    for (long g = 0; g < cfg.G; ++g) {
      const int s = cfg.size_pattern[static_cast<std::size_t>(g) % cfg.size_pattern.size()];
      if (s < 1) fail(errc::invalid_config, "cluster sizes must be >= 1");
      sizes[static_cast<std::size_t>(g)] = static_cast<std::size_t>(s);
      total += s;
    }
    if (cfg.n > 0 && cfg.n != total) {
      fail(errc::invalid_config, "size pattern sums to " + std::to_string(total) +
                                     ", config says n = " + std::to_string(cfg.n));
    }
    return sizes;
  }
  if (cfg.n <= 0 || cfg.n % cfg.G != 0) {
    fail(errc::invalid_config, "equal-size rule needs n divisible by G");
  }
  sizes.assign(static_cast<std::size_t>(cfg.G), static_cast<std::size_t>(cfg.n / cfg.G));
  return sizes;
}

inline void validate_config(const DgpConfig& cfg) {
  if (cfg.error.rho < 0.0 || cfg.error.rho >= 1.0) {
    fail(errc::invalid_config, "rho must lie in [0, 1)");
  }
  if (cfg.error.sigma <= 0.0) fail(errc::invalid_config, "sigma must be positive");
  if (cfg.x_corr < 0.0 || cfg.x_corr >= 1.0) fail(errc::invalid_config, "x_corr must lie in [0, 1)");
  const bool constant_x = cfg.x_mode == XMode::cluster_constant;
  if ((cfg.framework == Framework::II || cfg.framework == Framework::IV) && !constant_x) {
    fail(errc::invalid_config, "frameworks II and IV use cluster-constant x");
  }
  if ((cfg.framework == Framework::I || cfg.framework == Framework::III) && constant_x) {
    fail(errc::invalid_config, "frameworks I and III need a continuous x mode");
  }
  resolve_cluster_sizes(cfg);  // throws on inconsistent size rules
}

struct DgpDraw {
  ClusteredSample sample;
  SigmaOracle sigma;
  double tau_true = 0.0;
};

//! One synthetic sample. Deterministic given (cfg.seed, replication).
//! x is standard normal truncated to [-2, 2]: drawn per unit (iid mode),
//! once per cluster (cluster_constant), or as an equicorrelated Gaussian
//! vector with correlation x_corr rejected jointly to the box (correlated
//! mode, which keeps the joint density bounded).
inline DgpDraw dgp_generate(const DgpConfig& cfg, std::uint64_t replication) {
  validate_config(cfg);
  const std::vector<std::size_t> sizes = resolve_cluster_sizes(cfg);
  ReplicationRng rng(cfg.seed, replication);

  std::vector<ClusteredSample::Cluster> clusters(sizes.size());
  const double rho = cfg.error.rho;
  const double sig = cfg.error.sigma;
  std::vector<double> zs;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    const std::size_t m = sizes[g];
    auto& c = clusters[g];
    c.id = std::to_string(g);
    c.x.resize(m);
    c.y.resize(m);

    switch (cfg.x_mode) {
      case XMode::iid_continuous:
        for (std::size_t i = 0; i < m; ++i) c.x[i] = rng.truncated_normal();
        break;
      case XMode::cluster_constant: {
        const double xg = rng.truncated_normal();
        for (std::size_t i = 0; i < m; ++i) c.x[i] = xg;
        break;
      }
      case XMode::within_cluster_correlated: {
        const double rc = std::sqrt(cfg.x_corr);
        const double ru = std::sqrt(1.0 - cfg.x_corr);
        zs.resize(m);
        for (;;) {
          const double zeta = rng.normal();
          bool ok = true;
          for (std::size_t i = 0; i < m; ++i) {
            zs[i] = rc * zeta + ru * rng.normal();
            if (std::abs(zs[i]) > 2.0) ok = false;
          }
          if (ok) break;
        }
        for (std::size_t i = 0; i < m; ++i) c.x[i] = zs[i];
        break;
      }
    }

    const double alpha = rng.normal();
    const double ra = std::sqrt(rho);
    const double ru = std::sqrt(1.0 - rho);
    for (std::size_t i = 0; i < m; ++i) {
      const double eps = sig * (ra * alpha + ru * rng.normal());
      c.y[i] = cfg.mu(c.x[i]) + eps;
    }
  }

  DgpDraw draw;
  draw.sample = ClusteredSample(std::move(clusters), 0.0);
  draw.sigma = SigmaOracle::equicorrelated(sizes, sig * sig, rho);
  draw.tau_true = cfg.mu.tau;
  return draw;
}

enum class SeMethod { ehw, nn_iid, naive_cnn, crr, cnn };

inline const char* se_method_name(SeMethod m) {
  switch (m) {
    case SeMethod::ehw: return "ehw";
    case SeMethod::nn_iid: return "nn_iid";
    case SeMethod::naive_cnn: return "naive_cnn";
    case SeMethod::crr: return "crr";
    case SeMethod::cnn: return "cnn";
  }
  return "?";
}

inline const std::vector<SeMethod>& all_se_methods() {
  static const std::vector<SeMethod> methods = {SeMethod::ehw, SeMethod::nn_iid,
                                                SeMethod::naive_cnn, SeMethod::crr,
                                                SeMethod::cnn};
  return methods;
}

// CI critical value fixed at the 0.95 normal quantile.
inline constexpr double kCriticalValue = 1.959964;

struct BandwidthRule {
  double fixed = -1.0;     // used when > 0
  double scale = 1.0;      // otherwise h = scale * n^exponent
  double exponent = -0.2;

  double resolve(std::size_t n) const {
    if (fixed > 0.0) return fixed;
    return scale * std::pow(static_cast<double>(n), exponent);
  }
};

struct McOptions {
  BandwidthRule h_rule;
  std::vector<SeMethod> methods = all_se_methods();
  long replications = 0;
  int threads = 1;
  KernelKind kernel = KernelKind::triangular;
  int J = 3;
  int R = 0;  // defaults to 12*J
  int min_per_side = 3;
};

struct McMethodStats {
  double coverage = 0.0;
  double mean_se = 0.0;
  double rel_se_bias = 0.0;  // mean_se / mean_oracle_se - 1
};

struct McReport {
  long replications = 0;
  long failures = 0;
  double tau_true = 0.0;
  double mean_tau_hat = 0.0;
  double sd_tau_hat = 0.0;
  double mean_oracle_se = 0.0;
  double mean_bandwidth = 0.0;
  std::map<SeMethod, McMethodStats> methods;
};

namespace detail {

struct RepRecord {
  bool failed = false;
  double tau_hat = 0.0;
  double se_oracle = 0.0;
  double h = 0.0;
  double se[5] = {0, 0, 0, 0, 0};
  bool has[5] = {false, false, false, false, false};
};

inline void run_replication(const DgpConfig& cfg, const McOptions& opt, std::uint64_t rep,
                            RepRecord& rec) {
  const DgpDraw draw = dgp_generate(cfg, rep);
  const KernelSpec kernel = KernelSpec::by_kind(opt.kernel);
  const double h = opt.h_rule.resolve(draw.sample.n());
  rec.h = h;
  const int R = opt.R > 0 ? opt.R : 12 * opt.J;

  const WeightSet weights =
      local_linear_weights(draw.sample, kernel, h, WindowConfig{h, opt.min_per_side});
  const RdEstimate est = rd_estimate(draw.sample, weights);
  rec.tau_hat = est.tau_hat;
  rec.se_oracle = oracle_conditional_se(weights, draw.sigma);

  std::vector<double> residuals;
  auto need_residuals = [&]() -> const std::vector<double>& {
    if (residuals.empty()) residuals = regression_residuals(draw.sample, est.fit);
    return residuals;
  };
  for (SeMethod m : opt.methods) {
    const int idx = static_cast<int>(m);
    switch (m) {
      case SeMethod::ehw:
        rec.se[idx] = se_ehw(weights, need_residuals());
        break;
      case SeMethod::nn_iid:
        rec.se[idx] = se_nn_iid(draw.sample, weights, opt.J);
        break;
      case SeMethod::naive_cnn:
        rec.se[idx] = se_naive_cnn(draw.sample, weights, opt.J);
        break;
      case SeMethod::crr:
        rec.se[idx] = se_crr(draw.sample, weights, need_residuals());
        break;
      case SeMethod::cnn: {
        const CompanionSets companions =
            select_companion_clusters(draw.sample, h, opt.J, R, cfg.seed);
        const NeighborPlan plan = build_neighbor_sets(draw.sample, h, companions, opt.J);
        rec.se[idx] = se_cnn(draw.sample, weights, plan).se;
        break;
      }
    }
    rec.has[idx] = true;
  }
}

}  // namespace detail

//! Monte Carlo study: generate, estimate, compute the requested standard
//! errors plus the known-covariance oracle, and aggregate coverage of the
//! nominal 95% interval tau_hat +- 1.959964 se. Replications that fail an
//! estimation precondition are counted and excluded. The reduction is
//! sequential in replication order regardless of thread count.
inline McReport monte_carlo(const DgpConfig& cfg, const McOptions& opt) {
  if (opt.replications < 1) fail(errc::invalid_config, "need at least one replication");
  validate_config(cfg);

  std::vector<detail::RepRecord> records(static_cast<std::size_t>(opt.replications));
  const int threads = std::max(1, opt.threads);
  auto worker_loop = [&](std::atomic<long>& next) {
    for (;;) {
      const long rep = next.fetch_add(1);
      if (rep >= opt.replications) break;
      auto& rec = records[static_cast<std::size_t>(rep)];
      try {
        detail::run_replication(cfg, opt, static_cast<std::uint64_t>(rep), rec);
      } catch (const rd_error& e) {
        if (!e.is_estimation_error()) throw;
        rec.failed = true;
      }
    }
  };
  if (threads == 1) {
    std::atomic<long> next{0};
    worker_loop(next);
  } else {
    std::atomic<long> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&]() {
        try {
          worker_loop(next);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  }

  McReport report;
  report.replications = opt.replications;
  report.tau_true = cfg.mu.tau;

  KahanSum tau_sum, tau_sq, oracle_sum, h_sum;
  KahanSum se_sum[5];
  long covered[5] = {0, 0, 0, 0, 0};
  long successes = 0;
  for (const auto& rec : records) {
    if (rec.failed) {
      ++report.failures;
      continue;
    }
    ++successes;
    tau_sum.add(rec.tau_hat);
    tau_sq.add(rec.tau_hat * rec.tau_hat);
    oracle_sum.add(rec.se_oracle);
    h_sum.add(rec.h);
    for (SeMethod m : opt.methods) {
      const int idx = static_cast<int>(m);
      se_sum[idx].add(rec.se[idx]);
      if (std::abs(rec.tau_hat - cfg.mu.tau) <= kCriticalValue * rec.se[idx]) ++covered[idx];
    }
  }
  if (successes == 0) fail(errc::all_replications_failed, "every replication failed");

  const double ns = static_cast<double>(successes);
  report.mean_tau_hat = tau_sum.value() / ns;
  const double var =
      successes > 1
          ? std::max(0.0, (tau_sq.value() - ns * report.mean_tau_hat * report.mean_tau_hat) /
                              (ns - 1.0))
          : 0.0;
  report.sd_tau_hat = std::sqrt(var);
  report.mean_oracle_se = oracle_sum.value() / ns;
  report.mean_bandwidth = h_sum.value() / ns;
  for (SeMethod m : opt.methods) {
    const int idx = static_cast<int>(m);
    McMethodStats stats;
    stats.coverage = static_cast<double>(covered[idx]) / ns;
    stats.mean_se = se_sum[idx].value() / ns;
    stats.rel_se_bias = stats.mean_se / report.mean_oracle_se - 1.0;
    report.methods[m] = stats;
  }
  return report;
}

struct LimitCheck {
  double mean_oracle_se2 = 0.0;
  double limit_se2 = 0.0;
  double ratio = 0.0;
  double lambda = 0.0;  // lambda_n at the checked bandwidth
  long replications = 0;
};

//! Compares the Monte Carlo mean of the known-covariance conditional
//! variance against its closed-form limit: the continuous-x form (variance
//! level plus a signed within-cluster covariance term that cancels for a
//! covariance function constant across the cutoff) or the cluster-constant
//! form with the lambda_n/h inflation.
inline LimitCheck variance_limit_check(const DgpConfig& cfg, double h, long replications,
                                       KernelKind kernel_kind = KernelKind::triangular,
                                       int threads = 1) {
  if (replications < 1) fail(errc::invalid_config, "need at least one replication");
  validate_config(cfg);
  const KernelSpec kernel = KernelSpec::by_kind(kernel_kind);
  const KernelConstants kc = kernel_constants(kernel);

  std::vector<double> se2(static_cast<std::size_t>(replications), 0.0);
  std::vector<char> failed(static_cast<std::size_t>(replications), 0);
  std::vector<double> lam(static_cast<std::size_t>(replications), 0.0);
  std::vector<double> ntot(static_cast<std::size_t>(replications), 0.0);
  std::atomic<long> next{0};
  auto worker = [&]() {
    for (;;) {
      const long rep = next.fetch_add(1);
      if (rep >= replications) break;
      try {
        const DgpDraw draw = dgp_generate(cfg, static_cast<std::uint64_t>(rep));
        const WeightSet weights = local_linear_weights(draw.sample, kernel, h);
        se2[static_cast<std::size_t>(rep)] = oracle_conditional_se2(weights, draw.sigma);
        lam[static_cast<std::size_t>(rep)] = lambda_n(draw.sample, h);
        ntot[static_cast<std::size_t>(rep)] = static_cast<double>(draw.sample.n());
      } catch (const rd_error& e) {
        if (!e.is_estimation_error()) throw;
        failed[static_cast<std::size_t>(rep)] = 1;
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  KahanSum se2_sum;
  long successes = 0;
  double lambda = 0.0, n_real = 0.0;
  for (long rep = 0; rep < replications; ++rep) {
    if (failed[static_cast<std::size_t>(rep)]) continue;
    se2_sum.add(se2[static_cast<std::size_t>(rep)]);
    lambda = lam[static_cast<std::size_t>(rep)];
    n_real = ntot[static_cast<std::size_t>(rep)];
    ++successes;
  }
  if (successes == 0) fail(errc::all_replications_failed, "every replication failed");

  LimitCheck out;
  out.replications = successes;
  out.mean_oracle_se2 = se2_sum.value() / static_cast<double>(successes);
  out.lambda = lambda;

  const double f0 = truncated_normal_density0();
  const double sigma2 = cfg.error.sigma * cfg.error.sigma;
  const double cov = sigma2 * cfg.error.rho;
  if (cfg.x_mode == XMode::cluster_constant) {
    out.limit_se2 = kc.kappa_bar / (n_real * h * f0) * 2.0 * (sigma2 + (lambda / h) * cov);
  } else {
    // signed covariance sum: ++ and -- minus the cross terms; identically
    // zero for the equicorrelated errors, kept explicit for clarity
    const double signed_cov = cov + cov - cov - cov;
    const double f00 = f0 * f0;
    out.limit_se2 =
        (kc.kappa_bar * 2.0 * sigma2 / f0 + lambda * signed_cov * f00 / (f0 * f0)) / (n_real * h);
  }
  out.ratio = out.mean_oracle_se2 / out.limit_se2;
  return out;
}

}  // namespace rdcluster
