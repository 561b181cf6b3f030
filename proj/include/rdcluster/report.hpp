#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rdcluster/diagnostics.hpp"
#include "rdcluster/errors.hpp"
#include "rdcluster/simlab.hpp"

namespace rdcluster {

// Numbers are emitted with 17 significant digits so that serialized
// reports are byte-stable and round-trip to the exact double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

//! Minimal JSON writer with a fixed field order; used instead of a generic
//! serializer so that identical inputs produce identical bytes.
class JsonWriter {
public:
  void begin_object() {
    comma();
    out_ += '{';
    stack_.push_back(true);
  }
  void end_object() {
    out_ += '}';
    stack_.pop_back();
  }
  void begin_array() {
    comma();
    out_ += '[';
    stack_.push_back(true);
  }
  void end_array() {
    out_ += ']';
    stack_.pop_back();
  }
  void key(std::string_view k) {
    comma();
    append_string(k);
    out_ += ':';
    pending_value_ = true;
  }
  void value(double v) {
    comma();
    out_ += format_double(v);
  }
  void value(long long v) {
    comma();
    out_ += std::to_string(v);
  }
  void value(unsigned long long v) {
    comma();
    out_ += std::to_string(v);
  }
  void value(bool v) {
    comma();
    out_ += v ? "true" : "false";
  }
  void value(std::string_view v) {
    comma();
    append_string(v);
  }
  const std::string& str() const { return out_; }

private:
  void comma() {
    if (pending_value_) {
      pending_value_ = false;
      return;
    }
    if (!stack_.empty()) {
      if (!stack_.back()) out_ += ',';
      stack_.back() = false;
    }
  }
  void append_string(std::string_view s) {
    out_ += '"';
    for (char c : s) {
      switch (c) {
        case '"': out_ += "\\\""; break;
        case '\\': out_ += "\\\\"; break;
        case '\n': out_ += "\\n"; break;
        case '\t': out_ += "\\t"; break;
        case '\r': out_ += "\\r"; break;
        default: out_ += c;
      }
    }
    out_ += '"';
  }

  std::string out_;
  std::vector<bool> stack_;
  bool pending_value_ = false;
};

struct SeReport {
  double value = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  std::optional<double> se2;       // raw estimate, reported for cnn
  std::optional<bool> negative;    // cnn: se^2 < 0 in this sample

  friend bool operator==(const SeReport&, const SeReport&) = default;
};

struct AutoBandwidthReport {
  double h_pilot = 0.0;
  double v1 = 0.0;
  double v2 = 0.0;
  double h_star_v1 = 0.0;
  double h_star_v2 = 0.0;

  friend bool operator==(const AutoBandwidthReport&, const AutoBandwidthReport&) = default;
};

struct DiagnosticsReport {
  double w_max = 0.0;
  double w_sum = 0.0;
  double eta_max = 0.1;
  double eta_sum = 10.0;
  std::string verdict;

  friend bool operator==(const DiagnosticsReport&, const DiagnosticsReport&) = default;
};

//! Full analysis report, mirroring the columns of a standard RD results
//! table: estimate, the five standard errors with their intervals, window
//! counts and the cluster-influence diagnostics.
struct EstimateReport {
  double tau_hat = 0.0;
  double h = 0.0;
  std::string kernel;
  double cutoff = 0.0;
  long long n = 0;
  long long g = 0;
  long long n_h = 0;
  long long g_h = 0;
  double lambda = 0.0;
  long long j = 0;
  long long r = 0;
  unsigned long long seed = 0;
  std::map<SeMethod, SeReport> se;
  std::optional<BiasBound> bias_bound;
  DiagnosticsReport diagnostics;
  std::optional<double> neighbor_distance_max;
  std::optional<AutoBandwidthReport> auto_bandwidth;

  friend bool operator==(const EstimateReport& a, const EstimateReport& b) {
    auto bias_eq = [](const std::optional<BiasBound>& x, const std::optional<BiasBound>& y) {
      if (x.has_value() != y.has_value()) return false;
      if (!x) return true;
      return x->M == y->M && x->b_bar == y->b_bar;
    };
    return a.tau_hat == b.tau_hat && a.h == b.h && a.kernel == b.kernel &&
           a.cutoff == b.cutoff && a.n == b.n && a.g == b.g && a.n_h == b.n_h &&
           a.g_h == b.g_h && a.lambda == b.lambda && a.j == b.j && a.r == b.r &&
           a.seed == b.seed && a.se == b.se && bias_eq(a.bias_bound, b.bias_bound) &&
           a.diagnostics == b.diagnostics &&
           a.neighbor_distance_max == b.neighbor_distance_max &&
           a.auto_bandwidth == b.auto_bandwidth;
  }
};

inline std::string to_json(const EstimateReport& rep) {
  JsonWriter w;
  w.begin_object();
  w.key("tau_hat");
  w.value(rep.tau_hat);
  w.key("h");
  w.value(rep.h);
  w.key("kernel");
  w.value(rep.kernel);
  w.key("cutoff");
  w.value(rep.cutoff);
  w.key("n");
  w.value(static_cast<long long>(rep.n));
  w.key("g");
  w.value(static_cast<long long>(rep.g));
  w.key("n_h");
  w.value(static_cast<long long>(rep.n_h));
  w.key("g_h");
  w.value(static_cast<long long>(rep.g_h));
  w.key("lambda_n");
  w.value(rep.lambda);
  w.key("j");
  w.value(static_cast<long long>(rep.j));
  w.key("r");
  w.value(static_cast<long long>(rep.r));
  w.key("seed");
  w.value(static_cast<unsigned long long>(rep.seed));
  w.key("se");
  w.begin_object();
  for (const auto& [method, entry] : rep.se) {
    w.key(se_method_name(method));
    w.begin_object();
    w.key("value");
    w.value(entry.value);
    if (entry.se2) {
      w.key("se2");
      w.value(*entry.se2);
    }
    if (entry.negative) {
      w.key("negative_estimate");
      w.value(*entry.negative);
    }
    w.key("ci_lower");
    w.value(entry.ci_lower);
    w.key("ci_upper");
    w.value(entry.ci_upper);
    w.end_object();
  }
  w.end_object();
  if (rep.bias_bound) {
    w.key("bias_bound");
    w.begin_object();
    w.key("m");
    w.value(rep.bias_bound->M);
    w.key("b_bar");
    w.value(rep.bias_bound->b_bar);
    w.end_object();
  }
  w.key("diagnostics");
  w.begin_object();
  w.key("w_max");
  w.value(rep.diagnostics.w_max);
  w.key("w_sum");
  w.value(rep.diagnostics.w_sum);
  w.key("eta_max");
  w.value(rep.diagnostics.eta_max);
  w.key("eta_sum");
  w.value(rep.diagnostics.eta_sum);
  w.key("verdict");
  w.value(rep.diagnostics.verdict);
  w.end_object();
  if (rep.neighbor_distance_max) {
    w.key("neighbor_distance_max");
    w.value(*rep.neighbor_distance_max);
  }
  if (rep.auto_bandwidth) {
    w.key("auto_bandwidth");
    w.begin_object();
    w.key("h_pilot");
    w.value(rep.auto_bandwidth->h_pilot);
    w.key("v1");
    w.value(rep.auto_bandwidth->v1);
    w.key("v2");
    w.value(rep.auto_bandwidth->v2);
    w.key("h_star_v1");
    w.value(rep.auto_bandwidth->h_star_v1);
    w.key("h_star_v2");
    w.value(rep.auto_bandwidth->h_star_v2);
    w.end_object();
  }
  w.end_object();
  return w.str();
}

inline std::string to_json(const McReport& rep) {
  JsonWriter w;
  w.begin_object();
  w.key("replications");
  w.value(static_cast<long long>(rep.replications));
  w.key("failures");
  w.value(static_cast<long long>(rep.failures));
  w.key("tau_true");
  w.value(rep.tau_true);
  w.key("mean_tau_hat");
  w.value(rep.mean_tau_hat);
  w.key("sd_tau_hat");
  w.value(rep.sd_tau_hat);
  w.key("mean_oracle_se");
  w.value(rep.mean_oracle_se);
  w.key("mean_bandwidth");
  w.value(rep.mean_bandwidth);
  w.key("methods");
  w.begin_object();
  for (const auto& [method, stats] : rep.methods) {
    w.key(se_method_name(method));
    w.begin_object();
    w.key("coverage");
    w.value(stats.coverage);
    w.key("mean_se");
    w.value(stats.mean_se);
    w.key("rel_se_bias");
    w.value(stats.rel_se_bias);
    w.end_object();
  }
  w.end_object();
  w.end_object();
  return w.str();
}

//! Debug dump of a neighbor plan: companion cluster ids plus the neighbor
//! list of every in-window unit.
inline std::string to_json(const NeighborPlan& plan, const ClusteredSample& sample) {
  JsonWriter w;
  w.begin_object();
  w.key("j");
  w.value(static_cast<long long>(plan.J));
  w.key("r");
  w.value(static_cast<long long>(plan.R));
  w.key("l");
  w.value(static_cast<long long>(plan.L));
  w.key("clusters");
  w.begin_array();
  for (std::size_t g = 0; g < sample.num_clusters(); ++g) {
    w.begin_object();
    w.key("id");
    w.value(sample.cluster_id(g));
    w.key("r1");
    w.begin_array();
    for (std::uint32_t c : plan.companions.r1[g]) w.value(sample.cluster_id(c));
    w.end_array();
    w.key("r2");
    w.begin_array();
    for (std::uint32_t c : plan.companions.r2[g]) w.value(sample.cluster_id(c));
    w.end_array();
    w.key("support_plus");
    w.begin_array();
    for (double v : plan.companions.support_plus[g]) w.value(v);
    w.end_array();
    w.key("support_minus");
    w.begin_array();
    for (double v : plan.companions.support_minus[g]) w.value(v);
    w.end_array();
    w.end_object();
  }
  w.end_array();
  w.key("units");
  w.begin_array();
  for (std::size_t g = 0; g < sample.num_clusters(); ++g) {
    for (std::size_t i = 0; i < sample.size(g); ++i) {
      const std::size_t f = sample.flat_index(g, i);
      if (plan.n1[f].empty() && plan.n2[f].empty()) continue;
      w.begin_object();
      w.key("cluster");
      w.value(sample.cluster_id(g));
      w.key("index");
      w.value(static_cast<long long>(i));
      w.key("x");
      w.value(sample.x(g, i));
      for (int d = 0; d < 2; ++d) {
        w.key(d == 0 ? "n1" : "n2");
        w.begin_array();
        const auto& set = d == 0 ? plan.n1[f] : plan.n2[f];
        for (const UnitRef& r : set) {
          w.begin_array();
          w.value(sample.cluster_id(r.g));
          w.value(static_cast<long long>(r.i));
          w.end_array();
        }
        w.end_array();
      }
      w.end_object();
    }
  }
  w.end_array();
  w.end_object();
  return w.str();
}

}  // namespace rdcluster
