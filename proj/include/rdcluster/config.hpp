#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdcluster/errors.hpp"
#include "rdcluster/report.hpp"
#include "rdcluster/simlab.hpp"

namespace rdcluster {

//! Everything a `simulate` run needs: the DGP plus the harness options.
struct SimulateSpec {
  DgpConfig dgp;
  McOptions mc;
};

namespace detail {

inline Framework parse_framework(const std::string& s) {
  if (s == "I") return Framework::I;
  if (s == "II") return Framework::II;
  if (s == "III") return Framework::III;
  if (s == "IV") return Framework::IV;
  if (s == "example2") return Framework::example2;
  fail(errc::invalid_config, "unknown framework '" + s + "'");
}

inline XMode parse_x_mode(const std::string& s) {
  if (s == "iid_continuous") return XMode::iid_continuous;
  if (s == "within_cluster_correlated") return XMode::within_cluster_correlated;
  if (s == "cluster_constant") return XMode::cluster_constant;
  fail(errc::invalid_config, "unknown x_mode '" + s + "'");
}

inline KernelKind parse_kernel(const std::string& s) {
  if (s == "uniform") return KernelKind::uniform;
  if (s == "triangular") return KernelKind::triangular;
  if (s == "epanechnikov") return KernelKind::epanechnikov;
  fail(errc::invalid_config, "unknown kernel '" + s + "'");
}

inline SeMethod parse_se_method(const std::string& s) {
  for (SeMethod m : all_se_methods()) {
    if (s == se_method_name(m)) return m;
  }
  fail(errc::invalid_config, "unknown se method '" + s + "'");
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ' && c != '\t') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// key = value format: one pair per line, '#' comments, lists separated by
// commas. The keys are the same as in the JSON form.
inline nlohmann::json keyvalue_to_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::object();
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    std::size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      fail(errc::invalid_config, "line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const std::size_t b2 = s.find_first_not_of(" \t");
      const std::size_t e2 = s.find_last_not_of(" \t");
      s = b2 == std::string::npos ? std::string() : s.substr(b2, e2 - b2 + 1);
    };
    trim(key);
    trim(value);
    if (key.empty() || value.empty()) {
      fail(errc::invalid_config, "line " + std::to_string(lineno) + ": empty key or value");
    }
    if (value.find(',') != std::string::npos) {
      nlohmann::json arr = nlohmann::json::array();
      for (const std::string& item : split_list(value)) {
        try {
          arr.push_back(std::stod(item));
        } catch (...) {
          arr.push_back(item);
        }
      }
      j[key] = arr;
    } else {
      char* end = nullptr;
      const double num = std::strtod(value.c_str(), &end);
      if (end == value.c_str() + value.size() && end != value.c_str()) {
        j[key] = num;
      } else {
        j[key] = value;
      }
    }
  }
  return j;
}

}  // namespace detail

inline SimulateSpec parse_simulate_spec(const std::string& text) {
  nlohmann::json j;
  std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
      fail(errc::invalid_config, std::string("JSON parse error: ") + e.what());
    }
  } else {
    j = detail::keyvalue_to_json(text);
  }

  SimulateSpec spec;
  auto& dgp = spec.dgp;
  auto& mc = spec.mc;
  try {
    if (j.contains("framework")) dgp.framework = detail::parse_framework(j["framework"]);
    if (j.contains("x_mode")) dgp.x_mode = detail::parse_x_mode(j["x_mode"]);
    if (j.contains("n")) dgp.n = j["n"].get<long>();
    if (j.contains("G")) dgp.G = j["G"].get<long>();
    if (j.contains("cluster_size")) {
      dgp.size_pattern = {j["cluster_size"].get<int>()};
    }
    if (j.contains("size_pattern")) {
      dgp.size_pattern.clear();
      for (const auto& v : j["size_pattern"]) dgp.size_pattern.push_back(v.get<int>());
    }
    if (j.contains("x_corr")) dgp.x_corr = j["x_corr"].get<double>();
    if (j.contains("tau")) dgp.mu.tau = j["tau"].get<double>();
    if (j.contains("slope")) dgp.mu.slope = j["slope"].get<double>();
    if (j.contains("curvature")) dgp.mu.curvature = j["curvature"].get<double>();
    if (j.contains("rho")) dgp.error.rho = j["rho"].get<double>();
    if (j.contains("sigma")) dgp.error.sigma = j["sigma"].get<double>();
    if (j.contains("a")) dgp.a = j["a"].get<double>();
    if (j.contains("b")) dgp.b = j["b"].get<double>();
    if (j.contains("seed")) dgp.seed = j["seed"].get<std::uint64_t>();

    if (j.contains("h")) mc.h_rule.fixed = j["h"].get<double>();
    if (j.contains("h_scale")) mc.h_rule.scale = j["h_scale"].get<double>();
    if (j.contains("h_exponent")) mc.h_rule.exponent = j["h_exponent"].get<double>();
    if (j.contains("kernel")) mc.kernel = detail::parse_kernel(j["kernel"]);
    if (j.contains("reps")) mc.replications = j["reps"].get<long>();
    if (j.contains("J")) mc.J = j["J"].get<int>();
    if (j.contains("R")) mc.R = j["R"].get<int>();
    if (j.contains("threads")) mc.threads = j["threads"].get<int>();
    if (j.contains("min_per_side")) mc.min_per_side = j["min_per_side"].get<int>();
    if (j.contains("se_methods")) {
      mc.methods.clear();
      if (j["se_methods"].is_string()) {
        for (const std::string& s : detail::split_list(j["se_methods"].get<std::string>())) {
          mc.methods.push_back(detail::parse_se_method(s));
        }
      } else {
        for (const auto& v : j["se_methods"]) {
          mc.methods.push_back(detail::parse_se_method(v.get<std::string>()));
        }
      }
    }
  } catch (const rd_error&) {
    throw;
  } catch (const std::exception& e) {
    fail(errc::invalid_config, std::string("config field error: ") + e.what());
  }
  if (mc.replications < 1) fail(errc::invalid_config, "reps must be >= 1");
  if (mc.h_rule.fixed <= 0.0 && !j.contains("h_scale")) {
    fail(errc::invalid_config, "config needs h or h_scale/h_exponent");
  }
  return spec;
}

inline SimulateSpec parse_simulate_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::invalid_config, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_simulate_spec(buf.str());
}

//! Parses report JSON back into an EstimateReport (used to verify that
//! serialization round-trips).
inline EstimateReport parse_estimate_report(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    fail(errc::invalid_config, std::string("report parse error: ") + e.what());
  }
  EstimateReport rep;
  rep.tau_hat = j.at("tau_hat").get<double>();
  rep.h = j.at("h").get<double>();
  rep.kernel = j.at("kernel").get<std::string>();
  rep.cutoff = j.at("cutoff").get<double>();
  rep.n = j.at("n").get<long long>();
  rep.g = j.at("g").get<long long>();
  rep.n_h = j.at("n_h").get<long long>();
  rep.g_h = j.at("g_h").get<long long>();
  rep.lambda = j.at("lambda_n").get<double>();
  rep.j = j.at("j").get<long long>();
  rep.r = j.at("r").get<long long>();
  rep.seed = j.at("seed").get<unsigned long long>();
  for (const auto& [name, entry] : j.at("se").items()) {
    SeReport se;
    se.value = entry.at("value").get<double>();
    se.ci_lower = entry.at("ci_lower").get<double>();
    se.ci_upper = entry.at("ci_upper").get<double>();
    if (entry.contains("se2")) se.se2 = entry.at("se2").get<double>();
    if (entry.contains("negative_estimate")) {
      se.negative = entry.at("negative_estimate").get<bool>();
    }
    rep.se[detail::parse_se_method(name)] = se;
  }
  if (j.contains("bias_bound")) {
    BiasBound b;
    b.M = j["bias_bound"].at("m").get<double>();
    b.b_bar = j["bias_bound"].at("b_bar").get<double>();
    rep.bias_bound = b;
  }
  const auto& d = j.at("diagnostics");
  rep.diagnostics.w_max = d.at("w_max").get<double>();
  rep.diagnostics.w_sum = d.at("w_sum").get<double>();
  rep.diagnostics.eta_max = d.at("eta_max").get<double>();
  rep.diagnostics.eta_sum = d.at("eta_sum").get<double>();
  rep.diagnostics.verdict = d.at("verdict").get<std::string>();
  if (j.contains("neighbor_distance_max")) {
    rep.neighbor_distance_max = j["neighbor_distance_max"].get<double>();
  }
  if (j.contains("auto_bandwidth")) {
    AutoBandwidthReport ab;
    const auto& a = j["auto_bandwidth"];
    ab.h_pilot = a.at("h_pilot").get<double>();
    ab.v1 = a.at("v1").get<double>();
    ab.v2 = a.at("v2").get<double>();
    ab.h_star_v1 = a.at("h_star_v1").get<double>();
    ab.h_star_v2 = a.at("h_star_v2").get<double>();
    rep.auto_bandwidth = ab;
  }
  return rep;
}

}  // namespace rdcluster
