#pragma once

#include <stdexcept>
#include <string>

namespace rdcluster {

// Error taxonomy shared by the whole library. The CLI maps categories to
// exit codes, so keep the split between input errors (bad data / config)
// and estimation errors (valid data that fails a precondition).
enum class errc {
  empty_input,
  non_finite_value,
  schema_error,
  invalid_config,
  degenerate_kernel,
  insufficient_support,
  degenerate_design,
  shape_mismatch,
  negative_m,
  zero_curvature,
  insufficient_neighbors,
  too_few_clusters,
  no_eligible_neighbor,
  incomplete_plan,
  zero_weights,
  all_replications_failed,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::empty_input: return "EmptyInput";
    case errc::non_finite_value: return "NonFiniteValue";
    case errc::schema_error: return "SchemaError";
    case errc::invalid_config: return "InvalidConfig";
    case errc::degenerate_kernel: return "DegenerateKernel";
    case errc::insufficient_support: return "InsufficientSupport";
    case errc::degenerate_design: return "DegenerateDesign";
    case errc::shape_mismatch: return "ShapeMismatch";
    case errc::negative_m: return "NegativeM";
    case errc::zero_curvature: return "ZeroCurvature";
    case errc::insufficient_neighbors: return "InsufficientNeighbors";
    case errc::too_few_clusters: return "TooFewClusters";
    case errc::no_eligible_neighbor: return "NoEligibleNeighbor";
    case errc::incomplete_plan: return "IncompletePlan";
    case errc::zero_weights: return "ZeroWeights";
    case errc::all_replications_failed: return "AllReplicationsFailed";
  }
  return "Unknown";
}

class rd_error : public std::runtime_error {
public:
  rd_error(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  errc code() const noexcept { return code_; }

  // True for errors raised by estimators on valid but unusable inputs
  // (too little data in the window, degenerate designs, ...). These are
  // the failures a Monte Carlo runner records instead of aborting.
  bool is_estimation_error() const noexcept {
    switch (code_) {
      case errc::insufficient_support:
      case errc::degenerate_design:
      case errc::insufficient_neighbors:
      case errc::too_few_clusters:
      case errc::no_eligible_neighbor:
      case errc::zero_weights:
        return true;
      default:
        return false;
    }
  }

private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) {
  throw rd_error(code, what);
}

}  // namespace rdcluster
