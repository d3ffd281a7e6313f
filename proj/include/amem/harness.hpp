#ifndef AMEM_HARNESS_HPP
#define AMEM_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "amem/config.hpp"
#include "amem/dual_solver.hpp"
#include "amem/measure.hpp"
#include "amem/observation.hpp"
#include "amem/operator.hpp"
#include "amem/prior.hpp"

namespace amem {

enum class TruthKind { constant, ramp, two_bump };

/// Truth density g0 against P_X.
///   constant(c)
///   ramp(value at lower end, value at upper end)
///   two_bump(base, amp1, center1, width1, amp2, center2, width2)
struct TruthDensity {
  TruthKind kind = TruthKind::constant;
  std::vector<double> params{1.0};
  double lower = 0.0;
  double upper = 1.0;

  double operator()(double x) const;
};

/// Settings that only matter for parametric operators.
struct ParametricSettings {
  std::string family = "polynomial_drift";
  double t_obs = 0.5;
  double t_lower = 0.0;
  double t_upper = 1.0;
  KernelKind kernel = KernelKind::gaussian;
  /// "iid" or "stratified" (one uniform draw per equal-width cell).
  std::string design_sampling = "iid";
  int design_size = 1000;
  /// Bandwidth used outside bandwidth sweeps.
  double bandwidth = 0.1;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  ReferenceMeasure prior = ReferenceMeasure::uniform(0.0, 1.0);
  OperatorSpec op = OperatorSpec::power_moments(1);
  ParametricSettings parametric;
  TruthDensity truth;
  double px_lower = 0.0;
  double px_upper = 1.0;
  std::vector<int> n_grid{1000};
  std::vector<double> bandwidth_grid;
  std::vector<int> m_grid;
  int replications = 1;
  double eta = 0.0;
  /// Added to y_obs after the noise; used to build unreachable observations.
  std::vector<double> observation_offset;
  int quadrature_nodes = 256;
  int truth_quadrature_panels = 256;
  int eval_sample = 10000;
  SolveOptions solve;
  bool allow_non_a2 = false;
  int threads = 1;

  static ExperimentConfig from_file(const ConfigFile& file);
  /// Checks grids, that the truth g0 stays inside the support hull, and the
  /// operator (finite values, full-rank Gram matrix). Throws ConfigError.
  void validate() const;
};

/// One replication's problem, built from counter-based streams keyed by
/// (seed, purpose, rep_index).
struct ProblemInstance {
  std::vector<double> atoms;
  Eigen::MatrixXd phi;  ///< k x n, column i = Phi_m(X_i)
  Eigen::VectorXd y_clean;
  Observation observation;
  /// Population dual optimum on the exact operator.
  DualSolution oracle;
};

/// Draws the noise vector: uniform direction, radius uniform on [0, eta].
Eigen::VectorXd draw_noise(std::uint64_t seed, std::uint64_t rep_index, int k, double eta);

/// y = int Phi g0 dP_X by composite Gauss-Legendre quadrature.
Eigen::VectorXd clean_moment(const ExperimentConfig& cfg);

std::vector<double> sample_px(const ExperimentConfig& cfg, std::string_view tag, std::uint64_t index, int count);

/// Samples design points T_1..T_m on [t_lower, t_upper].
std::vector<double> sample_design(const ExperimentConfig& cfg, std::uint64_t rep_index, int m);

/// Observation and oracle for replication `rep_index`, shared by every n.
struct ReplicationSetup {
  Eigen::VectorXd y_clean;
  Observation observation;
  DualSolution oracle;
};
ReplicationSetup setup_replication(const ExperimentConfig& cfg, std::uint64_t rep_index);

/// Full problem with the exact operator on n atoms.
ProblemInstance generate_problem(const ExperimentConfig& cfg, std::uint64_t rep_index, int n);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Least squares on (log x, log y).
SlopeFit fit_slope(const std::vector<std::pair<double, double>>& points);

/// One CSV row.
struct RunRecord {
  std::string study;
  int n = 0;
  double m_or_bandwidth = 0.0;
  int rep = 0;
  std::uint64_t seed = 0;
  double tv_error = 0.0;
  double op_l2_error = 0.0;
  double residual = 0.0;
  double entropy = 0.0;
  bool feasible = false;
  std::string status;
  int iters = 0;
  double grad_norm = 0.0;
  /// Not written to CSV: ||v_hat - v*||, and the TV error against g0 itself.
  double v_error = 0.0;
  double truth_tv_error = 0.0;
};

void write_records_csv(std::ostream& os, const std::vector<RunRecord>& records);

struct RateReport {
  std::string study;
  /// n values, or the median measured operator error per bandwidth.
  std::vector<double> grid;
  /// Sweep parameter per grid point (n or bandwidth).
  std::vector<double> parameter;
  std::vector<std::vector<double>> errors;
  std::vector<double> medians;
  SlopeFit fit;
  /// Median ||v_hat - v*|| per grid point.
  std::vector<double> v_error_medians;
  int exclusions = 0;
  int attempted = 0;
  double oracle_refinement_gap = 0.0;
  std::vector<RunRecord> records;

  bool exclusion_budget_exceeded() const { return attempted > 0 && exclusions * 20 > attempted; }
  void write_json(std::ostream& os) const;
};

/// TV error vs n for the exact operator.
RateReport rate_study_n(const ExperimentConfig& cfg);

/// TV error vs measured operator error across the bandwidth grid, with the
/// population (quadrature) problem standing in for n = infinity.
RateReport rate_study_m(const ExperimentConfig& cfg);

struct FeasibilityCell {
  int m = 0;
  int n = 0;
  int feasible = 0;
  int indeterminate = 0;
  int replications = 0;

  double frequency() const { return replications ? static_cast<double>(feasible) / replications : 0.0; }
};

struct FeasibilityReport {
  std::vector<FeasibilityCell> cells;
  std::vector<RunRecord> records;

  void write_json(std::ostream& os) const;
};

FeasibilityReport feasibility_study(const ExperimentConfig& cfg);

struct DeconvReport {
  RateReport rates;
  std::optional<DiscreteMeasure> estimate;
  std::optional<DiscreteMeasure> truth;
  std::string status;
  double tv_error = 0.0;
  double truth_tv_error = 0.0;
  double residual = 0.0;

  void write_json(std::ostream& os) const;
};

/// Reconstructs g0 from blurred moments for every n and replication; the
/// estimate and truth at the largest n of replication 0 are kept.
DeconvReport demo_deconv(const ExperimentConfig& cfg);

}  // namespace amem

#endif  // AMEM_HARNESS_HPP
