#ifndef AMEM_DUAL_SOLVER_HPP
#define AMEM_DUAL_SOLVER_HPP

#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "amem/measure.hpp"
#include "amem/observation.hpp"
#include "amem/prior.hpp"
#include "amem/quadrature.hpp"

namespace amem {

/// Dual of the entropy problem,
///   H(v) = sum_i w_i Lambda(<v, Phi_i>) - <v, y_obs> + eta ||v||,
/// with column i of `phi` equal to Phi_m(X_i). The empirical problem uses
/// w_i = 1/n; the population analogue uses quadrature weights.
class DualProblem {
 public:
  DualProblem(Eigen::MatrixXd phi, Eigen::VectorXd y_obs, double eta, ReferenceMeasure prior,
              Eigen::VectorXd weights = {});
  DualProblem(Eigen::MatrixXd phi, const Observation& obs, ReferenceMeasure prior, Eigen::VectorXd weights = {})
      : DualProblem(std::move(phi), obs.y_obs, obs.eta, std::move(prior), std::move(weights)) {}

  const Eigen::MatrixXd& phi() const { return phi_; }
  const Eigen::VectorXd& y_obs() const { return y_obs_; }
  double eta() const { return eta_; }
  const ReferenceMeasure& prior() const { return prior_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  Eigen::Index k() const { return phi_.rows(); }
  Eigen::Index n() const { return phi_.cols(); }

  /// sum_i w_i Phi_i.
  const Eigen::VectorXd& mean_moment() const { return mean_moment_; }
  /// sum_i w_i Phi_i Phi_i^T.
  const Eigen::MatrixXd& gram() const { return gram_; }
  /// False when the Gram matrix is numerically singular.
  bool full_rank() const { return full_rank_; }

 private:
  Eigen::MatrixXd phi_;
  Eigen::VectorXd y_obs_;
  double eta_;
  ReferenceMeasure prior_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd mean_moment_;
  Eigen::MatrixXd gram_;
  bool full_rank_ = true;
};

enum class SolveStatus { converged, at_origin, max_iters, infeasible_direction };

std::string_view to_string(SolveStatus status);

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
  double newton_decrement = 0.0;
};

struct SolveOptions {
  /// Stop once ||grad|| <= tolerance * (1 + ||y_obs||).
  double tolerance = 1e-9;
  int max_iters = 200;
  std::optional<Eigen::VectorXd> initial;
};

struct DualSolution {
  Eigen::VectorXd v_hat;
  double objective_value = 0.0;
  double grad_norm = 0.0;
  SolveStatus status = SolveStatus::max_iters;
  int iterations = 0;
  std::vector<double> newton_decrements;
  std::vector<IterationRecord> trace;
  /// Set when the problem's Gram matrix is rank deficient.
  bool rank_deficient = false;

  bool ok() const { return status == SolveStatus::converged || status == SolveStatus::at_origin; }
  void write_trace_csv(std::ostream& os) const;
};

double objective(const DualProblem& p, const Eigen::VectorXd& v);
/// Throws std::invalid_argument at v = 0 when eta > 0 (nonsmooth point).
Eigen::VectorXd gradient(const DualProblem& p, const Eigen::VectorXd& v);
/// M_1 + eta M_2 with M_1 = sum_i w_i Lambda''(s_i) Phi_i Phi_i^T and
/// M_2 = I/||v|| - v v^T / ||v||^3.
Eigen::MatrixXd hessian(const DualProblem& p, const Eigen::VectorXd& v);

/// 0 is in the subdifferential of H at the origin:
/// ||Lambda'(0) sum_i w_i Phi_i - y_obs|| <= eta.
bool check_zero_optimality(const DualProblem& p);

/// Damped Newton with backtracking on the smooth region v != 0.
DualSolution solve(const DualProblem& p, const SolveOptions& opts = {});

/// Same solver with the sample average replaced by a quadrature rule on the
/// sample space (weights positive, summing to one).
DualSolution population_solve(const MomentMap& phi, const Quadrature& px_quadrature, const Observation& obs,
                              const ReferenceMeasure& prior, const SolveOptions& opts = {});

struct FeasibilityResult {
  bool feasible = false;
  /// Best value found for min_z ||sum_i w_i z_i Phi_i - y_obs||^2 over the hull box.
  double min_distance_sq = 0.0;
  /// Lower bound from the dual certificate.
  double lower_bound = 0.0;
  /// The projected-gradient search stalled before a decision; reported as infeasible.
  bool indeterminate = false;
  int iterations = 0;
};

struct FeasibilityOptions {
  double tolerance = 1e-10;
  int max_iters = 50000;
};

/// Decides whether K_Y meets the convex hull of reachable moments.
FeasibilityResult check_feasibility(const DualProblem& p, const FeasibilityOptions& opts = {});
inline bool feasibility(const DualProblem& p) { return check_feasibility(p).feasible; }

}  // namespace amem

#endif  // AMEM_DUAL_SOLVER_HPP
