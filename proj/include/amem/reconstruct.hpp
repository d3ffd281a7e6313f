#ifndef AMEM_RECONSTRUCT_HPP
#define AMEM_RECONSTRUCT_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "amem/dual_solver.hpp"
#include "amem/measure.hpp"
#include "amem/observation.hpp"
#include "amem/prior.hpp"

namespace amem {

/// Weights z_i = Lambda'(<v_hat, Phi_m(X_i)>) on the given atoms.
DiscreteMeasure amem_estimate(const Eigen::VectorXd& v_hat, std::vector<double> atoms, const MomentMap& op,
                              const ReferenceMeasure& prior);

/// Same, with Phi_m(X_i) already evaluated as column i of `phi`.
DiscreteMeasure amem_estimate(const Eigen::VectorXd& v_hat, std::vector<double> atoms, const Eigen::MatrixXd& phi,
                              const ReferenceMeasure& prior);

/// max(0, ||moment(mu) - y_obs|| - eta); zero iff the achieved moment is in K_Y.
double residual(const DiscreteMeasure& mu, const MomentMap& op, const Observation& obs);
double residual(const Eigen::VectorXd& achieved_moment, const Observation& obs);

struct EstimateSummary {
  std::string status;
  int iterations = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  double residual = 0.0;
  ExtendedReal entropy;
  Eigen::VectorXd v_hat;
  Eigen::VectorXd achieved_moment;

  void write_json(std::ostream& os) const;
};

EstimateSummary summarize(const DualSolution& sol, const DiscreteMeasure& estimate, const Eigen::MatrixXd& phi,
                          const Observation& obs, const ReferenceMeasure& prior);

}  // namespace amem

#endif  // AMEM_RECONSTRUCT_HPP
