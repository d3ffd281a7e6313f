#include "amem/reconstruct.hpp"

#include <algorithm>
#include <ostream>

#include <nlohmann/json.hpp>

namespace amem {

DiscreteMeasure amem_estimate(const Eigen::VectorXd& v_hat, std::vector<double> atoms, const MomentMap& op,
                              const ReferenceMeasure& prior) {
  std::vector<double> z(atoms.size());
  for (std::size_t i = 0; i < atoms.size(); ++i) z[i] = prior.log_laplace_deriv(v_hat.dot(op(atoms[i])));
  return {std::move(atoms), std::move(z)};
}

DiscreteMeasure amem_estimate(const Eigen::VectorXd& v_hat, std::vector<double> atoms, const Eigen::MatrixXd& phi,
                              const ReferenceMeasure& prior) {
  if (phi.cols() != static_cast<Eigen::Index>(atoms.size()) || phi.rows() != v_hat.size())
    throw std::invalid_argument("amem_estimate: phi must be k x n for n atoms");
  const Eigen::VectorXd s = phi.transpose() * v_hat;
  std::vector<double> z(atoms.size());
  for (std::size_t i = 0; i < atoms.size(); ++i) z[i] = prior.log_laplace_deriv(s[static_cast<Eigen::Index>(i)]);
  return {std::move(atoms), std::move(z)};
}

double residual(const Eigen::VectorXd& achieved_moment, const Observation& obs) {
  return std::max(0.0, (achieved_moment - obs.y_obs).norm() - obs.eta);
}

double residual(const DiscreteMeasure& mu, const MomentMap& op, const Observation& obs) {
  return residual(moment(mu, op), obs);
}

EstimateSummary summarize(const DualSolution& sol, const DiscreteMeasure& estimate, const Eigen::MatrixXd& phi,
                          const Observation& obs, const ReferenceMeasure& prior) {
  EstimateSummary s;
  s.status = std::string(to_string(sol.status));
  s.iterations = sol.iterations;
  s.objective = sol.objective_value;
  s.grad_norm = sol.grad_norm;
  s.v_hat = sol.v_hat;
  const Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(estimate.weights().data(),
                                                              static_cast<Eigen::Index>(estimate.size()));
  s.achieved_moment = phi * z / static_cast<double>(estimate.size());
  s.residual = residual(s.achieved_moment, obs);
  s.entropy = entropy(estimate, prior);
  return s;
}

void EstimateSummary::write_json(std::ostream& os) const {
  auto to_vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::ordered_json j;
  j["status"] = status;
  j["iterations"] = iterations;
  j["objective"] = objective;
  j["grad_norm"] = grad_norm;
  j["residual"] = residual;
  if (entropy.is_finite())
    j["entropy"] = entropy.value();
  else
    j["entropy"] = "inf";
  j["v_hat"] = to_vec(v_hat);
  j["achieved_moment"] = to_vec(achieved_moment);
  os << j.dump(2) << '\n';
}

}  // namespace amem
