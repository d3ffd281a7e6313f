#ifndef AMEM_OBSERVATION_HPP
#define AMEM_OBSERVATION_HPP

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

namespace amem {

/// Noisy moment y_obs with noise level eta; the admissible set is the closed
/// ball K_Y = {y : ||y - y_obs|| <= eta}.
struct Observation {
  Eigen::VectorXd y_obs;
  double eta = 0.0;

  Observation() = default;
  Observation(Eigen::VectorXd y, double noise_level) : y_obs(std::move(y)), eta(noise_level) {
    if (!(eta >= 0) || !std::isfinite(eta)) throw std::invalid_argument("Observation: eta must be finite and >= 0");
    if (y_obs.size() == 0 || !y_obs.allFinite()) throw std::invalid_argument("Observation: y_obs must be finite");
  }
};

}  // namespace amem

#endif  // AMEM_OBSERVATION_HPP
