#ifndef AMEM_MEASURE_HPP
#define AMEM_MEASURE_HPP

#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "amem/prior.hpp"

namespace amem {

/// x -> Phi(x) in R^k. Points of the sample space are scalars.
using MomentMap = std::function<Eigen::VectorXd(double)>;

class AtomMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// (1/n) * sum_i z_i delta_{X_i}. Weights are densities against the empirical
/// measure of the atoms, so a weight equal to one everywhere is P_n itself.
class DiscreteMeasure {
 public:
  DiscreteMeasure(std::vector<double> atoms, std::vector<double> weights);

  std::size_t size() const { return atoms_.size(); }
  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }

  void write_csv(std::ostream& os) const;
  static DiscreteMeasure read_csv(std::istream& is);

 private:
  std::vector<double> atoms_;
  std::vector<double> weights_;
};

/// Full variation |mu1 - mu2|(X) = (1/n) sum |z_i - z'_i| for measures on the
/// same atoms (no factor 1/2).
double tv_distance(const DiscreteMeasure& mu1, const DiscreteMeasure& mu2);

/// (1/n) sum z_i Phi(X_i).
Eigen::VectorXd moment(const DiscreteMeasure& mu, const MomentMap& phi);

/// (1/n) sum Lambda*(z_i); +inf as soon as one weight leaves the hull.
ExtendedReal entropy(const DiscreteMeasure& mu, const ReferenceMeasure& prior);

}  // namespace amem

#endif  // AMEM_MEASURE_HPP
