#include "amem/measure.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace amem {

DiscreteMeasure::DiscreteMeasure(std::vector<double> atoms, std::vector<double> weights)
    : atoms_(std::move(atoms)), weights_(std::move(weights)) {
  if (atoms_.empty()) throw std::invalid_argument("DiscreteMeasure: at least one atom required");
  if (atoms_.size() != weights_.size())
    throw std::invalid_argument(fmt::format("DiscreteMeasure: {} atoms but {} weights", atoms_.size(),
                                            weights_.size()));
  for (double w : weights_)
    if (!std::isfinite(w)) throw std::invalid_argument("DiscreteMeasure: non-finite weight");
}

void DiscreteMeasure::write_csv(std::ostream& os) const {
  os << "x,weight\n";
  for (std::size_t i = 0; i < atoms_.size(); ++i) fmt::print(os, "{:.17g},{:.17g}\n", atoms_[i], weights_[i]);
}

DiscreteMeasure DiscreteMeasure::read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("measure CSV: missing header");
  std::vector<double> atoms, weights;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("measure CSV: malformed row '" + line + "'");
    atoms.push_back(std::stod(line.substr(0, comma)));
    weights.push_back(std::stod(line.substr(comma + 1)));
  }
  return {std::move(atoms), std::move(weights)};
}

double tv_distance(const DiscreteMeasure& mu1, const DiscreteMeasure& mu2) {
  if (mu1.atoms() != mu2.atoms()) throw AtomMismatch("tv_distance: measures are not on the same atoms");
  const auto& z1 = mu1.weights();
  const auto& z2 = mu2.weights();
  double sum = 0.0;
  for (std::size_t i = 0; i < z1.size(); ++i) sum += std::abs(z1[i] - z2[i]);
  return sum / static_cast<double>(z1.size());
}

Eigen::VectorXd moment(const DiscreteMeasure& mu, const MomentMap& phi) {
  Eigen::VectorXd acc;
  const auto& x = mu.atoms();
  const auto& z = mu.weights();
  for (std::size_t i = 0; i < x.size(); ++i) {
    Eigen::VectorXd v = phi(x[i]);
    if (i == 0) acc = Eigen::VectorXd::Zero(v.size());
    acc += z[i] * v;
  }
  return acc / static_cast<double>(x.size());
}

ExtendedReal entropy(const DiscreteMeasure& mu, const ReferenceMeasure& prior) {
  ExtendedReal total = 0.0;
  for (double z : mu.weights()) {
    total += prior.cramer(z);
    if (total.is_infinite()) return total;
  }
  return (1.0 / static_cast<double>(mu.size())) * total;
}

}  // namespace amem
