#ifndef AMEM_QUADRATURE_HPP
#define AMEM_QUADRATURE_HPP

#include <vector>

namespace amem {

/// Nodes and weights of a quadrature rule.
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

/// Gauss-Legendre rule with `count` nodes on [lower, upper]; weights sum to
/// upper - lower.
Quadrature gauss_legendre(int count, double lower, double upper);

/// Gauss-Legendre rule for the uniform probability on [lower, upper]; weights
/// sum to one.
Quadrature uniform_quadrature(int count, double lower, double upper);

/// Composite Gauss-Legendre rule: `panels` equal panels of `per_panel` nodes.
Quadrature composite_gauss_legendre(int panels, int per_panel, double lower, double upper);

}  // namespace amem

#endif  // AMEM_QUADRATURE_HPP
