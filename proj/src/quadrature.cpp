#include "amem/quadrature.hpp"

#include <memory>
#include <stdexcept>

#include <gsl/gsl_integration.h>

namespace amem {

Quadrature gauss_legendre(int count, double lower, double upper) {
  if (count < 1) throw std::invalid_argument("gauss_legendre: count must be positive");
  if (!(upper > lower)) throw std::invalid_argument("gauss_legendre: empty interval");
  std::unique_ptr<gsl_integration_glfixed_table, decltype(&gsl_integration_glfixed_table_free)> table(
      gsl_integration_glfixed_table_alloc(static_cast<std::size_t>(count)), &gsl_integration_glfixed_table_free);
  if (!table) throw std::runtime_error("gauss_legendre: table allocation failed");
  Quadrature q;
  q.nodes.resize(count);
  q.weights.resize(count);
  for (int i = 0; i < count; ++i)
    gsl_integration_glfixed_point(lower, upper, static_cast<std::size_t>(i), &q.nodes[i], &q.weights[i],
                                  table.get());
  return q;
}

Quadrature uniform_quadrature(int count, double lower, double upper) {
  Quadrature q = gauss_legendre(count, lower, upper);
  const double scale = 1.0 / (upper - lower);
  for (double& w : q.weights) w *= scale;
  return q;
}

Quadrature composite_gauss_legendre(int panels, int per_panel, double lower, double upper) {
  if (panels < 1) throw std::invalid_argument("composite_gauss_legendre: panels must be positive");
  Quadrature out;
  const double width = (upper - lower) / panels;
  for (int p = 0; p < panels; ++p) {
    const double a = lower + p * width;
    Quadrature q = gauss_legendre(per_panel, a, p + 1 == panels ? upper : a + width);
    out.nodes.insert(out.nodes.end(), q.nodes.begin(), q.nodes.end());
    out.weights.insert(out.weights.end(), q.weights.begin(), q.weights.end());
  }
  return out;
}

}  // namespace amem
