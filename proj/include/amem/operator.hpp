#ifndef AMEM_OPERATOR_HPP
#define AMEM_OPERATOR_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "amem/measure.hpp"
#include "amem/prior.hpp"

namespace amem {

/// Raised on invalid operator or design configuration (e.g. f_T(t) <= 0).
class DesignError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class OperatorKind { power_moments, trig_moments, convolution, parametric };

std::string_view to_string(OperatorKind kind);

enum class PsfShape { gaussian, box };

/// p(u, x): normalized point-spread profile of offset u observed at x. The
/// width may drift linearly with the observation point.
struct PointSpread {
  PsfShape shape = PsfShape::gaussian;
  double width = 0.05;
  double width_slope = 0.0;

  double operator()(double offset, double at) const;
};

/// Phi(x; t) in R^k.
using ParametricMap = std::function<Eigen::VectorXd(double x, double t)>;

/// Exact moment operator Phi: X -> R^k (or X x T -> R^k for the parametric
/// kind). Immutable after construction.
class OperatorSpec {
 public:
  static OperatorSpec power_moments(int degree);
  static OperatorSpec trig_moments(int count);
  static OperatorSpec convolution(std::vector<double> points, PointSpread psf);
  static OperatorSpec parametric(ParametricMap map, int output_dim, std::string name);

  /// Named parametric families:
  ///   "product"          Phi(x;t) = x t                       (k = 1)
  ///   "polynomial_drift" Phi^j(x;t) = x^j (1 + t^2 x), j < k
  static OperatorSpec parametric_family(std::string_view name, int output_dim);

  OperatorKind kind() const { return kind_; }
  int output_dim() const { return output_dim_; }
  bool is_parametric() const { return kind_ == OperatorKind::parametric; }
  const std::string& name() const { return name_; }

  /// Phi(x) or Phi(x; t); t is required iff the kind is parametric.
  Eigen::VectorXd eval(double x, std::optional<double> t = std::nullopt) const;

  /// Phi(., t) as a plain moment map (t ignored for non-parametric kinds).
  MomentMap bind(std::optional<double> t = std::nullopt) const;

  /// Evaluates at every point into a k x N matrix.
  Eigen::MatrixXd eval_columns(std::span<const double> xs, std::optional<double> t = std::nullopt) const;

 private:
  OperatorSpec(OperatorKind kind, int output_dim, std::string name, ParametricMap map);

  OperatorKind kind_;
  int output_dim_;
  std::string name_;
  ParametricMap map_;
};

Eigen::VectorXd eval_exact(const OperatorSpec& op, double x, std::optional<double> t = std::nullopt);

/// Smallest eigenvalue of the Gram matrix (1/N) sum Phi(x_i) Phi(x_i)^T.
double gram_min_eigenvalue(const Eigen::MatrixXd& columns);

/// Grid scan for finite values over [lower, upper] and a Gram-rank check on
/// `sample`. Throws DesignError on failure.
void validate_operator(const OperatorSpec& op, double lower, double upper, std::span<const double> sample,
                       std::optional<double> t = std::nullopt, double min_eigenvalue = 1e-10);

enum class KernelKind { gaussian, epanechnikov };

std::string_view to_string(KernelKind kind);
KernelKind parse_kernel(std::string_view name);

/// K(u) with unit bandwidth.
double kernel_value(KernelKind kind, double u);
/// K_h(u) = K(u/h)/h.
double kernel_scaled(KernelKind kind, double u, double h);
/// Numerical integral of K over its support.
double kernel_mass(KernelKind kind);

using Density = std::function<double(double)>;

/// Uniform density on [lower, upper] (zero outside).
Density uniform_density(double lower, double upper);

/// m x n table of Phi(X_i, T_j), plus the inputs it was built from. Persisted
/// as a flat binary file whose header records m, n, k and a CRC-32 of the
/// payload.
struct OperatorTable {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<double> design;
  std::vector<double> atoms;
  /// Row j holds Phi(X_., T_j) flattened column-major as a k x n block.
  Eigen::MatrixXd values;

  void save(std::ostream& os) const;
  static OperatorTable load(std::istream& is);
  std::uint32_t checksum() const;
};

/// Kernel-smoothed approximation
///   Phi_m(x, t) = 1/(f_T(t) m) sum_j K_h(t - T_j) Phi(x, T_j).
class ApproxOperator {
 public:
  /// The h -> 0 limit: evaluation delegates directly to the base operator.
  static ApproxOperator identity(OperatorSpec base);

  const OperatorSpec& base() const { return base_; }
  const std::vector<double>& design() const { return design_; }
  std::size_t m() const { return design_.size(); }
  KernelKind kernel() const { return kernel_; }
  double bandwidth() const { return bandwidth_; }
  bool is_identity() const { return identity_; }
  int output_dim() const { return base_.output_dim(); }

  bool has_table() const { return table_.has_value(); }
  const OperatorTable& table() const;
  void attach_table(OperatorTable table);

  /// K_h(t - T_j) / (f_T(t) m) for every design point.
  Eigen::VectorXd kernel_weights(double t) const;

  Eigen::VectorXd eval(double x, double t) const;
  /// Phi_m(., t) at the table atoms, as a k x n matrix (one contraction).
  Eigen::MatrixXd eval_table(double t) const;
  /// Phi_m(., t) at arbitrary points, as a k x N matrix.
  Eigen::MatrixXd eval_columns(std::span<const double> xs, double t) const;
  MomentMap bind(double t) const;

 private:
  friend ApproxOperator build_kernel_approx(OperatorSpec, std::vector<double>, KernelKind, double, Density,
                                            std::optional<std::vector<double>>);
  explicit ApproxOperator(OperatorSpec base);

  OperatorSpec base_;
  std::vector<double> design_;
  KernelKind kernel_ = KernelKind::gaussian;
  double bandwidth_ = 0.0;
  Density density_;
  bool identity_ = false;
  std::optional<OperatorTable> table_;
  std::unordered_map<std::uint64_t, std::size_t> atom_index_;
};

/// Builds Phi_m; when atoms are supplied, the m x n table of Phi(X_i, T_j) is
/// filled so later queries only cost m kernel evaluations and a contraction.
ApproxOperator build_kernel_approx(OperatorSpec op, std::vector<double> design, KernelKind kernel, double h,
                                   Density f_t, std::optional<std::vector<double>> atoms = std::nullopt);

Eigen::VectorXd eval_approx(const ApproxOperator& approx, double x, double t);

/// Average over t_grid of sqrt(mean_i ||Phi_m(X_i, t) - Phi(X_i, t)||^2).
double l2_distance(const OperatorSpec& op, const ApproxOperator& approx, std::span<const double> px_sample,
                   std::span<const double> t_grid);

}  // namespace amem

#endif  // AMEM_OPERATOR_HPP
