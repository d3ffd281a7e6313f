#ifndef AMEM_PRIOR_HPP
#define AMEM_PRIOR_HPP

#include <compare>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace amem {

/// Raised when an argument falls outside the domain of a log-Laplace
/// transform (or of one of its derivatives).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when the supremum defining a Cramer transform cannot be bracketed,
/// i.e. the argument sits at or beyond the boundary of the support hull.
class ConjugateDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A real number or +infinity. The infinite value is a tag, not an IEEE
/// overflow, and it absorbs under addition and scaling by positive reals.
class ExtendedReal {
 public:
  constexpr ExtendedReal() = default;
  constexpr ExtendedReal(double value) : value_(value) {}  // NOLINT(implicit)

  static constexpr ExtendedReal infinity() {
    ExtendedReal r;
    r.infinite_ = true;
    return r;
  }

  constexpr bool is_infinite() const { return infinite_; }
  constexpr bool is_finite() const { return !infinite_; }

  /// Finite value; throws when infinite.
  double value() const {
    if (infinite_) throw std::logic_error("ExtendedReal: value() of +inf");
    return value_;
  }

  /// IEEE view, mapping the tag to +inf.
  constexpr double to_double() const {
    return infinite_ ? std::numeric_limits<double>::infinity() : value_;
  }

  friend constexpr ExtendedReal operator+(ExtendedReal a, ExtendedReal b) {
    if (a.infinite_ || b.infinite_) return infinity();
    return ExtendedReal(a.value_ + b.value_);
  }
  ExtendedReal& operator+=(ExtendedReal other) { return *this = *this + other; }

  /// Scaling by a nonnegative factor; 0 * (+inf) is taken as +inf.
  friend ExtendedReal operator*(double s, ExtendedReal a) {
    if (s < 0) throw std::domain_error("ExtendedReal: negative scale");
    if (a.infinite_) return infinity();
    return ExtendedReal(s * a.value_);
  }

  friend constexpr bool operator==(ExtendedReal a, ExtendedReal b) {
    if (a.infinite_ || b.infinite_) return a.infinite_ == b.infinite_;
    return a.value_ == b.value_;
  }
  friend constexpr std::partial_ordering operator<=>(ExtendedReal a, ExtendedReal b) {
    if (a.infinite_ && b.infinite_) return std::partial_ordering::equivalent;
    if (a.infinite_) return std::partial_ordering::greater;
    if (b.infinite_) return std::partial_ordering::less;
    return a.value_ <=> b.value_;
  }

 private:
  double value_ = 0.0;
  bool infinite_ = false;
};

/// Closed or half-open interval on the extended real line. Infinite ends are
/// always open.
struct Interval {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  bool lower_closed = false;
  bool upper_closed = false;

  bool bounded() const;
  bool contains(double x) const;
  bool interior(double x) const { return x > lower && x < upper; }
  bool in_closure(double x) const { return x >= lower && x <= upper; }
};

enum class PriorFamily { gaussian, poisson, exponential, uniform, two_point };

std::string_view to_string(PriorFamily family);
PriorFamily parse_prior_family(std::string_view name);

/// Reference measure on the weight values. Parameters by family:
///   gaussian(mean, stddev), poisson(rate), exponential(rate),
///   uniform(lower, upper), two_point(atom c, probability p of c).
class ReferenceMeasure {
 public:
  static ReferenceMeasure gaussian(double mean, double stddev);
  static ReferenceMeasure poisson(double rate);
  static ReferenceMeasure exponential(double rate);
  static ReferenceMeasure uniform(double lower, double upper);
  static ReferenceMeasure two_point(double atom, double probability);

  /// Builds from a family name and parameter list, as read from a config file.
  static ReferenceMeasure from_spec(std::string_view family, const std::vector<double>& params);

  PriorFamily family() const { return family_; }
  const std::vector<double>& params() const { return params_; }

  double mean() const;
  double variance() const;
  Interval support_hull() const;
  Interval lambda_domain() const;
  /// dom = R with bounded first and second derivatives.
  bool a2_compliant() const;

  /// True iff s lies in dom and, for a half-line domain, at least `margin`
  /// away from its finite end.
  bool in_domain(double s, double margin = 0.0) const;

  double log_laplace(double s) const;
  double log_laplace_deriv(double s) const;
  double log_laplace_second(double s) const;

  /// Cramer transform (convex conjugate of the log-Laplace transform).
  ExtendedReal cramer(double x) const;

  std::string describe() const;

 private:
  ReferenceMeasure(PriorFamily family, std::vector<double> params);
  void require_domain(double s) const;

  PriorFamily family_;
  std::vector<double> params_;
};

/// sup over u of u*x - log_laplace(u), found as the root of x - Lambda'(u)
/// with a safeguarded Newton-bisection search. The bracket is expanded while
/// the derivative keeps one sign on it.
double numeric_conjugate(const ReferenceMeasure& prior, double x, Interval bracket);

/// Free-function forms of the member accessors.
inline double log_laplace(const ReferenceMeasure& p, double s) { return p.log_laplace(s); }
inline double log_laplace_deriv(const ReferenceMeasure& p, double s) { return p.log_laplace_deriv(s); }
inline double log_laplace_second(const ReferenceMeasure& p, double s) { return p.log_laplace_second(s); }
inline ExtendedReal cramer(const ReferenceMeasure& p, double x) { return p.cramer(x); }
inline Interval support_hull(const ReferenceMeasure& p) { return p.support_hull(); }

}  // namespace amem

#endif  // AMEM_PRIOR_HPP
