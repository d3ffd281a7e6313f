#include "amem/prior.hpp"

#include <cmath>
#include <fmt/format.h>

namespace amem {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// log((e^u - 1) / u) and its first two derivatives; used by the uniform family
// after rescaling the argument by the support width.
double log_expm1_over(double u) {
  if (std::abs(u) < 1e-4) {
    const double u2 = u * u;
    return u / 2 + u2 / 24 - u2 * u2 / 2880 + u2 * u2 * u2 / 181440;
  }
  if (u > 0) return u + std::log(-std::expm1(-u)) - std::log(u);
  return std::log(-std::expm1(u)) - std::log(-u);
}

double log_expm1_over_d1(double u) {
  if (std::abs(u) < 1e-2) {
    const double u2 = u * u;
    return 0.5 + u / 12 - u * u2 / 720 + u * u2 * u2 / 30240 - u * u2 * u2 * u2 / 1209600;
  }
  return -1.0 / std::expm1(-u) - 1.0 / u;
}

double log_expm1_over_d2(double u) {
  if (std::abs(u) < 5e-2) {
    const double u2 = u * u;
    return 1.0 / 12 - u2 / 240 + u2 * u2 / 6048 - u2 * u2 * u2 / 172800;
  }
  const double sh = std::sinh(u / 2);
  return 1.0 / (u * u) - 1.0 / (4 * sh * sh);
}

double logistic(double r) {
  if (r >= 0) return 1.0 / (1.0 + std::exp(-r));
  const double e = std::exp(r);
  return e / (1.0 + e);
}

}  // namespace

bool Interval::bounded() const { return std::isfinite(lower) && std::isfinite(upper); }

bool Interval::contains(double x) const {
  const bool lo_ok = lower_closed ? x >= lower : x > lower;
  const bool hi_ok = upper_closed ? x <= upper : x < upper;
  return lo_ok && hi_ok;
}

std::string_view to_string(PriorFamily family) {
  switch (family) {
    case PriorFamily::gaussian: return "gaussian";
    case PriorFamily::poisson: return "poisson";
    case PriorFamily::exponential: return "exponential";
    case PriorFamily::uniform: return "uniform";
    case PriorFamily::two_point: return "two_point";
  }
  return "unknown";
}

PriorFamily parse_prior_family(std::string_view name) {
  if (name == "gaussian") return PriorFamily::gaussian;
  if (name == "poisson") return PriorFamily::poisson;
  if (name == "exponential") return PriorFamily::exponential;
  if (name == "uniform") return PriorFamily::uniform;
  if (name == "two_point") return PriorFamily::two_point;
  throw std::invalid_argument(fmt::format("unknown prior family '{}'", name));
}

ReferenceMeasure::ReferenceMeasure(PriorFamily family, std::vector<double> params)
    : family_(family), params_(std::move(params)) {}

ReferenceMeasure ReferenceMeasure::gaussian(double mean, double stddev) {
  if (!(stddev > 0) || !std::isfinite(mean) || !std::isfinite(stddev))
    throw std::invalid_argument("gaussian prior needs a finite mean and stddev > 0");
  return {PriorFamily::gaussian, {mean, stddev}};
}

ReferenceMeasure ReferenceMeasure::poisson(double rate) {
  if (!(rate > 0) || !std::isfinite(rate)) throw std::invalid_argument("poisson prior needs rate > 0");
  return {PriorFamily::poisson, {rate}};
}

ReferenceMeasure ReferenceMeasure::exponential(double rate) {
  if (!(rate > 0) || !std::isfinite(rate)) throw std::invalid_argument("exponential prior needs rate > 0");
  return {PriorFamily::exponential, {rate}};
}

ReferenceMeasure ReferenceMeasure::uniform(double lower, double upper) {
  if (!(upper > lower) || !std::isfinite(lower) || !std::isfinite(upper))
    throw std::invalid_argument("uniform prior needs finite lower < upper");
  return {PriorFamily::uniform, {lower, upper}};
}

ReferenceMeasure ReferenceMeasure::two_point(double atom, double probability) {
  if (!(atom > 0) || !std::isfinite(atom) || !(probability > 0 && probability < 1))
    throw std::invalid_argument("two_point prior needs atom > 0 and probability in (0,1)");
  return {PriorFamily::two_point, {atom, probability}};
}

ReferenceMeasure ReferenceMeasure::from_spec(std::string_view family, const std::vector<double>& p) {
  const PriorFamily f = parse_prior_family(family);
  auto need = [&](std::size_t count) {
    if (p.size() != count)
      throw std::invalid_argument(
          fmt::format("prior '{}' takes {} parameter(s), got {}", family, count, p.size()));
  };
  switch (f) {
    case PriorFamily::gaussian: need(2); return gaussian(p[0], p[1]);
    case PriorFamily::poisson: need(1); return poisson(p[0]);
    case PriorFamily::exponential: need(1); return exponential(p[0]);
    case PriorFamily::uniform: need(2); return uniform(p[0], p[1]);
    case PriorFamily::two_point: need(2); return two_point(p[0], p[1]);
  }
  throw std::invalid_argument("unreachable prior family");
}

double ReferenceMeasure::mean() const {
  switch (family_) {
    case PriorFamily::gaussian: return params_[0];
    case PriorFamily::poisson: return params_[0];
    case PriorFamily::exponential: return 1.0 / params_[0];
    case PriorFamily::uniform: return 0.5 * (params_[0] + params_[1]);
    case PriorFamily::two_point: return params_[0] * params_[1];
  }
  return 0.0;
}

double ReferenceMeasure::variance() const {
  switch (family_) {
    case PriorFamily::gaussian: return params_[1] * params_[1];
    case PriorFamily::poisson: return params_[0];
    case PriorFamily::exponential: return 1.0 / (params_[0] * params_[0]);
    case PriorFamily::uniform: {
      const double w = params_[1] - params_[0];
      return w * w / 12.0;
    }
    case PriorFamily::two_point:
      return params_[0] * params_[0] * params_[1] * (1.0 - params_[1]);
  }
  return 0.0;
}

Interval ReferenceMeasure::support_hull() const {
  switch (family_) {
    case PriorFamily::gaussian: return {};
    case PriorFamily::poisson:
    case PriorFamily::exponential: return {0.0, kInf, true, false};
    case PriorFamily::uniform: return {params_[0], params_[1], true, true};
    case PriorFamily::two_point: return {0.0, params_[0], true, true};
  }
  return {};
}

Interval ReferenceMeasure::lambda_domain() const {
  if (family_ == PriorFamily::exponential) return {-kInf, params_[0], false, false};
  return {};
}

bool ReferenceMeasure::a2_compliant() const {
  return family_ == PriorFamily::uniform || family_ == PriorFamily::two_point;
}

bool ReferenceMeasure::in_domain(double s, double margin) const {
  if (!std::isfinite(s)) return false;
  if (family_ == PriorFamily::exponential) return s < params_[0] - margin;
  return true;
}

void ReferenceMeasure::require_domain(double s) const {
  if (!in_domain(s))
    throw DomainError(fmt::format("argument {} outside the log-Laplace domain of {}", s, describe()));
}

double ReferenceMeasure::log_laplace(double s) const {
  require_domain(s);
  if (s == 0.0) return 0.0;
  switch (family_) {
    case PriorFamily::gaussian: {
      const double sd = params_[1];
      return params_[0] * s + 0.5 * sd * sd * s * s;
    }
    case PriorFamily::poisson: return params_[0] * std::expm1(s);
    case PriorFamily::exponential: return -std::log1p(-s / params_[0]);
    case PriorFamily::uniform: {
      const double a = params_[0];
      const double w = params_[1] - a;
      return a * s + log_expm1_over(w * s);
    }
    case PriorFamily::two_point: {
      const double r = params_[0] * s;
      const double p = params_[1];
      if (r > 0) return r + std::log(p + (1.0 - p) * std::exp(-r));
      return std::log1p(p * std::expm1(r));
    }
  }
  return 0.0;
}

double ReferenceMeasure::log_laplace_deriv(double s) const {
  require_domain(s);
  switch (family_) {
    case PriorFamily::gaussian: return params_[0] + params_[1] * params_[1] * s;
    case PriorFamily::poisson: return params_[0] * std::exp(s);
    case PriorFamily::exponential: return 1.0 / (params_[0] - s);
    case PriorFamily::uniform: {
      const double a = params_[0];
      const double w = params_[1] - a;
      return a + w * log_expm1_over_d1(w * s);
    }
    case PriorFamily::two_point: {
      const double c = params_[0];
      const double p = params_[1];
      return c * logistic(c * s + std::log(p / (1.0 - p)));
    }
  }
  return 0.0;
}

double ReferenceMeasure::log_laplace_second(double s) const {
  require_domain(s);
  switch (family_) {
    case PriorFamily::gaussian: return params_[1] * params_[1];
    case PriorFamily::poisson: return params_[0] * std::exp(s);
    case PriorFamily::exponential: {
      const double d = params_[0] - s;
      return 1.0 / (d * d);
    }
    case PriorFamily::uniform: {
      const double w = params_[1] - params_[0];
      return w * w * log_expm1_over_d2(w * s);
    }
    case PriorFamily::two_point: {
      const double c = params_[0];
      const double p = params_[1];
      const double q = logistic(c * s + std::log(p / (1.0 - p)));
      return c * c * q * (1.0 - q);
    }
  }
  return 0.0;
}

ExtendedReal ReferenceMeasure::cramer(double x) const {
  if (std::isnan(x)) throw std::invalid_argument("cramer: NaN argument");
  const Interval hull = support_hull();
  if (!hull.in_closure(x) || std::isinf(x)) return ExtendedReal::infinity();
  switch (family_) {
    case PriorFamily::gaussian: {
      const double d = (x - params_[0]) / params_[1];
      return 0.5 * d * d;
    }
    case PriorFamily::poisson: {
      const double lambda = params_[0];
      if (x == 0.0) return lambda;
      return x * std::log(x / lambda) - x + lambda;
    }
    case PriorFamily::exponential: {
      if (x <= 0.0) return ExtendedReal::infinity();
      const double lx = params_[0] * x;
      return lx - 1.0 - std::log(lx);
    }
    case PriorFamily::uniform:
      if (x == hull.lower || x == hull.upper) return ExtendedReal::infinity();
      break;
    case PriorFamily::two_point:
      if (x == 0.0) return -std::log1p(-params_[1]);
      if (x == params_[0]) return -std::log(params_[1]);
      break;
  }
  if (x == mean()) return 0.0;
  const double scale = family_ == PriorFamily::uniform ? params_[1] - params_[0] : params_[0];
  return numeric_conjugate(*this, x, {-50.0 / scale, 50.0 / scale, true, true});
}

std::string ReferenceMeasure::describe() const {
  std::string out{to_string(family_)};
  out += '(';
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (i) out += ", ";
    out += fmt::format("{}", params_[i]);
  }
  out += ')';
  return out;
}

double numeric_conjugate(const ReferenceMeasure& prior, double x, Interval bracket) {
  if (!prior.support_hull().interior(x))
    throw ConjugateDivergence(fmt::format("conjugate of {} diverges at {}", prior.describe(), x));
  if (!(bracket.lower < bracket.upper)) throw std::invalid_argument("numeric_conjugate: empty bracket");

  constexpr double kMaxArgument = 1e8;
  const Interval dom = prior.lambda_domain();
  double lo = bracket.lower;
  double hi = std::min(bracket.upper, std::nextafter(dom.upper, -kInf));
  if (!(lo < hi)) lo = hi - 1.0;

  // Slope of the concave objective u*x - Lambda(u); decreasing in u.
  auto slope = [&](double u) { return x - prior.log_laplace_deriv(u); };

  while (slope(hi) > 0) {
    const double width = hi - lo;
    lo = hi;
    hi = std::isfinite(dom.upper) ? hi + 0.5 * (dom.upper - hi) : hi + 2.0 * width;
    if (std::abs(hi) > kMaxArgument || hi == lo)
      throw ConjugateDivergence(fmt::format("numeric_conjugate: cannot bracket x={} above", x));
  }
  while (slope(lo) < 0) {
    const double width = hi - lo;
    hi = lo;
    lo -= 2.0 * width;
    if (std::abs(lo) > kMaxArgument)
      throw ConjugateDivergence(fmt::format("numeric_conjugate: cannot bracket x={} below", x));
  }

  // Safeguarded Newton: keep the sign-change bracket, fall back to bisection
  // whenever the Newton step leaves it.
  double u = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double d = slope(u);
    if (d == 0.0) break;
    if (d > 0) lo = u; else hi = u;
    const double curvature = prior.log_laplace_second(u);
    double next = curvature > 0 ? u + d / curvature : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - u) <= 1e-15 * (1.0 + std::abs(u)) || hi - lo <= 1e-15 * (1.0 + std::abs(u))) {
      u = next;
      break;
    }
    u = next;
  }
  return u * x - prior.log_laplace(u);
}

}  // namespace amem
