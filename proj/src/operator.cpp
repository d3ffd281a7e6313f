#include "amem/operator.hpp"

#include <bit>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>

#include <Eigen/Eigenvalues>
#include <boost/crc.hpp>
#include <fmt/format.h>

#include "amem/quadrature.hpp"

namespace amem {

std::string_view to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::power_moments: return "power_moments";
    case OperatorKind::trig_moments: return "trig_moments";
    case OperatorKind::convolution: return "convolution";
    case OperatorKind::parametric: return "parametric";
  }
  return "unknown";
}

double PointSpread::operator()(double offset, double at) const {
  const double w = width * (1.0 + width_slope * at);
  if (!(w > 0)) throw DesignError(fmt::format("point spread width {} is not positive at {}", w, at));
  if (shape == PsfShape::box) return std::abs(offset) <= w ? 0.5 / w : 0.0;
  const double u = offset / w;
  return std::exp(-0.5 * u * u) / (std::sqrt(2.0 * std::numbers::pi) * w);
}

OperatorSpec::OperatorSpec(OperatorKind kind, int output_dim, std::string name, ParametricMap map)
    : kind_(kind), output_dim_(output_dim), name_(std::move(name)), map_(std::move(map)) {
  if (output_dim_ < 1) throw DesignError("operator output dimension must be at least 1");
}

OperatorSpec OperatorSpec::power_moments(int degree) {
  return {OperatorKind::power_moments, degree, fmt::format("power_moments({})", degree),
          [degree](double x, double) {
            Eigen::VectorXd v(degree);
            double p = 1.0;
            for (int j = 0; j < degree; ++j) v[j] = (p *= x);
            return v;
          }};
}

OperatorSpec OperatorSpec::trig_moments(int count) {
  return {OperatorKind::trig_moments, count, fmt::format("trig_moments({})", count), [count](double x, double) {
            Eigen::VectorXd v(count);
            for (int j = 0; j < count; ++j) {
              const double arg = 2.0 * std::numbers::pi * (j / 2 + 1) * x;
              v[j] = j % 2 == 0 ? std::cos(arg) : std::sin(arg);
            }
            return v;
          }};
}

OperatorSpec OperatorSpec::convolution(std::vector<double> points, PointSpread psf) {
  if (points.empty()) throw DesignError("convolution operator needs at least one observation point");
  const int k = static_cast<int>(points.size());
  return {OperatorKind::convolution, k, fmt::format("convolution({})", k),
          [points = std::move(points), psf](double y, double) {
            Eigen::VectorXd v(points.size());
            for (std::size_t j = 0; j < points.size(); ++j) v[j] = psf(points[j] - y, points[j]);
            return v;
          }};
}

OperatorSpec OperatorSpec::parametric(ParametricMap map, int output_dim, std::string name) {
  return {OperatorKind::parametric, output_dim, std::move(name), std::move(map)};
}

OperatorSpec OperatorSpec::parametric_family(std::string_view name, int output_dim) {
  if (name == "product") {
    if (output_dim != 1) throw DesignError("parametric family 'product' has output dimension 1");
    return parametric([](double x, double t) { return Eigen::VectorXd::Constant(1, x * t); }, 1, "product");
  }
  if (name == "polynomial_drift") {
    return parametric(
        [output_dim](double x, double t) {
          Eigen::VectorXd v(output_dim);
          const double drift = 1.0 + t * t * x;
          double p = 1.0;
          for (int j = 0; j < output_dim; ++j, p *= x) v[j] = p * drift;
          return v;
        },
        output_dim, "polynomial_drift");
  }
  throw DesignError(fmt::format("unknown parametric family '{}'", name));
}

Eigen::VectorXd OperatorSpec::eval(double x, std::optional<double> t) const {
  if (is_parametric() && !t) throw DesignError(fmt::format("operator '{}' needs a parameter t", name_));
  return map_(x, t.value_or(0.0));
}

MomentMap OperatorSpec::bind(std::optional<double> t) const {
  if (is_parametric() && !t) throw DesignError(fmt::format("operator '{}' needs a parameter t", name_));
  return [map = map_, tv = t.value_or(0.0)](double x) { return map(x, tv); };
}

Eigen::MatrixXd OperatorSpec::eval_columns(std::span<const double> xs, std::optional<double> t) const {
  if (is_parametric() && !t) throw DesignError(fmt::format("operator '{}' needs a parameter t", name_));
  Eigen::MatrixXd out(output_dim_, static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = map_(xs[i], t.value_or(0.0));
  return out;
}

Eigen::VectorXd eval_exact(const OperatorSpec& op, double x, std::optional<double> t) { return op.eval(x, t); }

double gram_min_eigenvalue(const Eigen::MatrixXd& columns) {
  const Eigen::MatrixXd gram = columns * columns.transpose() / static_cast<double>(columns.cols());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

void validate_operator(const OperatorSpec& op, double lower, double upper, std::span<const double> sample,
                       std::optional<double> t, double min_eigenvalue) {
  constexpr int kScan = 1001;
  for (int i = 0; i < kScan; ++i) {
    const double x = lower + (upper - lower) * i / (kScan - 1);
    if (!op.eval(x, t).allFinite())
      throw DesignError(fmt::format("operator '{}' is not finite at x={}", op.name(), x));
  }
  const double lambda_min = gram_min_eigenvalue(op.eval_columns(sample, t));
  if (!(lambda_min > min_eigenvalue))
    throw DesignError(fmt::format("operator '{}' components are not linearly independent on the sample "
                                  "(smallest Gram eigenvalue {:.3e})",
                                  op.name(), lambda_min));
}

std::string_view to_string(KernelKind kind) {
  return kind == KernelKind::gaussian ? "gaussian" : "epanechnikov";
}

KernelKind parse_kernel(std::string_view name) {
  if (name == "gaussian") return KernelKind::gaussian;
  if (name == "epanechnikov") return KernelKind::epanechnikov;
  throw DesignError(fmt::format("unknown kernel '{}'", name));
}

double kernel_value(KernelKind kind, double u) {
  if (kind == KernelKind::gaussian) return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
  return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
}

double kernel_scaled(KernelKind kind, double u, double h) { return kernel_value(kind, u / h) / h; }

double kernel_mass(KernelKind kind) {
  const double reach = kind == KernelKind::gaussian ? 12.0 : 1.0;
  const Quadrature q = composite_gauss_legendre(24, 16, -reach, reach);
  double sum = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) sum += q.weights[i] * kernel_value(kind, q.nodes[i]);
  return sum;
}

Density uniform_density(double lower, double upper) {
  if (!(upper > lower)) throw DesignError("uniform density needs lower < upper");
  const double height = 1.0 / (upper - lower);
  return [=](double t) { return t >= lower && t <= upper ? height : 0.0; };
}

namespace {

constexpr char kTableMagic[8] = {'A', 'M', 'E', 'M', 'T', 'B', 'L', '1'};

void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("operator table: truncated header");
  return v;
}

void write_doubles(std::ostream& os, const double* data, std::size_t count) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

void read_doubles(std::istream& is, double* data, std::size_t count) {
  if (!is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double))))
    throw std::runtime_error("operator table: truncated payload");
}

}  // namespace

std::uint32_t OperatorTable::checksum() const {
  boost::crc_32_type crc;
  crc.process_bytes(design.data(), design.size() * sizeof(double));
  crc.process_bytes(atoms.data(), atoms.size() * sizeof(double));
  crc.process_bytes(values.data(), static_cast<std::size_t>(values.size()) * sizeof(double));
  return crc.checksum();
}

void OperatorTable::save(std::ostream& os) const {
  os.write(kTableMagic, sizeof kTableMagic);
  write_u64(os, m);
  write_u64(os, n);
  write_u64(os, k);
  write_u64(os, checksum());
  write_doubles(os, design.data(), design.size());
  write_doubles(os, atoms.data(), atoms.size());
  write_doubles(os, values.data(), static_cast<std::size_t>(values.size()));
  if (!os) throw std::runtime_error("operator table: write failed");
}

OperatorTable OperatorTable::load(std::istream& is) {
  char magic[sizeof kTableMagic];
  if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kTableMagic))
    throw std::runtime_error("operator table: bad magic");
  OperatorTable t;
  t.m = read_u64(is);
  t.n = read_u64(is);
  t.k = read_u64(is);
  const auto stored = static_cast<std::uint32_t>(read_u64(is));
  constexpr std::size_t kLimit = std::size_t{1} << 32;
  if (t.m == 0 || t.n == 0 || t.k == 0 || t.m > kLimit || t.n > kLimit || t.k > 4096)
    throw std::runtime_error("operator table: implausible dimensions");
  t.design.resize(t.m);
  t.atoms.resize(t.n);
  t.values.resize(static_cast<Eigen::Index>(t.m), static_cast<Eigen::Index>(t.k * t.n));
  read_doubles(is, t.design.data(), t.m);
  read_doubles(is, t.atoms.data(), t.n);
  read_doubles(is, t.values.data(), t.m * t.k * t.n);
  if (t.checksum() != stored) throw std::runtime_error("operator table: checksum mismatch");
  return t;
}

ApproxOperator::ApproxOperator(OperatorSpec base) : base_(std::move(base)) {
  if (!base_.is_parametric()) throw DesignError("kernel approximation needs a parametric operator");
}

ApproxOperator ApproxOperator::identity(OperatorSpec base) {
  ApproxOperator a(std::move(base));
  a.identity_ = true;
  return a;
}

const OperatorTable& ApproxOperator::table() const {
  if (!table_) throw std::logic_error("ApproxOperator: no table attached");
  return *table_;
}

void ApproxOperator::attach_table(OperatorTable table) {
  if (identity_) throw DesignError("identity approximation has no table");
  if (table.design != design_) throw DesignError("operator table design points do not match");
  if (table.k != static_cast<std::size_t>(output_dim()) || table.m != design_.size() ||
      table.n != table.atoms.size())
    throw DesignError("operator table dimensions do not match");
  atom_index_.clear();
  for (std::size_t i = 0; i < table.atoms.size(); ++i)
    atom_index_.emplace(std::bit_cast<std::uint64_t>(table.atoms[i]), i);
  table_ = std::move(table);
}

Eigen::VectorXd ApproxOperator::kernel_weights(double t) const {
  if (identity_) throw std::logic_error("identity approximation has no kernel weights");
  const double density = density_(t);
  if (!(density > 0))
    throw DesignError(fmt::format("design density f_T({}) = {} is not positive", t, density));
  const double scale = 1.0 / (density * static_cast<double>(design_.size()));
  Eigen::VectorXd w(static_cast<Eigen::Index>(design_.size()));
  for (std::size_t j = 0; j < design_.size(); ++j)
    w[static_cast<Eigen::Index>(j)] = scale * kernel_scaled(kernel_, t - design_[j], bandwidth_);
  return w;
}

Eigen::VectorXd ApproxOperator::eval(double x, double t) const {
  if (identity_) return base_.eval(x, t);
  const Eigen::VectorXd w = kernel_weights(t);
  const Eigen::Index k = output_dim();
  if (table_) {
    if (auto it = atom_index_.find(std::bit_cast<std::uint64_t>(x)); it != atom_index_.end()) {
      const auto col = static_cast<Eigen::Index>(it->second);
      return table_->values.middleCols(col * k, k).transpose() * w;
    }
  }
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(k);
  for (std::size_t j = 0; j < design_.size(); ++j) {
    const double wj = w[static_cast<Eigen::Index>(j)];
    if (wj != 0.0) acc += wj * base_.eval(x, design_[j]);
  }
  return acc;
}

Eigen::MatrixXd ApproxOperator::eval_table(double t) const {
  const OperatorTable& tab = table();
  const Eigen::VectorXd flat = tab.values.transpose() * kernel_weights(t);
  return Eigen::Map<const Eigen::MatrixXd>(flat.data(), output_dim(), static_cast<Eigen::Index>(tab.n));
}

Eigen::MatrixXd ApproxOperator::eval_columns(std::span<const double> xs, double t) const {
  if (identity_) return base_.eval_columns(xs, t);
  const Eigen::VectorXd w = kernel_weights(t);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(output_dim(), static_cast<Eigen::Index>(xs.size()));
  for (std::size_t j = 0; j < design_.size(); ++j) {
    const double wj = w[static_cast<Eigen::Index>(j)];
    if (wj == 0.0) continue;
    out.noalias() += wj * base_.eval_columns(xs, design_[j]);
  }
  return out;
}

MomentMap ApproxOperator::bind(double t) const {
  return [self = *this, t](double x) { return self.eval(x, t); };
}

ApproxOperator build_kernel_approx(OperatorSpec op, std::vector<double> design, KernelKind kernel, double h,
                                   Density f_t, std::optional<std::vector<double>> atoms) {
  if (design.empty()) throw DesignError("kernel approximation needs at least one design point");
  if (!(h > 0)) throw DesignError(fmt::format("bandwidth must be positive, got {}", h));
  if (!f_t) throw DesignError("kernel approximation needs a design density");
  ApproxOperator a(std::move(op));
  a.design_ = std::move(design);
  a.kernel_ = kernel;
  a.bandwidth_ = h;
  a.density_ = std::move(f_t);
  if (atoms) {
    OperatorTable tab;
    tab.m = a.design_.size();
    tab.n = atoms->size();
    tab.k = static_cast<std::size_t>(a.output_dim());
    tab.design = a.design_;
    tab.atoms = std::move(*atoms);
    tab.values.resize(static_cast<Eigen::Index>(tab.m), static_cast<Eigen::Index>(tab.k * tab.n));
    for (std::size_t j = 0; j < tab.m; ++j) {
      const Eigen::MatrixXd block = a.base_.eval_columns(tab.atoms, a.design_[j]);
      tab.values.row(static_cast<Eigen::Index>(j)) =
          Eigen::Map<const Eigen::RowVectorXd>(block.data(), block.size());
    }
    a.attach_table(std::move(tab));
  }
  return a;
}

Eigen::VectorXd eval_approx(const ApproxOperator& approx, double x, double t) { return approx.eval(x, t); }

double l2_distance(const OperatorSpec& op, const ApproxOperator& approx, std::span<const double> px_sample,
                   std::span<const double> t_grid) {
  if (px_sample.empty()) throw std::invalid_argument("l2_distance: empty sample");
  if (t_grid.empty()) throw std::invalid_argument("l2_distance: empty parameter grid");
  double total = 0.0;
  for (double t : t_grid) {
    const Eigen::MatrixXd diff = approx.eval_columns(px_sample, t) - op.eval_columns(px_sample, t);
    total += std::sqrt(diff.colwise().squaredNorm().mean());
  }
  return total / static_cast<double>(t_grid.size());
}

}  // namespace amem
