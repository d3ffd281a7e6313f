#include "amem/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "amem/quadrature.hpp"
#include "amem/reconstruct.hpp"
#include "amem/rng.hpp"

namespace amem {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::optional<double> parameter_of(const ExperimentConfig& cfg) {
  if (cfg.op.is_parametric()) return cfg.parametric.t_obs;
  return std::nullopt;
}

// Runs fn(rep) for every replication; each call owns its slot in the output.
template <typename Result, typename Fn>
std::vector<Result> for_each_replication(const ExperimentConfig& cfg, Fn fn) {
  std::vector<Result> out(static_cast<std::size_t>(cfg.replications));
  const int threads = std::clamp(cfg.threads, 1, std::max(1, cfg.replications));
  if (threads == 1) {
    for (int rep = 0; rep < cfg.replications; ++rep) out[static_cast<std::size_t>(rep)] = fn(rep);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int rep = t; rep < cfg.replications; rep += threads) out[static_cast<std::size_t>(rep)] = fn(rep);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) return kNaN;
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

// Weight functions x -> Lambda'(<v, Phi(x)>) compared on a common sample.
double weight_tv(const std::vector<double>& sample, const Eigen::VectorXd& v_hat, const Eigen::MatrixXd& cols_hat,
                 const Eigen::VectorXd& v_star, const Eigen::MatrixXd& cols_star, const ReferenceMeasure& prior) {
  return tv_distance(amem_estimate(v_hat, sample, cols_hat, prior), amem_estimate(v_star, sample, cols_star, prior));
}

SlopeFit fit_positive(const std::vector<double>& xs, const std::vector<double>& ys) {
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (xs[i] > 0 && ys[i] > 0 && std::isfinite(xs[i]) && std::isfinite(ys[i])) pts.emplace_back(xs[i], ys[i]);
  if (pts.size() < 2) return {kNaN, kNaN, kNaN};
  return fit_slope(pts);
}

nlohmann::ordered_json json_number(double v) {
  if (std::isfinite(v)) return v;
  return fmt::format("{}", v);
}

nlohmann::ordered_json json_numbers(const std::vector<double>& v) {
  auto arr = nlohmann::ordered_json::array();
  for (double x : v) arr.push_back(json_number(x));
  return arr;
}

}  // namespace

double TruthDensity::operator()(double x) const {
  switch (kind) {
    case TruthKind::constant: return params.at(0);
    case TruthKind::ramp: return params.at(0) + (params.at(1) - params.at(0)) * (x - lower) / (upper - lower);
    case TruthKind::two_bump: {
      auto bump = [x](double amp, double center, double width) {
        const double u = (x - center) / width;
        return amp * std::exp(-0.5 * u * u);
      };
      return params.at(0) + bump(params.at(1), params.at(2), params.at(3)) + bump(params.at(4), params.at(5), params.at(6));
    }
  }
  return kNaN;
}

ExperimentConfig ExperimentConfig::from_file(const ConfigFile& f) {
  static const std::set<std::string> known{
      "seed",          "prior",          "prior_params",   "px_range",         "operator",
      "operator_k",    "conv_points",    "conv_range",     "psf",              "psf_width",
      "psf_width_slope", "family",       "t_obs",          "t_range",          "kernel",
      "design_sampling", "design_size",  "bandwidth",      "truth",            "truth_params",
      "n_grid",        "bandwidth_grid", "m_grid",         "replications",     "eta",
      "observation_offset", "quadrature_nodes", "truth_quadrature_panels", "eval_sample", "tolerance",
      "max_iters",     "allow_non_a2",   "threads"};
  for (const auto& key : f.keys())
    if (!known.count(key)) throw ConfigError(fmt::format("unknown config key '{}'", key));
  ExperimentConfig cfg;
  try {
    const std::int64_t seed = f.integer("seed", 1);
    if (seed < 0) throw ConfigError("seed must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.prior = ReferenceMeasure::from_spec(f.string("prior"), f.numbers("prior_params"));

    const auto px = f.numbers("px_range", {0.0, 1.0});
    if (px.size() != 2 || !(px[1] > px[0])) throw ConfigError("px_range must be [lower, upper] with lower < upper");
    cfg.px_lower = px[0];
    cfg.px_upper = px[1];

    const std::string kind = f.string("operator");
    const int k = static_cast<int>(f.integer("operator_k", 1));
    if (kind == "power_moments") {
      cfg.op = OperatorSpec::power_moments(k);
    } else if (kind == "trig_moments") {
      cfg.op = OperatorSpec::trig_moments(k);
    } else if (kind == "convolution") {
      std::vector<double> points;
      if (f.has("conv_points")) {
        points = f.numbers("conv_points");
      } else {
        const auto range = f.numbers("conv_range", {cfg.px_lower, cfg.px_upper});
        if (range.size() != 2) throw ConfigError("conv_range must be [lower, upper]");
        for (int j = 0; j < k; ++j)
          points.push_back(k == 1 ? 0.5 * (range[0] + range[1]) : range[0] + (range[1] - range[0]) * j / (k - 1));
      }
      PointSpread psf;
      const std::string shape = f.string("psf", "gaussian");
      if (shape == "gaussian") psf.shape = PsfShape::gaussian;
      else if (shape == "box") psf.shape = PsfShape::box;
      else throw ConfigError(fmt::format("unknown psf '{}'", shape));
      psf.width = f.number("psf_width", 0.05);
      psf.width_slope = f.number("psf_width_slope", 0.0);
      if (!(psf.width > 0)) throw ConfigError("psf_width must be positive");
      cfg.op = OperatorSpec::convolution(std::move(points), psf);
    } else if (kind == "parametric") {
      auto& ps = cfg.parametric;
      ps.family = f.string("family", ps.family);
      cfg.op = OperatorSpec::parametric_family(ps.family, k);
      ps.t_obs = f.number("t_obs", ps.t_obs);
      const auto tr = f.numbers("t_range", {ps.t_lower, ps.t_upper});
      if (tr.size() != 2 || !(tr[1] > tr[0])) throw ConfigError("t_range must be [lower, upper] with lower < upper");
      ps.t_lower = tr[0];
      ps.t_upper = tr[1];
      ps.kernel = parse_kernel(f.string("kernel", "gaussian"));
      ps.design_sampling = f.string("design_sampling", ps.design_sampling);
      if (ps.design_sampling != "iid" && ps.design_sampling != "stratified")
        throw ConfigError("design_sampling must be \"iid\" or \"stratified\"");
      ps.design_size = static_cast<int>(f.integer("design_size", ps.design_size));
      ps.bandwidth = f.number("bandwidth", ps.bandwidth);
    } else {
      throw ConfigError(fmt::format("unknown operator '{}'", kind));
    }

    const std::string truth = f.string("truth", "constant");
    if (truth == "constant") cfg.truth.kind = TruthKind::constant;
    else if (truth == "ramp") cfg.truth.kind = TruthKind::ramp;
    else if (truth == "two_bump") cfg.truth.kind = TruthKind::two_bump;
    else throw ConfigError(fmt::format("unknown truth '{}'", truth));
    cfg.truth.params = f.numbers("truth_params", {cfg.prior.mean()});
    const std::size_t expected = cfg.truth.kind == TruthKind::constant ? 1 : cfg.truth.kind == TruthKind::ramp ? 2 : 7;
    if (cfg.truth.params.size() != expected)
      throw ConfigError(fmt::format("truth '{}' takes {} parameter(s)", truth, expected));
    cfg.truth.lower = cfg.px_lower;
    cfg.truth.upper = cfg.px_upper;

    cfg.n_grid.clear();
    for (double n : f.numbers("n_grid", {1000})) cfg.n_grid.push_back(static_cast<int>(n));
    cfg.bandwidth_grid = f.numbers("bandwidth_grid", {});
    cfg.m_grid.clear();
    for (double m : f.numbers("m_grid", {})) cfg.m_grid.push_back(static_cast<int>(m));
    cfg.replications = static_cast<int>(f.integer("replications", 1));
    cfg.eta = f.number("eta", 0.0);
    cfg.observation_offset = f.numbers("observation_offset", {});
    cfg.quadrature_nodes = static_cast<int>(f.integer("quadrature_nodes", 256));
    cfg.truth_quadrature_panels = static_cast<int>(f.integer("truth_quadrature_panels", 256));
    cfg.eval_sample = static_cast<int>(f.integer("eval_sample", 10000));
    cfg.solve.tolerance = f.number("tolerance", 1e-9);
    cfg.solve.max_iters = static_cast<int>(f.integer("max_iters", 200));
    cfg.allow_non_a2 = f.boolean("allow_non_a2", false);
    cfg.threads = static_cast<int>(f.integer("threads", 1));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  auto increasing = [](const auto& grid) {
    for (std::size_t i = 1; i < grid.size(); ++i)
      if (!(grid[i] > grid[i - 1])) return false;
    return true;
  };
  if (n_grid.empty() || !increasing(n_grid) || n_grid.front() < 1)
    throw ConfigError("n_grid must be a nonempty increasing list of positive sizes");
  if (!increasing(bandwidth_grid) && !std::is_sorted(bandwidth_grid.rbegin(), bandwidth_grid.rend()))
    throw ConfigError("bandwidth_grid must be monotone");
  for (double h : bandwidth_grid)
    if (!(h >= 0)) throw ConfigError("bandwidths must be nonnegative");
  if (!increasing(m_grid) || (!m_grid.empty() && m_grid.front() < 1))
    throw ConfigError("m_grid must be an increasing list of positive sizes");
  if (replications < 1) throw ConfigError("replications must be at least 1");
  if (!(eta >= 0) || !std::isfinite(eta)) throw ConfigError("eta must be finite and >= 0");
  if (quadrature_nodes < 2 || truth_quadrature_panels < 1 || eval_sample < 1)
    throw ConfigError("quadrature_nodes, truth_quadrature_panels and eval_sample must be positive");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (!observation_offset.empty() && static_cast<int>(observation_offset.size()) != op.output_dim())
    throw ConfigError("observation_offset must have one entry per moment");
  if (op.is_parametric()) {
    if (parametric.design_size < 1) throw ConfigError("design_size must be positive");
    if (!(parametric.bandwidth > 0)) throw ConfigError("bandwidth must be positive");
    if (parametric.t_obs < parametric.t_lower || parametric.t_obs > parametric.t_upper)
      throw ConfigError("t_obs must lie in t_range");
  }

  // g0 must map the sample space into the support hull.
  const Interval hull = prior.support_hull();
  constexpr int kScan = 1001;
  for (int i = 0; i < kScan; ++i) {
    const double x = px_lower + (px_upper - px_lower) * i / (kScan - 1);
    const double g = truth(x);
    if (!std::isfinite(g) || !hull.in_closure(g))
      throw ConfigError(fmt::format("truth density {} at x={} lies outside the support hull of {}", g, x,
                                    prior.describe()));
  }

  // Operator rank check on 500 draws from P_X.
  RandomStream rng(seed, "gram", 0);
  std::vector<double> sample(500);
  for (double& x : sample) x = rng.uniform(px_lower, px_upper);
  try {
    validate_operator(op, px_lower, px_upper, sample, parameter_of(*this));
  } catch (const DesignError& e) {
    throw ConfigError(e.what());
  }
}

Eigen::VectorXd draw_noise(std::uint64_t seed, std::uint64_t rep_index, int k, double eta) {
  if (eta == 0.0) return Eigen::VectorXd::Zero(k);
  RandomStream rng(seed, "noise", rep_index);
  Eigen::VectorXd dir(k);
  do {
    for (int j = 0; j < k; ++j) dir[j] = rng.normal();
  } while (dir.norm() == 0.0);
  dir /= dir.norm();
  // Shrunk by one part in 1e12 so rounding can never push ||eps|| above eta.
  const double radius = eta * rng.uniform() * (1.0 - 1e-12);
  return radius * dir;
}

Eigen::VectorXd clean_moment(const ExperimentConfig& cfg) {
  const Quadrature q = composite_gauss_legendre(cfg.truth_quadrature_panels, 16, cfg.px_lower, cfg.px_upper);
  const double density = 1.0 / (cfg.px_upper - cfg.px_lower);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(cfg.op.output_dim());
  const auto t = parameter_of(cfg);
  for (std::size_t i = 0; i < q.size(); ++i)
    y += (q.weights[i] * density * cfg.truth(q.nodes[i])) * cfg.op.eval(q.nodes[i], t);
  return y;
}

std::vector<double> sample_px(const ExperimentConfig& cfg, std::string_view tag, std::uint64_t index, int count) {
  RandomStream rng(cfg.seed, tag, index);
  std::vector<double> out(static_cast<std::size_t>(count));
  for (double& x : out) x = rng.uniform(cfg.px_lower, cfg.px_upper);
  return out;
}

std::vector<double> sample_design(const ExperimentConfig& cfg, std::uint64_t rep_index, int m) {
  RandomStream rng(cfg.seed, fmt::format("design:{}", m), rep_index);
  const double lo = cfg.parametric.t_lower;
  const double hi = cfg.parametric.t_upper;
  std::vector<double> out(static_cast<std::size_t>(m));
  if (cfg.parametric.design_sampling == "stratified") {
    const double cell = (hi - lo) / m;
    for (int j = 0; j < m; ++j) out[static_cast<std::size_t>(j)] = lo + cell * (j + rng.uniform());
  } else {
    for (double& t : out) t = rng.uniform(lo, hi);
  }
  return out;
}

namespace {

Observation make_observation(const ExperimentConfig& cfg, const Eigen::VectorXd& y_clean, std::uint64_t rep) {
  Eigen::VectorXd y = y_clean + draw_noise(cfg.seed, rep, cfg.op.output_dim(), cfg.eta);
  for (std::size_t j = 0; j < cfg.observation_offset.size(); ++j)
    y[static_cast<Eigen::Index>(j)] += cfg.observation_offset[j];
  return {std::move(y), cfg.eta};
}

DualSolution oracle_solve(const ExperimentConfig& cfg, const Observation& obs, int nodes) {
  return population_solve(cfg.op.bind(parameter_of(cfg)), uniform_quadrature(nodes, cfg.px_lower, cfg.px_upper), obs,
                          cfg.prior, cfg.solve);
}

void require_a2(const ExperimentConfig& cfg, std::string_view study) {
  if (!cfg.prior.a2_compliant() && !cfg.allow_non_a2)
    throw ConfigError(fmt::format("{}: prior {} has unbounded log-Laplace derivatives or a restricted domain; "
                                  "set allow_non_a2 = true to run anyway",
                                  study, cfg.prior.describe()));
}

}  // namespace

ReplicationSetup setup_replication(const ExperimentConfig& cfg, std::uint64_t rep_index) {
  ReplicationSetup s;
  s.y_clean = clean_moment(cfg);
  s.observation = make_observation(cfg, s.y_clean, rep_index);
  s.oracle = oracle_solve(cfg, s.observation, cfg.quadrature_nodes);
  return s;
}

ProblemInstance generate_problem(const ExperimentConfig& cfg, std::uint64_t rep_index, int n) {
  ReplicationSetup setup = setup_replication(cfg, rep_index);
  ProblemInstance p;
  p.atoms = sample_px(cfg, fmt::format("atoms:{}", n), rep_index, n);
  p.phi = cfg.op.eval_columns(p.atoms, parameter_of(cfg));
  p.y_clean = std::move(setup.y_clean);
  p.observation = std::move(setup.observation);
  p.oracle = std::move(setup.oracle);
  return p;
}

SlopeFit fit_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) throw std::invalid_argument("fit_slope: at least two points required");
  const double count = static_cast<double>(points.size());
  double mx = 0, my = 0;
  for (const auto& [x, y] : points) {
    if (!(x > 0) || !(y > 0)) throw std::invalid_argument("fit_slope: coordinates must be positive");
    mx += std::log(x);
    my += std::log(y);
  }
  mx /= count;
  my /= count;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& [x, y] : points) {
    const double dx = std::log(x) - mx;
    const double dy = std::log(y) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_slope: all x values coincide");
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double sse = std::max(0.0, syy - fit.slope * sxy);
  fit.r2 = syy == 0.0 ? 1.0 : 1.0 - sse / syy;
  return fit;
}

void write_records_csv(std::ostream& os, const std::vector<RunRecord>& records) {
  os << "study,n,m_or_bandwidth,rep,seed,tv_error,op_l2_error,residual,entropy,feasible,status,iters,grad_norm\n";
  for (const auto& r : records)
    fmt::print(os, "{},{},{:.17g},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{},{},{},{:.17g}\n", r.study, r.n,
               r.m_or_bandwidth, r.rep, r.seed, r.tv_error, r.op_l2_error, r.residual, r.entropy,
               r.feasible ? "true" : "false", r.status, r.iters, r.grad_norm);
}

void RateReport::write_json(std::ostream& os) const {
  nlohmann::ordered_json j;
  j["study"] = study;
  j["parameter"] = json_numbers(parameter);
  j["grid"] = json_numbers(grid);
  j["median_error"] = json_numbers(medians);
  j["median_v_error"] = json_numbers(v_error_medians);
  j["slope"] = json_number(fit.slope);
  j["intercept"] = json_number(fit.intercept);
  j["r2"] = json_number(fit.r2);
  j["attempted"] = attempted;
  j["exclusions"] = exclusions;
  j["exclusion_budget_exceeded"] = exclusion_budget_exceeded();
  j["oracle_refinement_gap"] = json_number(oracle_refinement_gap);
  os << j.dump(2) << '\n';
}

namespace {

struct RepOutcome {
  std::vector<std::optional<RunRecord>> cells;  // one per grid point; empty when excluded
};

// Shared body of the n-sweeps (rate study and deconvolution demo).
RateReport sweep_n(const ExperimentConfig& cfg, const std::string& study, bool track_truth) {
  RateReport report;
  report.study = study;
  const auto t = parameter_of(cfg);
  const Eigen::VectorXd y_clean = clean_moment(cfg);

  auto outcomes = for_each_replication<RepOutcome>(cfg, [&](int rep) {
    RepOutcome out;
    const Observation obs = make_observation(cfg, y_clean, static_cast<std::uint64_t>(rep));
    const DualSolution oracle = oracle_solve(cfg, obs, cfg.quadrature_nodes);
    for (int n : cfg.n_grid) {
      if (!oracle.ok()) {
        out.cells.emplace_back();
        continue;
      }
      const auto atoms = sample_px(cfg, fmt::format("atoms:{}", n), static_cast<std::uint64_t>(rep), n);
      const Eigen::MatrixXd phi = cfg.op.eval_columns(atoms, t);
      const DualSolution sol = solve(DualProblem(phi, obs, cfg.prior), cfg.solve);
      if (!sol.ok()) {
        out.cells.emplace_back();
        continue;
      }
      const DiscreteMeasure est = amem_estimate(sol.v_hat, atoms, phi, cfg.prior);
      const EstimateSummary summary = summarize(sol, est, phi, obs, cfg.prior);
      const auto eval = sample_px(cfg, fmt::format("eval:{}", n), static_cast<std::uint64_t>(rep), cfg.eval_sample);
      const Eigen::MatrixXd eval_cols = cfg.op.eval_columns(eval, t);

      RunRecord r;
      r.study = study;
      r.n = n;
      r.rep = rep;
      r.seed = cfg.seed;
      r.tv_error = weight_tv(eval, sol.v_hat, eval_cols, oracle.v_hat, eval_cols, cfg.prior);
      r.residual = summary.residual;
      r.entropy = summary.entropy.to_double();
      r.feasible = summary.residual <= 1e-6;
      r.status = summary.status;
      r.iters = sol.iterations;
      r.grad_norm = sol.grad_norm;
      r.v_error = (sol.v_hat - oracle.v_hat).norm();
      if (track_truth) {
        double acc = 0.0;
        for (std::size_t i = 0; i < atoms.size(); ++i) acc += std::abs(est.weights()[i] - cfg.truth(atoms[i]));
        r.truth_tv_error = acc / static_cast<double>(atoms.size());
      }
      out.cells.emplace_back(std::move(r));
    }
    return out;
  });

  report.errors.assign(cfg.n_grid.size(), {});
  std::vector<std::vector<double>> v_errors(cfg.n_grid.size());
  for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
    for (const auto& rep : outcomes) {
      ++report.attempted;
      if (!rep.cells[g]) {
        ++report.exclusions;
        continue;
      }
      report.errors[g].push_back(rep.cells[g]->tv_error);
      v_errors[g].push_back(rep.cells[g]->v_error);
      report.records.push_back(*rep.cells[g]);
    }
    report.parameter.push_back(cfg.n_grid[g]);
    report.grid.push_back(cfg.n_grid[g]);
    report.medians.push_back(median(report.errors[g]));
    report.v_error_medians.push_back(median(v_errors[g]));
  }
  report.fit = fit_positive(report.grid, report.medians);

  const Observation obs0 = make_observation(cfg, y_clean, 0);
  const DualSolution coarse = oracle_solve(cfg, obs0, cfg.quadrature_nodes);
  const DualSolution fine = oracle_solve(cfg, obs0, 2 * cfg.quadrature_nodes);
  report.oracle_refinement_gap = (coarse.ok() && fine.ok()) ? (coarse.v_hat - fine.v_hat).norm() : kNaN;
  return report;
}

}  // namespace

RateReport rate_study_n(const ExperimentConfig& cfg) {
  require_a2(cfg, "rate-n");
  return sweep_n(cfg, "rate-n", false);
}

RateReport rate_study_m(const ExperimentConfig& cfg) {
  require_a2(cfg, "rate-m");
  if (!cfg.op.is_parametric()) throw ConfigError("rate-m needs a parametric operator");
  if (cfg.bandwidth_grid.empty()) throw ConfigError("rate-m needs a bandwidth_grid");

  RateReport report;
  report.study = "rate-m";
  const auto& ps = cfg.parametric;
  const double t_obs = ps.t_obs;
  const Eigen::VectorXd y_clean = clean_moment(cfg);
  const Quadrature quad = uniform_quadrature(cfg.quadrature_nodes, cfg.px_lower, cfg.px_upper);
  const Eigen::VectorXd quad_weights =
      Eigen::Map<const Eigen::VectorXd>(quad.weights.data(), static_cast<Eigen::Index>(quad.size()));
  const int m = ps.design_size;

  auto outcomes = for_each_replication<RepOutcome>(cfg, [&](int rep) {
    RepOutcome out;
    const auto urep = static_cast<std::uint64_t>(rep);
    const Observation obs = make_observation(cfg, y_clean, urep);
    const DualSolution oracle = oracle_solve(cfg, obs, cfg.quadrature_nodes);
    const auto design = sample_design(cfg, urep, m);
    const auto eval = sample_px(cfg, "eval:m", urep, cfg.eval_sample);
    const Eigen::MatrixXd exact_cols = cfg.op.eval_columns(eval, t_obs);

    for (double h : cfg.bandwidth_grid) {
      if (!oracle.ok()) {
        out.cells.emplace_back();
        continue;
      }
      const ApproxOperator approx =
          h == 0.0 ? ApproxOperator::identity(cfg.op)
                   : build_kernel_approx(cfg.op, design, ps.kernel, h, uniform_density(ps.t_lower, ps.t_upper),
                                         quad.nodes);
      const Eigen::MatrixXd phi_quad = approx.is_identity() ? cfg.op.eval_columns(quad.nodes, t_obs)
                                                            : approx.eval_table(t_obs);
      const DualSolution sol = solve(DualProblem(phi_quad, obs, cfg.prior, quad_weights), cfg.solve);
      if (!sol.ok()) {
        out.cells.emplace_back();
        continue;
      }
      const Eigen::MatrixXd approx_cols = approx.eval_columns(eval, t_obs);

      RunRecord r;
      r.study = "rate-m";
      r.n = 0;
      r.m_or_bandwidth = h;
      r.rep = rep;
      r.seed = cfg.seed;
      r.tv_error = weight_tv(eval, sol.v_hat, approx_cols, oracle.v_hat, exact_cols, cfg.prior);
      r.op_l2_error = std::sqrt((approx_cols - exact_cols).colwise().squaredNorm().mean());
      const Eigen::VectorXd achieved = [&] {
        Eigen::VectorXd z(phi_quad.cols());
        const Eigen::VectorXd s = phi_quad.transpose() * sol.v_hat;
        for (Eigen::Index i = 0; i < s.size(); ++i) z[i] = cfg.prior.log_laplace_deriv(s[i]);
        return Eigen::VectorXd(phi_quad * quad_weights.cwiseProduct(z));
      }();
      r.residual = residual(achieved, obs);
      r.feasible = r.residual <= 1e-6;
      r.entropy = kNaN;
      r.status = std::string(to_string(sol.status));
      r.iters = sol.iterations;
      r.grad_norm = sol.grad_norm;
      r.v_error = (sol.v_hat - oracle.v_hat).norm();
      out.cells.emplace_back(std::move(r));
    }
    return out;
  });

  report.errors.assign(cfg.bandwidth_grid.size(), {});
  for (std::size_t g = 0; g < cfg.bandwidth_grid.size(); ++g) {
    std::vector<double> op_errors, v_errors;
    for (const auto& rep : outcomes) {
      ++report.attempted;
      if (!rep.cells[g]) {
        ++report.exclusions;
        continue;
      }
      report.errors[g].push_back(rep.cells[g]->tv_error);
      op_errors.push_back(rep.cells[g]->op_l2_error);
      v_errors.push_back(rep.cells[g]->v_error);
      report.records.push_back(*rep.cells[g]);
    }
    report.parameter.push_back(cfg.bandwidth_grid[g]);
    report.grid.push_back(median(op_errors));
    report.medians.push_back(median(report.errors[g]));
    report.v_error_medians.push_back(median(v_errors));
  }
  report.fit = fit_positive(report.grid, report.medians);

  const Observation obs0 = make_observation(cfg, y_clean, 0);
  const DualSolution coarse = oracle_solve(cfg, obs0, cfg.quadrature_nodes);
  const DualSolution fine = oracle_solve(cfg, obs0, 2 * cfg.quadrature_nodes);
  report.oracle_refinement_gap = (coarse.ok() && fine.ok()) ? (coarse.v_hat - fine.v_hat).norm() : kNaN;
  return report;
}

void FeasibilityReport::write_json(std::ostream& os) const {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& c : cells)
    j.push_back({{"m", c.m},
                 {"n", c.n},
                 {"replications", c.replications},
                 {"feasible", c.feasible},
                 {"indeterminate", c.indeterminate},
                 {"frequency", c.frequency()}});
  os << j.dump(2) << '\n';
}

FeasibilityReport feasibility_study(const ExperimentConfig& cfg) {
  const bool approximate = cfg.op.is_parametric() && !cfg.m_grid.empty();
  const std::vector<int> ms = approximate ? cfg.m_grid : std::vector<int>{0};
  const auto t = parameter_of(cfg);
  const Eigen::VectorXd y_clean = clean_moment(cfg);
  const std::size_t cells = ms.size() * cfg.n_grid.size();

  auto outcomes = for_each_replication<std::vector<RunRecord>>(cfg, [&](int rep) {
    std::vector<RunRecord> out;
    const auto urep = static_cast<std::uint64_t>(rep);
    const Observation obs = make_observation(cfg, y_clean, urep);
    for (int m : ms) {
      const std::vector<double> design = m > 0 ? sample_design(cfg, urep, m) : std::vector<double>{};
      for (int n : cfg.n_grid) {
        auto atoms = sample_px(cfg, fmt::format("atoms:{}", n), urep, n);
        Eigen::MatrixXd phi;
        if (m > 0) {
          const auto& ps = cfg.parametric;
          const ApproxOperator approx = build_kernel_approx(cfg.op, design, ps.kernel, ps.bandwidth,
                                                            uniform_density(ps.t_lower, ps.t_upper), atoms);
          phi = approx.eval_table(ps.t_obs);
        } else {
          phi = cfg.op.eval_columns(atoms, t);
        }
        const FeasibilityResult fr = check_feasibility(DualProblem(std::move(phi), obs, cfg.prior));
        RunRecord r;
        r.study = "feasibility";
        r.n = n;
        r.m_or_bandwidth = m;
        r.rep = rep;
        r.seed = cfg.seed;
        r.tv_error = kNaN;
        r.op_l2_error = kNaN;
        r.residual = std::max(0.0, std::sqrt(fr.min_distance_sq) - cfg.eta);
        r.entropy = kNaN;
        r.feasible = fr.feasible;
        r.status = fr.feasible ? "feasible" : fr.indeterminate ? "indeterminate" : "infeasible";
        r.iters = fr.iterations;
        r.grad_norm = kNaN;
        out.push_back(std::move(r));
      }
    }
    return out;
  });

  FeasibilityReport report;
  report.cells.resize(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    report.cells[c].m = ms[c / cfg.n_grid.size()];
    report.cells[c].n = cfg.n_grid[c % cfg.n_grid.size()];
    for (const auto& rep : outcomes) {
      const RunRecord& r = rep[c];
      ++report.cells[c].replications;
      report.cells[c].feasible += r.feasible ? 1 : 0;
      report.cells[c].indeterminate += r.status == "indeterminate" ? 1 : 0;
      report.records.push_back(r);
    }
  }
  return report;
}

void DeconvReport::write_json(std::ostream& os) const {
  nlohmann::ordered_json j;
  j["status"] = status;
  j["tv_error"] = json_number(tv_error);
  j["truth_tv_error"] = json_number(truth_tv_error);
  j["residual"] = json_number(residual);
  j["n"] = json_numbers(rates.parameter);
  j["median_tv_error"] = json_numbers(rates.medians);
  j["slope"] = json_number(rates.fit.slope);
  j["attempted"] = rates.attempted;
  j["exclusions"] = rates.exclusions;
  os << j.dump(2) << '\n';
}

DeconvReport demo_deconv(const ExperimentConfig& cfg) {
  if (cfg.op.kind() != OperatorKind::convolution) throw ConfigError("demo-deconv needs a convolution operator");
  DeconvReport report;
  report.rates = sweep_n(cfg, "demo-deconv", true);

  // Showcase run: replication 0 at the largest n.
  const int n = cfg.n_grid.back();
  ProblemInstance p = generate_problem(cfg, 0, n);
  const DualSolution sol = solve(DualProblem(p.phi, p.observation, cfg.prior), cfg.solve);
  report.status = std::string(to_string(sol.status));
  if (sol.status != SolveStatus::infeasible_direction) {
    DiscreteMeasure est = amem_estimate(sol.v_hat, p.atoms, p.phi, cfg.prior);
    std::vector<double> truth_w(p.atoms.size());
    for (std::size_t i = 0; i < p.atoms.size(); ++i) truth_w[i] = cfg.truth(p.atoms[i]);
    DiscreteMeasure truth(p.atoms, std::move(truth_w));
    report.truth_tv_error = tv_distance(est, truth);
    report.residual = summarize(sol, est, p.phi, p.observation, cfg.prior).residual;
    if (p.oracle.ok()) {
      const auto eval = sample_px(cfg, fmt::format("eval:{}", n), 0, cfg.eval_sample);
      const Eigen::MatrixXd cols = cfg.op.eval_columns(eval);
      report.tv_error = weight_tv(eval, sol.v_hat, cols, p.oracle.v_hat, cols, cfg.prior);
    } else {
      report.tv_error = kNaN;
    }
    report.estimate = std::move(est);
    report.truth = std::move(truth);
  }
  return report;
}

}  // namespace amem
