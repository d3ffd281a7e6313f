#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "amem/dual_solver.hpp"
#include "amem/harness.hpp"
#include "amem/operator.hpp"
#include "amem/quadrature.hpp"
#include "amem/reconstruct.hpp"
#include "amem/rng.hpp"
#include "oracles.hpp"

using namespace amem;

namespace {

std::vector<ReferenceMeasure> all_priors() {
  return {ReferenceMeasure::gaussian(0.5, 1.2), ReferenceMeasure::poisson(1.5), ReferenceMeasure::exponential(5.0),
          ReferenceMeasure::uniform(0.0, 2.0), ReferenceMeasure::two_point(1.0, 0.4)};
}

// Phi entries in [0, 1] keep <v, Phi> < k for |v_j| <= 1, inside every domain above.
DualProblem random_problem(std::mt19937_64& rng, const ReferenceMeasure& prior, int k, int n, double eta) {
  const Eigen::MatrixXd phi = oracle::random_matrix(rng, k, n, 0.0, 1.0);
  const Eigen::VectorXd y = oracle::random_vector(rng, k, 0.2, 1.0);
  return DualProblem(phi, y, eta, prior);
}

DualProblem scalar_problem(double y, double eta) {
  return DualProblem(Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXd::Constant(1, y), eta,
                     ReferenceMeasure::gaussian(0, 1));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("objective examples") {
  std::mt19937_64 rng(1);
  for (const auto& prior : all_priors()) {
    const DualProblem p = random_problem(rng, prior, 3, 20, 0.2);
    CHECK(objective(p, Eigen::VectorXd::Zero(3)) == 0.0);
  }
  CHECK(objective(scalar_problem(0.8, 0.0), Eigen::VectorXd::Constant(1, 0.8)) == doctest::Approx(-0.32));

  const DualProblem a = random_problem(rng, ReferenceMeasure::uniform(0, 2), 3, 10, 0.15);
  const DualProblem b(a.phi(), a.y_obs(), 0.3, a.prior());
  const Eigen::VectorXd v = oracle::random_vector(rng, 3);
  CHECK(objective(b, v) - objective(a, v) == doctest::Approx(0.15 * v.norm()).epsilon(1e-12));
}

TEST_CASE("problem validation") {
  CHECK_THROWS(DualProblem(Eigen::MatrixXd::Ones(2, 3), Eigen::VectorXd::Ones(3), 0.0, ReferenceMeasure::uniform(0, 1)));
  CHECK_THROWS(DualProblem(Eigen::MatrixXd::Ones(1, 3), Eigen::VectorXd::Ones(1), -0.1, ReferenceMeasure::uniform(0, 1)));
  CHECK_THROWS(DualProblem(Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXd::Ones(1), 0.0, ReferenceMeasure::uniform(0, 1),
                           Eigen::Vector2d(0.7, 0.7)));
  Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(1, 2);
  bad(0, 1) = NAN;
  CHECK_THROWS(DualProblem(bad, Eigen::VectorXd::Ones(1), 0.0, ReferenceMeasure::uniform(0, 1)));
}

TEST_CASE("gradient matches central differences of the objective") {
  std::mt19937_64 rng(2);
  for (const auto& prior : all_priors()) {
    for (int trial = 0; trial < 100; ++trial) {
      const int k = 1 + trial % 4;
      const DualProblem p = random_problem(rng, prior, k, 30, trial % 2 ? 0.1 : 0.0);
      const Eigen::VectorXd v = oracle::random_vector(rng, k);
      const Eigen::VectorXd g = gradient(p, v);
      const Eigen::VectorXd fd =
          oracle::central_difference_gradient([&](const Eigen::VectorXd& u) { return objective(p, u); }, v, 1e-5);
      INFO(prior.describe(), " trial ", trial);
      CHECK((g - fd).norm() <= 1e-6 * g.norm());
    }
  }
}

TEST_CASE("hessian matches differences of the gradient and is positive semidefinite") {
  std::mt19937_64 rng(3);
  for (const auto& prior : all_priors()) {
    for (int trial = 0; trial < 100; ++trial) {
      const int k = 1 + trial % 4;
      const DualProblem p = random_problem(rng, prior, k, 30, trial % 2 ? 0.25 : 0.0);
      const Eigen::VectorXd v = oracle::random_vector(rng, k);
      const Eigen::MatrixXd H = hessian(p, v);
      Eigen::MatrixXd fd(k, k);
      for (int j = 0; j < k; ++j) {
        Eigen::VectorXd a = v, b = v;
        a[j] += 1e-5;
        b[j] -= 1e-5;
        fd.col(j) = (gradient(p, a) - gradient(p, b)) / 2e-5;
      }
      INFO(prior.describe(), " trial ", trial);
      CHECK((H - fd).norm() <= 1e-4 * H.norm());
      CHECK((H - H.transpose()).norm() <= 1e-12 * H.norm());
    }
  }
  const DualProblem p = random_problem(rng, ReferenceMeasure::two_point(1, 0.5), 3, 40, 0.4);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::VectorXd v = oracle::random_vector(rng, 3, -3, 3);
    const Eigen::VectorXd a = oracle::random_vector(rng, 3);
    CHECK(a.dot(hessian(p, v) * a) >= -1e-12);
  }
}

TEST_CASE("one-dimensional norm term has no curvature") {
  std::mt19937_64 rng(4);
  const DualProblem smooth = random_problem(rng, ReferenceMeasure::uniform(0, 2), 1, 10, 0.0);
  const DualProblem penalized(smooth.phi(), smooth.y_obs(), 0.7, smooth.prior());
  for (double v : {-2.0, -0.1, 0.3, 5.0}) {
    const Eigen::VectorXd vv = Eigen::VectorXd::Constant(1, v);
    CHECK(hessian(penalized, vv)(0, 0) == doctest::Approx(hessian(smooth, vv)(0, 0)).epsilon(1e-14));
  }
}

TEST_CASE("gradient examples") {
  const Eigen::VectorXd g = gradient(scalar_problem(0.8, 0.0), Eigen::VectorXd::Constant(1, 0.8));
  CHECK(std::abs(g[0]) <= 1e-15);

  std::mt19937_64 rng(5);
  const DualProblem p = random_problem(rng, ReferenceMeasure::uniform(0, 2), 3, 25, 0.0);
  const Eigen::VectorXd at_zero = gradient(p, Eigen::VectorXd::Zero(3));
  CHECK((at_zero - (1.0 * p.mean_moment() - p.y_obs())).norm() <= 1e-14);

  const DualProblem q(p.phi(), p.y_obs(), 0.1, p.prior());
  CHECK_THROWS_AS(gradient(q, Eigen::VectorXd::Zero(3)), std::invalid_argument);
  CHECK_THROWS_AS(hessian(q, Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("zero optimality examples") {
  std::mt19937_64 rng(6);
  const DualProblem base = random_problem(rng, ReferenceMeasure::uniform(0, 2), 2, 15, 0.0);
  const Eigen::VectorXd center = 1.0 * base.mean_moment();
  CHECK(check_zero_optimality(DualProblem(base.phi(), center, 0.1, base.prior())));
  CHECK_FALSE(check_zero_optimality(DualProblem(base.phi(), center + Eigen::Vector2d(1e-9, 0), 0.0, base.prior())));

  // Prior mean zero: the ball is centred at the origin; 0.25 is exact in binary.
  const DualProblem boundary(base.phi(), Eigen::Vector2d(0.25, 0.0), 0.25, ReferenceMeasure::gaussian(0, 1));
  CHECK(check_zero_optimality(boundary));
}

TEST_CASE("solve examples") {
  const DualProblem exact = scalar_problem(0.8, 0.0);
  const DualSolution s = solve(exact);
  CHECK(s.status == SolveStatus::converged);
  CHECK(std::abs(s.v_hat[0] - 0.8) <= 1e-10);
  const DiscreteMeasure est = amem_estimate(s.v_hat, {0.0, 1.0}, exact.phi(), exact.prior());
  CHECK(est.weights()[0] == doctest::Approx(0.8));
  CHECK(est.weights()[1] == doctest::Approx(0.8));

  const DualSolution soft = solve(scalar_problem(0.8, 0.3));
  CHECK(soft.status == SolveStatus::converged);
  CHECK(std::abs(soft.v_hat[0] - 0.5) <= 1e-10);

  std::mt19937_64 rng(7);
  const DualProblem p = random_problem(rng, ReferenceMeasure::two_point(1, 0.5), 3, 30, 0.0);
  const DualSolution origin = solve(DualProblem(p.phi(), 0.5 * p.mean_moment(), 0.1, p.prior()));
  CHECK(origin.status == SolveStatus::at_origin);
  CHECK(origin.v_hat.norm() == 0.0);
  CHECK(origin.iterations == 0);
}

TEST_CASE("converged solves meet the stopping rule") {
  std::mt19937_64 rng(8);
  for (const auto& prior : all_priors()) {
    for (int trial = 0; trial < 20; ++trial) {
      const int k = 1 + trial % 3;
      const DualProblem p = random_problem(rng, prior, k, 60, 0.05 * (trial % 3));
      // Targets drawn as achieved moments of interior weights keep the problem feasible.
      Eigen::VectorXd z(p.n());
      const Interval hull = prior.support_hull();
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double s = oracle::random_vector(rng, 1, -1, 1)[0];
        z[i] = prior.log_laplace_deriv(s);
      }
      const DualProblem q(p.phi(), p.phi() * z / static_cast<double>(p.n()), p.eta(), prior);
      const DualSolution s = solve(q);
      INFO(prior.describe(), " trial ", trial, " status ", to_string(s.status));
      REQUIRE(s.ok());
      if (s.status == SolveStatus::converged) CHECK(s.grad_norm <= 1e-9 * (1 + q.y_obs().norm()));
      if (s.status == SolveStatus::at_origin) CHECK(check_zero_optimality(q));
      const Eigen::VectorXd sv = q.phi().transpose() * s.v_hat;
      for (Eigen::Index i = 0; i < sv.size(); ++i) {
        CHECK(prior.in_domain(sv[i]));
        CHECK(hull.in_closure(prior.log_laplace_deriv(sv[i])));
      }
    }
  }
}

TEST_CASE("gaussian prior matches the linear system") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + trial % 5;
    const int n = 20 + 3 * trial;
    const double mu0 = trial % 2 ? 0.0 : 0.7, sigma = 0.5 + 0.1 * (trial % 4);
    const Eigen::MatrixXd phi = oracle::random_matrix(rng, k, n);
    const Eigen::VectorXd y = oracle::random_vector(rng, k);
    const DualProblem p(phi, y, 0.0, ReferenceMeasure::gaussian(mu0, sigma));
    const Eigen::MatrixXd M = phi * phi.transpose() / n;
    const Eigen::VectorXd expected =
        M.ldlt().solve(y - mu0 * phi.rowwise().mean()) / (sigma * sigma);
    const DualSolution s = solve(p);
    CHECK(s.status == SolveStatus::converged);
    CHECK((s.v_hat - expected).norm() <= 1e-8);
  }
}

TEST_CASE("objective is convex along random segments") {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> unit(0, 1);
  for (int trial = 0; trial < 500; ++trial) {
    const auto prior = all_priors()[static_cast<std::size_t>(trial % 5)];
    const DualProblem p = random_problem(rng, prior, 3, 20, 0.3);
    const Eigen::VectorXd a = oracle::random_vector(rng, 3), b = oracle::random_vector(rng, 3);
    CHECK(objective(p, 0.5 * (a + b)) <= 0.5 * (objective(p, a) + objective(p, b)) + 1e-9);
    const double lambda = unit(rng);
    CHECK(objective(p, lambda * a + (1 - lambda) * b) <=
          lambda * objective(p, a) + (1 - lambda) * objective(p, b) + 1e-9);
  }
}

TEST_CASE("scaling equivariance") {
  std::mt19937_64 rng(11);
  for (const auto& prior : {ReferenceMeasure::uniform(0, 2), ReferenceMeasure::two_point(1, 0.4),
                            ReferenceMeasure::gaussian(0.2, 1)}) {
    const Eigen::MatrixXd phi = oracle::random_matrix(rng, 3, 80, 0, 1);
    const Eigen::VectorXd y = phi * Eigen::VectorXd::Constant(80, 0.75 * prior.mean()) / 80.0;
    const DualProblem p(phi, y, 0.02, prior);
    const DualSolution base = solve(p);
    REQUIRE(base.status == SolveStatus::converged);
    for (double c : {0.5, 3.0}) {
      const DualProblem q(c * phi, c * y, c * 0.02, prior);
      const DualSolution scaled = solve(q);
      REQUIRE(scaled.status == SolveStatus::converged);
      CHECK((scaled.v_hat - base.v_hat / c).norm() <= 1e-8 * (1 + base.v_hat.norm()));
      const auto w1 = amem_estimate(base.v_hat, std::vector<double>(80, 0.0), phi, prior).weights();
      const auto w2 = amem_estimate(scaled.v_hat, std::vector<double>(80, 0.0), Eigen::MatrixXd(c * phi), prior).weights();
      for (std::size_t i = 0; i < w1.size(); ++i) CHECK(w2[i] == doctest::Approx(w1[i]).epsilon(1e-8));
    }
  }
}

TEST_CASE("permutation invariance") {
  std::mt19937_64 rng(12);
  for (const auto& prior : all_priors()) {
    const Eigen::MatrixXd phi = oracle::random_matrix(rng, 3, 50, 0, 1);
    const Eigen::VectorXd y = phi * Eigen::VectorXd::Constant(50, prior.mean() * 1.1 + 0.05) / 50.0;
    const DualSolution a = solve(DualProblem(phi, y, 0.01, prior));
    std::vector<int> perm(50);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd shuffled(3, 50);
    for (int i = 0; i < 50; ++i) shuffled.col(i) = phi.col(perm[static_cast<std::size_t>(i)]);
    const DualSolution b = solve(DualProblem(shuffled, y, 0.01, prior));
    INFO(prior.describe());
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    CHECK((a.v_hat - b.v_hat).norm() <= 1e-10);
  }
}

TEST_CASE("rank deficiency is flagged but solved") {
  Eigen::MatrixXd phi(2, 30);
  for (int i = 0; i < 30; ++i) phi.col(i) = Eigen::Vector2d(i / 30.0, 2 * i / 30.0);
  const DualProblem p(phi, phi * Eigen::VectorXd::Constant(30, 0.9) / 30.0, 0.0, ReferenceMeasure::uniform(0, 2));
  CHECK_FALSE(p.full_rank());
  const DualSolution s = solve(p);
  CHECK(s.rank_deficient);
  CHECK(s.ok());
}

TEST_CASE("unreachable observation is reported, not silently zeroed") {
  const DualProblem p(Eigen::MatrixXd::Ones(1, 4), Eigen::VectorXd::Constant(1, 5.0), 0.1,
                      ReferenceMeasure::two_point(1, 0.5));
  const DualSolution s = solve(p);
  CHECK(s.status == SolveStatus::infeasible_direction);
  CHECK_FALSE(s.ok());
}

TEST_CASE("exponential prior stays inside its domain") {
  std::mt19937_64 rng(13);
  const auto prior = ReferenceMeasure::exponential(1.0);
  const Eigen::MatrixXd phi = oracle::random_matrix(rng, 2, 40, 0.5, 1.5);
  // Targets near the mean of large weights push <v, Phi> towards the pole at 1.
  const Eigen::VectorXd y = phi * Eigen::VectorXd::Constant(40, 25.0) / 40.0;
  const DualSolution s = solve(DualProblem(phi, y, 0.0, prior));
  REQUIRE(s.status == SolveStatus::converged);
  const Eigen::VectorXd sv = phi.transpose() * s.v_hat;
  CHECK(sv.maxCoeff() < 1.0);
}

TEST_CASE("population solve examples") {
  const auto prior = ReferenceMeasure::gaussian(0, 1);
  const MomentMap one = [](double) { return Eigen::VectorXd::Ones(1); };
  const DualSolution s =
      population_solve(one, uniform_quadrature(16, 0, 1), Observation(Eigen::VectorXd::Constant(1, 0.8), 0.0), prior);
  CHECK(std::abs(s.v_hat[0] - 0.8) <= 1e-12);

  const auto uni = ReferenceMeasure::uniform(0, 2);
  const MomentMap power = OperatorSpec::power_moments(3).bind();
  const Observation obs(Eigen::Vector3d(0.55, 0.36, 0.27), 0.01);
  const DualSolution q64 = population_solve(power, uniform_quadrature(64, 0, 1), obs, uni);
  const DualSolution q128 = population_solve(power, uniform_quadrature(128, 0, 1), obs, uni);
  REQUIRE(q64.status == SolveStatus::converged);
  REQUIRE(q128.status == SolveStatus::converged);
  CHECK(q64.v_hat.norm() > 0.1);
  CHECK((q64.v_hat - q128.v_hat).norm() < 1e-10);
}

TEST_CASE("large-sample solve approaches the population solution") {
  const auto uni = ReferenceMeasure::uniform(0, 2);
  const auto op = OperatorSpec::power_moments(3);
  const Observation obs(Eigen::Vector3d(0.55, 0.36, 0.27), 0.01);
  const DualSolution star = population_solve(op.bind(), uniform_quadrature(256, 0, 1), obs, uni);
  REQUIRE(star.ok());
  RandomStream rng(99, "atoms", 0);
  std::vector<double> atoms(100000);
  for (double& x : atoms) x = rng.uniform();
  const DualSolution s = solve(DualProblem(op.eval_columns(atoms), obs, uni));
  REQUIRE(s.ok());
  MESSAGE("||v_hat - v*|| = ", (s.v_hat - star.v_hat).norm());
  CHECK((s.v_hat - star.v_hat).norm() < 0.02);
}

TEST_CASE("feasibility examples") {
  std::mt19937_64 rng(14);
  const auto tp = ReferenceMeasure::two_point(1, 0.5);
  const Eigen::MatrixXd phi = oracle::random_matrix(rng, 3, 40, -1, 1);
  std::uniform_real_distribution<double> unit(0, 1);
  Eigen::VectorXd z(40);
  for (Eigen::Index i = 0; i < 40; ++i) z[i] = unit(rng);
  z[0] = 0.0;
  z[1] = 1.0;
  CHECK(feasibility(DualProblem(phi, phi * z / 40.0, 0.0, tp)));

  const DualProblem far(Eigen::MatrixXd::Ones(1, 10), Eigen::VectorXd::Constant(1, 5.0), 0.1, tp);
  const FeasibilityResult r = check_feasibility(far);
  CHECK_FALSE(r.feasible);
  CHECK(r.lower_bound > 0.01);
  CHECK(r.min_distance_sq == doctest::Approx(16.0).epsilon(1e-6));

  CHECK(feasibility(DualProblem(phi, Eigen::Vector3d(50, -80, 3), 0.0, ReferenceMeasure::gaussian(0, 1))));
  // Within eta of the reachable interval [0, 1].
  CHECK(feasibility(DualProblem(Eigen::MatrixXd::Ones(1, 10), Eigen::VectorXd::Constant(1, 1.05), 0.1, tp)));
}

// The quadratic f(theta) = |theta|^2 perturbed by a bump of height 2 eps
// sitting sqrt(eps) away from the minimiser. Strong convexity with modulus 2
// gives |argmin f_n - argmin f| <= sqrt(2) sqrt(|f - f_n|_inf).
TEST_CASE("argmin stability on the quadratic family") {
  const double bound = std::sqrt(2.0);
  for (int dim : {1, 2}) {
    double worst = 0.0;
    for (double eps : {1e-2, 1e-4, 1e-6}) {
      const double r = std::sqrt(eps) / 2;
      Eigen::Vector2d center(std::sqrt(eps), 0.0);
      if (dim == 2) center = Eigen::Vector2d(1, 1).normalized() * std::sqrt(eps);
      auto f = [&](const Eigen::Vector2d& th) { return th.squaredNorm(); };
      auto fn = [&](const Eigen::Vector2d& th) {
        return f(th) - 2 * eps * std::max(0.0, 1 - (th - center).norm() / r);
      };
      // Dense grid over a window of 10 sqrt(eps) around the origin.
      const double half = 10 * std::sqrt(eps);
      const int cells = dim == 1 ? 200001 : 1201;
      double best = INFINITY, sup = 0.0;
      Eigen::Vector2d arg = Eigen::Vector2d::Zero();
      for (int i = 0; i < cells; ++i) {
        for (int j = 0; j < (dim == 1 ? 1 : cells); ++j) {
          Eigen::Vector2d th(-half + 2 * half * i / (cells - 1), dim == 1 ? 0.0 : -half + 2 * half * j / (cells - 1));
          const double v = fn(th);
          sup = std::max(sup, std::abs(v - f(th)));
          if (v < best) {
            best = v;
            arg = th;
          }
        }
      }
      const double displacement = arg.norm();
      const double ratio = displacement / std::sqrt(sup);
      MESSAGE("dim ", dim, " eps ", eps, ": displacement ", displacement, ", sup ", sup, ", ratio ", ratio);
      CHECK(sup == doctest::Approx(2 * eps).epsilon(1e-3));
      CHECK(displacement > 0.1 * std::sqrt(eps));
      worst = std::max(worst, ratio);
    }
    CHECK(worst <= bound);
  }
}

TEST_CASE("empirical dual solution converges at the square-root rate") {
  ExperimentConfig cfg;
  cfg.seed = 31;
  cfg.prior = ReferenceMeasure::uniform(0, 2);
  cfg.op = OperatorSpec::power_moments(3);
  cfg.truth = TruthDensity{TruthKind::ramp, {0.4, 1.6}, 0.0, 1.0};
  cfg.eta = 0.01;
  const Eigen::VectorXd y = clean_moment(cfg);
  std::vector<double> medians;
  for (int n : {100, 1000, 10000}) {
    std::vector<double> errors;
    for (std::uint64_t rep = 0; rep < 40; ++rep) {
      const Observation obs(y + draw_noise(cfg.seed, rep, 3, cfg.eta), cfg.eta);
      const DualSolution star = population_solve(cfg.op.bind(), uniform_quadrature(256, 0, 1), obs, cfg.prior);
      const auto atoms = sample_px(cfg, "ratio", rep * 100000 + static_cast<std::uint64_t>(n), n);
      const DualSolution s = solve(DualProblem(cfg.op.eval_columns(atoms), obs, cfg.prior));
      if (s.ok() && star.ok()) errors.push_back((s.v_hat - star.v_hat).norm());
    }
    medians.push_back(median(errors));
  }
  for (std::size_t i = 1; i < medians.size(); ++i) {
    const double ratio = medians[i] / medians[i - 1];
    MESSAGE("median ratio ", ratio);
    CHECK(ratio >= 0.2);
    CHECK(ratio <= 0.8);
  }
}

TEST_CASE("population dual error is linear in the operator error") {
  const auto file = ConfigFile::parse(R"(
seed = 5
prior = "uniform"
prior_params = [0.0, 2.0]
operator = "parametric"
family = "polynomial_drift"
operator_k = 3
t_obs = 0.5
t_range = [-1.0, 2.0]
design_sampling = "stratified"
design_size = 1000
truth = "ramp"
truth_params = [0.4, 1.6]
eta = 0.01
bandwidth_grid = [0.32, 0.2, 0.125, 0.1]
replications = 10
eval_sample = 500
)");
  const RateReport r = rate_study_m(ExperimentConfig::from_file(file));
  std::vector<std::pair<double, double>> pts;
  for (std::size_t g = 0; g < r.grid.size(); ++g) pts.emplace_back(r.grid[g], r.v_error_medians[g]);
  const SlopeFit fit = fit_slope(pts);
  MESSAGE("slope of ||v_m - v*|| against e_m: ", fit.slope);
  CHECK(fit.slope >= 0.7);
  CHECK(fit.slope <= 1.3);
}
