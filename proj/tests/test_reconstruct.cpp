#include <doctest.h>

#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "amem/reconstruct.hpp"
#include "oracles.hpp"

using namespace amem;

namespace {

std::vector<double> atom_labels(Eigen::Index n) {
  std::vector<double> a(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<double>(i);
  return a;
}

// Moment of the interior weights z_i = Lambda'(<u, Phi_i>), so the target is
// reachable for every eta.
Eigen::VectorXd reachable_target(std::mt19937_64& rng, const Eigen::MatrixXd& phi, const ReferenceMeasure& prior) {
  const Eigen::VectorXd u = oracle::random_vector(rng, phi.rows(), -4, 4);
  const Eigen::VectorXd s = phi.transpose() * u;
  Eigen::VectorXd z(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) z[i] = prior.log_laplace_deriv(s[i]);
  return phi * z / static_cast<double>(s.size());
}

}  // namespace

TEST_CASE("amem_estimate examples") {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd phi = oracle::random_matrix(rng, 3, 20);
  for (const auto& prior : {ReferenceMeasure::uniform(0, 2), ReferenceMeasure::poisson(1.5),
                            ReferenceMeasure::two_point(3, 0.2)}) {
    const auto est = amem_estimate(Eigen::VectorXd::Zero(3), atom_labels(20), phi, prior);
    for (double w : est.weights()) CHECK(w == doctest::Approx(prior.mean()).epsilon(1e-14));
  }

  const MomentMap one = [](double) { return Eigen::VectorXd::Ones(1); };
  const auto g = amem_estimate(Eigen::VectorXd::Constant(1, 0.8), {0.1, 0.5, 0.9}, one, ReferenceMeasure::gaussian(0, 1));
  for (double w : g.weights()) CHECK(w == doctest::Approx(0.8));

  const auto tp = ReferenceMeasure::two_point(1, 0.5);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd v = oracle::random_vector(rng, 3, -5, 5);
    const auto est = amem_estimate(v, atom_labels(20), phi, tp);
    for (double w : est.weights()) {
      CHECK(w > 0.0);
      CHECK(w < 1.0);
    }
  }
  CHECK_THROWS(amem_estimate(Eigen::VectorXd::Zero(2), atom_labels(20), phi, tp));
}

TEST_CASE("residual examples") {
  const MomentMap id = [](double x) { return Eigen::VectorXd::Constant(1, x); };
  const DiscreteMeasure mu({1.0, 2.0}, {1.0, 1.0});
  CHECK(residual(mu, id, Observation(Eigen::VectorXd::Constant(1, 1.5), 0.7)) == 0.0);
  CHECK(residual(mu, id, Observation(Eigen::VectorXd::Constant(1, 2.0), 0.3)) == doctest::Approx(0.2));
  CHECK(residual(Eigen::Vector2d(0.3, 0.4), Observation(Eigen::Vector2d(0, 0), 0.1)) == doctest::Approx(0.4));

  // Soft-threshold case: the achieved moment 0.5 lies on the boundary of [0.5, 1.1].
  const DualProblem p(Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXd::Constant(1, 0.8), 0.3,
                      ReferenceMeasure::gaussian(0, 1));
  const DualSolution s = solve(p);
  const auto est = amem_estimate(s.v_hat, {0.0, 1.0}, p.phi(), p.prior());
  const EstimateSummary sum = summarize(s, est, p.phi(), Observation(p.y_obs(), p.eta()), p.prior());
  CHECK(sum.residual <= 1e-6);
  CHECK(sum.achieved_moment[0] == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("achieved moment sits on the boundary of the noise ball") {
  std::mt19937_64 rng(2);
  int boundary = 0, inside = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto prior = trial % 2 ? ReferenceMeasure::uniform(0, 2) : ReferenceMeasure::two_point(1, 0.3);
    const Eigen::MatrixXd phi = oracle::random_matrix(rng, 3, 60, 0, 1);
    const Eigen::VectorXd y = reachable_target(rng, phi, prior);
    const double eta = 0.05 * (trial % 3);
    const Observation obs(y, eta);
    const DualSolution s = solve(DualProblem(phi, obs, prior));
    INFO("trial ", trial, " status ", to_string(s.status), " grad ", s.grad_norm, " iters ", s.iterations);
    REQUIRE(s.ok());
    const auto est = amem_estimate(s.v_hat, atom_labels(60), phi, prior);
    const EstimateSummary sum = summarize(s, est, phi, obs, prior);
    CHECK(sum.residual <= 1e-6);
    const double dist = (sum.achieved_moment - y).norm();
    if (s.status == SolveStatus::converged && eta > 0) {
      CHECK(std::abs(dist - eta) <= 1e-6);
      ++boundary;
    } else if (s.status == SolveStatus::at_origin) {
      CHECK(dist <= eta + 1e-12);
      ++inside;
    }
  }
  MESSAGE(boundary, " boundary and ", inside, " origin cases");
  CHECK(boundary > 50);
  CHECK(inside > 0);
}

TEST_CASE("gaussian entropy equals the minimum-norm value") {
  std::mt19937_64 rng(3);
  const auto prior = ReferenceMeasure::gaussian(0, 1);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 1 + trial % 4, n = 30 + trial;
    const Eigen::MatrixXd phi = oracle::random_matrix(rng, k, n);
    const Eigen::VectorXd y = oracle::random_vector(rng, k);
    const Eigen::MatrixXd M = phi * phi.transpose() / n;
    const double expected = 0.5 * y.dot(M.ldlt().solve(y));
    const DualSolution s = solve(DualProblem(phi, y, 0.0, prior));
    REQUIRE(s.status == SolveStatus::converged);
    const auto est = amem_estimate(s.v_hat, atom_labels(n), phi, prior);
    CHECK(std::abs(entropy(est, prior).value() - expected) <= 1e-8 * (1 + expected));
  }
}

TEST_CASE("entropy does not increase with eta") {
  std::mt19937_64 rng(4);
  for (const auto& prior : {ReferenceMeasure::uniform(0, 2), ReferenceMeasure::two_point(1, 0.5),
                            ReferenceMeasure::gaussian(1, 0.5)}) {
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::MatrixXd phi = oracle::random_matrix(rng, 3, 80, 0, 1);
      const Eigen::VectorXd y = reachable_target(rng, phi, prior);
      double previous = INFINITY;
      for (int j = 0; j <= 5; ++j) {
        const double eta = 0.1 * j;
        const DualSolution s = solve(DualProblem(phi, y, eta, prior));
        REQUIRE(s.ok());
        const double e = entropy(amem_estimate(s.v_hat, atom_labels(80), phi, prior), prior).value();
        CHECK(e <= previous + 1e-9);
        previous = e;
      }
    }
  }
}

TEST_CASE("summary json") {
  const DualProblem p(Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXd::Constant(1, 0.8), 0.3,
                      ReferenceMeasure::gaussian(0, 1));
  const DualSolution s = solve(p);
  const auto est = amem_estimate(s.v_hat, {0.0, 1.0}, p.phi(), p.prior());
  std::stringstream ss;
  summarize(s, est, p.phi(), Observation(p.y_obs(), p.eta()), p.prior()).write_json(ss);
  const auto j = nlohmann::json::parse(ss.str());
  CHECK(j.at("status") == "converged");
  CHECK(j.at("v_hat").at(0).get<double>() == doctest::Approx(0.5));
  CHECK(j.at("entropy").get<double>() == doctest::Approx(0.125));
}
