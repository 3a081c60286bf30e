#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "test_util.hpp"
#include "triad/simulate.hpp"

using namespace triad;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Composite-Simpson quadrature; n panels (even), generic integrand.
double simpson(const std::function<double(double)>& g, double lo, double hi, int n = 2000) {
  const double h = (hi - lo) / n;
  double acc = g(lo) + g(hi);
  for (int i = 1; i < n; ++i) acc += g(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

// Central t density with d degrees of freedom, direct formula.
double central_t_pdf(double y, double d) {
  const double c = std::exp(std::lgamma((d + 1) / 2) - std::lgamma(d / 2)) / std::sqrt(d * M_PI);
  return c * std::pow(1.0 + y * y / d, -(d + 1) / 2);
}

double sample_mean(const Eigen::Ref<const VectorXd>& v) { return v.mean(); }

}  // namespace

TEST_CASE("normal cdf matches pinned reference values") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(normal_cdf(1.96) == doctest::Approx(0.9750021048517795).epsilon(1e-12));
  CHECK(normal_cdf(-1.0) == doctest::Approx(0.15865525393145707).epsilon(1e-12));
  CHECK(normal_cdf(1.0) + normal_cdf(-1.0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("Owen's T function against closed forms and quadrature") {
  // T(h, 1) = Phi(h)(1 - Phi(h))/2.
  for (double h : {0.0, 0.5, 1.3, 2.2}) {
    const double want = normal_cdf(h) * (1.0 - normal_cdf(h)) / 2.0;
    CHECK(owen_t(h, 1.0) == doctest::Approx(want).epsilon(1e-10));
  }
  // T(0, a) = arctan(a) / (2 pi).
  for (double a : {0.3, 1.0, 4.0}) {
    CHECK(owen_t(0.0, a) == doctest::Approx(std::atan(a) / (2.0 * M_PI)).epsilon(1e-12));
  }
  // Even in h, odd in a.
  CHECK(owen_t(-0.8, 2.0) == doctest::Approx(owen_t(0.8, 2.0)).epsilon(1e-13));
  CHECK(owen_t(0.8, -2.0) == doctest::Approx(-owen_t(0.8, 2.0)).epsilon(1e-13));
  // Direct quadrature of the defining integrand.
  const double h = 0.7, a = 2.3;
  const double direct = simpson(
      [h](double x) { return std::exp(-h * h * (1 + x * x) / 2) / (1 + x * x); }, 0.0, a, 4000);
  CHECK(owen_t(h, a) == doctest::Approx(direct / (2.0 * M_PI)).epsilon(1e-10));
}

TEST_CASE("skew-normal density, distribution, quantile, and mean agree") {
  // alpha = 0 collapses to the normal location family.
  for (double y : {-1.5, 0.0, 2.25}) {
    CHECK(skew_normal_pdf(y, 0.5, 0.0) == doctest::Approx(normal_pdf(y - 0.5)).epsilon(1e-13));
  }
  const double mu = -2.0, alpha = 5.0;
  // Unit mass and cdf consistency by quadrature.
  const double mass =
      simpson([&](double y) { return skew_normal_pdf(y, mu, alpha); }, mu - 10, mu + 10, 4000);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  const double at = -1.2;
  const double cdf_quad =
      simpson([&](double y) { return skew_normal_pdf(y, mu, alpha); }, mu - 10, at, 4000);
  CHECK(skew_normal_cdf(at, mu, alpha) == doctest::Approx(cdf_quad).epsilon(1e-9));
  // Quantile inverts the distribution function.
  for (double p : {0.05, 0.1, 0.35, 0.5, 0.8, 0.95}) {
    const double q = skew_normal_quantile(p, mu, alpha);
    CHECK(skew_normal_cdf(q, mu, alpha) == doctest::Approx(p).epsilon(1e-10));
  }
  // Mean: mu + delta sqrt(2/pi) with delta = alpha/sqrt(1+alpha^2).
  CHECK(skew_normal_mean(mu, alpha) == doctest::Approx(-1.2176098182445732).epsilon(1e-14));
  const double mean_quad =
      simpson([&](double y) { return y * skew_normal_pdf(y, mu, alpha); }, mu - 10, mu + 10, 4000);
  CHECK(skew_normal_mean(mu, alpha) == doctest::Approx(mean_quad).epsilon(1e-9));
}

TEST_CASE("noncentral t density against the central closed form and quadrature") {
  // mu = 0 reduces to the central t with the same degrees of freedom.
  for (double y : {-3.0, -0.4, 0.0, 1.7, 5.0}) {
    CHECK(noncentral_t_pdf(y, 0.0, 10.0) == doctest::Approx(central_t_pdf(y, 10.0)).epsilon(1e-9));
  }
  // Unit mass for a noncentral case.
  const double mass =
      simpson([](double y) { return noncentral_t_pdf(y, 1.3, 10.0); }, -20, 25, 6000);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
  // Mean factor sqrt(d/2) Gamma((d-1)/2) / Gamma(d/2) at d = 10.
  CHECK(noncentral_t_mean(1.0, 10.0) == doctest::Approx(1.0837223079391436).epsilon(1e-12));
  const double mean_quad =
      simpson([](double y) { return y * noncentral_t_pdf(y, 1.3, 10.0); }, -20, 25, 6000);
  CHECK(noncentral_t_mean(1.3, 10.0) == doctest::Approx(mean_quad).epsilon(1e-7));
}

TEST_CASE("design presets validate and bad parameters are rejected") {
  CHECK_NOTHROW(validate(Design::gaussian()));
  CHECK_NOTHROW(validate(Design::gaussian(0.2)));
  CHECK_NOTHROW(validate(Design::student_t(0.35)));
  CHECK_NOTHROW(validate(Design::hidden_chain()));

  auto bad_pi = Design::gaussian();
  bad_pi.pi << 0.6, 0.6;
  CHECK_THROWS_AS(validate(bad_pi), DomainError);

  auto bad_dof = Design::student_t();
  bad_dof.t_dof = 2.5;
  CHECK_THROWS_AS(validate(bad_dof), DomainError);
  bad_dof.t_dof = 2.0;
  CHECK_THROWS_AS(validate(bad_dof), DomainError);

  auto bad_means = Design::gaussian();
  bad_means.means = MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(validate(bad_means), DimensionError);

  auto bad_rows = Design::hidden_chain();
  bad_rows.transition(0, 0) = 0.9;  // row no longer sums to one
  CHECK_THROWS_AS(validate(bad_rows), DomainError);

  auto not_stationary = Design::hidden_chain();
  not_stationary.pi << 0.3, 0.7;  // symmetric chain only fixes (0.5, 0.5)
  CHECK_THROWS_AS(validate(not_stationary), DomainError);

  auto bad_skew = Design::hidden_chain();
  bad_skew.skew_alpha.resize(1);
  CHECK_THROWS_AS(validate(bad_skew), DimensionError);
}

TEST_CASE("truth density selects the design family") {
  const auto g = Design::gaussian();
  CHECK(g.means(0, 1) == 3.0);
  CHECK(truth_density(g, 0, 1, 3.0) == doctest::Approx(normal_pdf(0.0)).epsilon(1e-13));
  const auto t = Design::student_t();
  CHECK(truth_density(t, 2, 0, 1.1) == doctest::Approx(central_t_pdf(1.1, 10.0)).epsilon(1e-9));
  const auto h = Design::hidden_chain();
  CHECK(truth_density(h, 0, 0, -1.5) ==
        doctest::Approx(skew_normal_pdf(-1.5, -2.0, 5.0)).epsilon(1e-13));
  CHECK_THROWS_AS(truth_density(g, 3, 0, 0.0), DimensionError);
  CHECK_THROWS_AS(truth_density(g, 0, 2, 0.0), DimensionError);
}

TEST_CASE("degenerate mixture puts every draw in the first component") {
  auto d = Design::gaussian(1.0);  // pi = (1, 0)
  const auto draw = draw_mixture(d, 400, 9);
  REQUIRE(draw.y.rows() == 400);
  REQUIRE(draw.y.cols() == 3);
  for (int z : draw.labels) CHECK(z == 0);
  // All three coordinates then have the first component's zero location.
  for (Index i = 0; i < 3; ++i) {
    CHECK(std::abs(sample_mean(draw.y.col(i))) < 3.0 / std::sqrt(400.0));
  }
}

TEST_CASE("gaussian mixture draws match first-moment oracles") {
  const Index n = 100000;
  const auto draw = draw_mixture(Design::gaussian(), n, 31);
  // Variable 1 mixes N(0,1) and N(3,1) equally: mean 1.5, variance 3.25.
  const double se = std::sqrt(3.25 / n);
  CHECK(std::abs(sample_mean(draw.y.col(0)) - 1.5) < 3 * se);
  // Label frequency within 3 SE of one half.
  double ones = 0;
  for (int z : draw.labels) ones += z;
  CHECK(std::abs(ones / n - 0.5) < 3 * std::sqrt(0.25 / n));
}

TEST_CASE("t-mixture draws match the analytic noncentral mean") {
  const Index n = 100000;
  const auto draw = draw_mixture(Design::student_t(), n, 77);
  // Variable 2 mixes t10 centered at 0 and noncentral t10 with mu = 4:
  // mean (0 + 4 * 1.08372...) / 2, variance from E[T^2] = (1 + mu^2) d/(d-2).
  const double mean = noncentral_t_mean(4.0, 10.0) / 2.0;
  const double var = (1.25 + 17.0 * 1.25) / 2.0 - mean * mean;
  CHECK(std::abs(sample_mean(draw.y.col(1)) - mean) < 3 * std::sqrt(var / n));
}

TEST_CASE("identity transition freezes the latent path") {
  auto d = Design::hidden_chain();
  d.transition = MatrixXd::Identity(2, 2);
  const auto draw = draw_hmm(d, 300, 5);
  for (Index m = 0; m < 300; ++m) {
    CHECK(draw.path(m, 1) == draw.path(m, 0));
    CHECK(draw.path(m, 2) == draw.path(m, 0));
  }
}

TEST_CASE("hidden-chain draws match transition and emission oracles") {
  const Index n = 100000;
  const auto draw = draw_hmm(Design::hidden_chain(), n, 13);
  // Persistence frequency 0.8 between consecutive states.
  double stay = 0;
  for (Index m = 0; m < n; ++m) stay += draw.path(m, 1) == draw.path(m, 0);
  CHECK(std::abs(stay / n - 0.8) < 3 * std::sqrt(0.8 * 0.2 / n));
  // State-0 emissions have the skew-normal mean and variance
  // 1 - (2/pi) delta^2 with delta = 5/sqrt(26).
  double sum = 0, count = 0;
  for (Index m = 0; m < n; ++m) {
    if (draw.path(m, 1) == 0) {
      sum += draw.y(m, 1);
      count += 1;
    }
  }
  const double var = 1.0 - (2.0 / M_PI) * 25.0 / 26.0;
  CHECK(std::abs(sum / count - skew_normal_mean(-2.0, 5.0)) < 3 * std::sqrt(var / count));
}

TEST_CASE("draws are reproducible from the seed alone") {
  const auto a = draw_mixture(Design::gaussian(), 64, 2024);
  const auto b = draw_mixture(Design::gaussian(), 64, 2024);
  CHECK(std::memcmp(a.y.data(), b.y.data(), sizeof(double) * 64 * 3) == 0);
  CHECK(a.labels == b.labels);
  const auto c = draw_mixture(Design::gaussian(), 64, 2025);
  CHECK(std::memcmp(a.y.data(), c.y.data(), sizeof(double) * 64 * 3) != 0);

  const auto ha = draw_hmm(Design::hidden_chain(), 64, 8);
  const auto hb = draw_hmm(Design::hidden_chain(), 64, 8);
  CHECK(std::memcmp(ha.y.data(), hb.y.data(), sizeof(double) * 64 * 3) == 0);
  CHECK((ha.path - hb.path).cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("integrated-error experiment emits a full deterministic grid") {
  HarnessOptions opts;
  opts.mixture.fixed_kappa = 4;
  const std::vector<double> grid{0.3, 0.5};
  const auto rep = run_rmise(Design::gaussian(), grid, 2, 120, 11, opts);
  CHECK(rep.kind == "rmise");
  CHECK(rep.reps == 2);
  CHECK(rep.n == 120);
  CHECK(rep.master_seed == 11);
  CHECK(rep.failures == 0);
  REQUIRE(rep.rep_seeds.size() == 4);  // two grid points x two replications
  CHECK(rep.rep_seeds[0] != rep.rep_seeds[1]);
  REQUIRE(rep.rmise_cells.size() == 12);  // 2 grid x 3 variables x 2 components
  for (const auto& cell : rep.rmise_cells) {
    CHECK(cell.reps_ok == 2);
    CHECK(cell.rmise > 0);
    CHECK(std::isfinite(cell.rmise));
    CHECK(cell.mc_se >= 0);
    CHECK((cell.pi1 == 0.3 || cell.pi1 == 0.5));
  }

  // Same seed, three worker threads: bit-identical report.
  auto opts3 = opts;
  opts3.jobs = 3;
  const auto rep3 = run_rmise(Design::gaussian(), grid, 2, 120, 11, opts3);
  REQUIRE(rep3.rmise_cells.size() == rep.rmise_cells.size());
  for (std::size_t c = 0; c < rep.rmise_cells.size(); ++c) {
    CHECK(rep.rmise_cells[c].rmise == rep3.rmise_cells[c].rmise);
    CHECK(rep.rmise_cells[c].mc_se == rep3.rmise_cells[c].mc_se);
  }
}

TEST_CASE("Monte Carlo standard error shrinks like the root of the replication count") {
  HarnessOptions opts;
  opts.mixture.fixed_kappa = 4;
  const std::vector<double> grid{0.5};
  const auto small = run_rmise(Design::gaussian(), grid, 50, 200, 11, opts);
  const auto large = run_rmise(Design::gaussian(), grid, 200, 200, 11, opts);
  // Expected ratio 2 = sqrt(200/50); wide band since 50-rep SEs are noisy
  // (the two runs share their first 50 replication seeds).
  for (std::size_t c = 0; c < small.rmise_cells.size(); ++c) {
    const double ratio = small.rmise_cells[c].mc_se / large.rmise_cells[c].mc_se;
    CHECK(ratio > 1.2);
    CHECK(ratio < 3.4);
  }
}

TEST_CASE("estimation failures are counted and reported, not fatal") {
  HarnessOptions opts;
  opts.kappas = {1, 1, 1};  // one basis term cannot separate two components
  const auto rep = run_rmise(Design::gaussian(), {0.5}, 3, 150, 17, opts);
  CHECK(rep.failures == 3);
  REQUIRE(!rep.failure_messages.empty());
  CHECK(rep.failure_messages.front().find("replication") != std::string::npos);
  for (const auto& cell : rep.rmise_cells) {
    CHECK(cell.reps_ok == 0);
    CHECK(std::isnan(cell.rmise));
  }
}

TEST_CASE("harness rejects mismatched designs and degenerate settings") {
  CHECK_THROWS_AS(run_rmise(Design::hidden_chain(), {0.5}, 2, 50, 1), DomainError);
  CHECK_THROWS_AS(run_rmise(Design::gaussian(), {0.0}, 2, 50, 1), DomainError);
  CHECK_THROWS_AS(run_rmise(Design::gaussian(), {1.0}, 2, 50, 1), DomainError);
  CHECK_THROWS_AS(run_rmise(Design::gaussian(), {0.5}, 1, 50, 1), DimensionError);
  CHECK_THROWS_AS(run_coverage(Design::gaussian(), 50, 500, 1), DomainError);
  CHECK_THROWS_AS(run_coverage(Design::hidden_chain(), 49, 500, 1), DimensionError);
  HarnessOptions bad_level;
  bad_level.level = 1.0;
  CHECK_THROWS_AS(run_coverage(Design::hidden_chain(), 50, 500, 1, bad_level), DomainError);
}

TEST_CASE("coverage experiment reports both emissions at all deciles") {
  const auto rep = run_coverage(Design::hidden_chain(), 50, 800, 3);
  CHECK(rep.kind == "coverage");
  CHECK(rep.failures == 0);
  REQUIRE(rep.rep_seeds.size() == 50);
  REQUIRE(rep.coverage_cells.size() == 18);
  Index at = 0;
  for (Index j = 0; j < 2; ++j) {
    for (Index t = 0; t < 9; ++t, ++at) {
      const auto& cell = rep.coverage_cells[at];
      CHECK(cell.component == j);
      CHECK(cell.percentile == doctest::Approx(0.1 * (t + 1)).epsilon(1e-12));
      const double mu = j == 0 ? -2.0 : 2.0, alpha = j == 0 ? 5.0 : -5.0;
      CHECK(cell.y == doctest::Approx(skew_normal_quantile(cell.percentile, mu, alpha)));
      CHECK(cell.truth == doctest::Approx(skew_normal_pdf(cell.y, mu, alpha)));
      CHECK(cell.reps_ok == 50);
      CHECK(cell.coverage >= 0);
      CHECK(cell.coverage <= 1);
      CHECK(cell.mean_se > 0);
      CHECK(cell.sd_point > 0);
      // The feasible estimator tracks the true-label benchmark closely.
      CHECK(std::abs(cell.mean_fhat - cell.mean_infeasible) < 0.06);
    }
  }

  // Deterministic across worker threads.
  HarnessOptions opts2;
  opts2.jobs = 2;
  const auto rep2 = run_coverage(Design::hidden_chain(), 50, 800, 3, opts2);
  for (std::size_t c = 0; c < rep.coverage_cells.size(); ++c) {
    CHECK(rep.coverage_cells[c].coverage == rep2.coverage_cells[c].coverage);
    CHECK(rep.coverage_cells[c].mean_se == rep2.coverage_cells[c].mean_se);
    CHECK(rep.coverage_cells[c].sd_point == rep2.coverage_cells[c].sd_point);
  }
}
