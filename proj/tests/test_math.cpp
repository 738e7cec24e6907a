#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fedgmm/math.hpp"

using namespace fedgmm;

namespace {

// Independent scalar oracle for the 1-D Gaussian log-density, evaluated in
// extended precision.
long double scalar_gauss_log_density(long double x, long double mu, long double var) {
    const long double two_pi = 6.283185307179586476925286766559L;
    return -0.5L * std::log(two_pi * var) - (x - mu) * (x - mu) / (2.0L * var);
}

Matrix random_symmetric(int d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = n(rng);
    return 0.5 * (a + a.transpose());
}

}  // namespace

TEST_CASE("gaussian_log_density at the mean, d=1, unit variance") {
    Vector x(1), mu(1);
    x << 0.0;
    mu << 0.0;
    Matrix sigma(1, 1);
    sigma << 1.0;
    REQUIRE(std::abs(gaussian_log_density(x, mu, sigma) - (-0.91893853320467274178)) < 1e-15);
}

TEST_CASE("gaussian_log_density at the mean, d=2, identity covariance") {
    Vector x(2), mu(2);
    x << 0.7, -0.3;
    mu << 0.7, -0.3;
    Matrix sigma = Matrix::Identity(2, 2);
    REQUIRE(std::abs(gaussian_log_density(x, mu, sigma) - (-1.8378770664093454836)) < 1e-15);
}

TEST_CASE("gaussian_log_density matches the scalar formula in 1-D") {
    // x=1, mu=-2, sigma = 1.5^2: value pinned by direct extended-precision
    // evaluation of the scalar density formula.
    Vector x(1), mu(1);
    x << 1.0;
    mu << -2.0;
    Matrix sigma(1, 1);
    sigma << 2.25;
    const double got = gaussian_log_density(x, mu, sigma);
    const double oracle = static_cast<double>(scalar_gauss_log_density(1.0L, -2.0L, 2.25L));
    REQUIRE(std::abs(got - oracle) < 1e-14);
    REQUIRE(std::abs(got - (-3.3244036413128371238)) < 1e-14);
}

TEST_CASE("gaussian_log_density rejects bad inputs") {
    Vector x(2), mu(2);
    x << 0.0, 1.0;
    mu << 0.0, 0.0;
    Matrix sigma = Matrix::Identity(2, 2);
    Vector bad = x;
    bad[0] = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(gaussian_log_density(bad, mu, sigma), std::invalid_argument);
    Vector short_mu(1);
    short_mu << 0.0;
    REQUIRE_THROWS_AS(gaussian_log_density(x, short_mu, sigma), std::invalid_argument);
    Matrix indefinite(2, 2);
    indefinite << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
    REQUIRE_THROWS_AS(gaussian_log_density(x, mu, indefinite), numeric_error);
}

TEST_CASE("factorization error names the component") {
    Matrix indefinite(2, 2);
    indefinite << 1.0, 2.0, 2.0, 1.0;
    Vector mu = Vector::Zero(2);
    try {
        GaussianDensity dens(mu, indefinite, "gaussian component 3");
        FAIL("expected numeric_error");
    } catch (const numeric_error& e) {
        REQUIRE(std::string(e.what()).find("gaussian component 3") != std::string::npos);
    }
}

TEST_CASE("gaussian density integrates to one in 1-D") {
    const double cases[][2] = {{0.0, 1.0}, {-2.0, 2.25}, {3.0, 0.25}};
    for (const auto& c : cases) {
        const double mu = c[0], var = c[1], sd = std::sqrt(var);
        Vector m(1);
        m << mu;
        Matrix s(1, 1);
        s << var;
        GaussianDensity dens(m, s);
        const int steps = 20000;
        const double lo = mu - 10 * sd, hi = mu + 10 * sd;
        const double h = (hi - lo) / steps;
        double integral = 0.0;
        for (int i = 0; i <= steps; ++i) {
            Vector x(1);
            x << lo + i * h;
            const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
            integral += w * std::exp(dens(x));
        }
        integral *= h;
        REQUIRE(std::abs(integral - 1.0) < 1e-4);
    }
}

TEST_CASE("batch gaussian log-density matches per-sample evaluation") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 1.0);
    const int d = 5, count = 40;
    Vector mu(d);
    for (int i = 0; i < d; ++i) mu[i] = n(rng);
    Matrix sigma = random_symmetric(d, 8);
    sigma = sigma * sigma.transpose() + Matrix::Identity(d, d);  // PD
    Matrix xs(count, d);
    for (int i = 0; i < count; ++i)
        for (int j = 0; j < d; ++j) xs(i, j) = n(rng);
    GaussianDensity dens(mu, sigma);
    Vector batch = dens(xs);
    for (int i = 0; i < count; ++i) {
        Vector x = xs.row(i).transpose();
        REQUIRE(std::abs(batch[i] - dens(x)) < 1e-12);
    }
}

TEST_CASE("log_sum_exp basics") {
    REQUIRE(log_sum_exp({0.0}) == 0.0);  // single element is exact
    REQUIRE(std::abs(log_sum_exp({std::log(1.0), std::log(1.0)}) - std::log(2.0)) < 1e-15);
    REQUIRE(std::abs(log_sum_exp({-1000.0, -1000.0, -1000.0}) - (-1000.0 + std::log(3.0))) <
            1e-12);
}

TEST_CASE("log_sum_exp error cases") {
    Vector empty(0);
    REQUIRE_THROWS_AS(log_sum_exp(empty), std::invalid_argument);
    const double inf = std::numeric_limits<double>::infinity();
    REQUIRE_THROWS_AS(log_sum_exp({-inf, -inf}), numeric_error);
}

TEST_CASE("log_sum_exp shift invariance") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n(0.0, 10.0);
    for (int trial = 0; trial < 20; ++trial) {
        Vector v(7);
        for (int i = 0; i < 7; ++i) v[i] = n(rng);
        const double c = n(rng);
        Vector shifted = v.array() + c;
        REQUIRE(std::abs(log_sum_exp(shifted) - c - log_sum_exp(v)) < 1e-12);
    }
}

TEST_CASE("rowwise_log_sum_exp reports degenerate rows") {
    Matrix m(2, 2);
    m << 0.0, 1.0, kNegInf, kNegInf;
    Eigen::Index bad = -1;
    Vector z = rowwise_log_sum_exp(m, &bad);
    REQUIRE(bad == 1);
    REQUIRE(std::abs(z[0] - log_sum_exp({0.0, 1.0})) < 1e-15);
}

TEST_CASE("repair_psd leaves a PSD matrix untouched") {
    Matrix identity = Matrix::Identity(3, 3);
    REQUIRE((repair_psd(identity, 1e-6) - identity).norm() == 0.0);
}

TEST_CASE("repair_psd floors the zero matrix") {
    Matrix zero = Matrix::Zero(3, 3);
    Matrix repaired = repair_psd(zero, 1e-6);
    REQUIRE((repaired - 1e-6 * Matrix::Identity(3, 3)).norm() < 1e-18);
}

TEST_CASE("repair_psd on a rank-1 outer product") {
    // For unit v, vv' has eigenvalue 1 along v and 0 elsewhere; flooring must
    // produce vv' + floor * (I - vv') exactly (up to solver precision).
    Vector v(4);
    v << 0.5, -0.5, 0.5, 0.5;  // unit norm
    Matrix outer = v * v.transpose();
    const double floor = 1e-6;
    Matrix repaired = repair_psd(outer, floor);
    Matrix expected = outer + floor * (Matrix::Identity(4, 4) - outer);
    REQUIRE((repaired - expected).norm() < 1e-12);
}

TEST_CASE("repair_psd is idempotent and yields factorizable output") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        Matrix m = random_symmetric(5, seed);  // indefinite in general
        Matrix once = repair_psd(m, 1e-6);
        Matrix twice = repair_psd(once, 1e-6);
        REQUIRE((twice - once).norm() < 1e-12);
        Eigen::LLT<Matrix> llt(once);
        REQUIRE(llt.info() == Eigen::Success);
    }
}

TEST_CASE("repair_psd symmetrizes") {
    Matrix m(2, 2);
    m << 4.0, 1.0, 3.0, 5.0;
    Matrix repaired = repair_psd(m, 1e-6);
    REQUIRE((repaired - repaired.transpose()).norm() < 1e-15);
    REQUIRE(std::abs(repaired(0, 1) - 2.0) < 1e-12);  // (1+3)/2
}

TEST_CASE("repair_psd rejects non-square and non-finite input") {
    Matrix rect(2, 3);
    rect.setZero();
    REQUIRE_THROWS_AS(repair_psd(rect, 1e-6), std::invalid_argument);
    Matrix bad(2, 2);
    bad << 1.0, 0.0, 0.0, std::numeric_limits<double>::infinity();
    REQUIRE_THROWS_AS(repair_psd(bad, 1e-6), std::invalid_argument);
}
