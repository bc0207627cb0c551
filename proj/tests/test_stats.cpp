#include <cmath>
#include <random>

#include "doctest.h"
#include "raingraph/stats.hpp"

using namespace raingraph;

TEST_CASE("percentile interpolates between order statistics") {
    std::vector<double> v;
    for (int i = 1; i <= 100; ++i) v.push_back(i);
    CHECK(stats::percentile(v, 95.0) == doctest::Approx(95.05).epsilon(1e-12));
    CHECK(stats::percentile(v, 0.0) == doctest::Approx(1.0));
    CHECK(stats::percentile(v, 100.0) == doctest::Approx(100.0));
    CHECK(stats::percentile({7.0}, 50.0) == doctest::Approx(7.0));
    CHECK(stats::percentile({1.0, 2.0}, 50.0) == doctest::Approx(1.5));
}

TEST_CASE("percentile rejects bad input") {
    CHECK_THROWS(stats::percentile({}, 50.0));
    CHECK_THROWS(stats::percentile({1.0}, 101.0));
}

TEST_CASE("pearson basics") {
    std::vector<double> x{1, 2, 3, 4, 5};
    std::vector<double> y{2, 4, 6, 8, 10};
    CHECK(stats::pearson(x, y) == doctest::Approx(1.0));
    std::vector<double> yn{10, 8, 6, 4, 2};
    CHECK(stats::pearson(x, yn) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(stats::pearson(x, {1, 1, 1, 1, 1}), std::domain_error);
}

TEST_CASE("chi-square survival matches known quantiles") {
    // 95th percentile of chi2(1) is 3.8415, of chi2(2) is 5.9915, of chi2(3) is 7.8147.
    CHECK(stats::chi_square_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(stats::chi_square_sf(5.991464547107979, 2) == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(stats::chi_square_sf(7.814727903251179, 3) == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(stats::chi_square_sf(0.0, 2) == doctest::Approx(1.0));
    // chi2(2) is Exp(1/2): SF(x) = exp(-x/2).
    for (double x : {0.5, 1.0, 3.0, 10.0})
        CHECK(stats::chi_square_sf(x, 2) == doctest::Approx(std::exp(-x / 2)).epsilon(1e-10));
}

TEST_CASE("ols matches the normal equations") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n01(0.0, 1.0);
    Eigen::MatrixXd x(40, 3);
    Eigen::VectorXd y(40);
    for (long r = 0; r < 40; ++r) {
        x(r, 0) = 1.0;
        x(r, 1) = n01(rng);
        x(r, 2) = n01(rng);
        y(r) = 2.0 + 0.5 * x(r, 1) - 1.5 * x(r, 2) + 0.1 * n01(rng);
    }
    const auto fit = stats::ols(x, y);
    CHECK(fit.full_rank);
    const Eigen::VectorXd beta_ne = (x.transpose() * x).ldlt().solve(x.transpose() * y);
    CHECK((fit.beta - beta_ne).norm() < 1e-8);
    const double rss_ne = (y - x * beta_ne).squaredNorm();
    CHECK(fit.rss == doctest::Approx(rss_ne).epsilon(1e-10));
}

TEST_CASE("ols flags collinear designs") {
    Eigen::MatrixXd x(10, 2);
    for (long r = 0; r < 10; ++r) {
        x(r, 0) = r;
        x(r, 1) = 2.0 * r;  // exact multiple
    }
    Eigen::VectorXd y = x.col(0);
    CHECK_FALSE(stats::ols(x, y).full_rank);
}
