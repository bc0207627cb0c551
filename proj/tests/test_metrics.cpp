#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "raingraph/metrics.hpp"

using namespace raingraph;

TEST_CASE("rmse identities") {
    CHECK(metrics::rmse({1, 2, 3}, {1, 2, 3}) == doctest::Approx(0.0));
    // residuals (3, 4): mean square 12.5
    CHECK(metrics::rmse({3, 4}, {0, 0}) == doctest::Approx(std::sqrt(12.5)));
    CHECK(metrics::rmse({5, 6, 7}, {3, 4, 5}) == doctest::Approx(2.0));
    CHECK_THROWS(metrics::rmse({}, {}));
}

TEST_CASE("accuracy uses MAPE for positive observations and reports the fallback") {
    auto r = metrics::accuracy({100.0}, {90.0});
    CHECK(r.value == doctest::Approx(90.0));
    CHECK(r.used_mape);

    r = metrics::accuracy({1, 2, 3}, {1, 2, 3});
    CHECK(r.value == doctest::Approx(100.0));

    r = metrics::accuracy({0.0, 10.0}, {0.0, 10.0});
    CHECK(r.value == doctest::Approx(100.0));
    CHECK_FALSE(r.used_mape);  // zero observation forces the SMAPE fallback
}

TEST_CASE("smape bounds and symmetry") {
    CHECK(metrics::smape({10.0}, {30.0}) == doctest::Approx(100.0));
    CHECK(metrics::smape({4, 5}, {4, 5}) == doctest::Approx(0.0));
    CHECK(metrics::smape({0.0}, {5.0}) == doctest::Approx(200.0));
    CHECK(metrics::smape({10, 0}, {2, 7}) == doctest::Approx(metrics::smape({2, 7}, {10, 0})));
    // both-zero pairs count as perfect terms
    CHECK(metrics::smape({0, 10}, {0, 10}) == doctest::Approx(0.0));
    CHECK_THROWS_AS(metrics::smape({0, 0}, {0, 0}), std::domain_error);
}

TEST_CASE("nse identities") {
    std::vector<double> obs{1, 2, 3, 4, 5};
    CHECK(metrics::nse(obs, obs) == doctest::Approx(1.0));
    std::vector<double> mean_pred(5, 3.0);
    CHECK(metrics::nse(obs, mean_pred) == doctest::Approx(0.0));
    std::vector<double> bad{10, -5, 12, -6, 14};
    CHECK(metrics::nse(obs, bad) < 0.0);
    CHECK_THROWS_AS(metrics::nse({2, 2, 2}, {1, 2, 3}), std::domain_error);
}

TEST_CASE("nse is invariant under a common affine rescaling") {
    std::vector<double> obs{3, 7, 2, 9, 4, 6};
    std::vector<double> pred{2.5, 6.0, 3.0, 8.0, 5.0, 5.5};
    const double base = metrics::nse(obs, pred);
    std::vector<double> obs2, pred2;
    for (double v : obs) obs2.push_back(2.5 * v + 7.0);
    for (double v : pred) pred2.push_back(2.5 * v + 7.0);
    CHECK(metrics::nse(obs2, pred2) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("evaluate aggregates equal the mean over member cells") {
    metrics::SampleSet a;
    a.station_id = "A";
    a.horizon = {1, 1, 2, 2};
    a.obs = {10, 12, 9, 14};
    a.pred = {9, 13, 10, 12};
    metrics::SampleSet b;
    b.station_id = "B";
    b.horizon = {1, 1, 2, 2};
    b.obs = {20, 25, 22, 30};
    b.pred = {19, 27, 20, 31};

    const auto table = metrics::evaluate({a, b});
    REQUIRE(table.cells.size() == 4);

    double rmse_sum = 0.0, acc_sum = 0.0, smape_sum = 0.0;
    for (const auto& cell : table.cells) {
        rmse_sum += cell.rmse;
        acc_sum += cell.accuracy;
        smape_sum += cell.smape;
    }
    CHECK(table.agg_rmse == doctest::Approx(rmse_sum / 4.0));
    CHECK(table.agg_accuracy == doctest::Approx(acc_sum / 4.0));
    CHECK(table.agg_smape == doctest::Approx(smape_sum / 4.0));

    REQUIRE(table.station_pooled.size() == 2);
    const double nse_mean = (metrics::nse(a.obs, a.pred) + metrics::nse(b.obs, b.pred)) / 2.0;
    CHECK(table.agg_nse == doctest::Approx(nse_mean));
}
