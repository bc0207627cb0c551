#include <filesystem>

#include "doctest.h"
#include "raingraph/idw.hpp"

using namespace raingraph;
using idw::GridSpec;
using idw::StationValue;

TEST_CASE("a cell on a station takes the station value exactly") {
    std::vector<StationValue> st{{10.0, 100.0, 42.0}, {10.5, 100.5, 7.0}};
    GridSpec spec{100.0, 10.0, 6, 6, 0.1};
    const auto raster = idw::idw_interpolate(st, spec, 2.0);
    CHECK(raster.values(0, 0) == 42.0);
    CHECK(raster.values(5, 5) == 7.0);
}

TEST_CASE("single station gives a constant raster") {
    std::vector<StationValue> st{{10.0, 100.0, 5.5}};
    GridSpec spec{99.0, 9.0, 8, 8, 0.25};
    const auto raster = idw::idw_interpolate(st, spec, 2.0);
    CHECK(raster.values.minCoeff() == doctest::Approx(5.5));
    CHECK(raster.values.maxCoeff() == doctest::Approx(5.5));
}

TEST_CASE("midpoint of two stations averages them under p=2") {
    std::vector<StationValue> st{{10.0, 100.0, 0.0}, {10.0, 100.2, 10.0}};
    GridSpec spec{100.1, 10.0, 1, 1, 0.1};
    const auto raster = idw::idw_interpolate(st, spec, 2.0);
    CHECK(raster.values(0, 0) == doctest::Approx(5.0));
}

TEST_CASE("raster stays inside the station value range") {
    std::vector<StationValue> st{{10.0, 100.0, 1.0}, {10.4, 100.4, 9.0}, {10.2, 100.3, 4.0}};
    GridSpec spec{99.8, 9.8, 10, 10, 0.1};
    const auto raster = idw::idw_interpolate(st, spec, 2.0);
    CHECK(raster.values.minCoeff() >= 1.0);
    CHECK(raster.values.maxCoeff() <= 9.0);
}

TEST_CASE("empty station set and bad power rejected") {
    CHECK_THROWS(idw::idw_interpolate({}, GridSpec{}, 2.0));
    CHECK_THROWS(idw::idw_interpolate({{10, 100, 1}}, GridSpec{}, 0.0));
}

TEST_CASE("renderer emits image plus CSV and the CSV round-trips exactly") {
    std::vector<StationValue> st{{10.0, 100.0, 0.0}, {10.4, 100.4, 12.37}};
    GridSpec spec{99.9, 9.9, 7, 6, 0.1};
    const auto raster = idw::idw_interpolate(st, spec, 2.0);

    const auto prefix = (std::filesystem::temp_directory_path() / "idw_render_test").string();
    const auto rendered = idw::render_map(raster, prefix);
    CHECK_FALSE(rendered.degenerate);
    CHECK(std::filesystem::exists(rendered.image_path));
    CHECK(rendered.image_path.find("_min0.00") != std::string::npos);
    CHECK(rendered.image_path.find("_max12.37") != std::string::npos);

    const auto back = idw::read_raster_csv(prefix + ".csv");
    CHECK(back.spec.n_lon == raster.spec.n_lon);
    CHECK(back.spec.n_lat == raster.spec.n_lat);
    CHECK((back.values - raster.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("degenerate raster renders flat with a warning flag") {
    idw::Raster raster;
    raster.spec = GridSpec{100.0, 10.0, 4, 4, 0.1};
    raster.values = Eigen::MatrixXd::Zero(4, 4);
    const auto prefix = (std::filesystem::temp_directory_path() / "idw_flat_test").string();
    const auto rendered = idw::render_map(raster, prefix);
    CHECK(rendered.degenerate);
    const auto back = idw::read_raster_csv(prefix + ".csv");
    CHECK(back.values.cwiseAbs().maxCoeff() == 0.0);
}
