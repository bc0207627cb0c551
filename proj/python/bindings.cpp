#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "raingraph/evt.hpp"
#include "raingraph/graph.hpp"
#include "raingraph/idw.hpp"
#include "raingraph/metrics.hpp"
#include "raingraph/physics.hpp"
#include "raingraph/pipeline.hpp"
#include "raingraph/stats.hpp"
#include "raingraph/synth.hpp"
#include "raingraph/trainer.hpp"

namespace py = pybind11;
using namespace raingraph;

PYBIND11_MODULE(_raingraph, m) {
    m.doc() = "Long-range station-rainfall forecasting: physics-informed graph attention, "
              "robust training and season-aware GPD tail correction";

    // --- statistics -------------------------------------------------------
    m.def("percentile", &stats::percentile, py::arg("values"), py::arg("q"),
          "Linear-interpolation percentile, q in [0, 100]");
    m.def("pearson", &stats::pearson, py::arg("x"), py::arg("y"));
    m.def("chi_square_sf", &stats::chi_square_sf, py::arg("x"), py::arg("df"));

    m.def(
        "granger_lag",
        [](const std::vector<double>& y, const std::vector<double>& x, int max_lag,
           double alpha) -> py::object {
            auto res = graph::granger_lag(y, x, max_lag, alpha);
            if (!res) return py::none();
            py::dict d;
            d["lag"] = res->lag;
            d["p_value"] = res->p_value;
            d["statistic"] = res->statistic;
            return d;
        },
        py::arg("y"), py::arg("x"), py::arg("max_lag") = 3, py::arg("alpha") = 0.1,
        "Smallest lag whose chi-square Granger test clears alpha, or None");

    // --- metrics ----------------------------------------------------------
    m.def("rmse", &metrics::rmse, py::arg("obs"), py::arg("pred"));
    m.def("accuracy", [](const std::vector<double>& o, const std::vector<double>& p) {
        return metrics::accuracy(o, p).value;
    });
    m.def("smape", &metrics::smape, py::arg("obs"), py::arg("pred"));
    m.def("nse", &metrics::nse, py::arg("obs"), py::arg("pred"));

    m.def(
        "huber_loss",
        [](const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth, double delta) {
            auto res = trainer::adaptive_huber(pred, truth, delta);
            return py::make_tuple(res.loss, res.grad);
        },
        py::arg("pred"), py::arg("truth"), py::arg("delta") = 1.0,
        "Mean adaptive Huber loss and its gradient");

    // --- orographic physics -------------------------------------------------
    m.def(
        "simulate_field",
        [](const Eigen::MatrixXd& elevations, double cw, double tau_c, double tau_h, double u, double v,
           double dx, double dy, bool clamped) {
            physics::TerrainGrid grid;
            grid.elevations = elevations;
            physics::OrographicConfig cfg;
            cfg.cw = cw;
            cfg.tau_c = tau_c;
            cfg.tau_h = tau_h;
            cfg.u = u;
            cfg.v = v;
            cfg.dx = dx;
            cfg.dy = dy;
            auto field = physics::simulate_field(grid, cfg);
            return clamped ? field.clamped : field.raw;
        },
        py::arg("elevations"), py::arg("cw") = 0.01, py::arg("tau_c") = 0.0, py::arg("tau_h") = 0.0,
        py::arg("u") = 10.0, py::arg("v") = 0.0, py::arg("dx") = 1000.0, py::arg("dy") = 1000.0,
        py::arg("clamped") = true, "Spectral orographic precipitation field over a terrain grid");

    // --- extreme-value tail -------------------------------------------------
    m.def("gpd_cdf", &evt::gpd_cdf, py::arg("excess"), py::arg("shape"), py::arg("scale"));
    m.def("gpd_quantile", &evt::gpd_quantile, py::arg("p"), py::arg("shape"), py::arg("scale"));
    m.def(
        "fit_gpd_mle",
        [](const std::vector<double>& excesses) {
            auto res = evt::fit_gpd_mle(excesses);
            py::dict d;
            d["shape"] = res.shape;
            d["scale"] = res.scale;
            d["converged"] = res.converged;
            d["log_likelihood"] = res.log_likelihood;
            return d;
        },
        py::arg("excesses"));
    m.def(
        "pot_excesses",
        [](const std::vector<double>& values, double q) {
            auto res = evt::pot_excesses(values, q);
            return py::make_tuple(res.threshold, res.excesses);
        },
        py::arg("values"), py::arg("q") = 95.0, "Threshold at the q-th percentile and the strict excesses");
    m.def("season_of", [](int cluster_id, int month) { return evt::season_name(evt::season_of(cluster_id, month)); });
    m.def(
        "map_tail_value",
        [](double y_pred, double u_pred, double shape_pred, double scale_pred, double u_obs, double shape_obs,
           double scale_obs, double cap_obs) {
            evt::TailMapping mapping;
            mapping.enabled = true;
            mapping.prediction.threshold = u_pred;
            mapping.prediction.shape = shape_pred;
            mapping.prediction.scale = scale_pred;
            mapping.observation.threshold = u_obs;
            mapping.observation.shape = shape_obs;
            mapping.observation.scale = scale_obs;
            mapping.observation.cap = cap_obs;
            return evt::apply_tail_mapping(y_pred, mapping);
        },
        py::arg("y_pred"), py::arg("u_pred"), py::arg("shape_pred"), py::arg("scale_pred"), py::arg("u_obs"),
        py::arg("shape_obs"), py::arg("scale_obs"), py::arg("cap_obs"),
        "CDF-match one predicted value through paired GPD tails");

    // --- spatial interpolation ----------------------------------------------
    m.def(
        "idw_interpolate",
        [](const std::vector<std::tuple<double, double, double>>& stations, double lon0, double lat0, int n_lon,
           int n_lat, double cell, double power) {
            std::vector<idw::StationValue> sv;
            for (const auto& [lat, lon, value] : stations) sv.push_back({lat, lon, value});
            idw::GridSpec spec{lon0, lat0, n_lon, n_lat, cell};
            return idw::idw_interpolate(sv, spec, power).values;
        },
        py::arg("stations"), py::arg("lon0"), py::arg("lat0"), py::arg("n_lon"), py::arg("n_lat"),
        py::arg("cell") = 0.1, py::arg("power") = 2.0,
        "Inverse-distance raster from (lat, lon, value) triples");

    // --- pipeline -------------------------------------------------------------
    m.def(
        "run_stage",
        [](const std::string& stage, const std::string& config_path, bool force) {
            auto cfg = pipeline::PipelineConfig::load(config_path);
            auto res = pipeline::run_stage(pipeline::stage_from_name(stage), cfg, force);
            py::dict d;
            d["skipped"] = res.skipped;
            d["outputs"] = res.outputs;
            return d;
        },
        py::arg("stage"), py::arg("config_path"), py::arg("force") = false);
    m.def("stage_names", [] { return pipeline::stage_names(); });
    m.def(
        "generate_dataset",
        [](const std::string& out_dir, std::uint64_t seed, int months) {
            synth::SynthSpec spec;
            spec.seed = seed;
            spec.n_months = months;
            synth::generate_dataset(out_dir, spec);
        },
        py::arg("out_dir"), py::arg("seed") = 42, py::arg("months") = 480);
}
