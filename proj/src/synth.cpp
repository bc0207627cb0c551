#include "raingraph/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "nlohmann/json.hpp"
#include "raingraph/csv.hpp"
#include "raingraph/time_axis.hpp"

namespace raingraph::synth {

namespace {

// mm/month seasonal bases: southern stations peak late in the year, northern
// stations peak mid-year.
const double kSouthBase[12] = {60, 50, 70, 110, 160, 150, 160, 180, 220, 300, 340, 180};
const double kNorthBase[12] = {20, 25, 55, 110, 190, 230, 250, 270, 240, 160, 60, 25};

// Index seasonal phases track their cluster's rainfall cycle, the way real
// monsoon indices do; the AR(1) part carries the lagged teleconnection.
double idx_seasonal(int month, int peak_month) {
    return 1.1 * std::cos(2.0 * M_PI * (month - peak_month) / 12.0);
}

struct StationMeta {
    std::string id;
    double lat, lon, elev;
    bool south;
    double season_gain;
};

}  // namespace

void generate_dataset(const std::string& out_dir, const SynthSpec& spec) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    const int n = spec.n_months;
    const YearMonth start{spec.start_year, 1};
    // AR(1) anomalies drive the lagged teleconnection; the seasonal part
    // keeps the contemporaneous screening correlation high.
    std::vector<double> ar1(static_cast<std::size_t>(n)), ar2(static_cast<std::size_t>(n));
    std::vector<double> idx1(static_cast<std::size_t>(n)), idx2(static_cast<std::size_t>(n));
    const double phi = 0.85;
    for (int t = 0; t < n; ++t) {
        ar1[static_cast<std::size_t>(t)] = (t ? phi * ar1[static_cast<std::size_t>(t - 1)] : 0.0) + 0.5 * noise(rng);
        ar2[static_cast<std::size_t>(t)] = (t ? phi * ar2[static_cast<std::size_t>(t - 1)] : 0.0) + 0.5 * noise(rng);
        const int month = start.plus_months(t).month;
        idx1[static_cast<std::size_t>(t)] = idx_seasonal(month, 11) + ar1[static_cast<std::size_t>(t)];
        idx2[static_cast<std::size_t>(t)] = idx_seasonal(month, 8) + ar2[static_cast<std::size_t>(t)];
    }

    std::vector<StationMeta> metas;
    for (int s = 0; s < spec.stations_per_cluster; ++s) {
        metas.push_back({"S" + std::to_string(s + 1), 7.2 + 0.3 * s, 99.1 + 0.3 * s, 20.0 + 90.0 * s, true,
                         0.95 + 0.02 * s});
    }
    for (int s = 0; s < spec.stations_per_cluster; ++s) {
        metas.push_back({"N" + std::to_string(s + 1), 17.1 + 0.3 * s, 99.3 + 0.3 * s, 150.0 + 160.0 * s, false,
                         0.95 + 0.02 * s});
    }

    const double coupling = 40.0;

    std::ofstream st(fs::path(out_dir) / "stations.csv");
    st << "station_id,lat,lon,elevation_m,year,month,rain_mm\n";
    for (const auto& m : metas) {
        for (int t = 0; t < n; ++t) {
            const YearMonth ym = start.plus_months(t);
            const double* base = m.south ? kSouthBase : kNorthBase;
            const int lag = m.south ? 1 : 2;
            const std::vector<double>& idx = m.south ? idx1 : idx2;
            const double driver = t >= lag ? idx[static_cast<std::size_t>(t - lag)] : 0.0;
            double rain = m.season_gain * base[ym.month - 1] + coupling * driver + 0.05 * m.elev +
                          20.0 * noise(rng);
            rain = std::max(0.0, rain);
            st << m.id << ',' << csv::format_double(m.lat) << ',' << csv::format_double(m.lon) << ','
               << csv::format_double(m.elev) << ',' << ym.year << ',' << ym.month << ',';
            // Interior gaps only, so every station spans the nominal range.
            const bool drop = t > 0 && t + 1 < n && unif(rng) < spec.missing_fraction;
            if (!drop) st << csv::format_double(std::round(rain * 10.0) / 10.0);
            st << '\n';
        }
    }
    st.close();

    std::ofstream ix(fs::path(out_dir) / "indices.csv");
    ix << "year,month,IDX1,IDX2\n";
    for (int t = 0; t < n; ++t) {
        const YearMonth ym = start.plus_months(t);
        ix << ym.year << ',' << ym.month << ',' << csv::format_double(std::round(idx1[static_cast<std::size_t>(t)] * 1000.0) / 1000.0)
           << ',' << csv::format_double(std::round(idx2[static_cast<std::size_t>(t)] * 1000.0) / 1000.0) << '\n';
    }
    ix.close();

    std::ofstream wd(fs::path(out_dir) / "winds.csv");
    wd << "station_id,year,month,u_ms,v_ms\n";
    for (const auto& m : metas) {
        for (int t = 0; t < n; ++t) {
            const YearMonth ym = start.plus_months(t);
            const double phase = 2.0 * M_PI * ym.month / 12.0;
            const double u = 8.0 + 4.0 * std::sin(phase) + 0.5 * noise(rng);
            const double v = 3.0 + 2.0 * std::cos(phase) + 0.5 * noise(rng);
            wd << m.id << ',' << ym.year << ',' << ym.month << ',' << csv::format_double(std::round(u * 100.0) / 100.0)
               << ',' << csv::format_double(std::round(v * 100.0) / 100.0) << '\n';
        }
    }
    wd.close();

    // Gaussian ridge terrain for the physics stage.
    const int grid = 64;
    std::ofstream tr(fs::path(out_dir) / "terrain.csv");
    for (int r = 0; r < grid; ++r) {
        for (int c = 0; c < grid; ++c) {
            const double x = (c - grid / 2.0) / 8.0;
            const double y = (r - grid / 2.0) / 12.0;
            const double h = 2000.0 * std::exp(-(x * x + y * y));
            if (c) tr << ',';
            tr << csv::format_double(std::round(h * 100.0) / 100.0);
        }
        tr << '\n';
    }
    tr.close();
    {
        nlohmann::ordered_json tj;
        tj["nx"] = grid;
        tj["ny"] = grid;
        tj["dx"] = 1500.0;
        tj["dy"] = 1500.0;
        std::ofstream out(fs::path(out_dir) / "terrain.json");
        out << tj.dump(2) << "\n";
    }

    const YearMonth last = start.plus_months(n - 1);
    const int fold1_val_year = last.year - 2;
    nlohmann::ordered_json cfg;
    cfg["data"] = {{"stations_csv", "stations.csv"},
                   {"indices_csv", "indices.csv"},
                   {"winds_csv", "winds.csv"},
                   {"terrain_csv", "terrain.csv"},
                   {"terrain_header", "terrain.json"}};
    cfg["coverage_min_fraction"] = 0.8;
    cfg["clustering"] = {{"n_components", 3}, {"distance_d", 4.0}};
    cfg["screening"] = {{"r_threshold", 0.4}, {"alpha", 0.1}, {"max_lag", 3}};
    cfg["physics"] = {{"cw", 0.01}, {"tau_c", 0.0}, {"tau_h", 0.0}};
    cfg["training"] = {{"window", 24},
                       {"horizon", 12},
                       {"grid", {{"heads", {8}}, {"hidden", {32}}, {"layers", {1}}, {"dropout", {0.0}}}},
                       {"lr", 0.01},
                       {"delta", 1.0},
                       {"max_epochs", 60},
                       {"patience", 15},
                       {"objective", "accuracy"},
                       {"optimizer", "adam"}};
    cfg["evt"] = {{"q", 90.0}, {"enable_dry", false}};
    cfg["folds"] = nlohmann::ordered_json::array();
    cfg["folds"].push_back({{"train", {start.str(), YearMonth{fold1_val_year - 1, 12}.str()}},
                            {"val", {YearMonth{fold1_val_year, 1}.str(), YearMonth{fold1_val_year, 12}.str()}},
                            {"test", {YearMonth{fold1_val_year + 1, 1}.str(), YearMonth{fold1_val_year + 1, 12}.str()}}});
    cfg["folds"].push_back({{"train", {start.str(), YearMonth{fold1_val_year, 12}.str()}},
                            {"val", {YearMonth{fold1_val_year + 1, 1}.str(), YearMonth{fold1_val_year + 1, 12}.str()}},
                            {"test", {YearMonth{fold1_val_year + 2, 1}.str(), YearMonth{last.year, 12}.str()}}});
    cfg["forced_edges"] = nlohmann::ordered_json::array();
    cfg["idw"] = {{"power", 2.0}, {"cell_deg", 0.25}};
    cfg["seed"] = 7;
    cfg["output_dir"] = "out";
    std::ofstream cf(fs::path(out_dir) / "config.json");
    cf << cfg.dump(2) << "\n";
}

}  // namespace raingraph::synth
