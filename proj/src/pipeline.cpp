#include "raingraph/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include "nlohmann/json.hpp"
#include "raingraph/csv.hpp"
#include "raingraph/errors.hpp"
#include "raingraph/evt.hpp"
#include "raingraph/idw.hpp"
#include "raingraph/metrics.hpp"
#include "raingraph/physics.hpp"
#include "raingraph/recurrent.hpp"

namespace fs = std::filesystem;

namespace raingraph::pipeline {

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::optional<YearMonth> parse_opt_ym(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return YearMonth::parse(j.at(key).get<std::string>());
}

}  // namespace

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }

    PipelineConfig cfg;
    cfg.config_dir = fs::path(path).parent_path().string();
    try {
        const auto& data = j.at("data");
        cfg.stations_csv = data.at("stations_csv").get<std::string>();
        cfg.indices_csv = data.at("indices_csv").get<std::string>();
        cfg.winds_csv = data.at("winds_csv").get<std::string>();
        if (data.contains("terrain_csv")) cfg.terrain_csv = data.at("terrain_csv").get<std::string>();
        if (data.contains("terrain_header")) cfg.terrain_header = data.at("terrain_header").get<std::string>();

        if (j.contains("study_period")) {
            cfg.study_start = parse_opt_ym(j.at("study_period"), "start");
            cfg.study_end = parse_opt_ym(j.at("study_period"), "end");
        }
        if (j.contains("coverage_min_fraction")) cfg.coverage_min_fraction = j.at("coverage_min_fraction").get<double>();

        const auto& cl = j.at("clustering");
        cfg.n_components = cl.at("n_components").get<int>();
        cfg.distance_d = cl.at("distance_d").get<double>();

        const auto& sc = j.at("screening");
        cfg.r_threshold = sc.at("r_threshold").get<double>();
        cfg.alpha = sc.at("alpha").get<double>();
        cfg.max_lag = sc.at("max_lag").get<int>();
        if (sc.contains("extreme_percentile") && !sc.at("extreme_percentile").is_null())
            cfg.extreme_percentile = sc.at("extreme_percentile").get<double>();

        const auto& ph = j.at("physics");
        cfg.cw = ph.at("cw").get<double>();
        cfg.tau_c = ph.at("tau_c").get<double>();
        cfg.tau_h = ph.at("tau_h").get<double>();

        const auto& tr = j.at("training");
        cfg.window_size = tr.at("window").get<int>();
        cfg.horizon = tr.at("horizon").get<int>();
        const auto& grid = tr.at("grid");
        cfg.grid.heads = grid.at("heads").get<std::vector<int>>();
        cfg.grid.hidden = grid.at("hidden").get<std::vector<int>>();
        cfg.grid.layers = grid.at("layers").get<std::vector<int>>();
        cfg.grid.dropout = grid.at("dropout").get<std::vector<double>>();
        cfg.base_hp.lr = tr.at("lr").get<double>();
        cfg.base_hp.delta = tr.at("delta").get<double>();
        cfg.base_hp.max_epochs = tr.at("max_epochs").get<int>();
        cfg.base_hp.patience = tr.at("patience").get<int>();
        cfg.objective = trainer::objective_from_name(tr.at("objective").get<std::string>());
        if (tr.contains("optimizer"))
            cfg.optimizer = tr.at("optimizer").get<std::string>() == "sgd" ? trainer::OptimizerKind::Sgd
                                                                           : trainer::OptimizerKind::Adam;

        const auto& ev = j.at("evt");
        cfg.evt_q = ev.at("q").get<double>();
        if (ev.contains("enable_dry")) cfg.evt_include_dry = ev.at("enable_dry").get<bool>();

        for (const auto& f : j.at("folds")) {
            trainer::FoldSpec spec;
            spec.train_start = YearMonth::parse(f.at("train").at(0).get<std::string>());
            spec.train_end = YearMonth::parse(f.at("train").at(1).get<std::string>());
            spec.val_start = YearMonth::parse(f.at("val").at(0).get<std::string>());
            spec.val_end = YearMonth::parse(f.at("val").at(1).get<std::string>());
            spec.test_start = YearMonth::parse(f.at("test").at(0).get<std::string>());
            spec.test_end = YearMonth::parse(f.at("test").at(1).get<std::string>());
            cfg.folds.push_back(spec);
        }
        if (j.contains("forced_edges")) {
            for (const auto& e : j.at("forced_edges"))
                cfg.forced_edges.push_back({e.at("index").get<std::string>(), e.at("lag").get<int>()});
        }
        if (j.contains("idw")) {
            cfg.idw_power = j.at("idw").at("power").get<double>();
            cfg.idw_cell = j.at("idw").at("cell_deg").get<double>();
        }
        cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.output_dir = j.at("output_dir").get<std::string>();
        if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config field error: ") + e.what());
    }

    if (const char* env_out = std::getenv("FORECAST_OUTPUT_DIR")) cfg.output_dir = env_out;
    if (const char* env_thr = std::getenv("FORECAST_THREADS")) cfg.threads = std::max(1, std::atoi(env_thr));

    if (cfg.evt_q < 90.0 || cfg.evt_q > 95.0) throw ConfigError("evt.q must lie in [90, 95]");
    if (cfg.folds.empty()) throw ConfigError("at least one fold is required");
    if (cfg.window_size < 1 || cfg.horizon < 1) throw ConfigError("window and horizon must be positive");
    if (cfg.grid.heads.empty() || cfg.grid.hidden.empty() || cfg.grid.layers.empty() || cfg.grid.dropout.empty())
        throw ConfigError("training.grid dimensions must be non-empty");
    for (double d : cfg.grid.dropout)
        if (d < 0.0 || d >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    return cfg;
}

std::string PipelineConfig::resolve(const std::string& rel) const {
    fs::path p(rel);
    if (p.is_absolute()) return rel;
    return (fs::path(config_dir) / p).string();
}

std::string PipelineConfig::out_path(const std::string& name) const {
    fs::path dir(output_dir);
    if (dir.is_relative()) dir = fs::path(config_dir) / dir;
    return (dir / name).string();
}

std::string PipelineConfig::config_hash() const {
    // Canonical digest over every field that influences artifacts.
    nlohmann::json j;
    j["stations_csv"] = stations_csv;
    j["indices_csv"] = indices_csv;
    j["winds_csv"] = winds_csv;
    j["terrain_csv"] = terrain_csv;
    j["terrain_header"] = terrain_header;
    j["study_start"] = study_start ? study_start->str() : "";
    j["study_end"] = study_end ? study_end->str() : "";
    j["coverage_min_fraction"] = coverage_min_fraction;
    j["n_components"] = n_components;
    j["distance_d"] = distance_d;
    j["r_threshold"] = r_threshold;
    j["alpha"] = alpha;
    j["max_lag"] = max_lag;
    j["extreme_percentile"] = extreme_percentile ? *extreme_percentile : -1.0;
    j["cw"] = cw;
    j["tau_c"] = tau_c;
    j["tau_h"] = tau_h;
    j["window"] = window_size;
    j["horizon"] = horizon;
    j["grid_heads"] = grid.heads;
    j["grid_hidden"] = grid.hidden;
    j["grid_layers"] = grid.layers;
    j["grid_dropout"] = grid.dropout;
    j["lr"] = base_hp.lr;
    j["delta"] = base_hp.delta;
    j["max_epochs"] = base_hp.max_epochs;
    j["patience"] = base_hp.patience;
    j["objective"] = trainer::objective_name(objective);
    j["optimizer"] = optimizer == trainer::OptimizerKind::Sgd ? "sgd" : "adam";
    j["evt_q"] = evt_q;
    j["evt_dry"] = evt_include_dry;
    j["idw_power"] = idw_power;
    j["idw_cell"] = idw_cell;
    j["seed"] = seed;
    nlohmann::json folds_j = nlohmann::json::array();
    for (const auto& f : folds)
        folds_j.push_back({f.train_start.str(), f.train_end.str(), f.val_start.str(), f.val_end.str(),
                           f.test_start.str(), f.test_end.str()});
    j["folds"] = folds_j;
    nlohmann::json forced_j = nlohmann::json::array();
    for (const auto& e : forced_edges) forced_j.push_back({e.index_name, e.lag});
    j["forced_edges"] = forced_j;

    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {"ingest", "cluster", "physics",      "graph",    "train",
                                                   "predict", "map-extremes", "evaluate", "render-map"};
    return names;
}

Stage stage_from_name(const std::string& name) {
    const auto& names = stage_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<Stage>(i);
    throw ConfigError("unknown stage: " + name);
}

std::string stage_name(Stage s) { return stage_names()[static_cast<std::size_t>(s)]; }

// ---------------------------------------------------------------------------
// Artifact I/O

void write_panel(const std::string& csv_path, const std::string& norm_path, const ingest::MonthlyPanel& panel) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot write panel: " + csv_path);
    out << "year,month";
    for (const auto& n : panel.names) out << ',' << n;
    out << '\n';
    for (long r = 0; r < panel.rows(); ++r) {
        const YearMonth ym = panel.month_at(r);
        out << ym.year << ',' << ym.month;
        for (long c = 0; c < panel.cols(); ++c) out << ',' << csv::format_double(panel.values(r, c));
        out << '\n';
    }

    nlohmann::ordered_json j;
    j["columns"] = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < panel.names.size(); ++c) {
        const char* kind = panel.kinds[c] == ingest::ColumnKind::Station
                               ? "station"
                               : (panel.kinds[c] == ingest::ColumnKind::Index ? "index" : "embedding");
        j["columns"].push_back({{"name", panel.names[c]},
                                {"kind", kind},
                                {"mean", panel.norm[c].mean},
                                {"std", panel.norm[c].std},
                                {"scaled", panel.norm[c].scaled}});
    }
    j["std_definition"] = "population";
    std::ofstream nj(norm_path);
    if (!nj) throw std::runtime_error("cannot write normalization record: " + norm_path);
    nj << j.dump(2) << "\n";
}

ingest::MonthlyPanel read_panel(const std::string& csv_path, const std::string& norm_path) {
    const auto rows = csv::read_file(csv_path);
    if (rows.size() < 2 || rows[0].size() < 3) throw std::runtime_error("bad panel csv: " + csv_path);
    ingest::MonthlyPanel panel;
    const long cols = static_cast<long>(rows[0].size()) - 2;
    const long nrows = static_cast<long>(rows.size()) - 1;
    panel.values.resize(nrows, cols);
    for (long c = 0; c < cols; ++c) panel.names.push_back(rows[0][static_cast<std::size_t>(c + 2)]);
    for (long r = 0; r < nrows; ++r) {
        const auto& row = rows[static_cast<std::size_t>(r + 1)];
        auto y = csv::parse_long(row[0]);
        auto m = csv::parse_long(row[1]);
        if (!y || !m) throw std::runtime_error("bad panel row");
        if (r == 0) panel.start = {static_cast<int>(*y), static_cast<int>(*m)};
        for (long c = 0; c < cols; ++c) {
            auto v = csv::parse_double(row[static_cast<std::size_t>(c + 2)]);
            if (!v) throw std::runtime_error("bad panel cell");
            panel.values(r, c) = *v;
        }
    }

    std::ifstream nj(norm_path);
    if (!nj) throw std::runtime_error("cannot open normalization record: " + norm_path);
    nlohmann::json j = nlohmann::json::parse(nj);
    for (const auto& c : j.at("columns")) {
        const std::string kind = c.at("kind").get<std::string>();
        panel.kinds.push_back(kind == "station" ? ingest::ColumnKind::Station
                                                : (kind == "index" ? ingest::ColumnKind::Index
                                                                   : ingest::ColumnKind::Embedding));
        ingest::ColumnNorm n;
        n.mean = c.at("mean").get<double>();
        n.std = c.at("std").get<double>();
        n.scaled = c.at("scaled").get<bool>();
        panel.norm.push_back(n);
    }
    if (panel.kinds.size() != panel.names.size())
        throw std::runtime_error("normalization record does not match panel: " + norm_path);
    return panel;
}

namespace {

void write_stations_long(const std::string& path, const std::vector<ingest::StationRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write stations: " + path);
    out << "station_id,lat,lon,elevation_m,year,month,rain_mm\n";
    for (const auto& r : records) {
        for (const auto& [ym, v] : r.rainfall.entries()) {
            out << r.station_id << ',' << csv::format_double(r.lat) << ',' << csv::format_double(r.lon) << ','
                << csv::format_double(r.elevation) << ',' << ym.year << ',' << ym.month << ','
                << csv::format_double(v) << '\n';
        }
    }
}

void write_clusters_json(const std::string& path, const graph::ClusterAssignment& assignment) {
    nlohmann::ordered_json j;
    j["n_clusters"] = assignment.n_clusters;
    j["assignments"] = nlohmann::ordered_json::object();
    for (const auto& [id, c] : assignment.cluster_of) j["assignments"][id] = c;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write clusters: " + path);
    out << j.dump(2) << "\n";
}

graph::ClusterAssignment read_clusters_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("missing clusters artifact: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    graph::ClusterAssignment a;
    a.n_clusters = j.at("n_clusters").get<int>();
    for (const auto& [k, v] : j.at("assignments").items()) a.cluster_of[k] = v.get<int>();
    return a;
}

void write_edge_features(const std::string& path, const physics::EdgeFeatureTable& table) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write edge features: " + path);
    out << "station_id,feature\n";
    for (const auto& [id, f] : table.feature) out << id << ',' << csv::format_double(f) << '\n';
}

physics::EdgeFeatureTable read_edge_features(const std::string& path) {
    std::ifstream probe(path);
    if (!probe) throw MissingArtifactError("missing edge features artifact: " + path);
    probe.close();
    const auto rows = csv::read_file(path);
    physics::EdgeFeatureTable table;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        auto v = csv::parse_double(rows[r][1]);
        if (!v) throw std::runtime_error("bad edge feature row in " + path);
        table.feature[rows[r][0]] = *v;
    }
    return table;
}

struct ForecastRow {
    std::string station_id;
    YearMonth anchor;
    int horizon = 1;
    YearMonth target;
    double value = 0.0;
};

void write_forecast_csv(const std::string& path, const std::vector<ForecastRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write forecast: " + path);
    out << "station_id,anchor,horizon,year,month,value_mm\n";
    for (const auto& r : rows)
        out << r.station_id << ',' << r.anchor.str() << ',' << r.horizon << ',' << r.target.year << ','
            << r.target.month << ',' << csv::format_double(r.value) << '\n';
}

std::vector<ForecastRow> read_forecast_csv(const std::string& path) {
    std::ifstream probe(path);
    if (!probe) throw MissingArtifactError("missing forecast artifact: " + path);
    probe.close();
    const auto rows = csv::read_file(path);
    std::vector<ForecastRow> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        ForecastRow fr;
        fr.station_id = row[0];
        fr.anchor = YearMonth::parse(row[1]);
        fr.horizon = static_cast<int>(*csv::parse_long(row[2]));
        fr.target = {static_cast<int>(*csv::parse_long(row[3])), static_cast<int>(*csv::parse_long(row[4]))};
        fr.value = *csv::parse_double(row[5]);
        out.push_back(fr);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Manifests

std::string manifest_path(const PipelineConfig& cfg, Stage stage) {
    return cfg.out_path("manifest_" + stage_name(stage) + ".json");
}

bool manifest_matches(const PipelineConfig& cfg, Stage stage, std::vector<std::string>* outputs) {
    std::ifstream in(manifest_path(cfg, stage));
    if (!in) return false;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (...) {
        return false;
    }
    if (j.value("config_hash", "") != cfg.config_hash()) return false;
    if (j.value("seed", std::uint64_t{0}) != cfg.seed) return false;
    for (const auto& o : j.at("outputs")) {
        if (!fs::exists(o.get<std::string>())) return false;
        if (outputs) outputs->push_back(o.get<std::string>());
    }
    return true;
}

bool manifest_exists(const PipelineConfig& cfg, Stage stage) { return fs::exists(manifest_path(cfg, stage)); }

void write_manifest(const PipelineConfig& cfg, Stage stage, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    nlohmann::ordered_json j;
    j["stage"] = stage_name(stage);
    j["config_hash"] = cfg.config_hash();
    j["seed"] = cfg.seed;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    std::ofstream out(manifest_path(cfg, stage));
    if (!out) throw std::runtime_error("cannot write manifest for stage " + stage_name(stage));
    out << j.dump(2) << "\n";
}

void require_artifact(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw MissingArtifactError("missing " + what + ": " + path + " (run the upstream stage first)");
}

std::uint64_t task_seed(const PipelineConfig& cfg, int cluster_id, int fold) {
    return cfg.seed * 1000003ULL + static_cast<std::uint64_t>(cluster_id) * 101ULL +
           static_cast<std::uint64_t>(fold);
}

void parallel_for_tasks(int n_tasks, int threads, const std::function<void(int)>& body) {
    if (threads <= 1 || n_tasks <= 1) {
        for (int i = 0; i < n_tasks; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::mutex err_mutex;
    std::exception_ptr first_error;
    const int n_threads = std::min(threads, n_tasks);
    for (int t = 0; t < n_threads; ++t) {
        pool.emplace_back([&]() {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n_tasks) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

// Cluster ids present in an assignment, ascending.
std::vector<int> cluster_ids(const graph::ClusterAssignment& a) {
    std::set<int> ids;
    for (const auto& [id, c] : a.cluster_of) ids.insert(c);
    return {ids.begin(), ids.end()};
}

std::string graph_path(const PipelineConfig& cfg, int cluster_id) {
    return cfg.out_path("graph_c" + std::to_string(cluster_id) + ".json");
}

graph::TeleconnectionGraph load_graph(const PipelineConfig& cfg, int cluster_id) {
    const std::string path = graph_path(cfg, cluster_id);
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("missing graph artifact: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return graph::graph_from_json(text);
}

std::vector<int> station_columns(const ingest::MonthlyPanel& panel, const gat::Topology& topo,
                                 const graph::TeleconnectionGraph& g) {
    std::vector<int> cols;
    for (int node : topo.station_nodes) {
        const int c = panel.column(g.nodes[static_cast<std::size_t>(node)].id);
        if (c < 0) throw std::runtime_error("panel lacks station column " + g.nodes[static_cast<std::size_t>(node)].id);
        cols.push_back(c);
    }
    return cols;
}

// ---------------------------------------------------------------------------
// Stage bodies

StageResult stage_ingest(const PipelineConfig& cfg) {
    std::vector<ingest::RejectedRow> rejects;
    auto records = ingest::load_station_csv(cfg.resolve(cfg.stations_csv), &rejects);
    for (const auto& r : rejects)
        std::cerr << "[ingest] rejected row " << r.line << ": " << r.reason << "\n";
    records = ingest::coverage_filter(records, cfg.coverage_min_fraction, cfg.study_start, cfg.study_end);
    for (auto& r : records) r = ingest::median_impute(r);
    auto indices = ingest::load_index_csv(cfg.resolve(cfg.indices_csv));
    const auto panel = ingest::build_panel(records, indices, true, cfg.study_start, cfg.study_end);

    StageResult res;
    res.outputs = {cfg.out_path("stations_imputed.csv"), cfg.out_path("panel.csv"),
                   cfg.out_path("normalization.json")};
    write_stations_long(res.outputs[0], records);
    write_panel(res.outputs[1], res.outputs[2], panel);
    return res;
}

StageResult stage_cluster(const PipelineConfig& cfg) {
    const std::string stations_path = cfg.out_path("stations_imputed.csv");
    require_artifact(stations_path, "imputed stations artifact");
    const auto records = ingest::load_station_csv(stations_path);
    const auto assignment = graph::cluster_stations(records, cfg.n_components, cfg.distance_d);

    StageResult res;
    res.outputs = {cfg.out_path("clusters.json")};
    write_clusters_json(res.outputs[0], assignment);
    return res;
}

StageResult stage_physics(const PipelineConfig& cfg) {
    const std::string stations_path = cfg.out_path("stations_imputed.csv");
    require_artifact(stations_path, "imputed stations artifact");
    const auto records = ingest::load_station_csv(stations_path);
    const auto winds = ingest::load_wind_csv(cfg.resolve(cfg.winds_csv));
    const auto table = physics::build_edge_feature_table(records, winds, cfg.cw);

    StageResult res;
    res.outputs = {cfg.out_path("edge_features.csv")};
    write_edge_features(res.outputs[0], table);

    if (!cfg.terrain_csv.empty() && !cfg.terrain_header.empty()) {
        double dx = 1.0, dy = 1.0;
        const auto terrain =
            physics::load_terrain(cfg.resolve(cfg.terrain_csv), cfg.resolve(cfg.terrain_header), &dx, &dy);
        // Mean wind climatology across stations drives the demo field.
        double mu = 0.0, mv = 0.0;
        long n = 0;
        for (const auto& [id, samples] : winds) {
            for (const auto& w : samples) {
                mu += w.u;
                mv += w.v;
                ++n;
            }
        }
        physics::OrographicConfig ocfg;
        ocfg.cw = cfg.cw;
        ocfg.tau_c = cfg.tau_c;
        ocfg.tau_h = cfg.tau_h;
        ocfg.u = n ? mu / static_cast<double>(n) : 0.0;
        ocfg.v = n ? mv / static_cast<double>(n) : 0.0;
        ocfg.dx = dx;
        ocfg.dy = dy;
        const auto field = physics::simulate_field(terrain, ocfg);
        const std::string field_path = cfg.out_path("orographic_field.csv");
        physics::write_field_csv(field_path, field.clamped);
        res.outputs.push_back(field_path);
    }
    return res;
}

StageResult stage_graph(const PipelineConfig& cfg) {
    require_artifact(cfg.out_path("panel.csv"), "panel artifact");
    require_artifact(cfg.out_path("clusters.json"), "clusters artifact");
    const auto panel = read_panel(cfg.out_path("panel.csv"), cfg.out_path("normalization.json"));
    const auto assignment = read_clusters_json(cfg.out_path("clusters.json"));
    const auto features = read_edge_features(cfg.out_path("edge_features.csv"));

    std::vector<std::string> index_names;
    for (std::size_t c = 0; c < panel.names.size(); ++c)
        if (panel.kinds[c] == ingest::ColumnKind::Index) index_names.push_back(panel.names[c]);

    StageResult res;
    for (int cid : cluster_ids(assignment)) {
        const auto stations = assignment.members(cid);
        std::vector<graph::AcceptedIndex> accepted;
        for (const auto& index_name : index_names) {
            const auto screen =
                graph::pearson_screen(panel, index_name, stations, cfg.r_threshold, cfg.extreme_percentile);
            if (!screen.accepted) continue;
            // Smallest lag whose station-average p-value clears alpha.
            std::vector<double> mean_p(static_cast<std::size_t>(cfg.max_lag), 0.0);
            std::vector<int> counted(static_cast<std::size_t>(cfg.max_lag), 0);
            const int ic = panel.column(index_name);
            std::vector<double> x(panel.values.col(ic).data(), panel.values.col(ic).data() + panel.rows());
            for (const auto& sid : stations) {
                const int scol = panel.column(sid);
                std::vector<double> y(panel.values.col(scol).data(), panel.values.col(scol).data() + panel.rows());
                graph::GrangerDiag diag;
                graph::granger_lag(y, x, cfg.max_lag, cfg.alpha, &diag);
                for (int lag = 0; lag < cfg.max_lag; ++lag) {
                    const double p = diag.p_per_lag[static_cast<std::size_t>(lag)];
                    if (std::isnan(p)) continue;
                    mean_p[static_cast<std::size_t>(lag)] += p;
                    ++counted[static_cast<std::size_t>(lag)];
                }
            }
            int lag = 0;
            for (int l = 0; l < cfg.max_lag; ++l) {
                if (counted[static_cast<std::size_t>(l)] == 0) continue;
                if (mean_p[static_cast<std::size_t>(l)] / counted[static_cast<std::size_t>(l)] <= cfg.alpha) {
                    lag = l + 1;
                    break;
                }
            }
            accepted.push_back({index_name, lag});
        }
        const auto g = graph::assemble_graph(cid, stations, accepted, features, cfg.forced_edges, index_names);
        const std::string path = graph_path(cfg, cid);
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write graph: " + path);
        out << graph::to_json(g);
        res.outputs.push_back(path);
    }
    return res;
}

struct TrainedModel {
    int cluster_id = 0;
    int fold = 0;
    trainer::Hyperparams hp;
    recurrent::CellWeights weights;
    trainer::TrainReport report;
    std::vector<trainer::LeaderboardRow> leaderboard;
};

void write_train_report(const std::string& path, const TrainedModel& model) {
    nlohmann::ordered_json j;
    j["cluster_id"] = model.cluster_id;
    j["fold"] = model.fold;
    j["hyperparams"] = {{"heads", model.hp.heads},     {"hidden", model.hp.hidden}, {"layers", model.hp.layers},
                        {"dropout", model.hp.dropout}, {"lr", model.hp.lr},         {"delta", model.hp.delta}};
    j["best_epoch"] = model.report.best_epoch;
    j["best_val_loss"] = model.report.best_val_loss;
    j["stop_reason"] = model.report.stop_reason;
    j["epochs"] = nlohmann::ordered_json::array();
    for (const auto& e : model.report.epochs)
        j["epochs"].push_back({{"epoch", e.epoch},
                               {"train_loss", e.train_loss},
                               {"val_loss", e.val_loss},
                               {"wall_ms", e.wall_ms},
                               {"clipped", e.clipped}});
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write train report: " + path);
    out << j.dump(2) << "\n";
}

StageResult stage_train(const PipelineConfig& cfg) {
    require_artifact(cfg.out_path("panel.csv"), "panel artifact");
    require_artifact(cfg.out_path("clusters.json"), "clusters artifact");
    const auto panel = read_panel(cfg.out_path("panel.csv"), cfg.out_path("normalization.json"));
    const auto assignment = read_clusters_json(cfg.out_path("clusters.json"));
    const auto ids = cluster_ids(assignment);

    struct Task {
        int cluster_id, fold;
    };
    std::vector<Task> tasks;
    for (int cid : ids)
        for (std::size_t f = 0; f < cfg.folds.size(); ++f) tasks.push_back({cid, static_cast<int>(f)});

    std::vector<TrainedModel> models(tasks.size());
    parallel_for_tasks(static_cast<int>(tasks.size()), cfg.threads, [&](int ti) {
        const Task& task = tasks[static_cast<std::size_t>(ti)];
        const auto g = load_graph(cfg, task.cluster_id);
        const auto topo = gat::Topology::from_graph(g);
        const auto fold_windows = trainer::two_fold_protocol(panel, g, cfg.folds[static_cast<std::size_t>(task.fold)],
                                                             cfg.window_size, cfg.horizon);
        trainer::TrainOptions opts;
        opts.optimizer = cfg.optimizer;
        opts.seed = task_seed(cfg, task.cluster_id, task.fold);

        TrainedModel& model = models[static_cast<std::size_t>(ti)];
        model.cluster_id = task.cluster_id;
        model.fold = task.fold;
        if (cfg.grid.combinations() == 1) {
            trainer::Hyperparams hp = cfg.base_hp;
            hp.heads = cfg.grid.heads[0];
            hp.hidden = cfg.grid.hidden[0];
            hp.layers = cfg.grid.layers[0];
            hp.dropout = cfg.grid.dropout[0];
            auto [w, report] = trainer::train_cluster(topo, fold_windows.train, fold_windows.val, hp, 3, opts);
            if (report.stop_reason == "diverged")
                throw NumericalError("training diverged for cluster " + std::to_string(task.cluster_id));
            model.hp = hp;
            model.weights = std::move(w);
            model.report = std::move(report);
        } else {
            const auto cols = station_columns(panel, topo, g);
            auto result = trainer::grid_search(topo, fold_windows.train, fold_windows.val, cfg.grid, cfg.base_hp,
                                               cfg.objective, 3, panel, cols, opts);
            model.hp = result.best;
            model.weights = std::move(result.best_weights);
            model.report = std::move(result.best_report);
            model.leaderboard = std::move(result.leaderboard);
        }
    });

    StageResult res;
    for (const auto& model : models) {
        const std::string tag = "c" + std::to_string(model.cluster_id) + "_f" + std::to_string(model.fold + 1);
        const auto g = load_graph(cfg, model.cluster_id);
        recurrent::CheckpointMeta meta;
        meta.window_size = cfg.window_size;
        meta.horizon = cfg.horizon;
        meta.hidden = model.hp.hidden;
        meta.heads = model.hp.heads;
        meta.layers = model.hp.layers;
        meta.in_dim = 3;
        meta.n_nodes = static_cast<int>(g.nodes.size());
        meta.dropout = model.hp.dropout;
        meta.seed = task_seed(cfg, model.cluster_id, model.fold);
        meta.normalization_ref = "normalization.json";
        for (const auto& n : g.nodes) meta.node_ids.push_back(n.id);

        const std::string blob = cfg.out_path("checkpoint_" + tag + ".bin");
        const std::string manifest = cfg.out_path("checkpoint_" + tag + ".json");
        recurrent::save_checkpoint(blob, manifest, model.weights, meta);
        const std::string report_path = cfg.out_path("train_report_" + tag + ".json");
        write_train_report(report_path, model);
        res.outputs.insert(res.outputs.end(), {blob, manifest, report_path});

        if (!model.leaderboard.empty()) {
            const std::string lb_path = cfg.out_path("leaderboard_" + tag + ".csv");
            std::ofstream lb(lb_path);
            lb << "rank,heads,hidden,layers,dropout,score,failed,note\n";
            for (std::size_t i = 0; i < model.leaderboard.size(); ++i) {
                const auto& row = model.leaderboard[i];
                lb << i + 1 << ',' << row.hp.heads << ',' << row.hp.hidden << ',' << row.hp.layers << ','
                   << csv::format_double(row.hp.dropout) << ',' << csv::format_double(row.score) << ','
                   << (row.failed ? 1 : 0) << ',' << row.note << '\n';
            }
            res.outputs.push_back(lb_path);
        }
    }
    return res;
}

recurrent::CellWeights load_model(const PipelineConfig& cfg, int cluster_id, int fold,
                                  recurrent::CheckpointMeta* meta) {
    const std::string tag = "c" + std::to_string(cluster_id) + "_f" + std::to_string(fold + 1);
    const std::string blob = cfg.out_path("checkpoint_" + tag + ".bin");
    const std::string manifest = cfg.out_path("checkpoint_" + tag + ".json");
    if (!fs::exists(blob) || !fs::exists(manifest))
        throw MissingArtifactError("missing checkpoint " + blob + " (run the train stage first)");
    return recurrent::load_checkpoint(blob, manifest, meta);
}

StageResult stage_predict(const PipelineConfig& cfg) {
    require_artifact(cfg.out_path("panel.csv"), "panel artifact");
    const auto panel = read_panel(cfg.out_path("panel.csv"), cfg.out_path("normalization.json"));
    const auto assignment = read_clusters_json(cfg.out_path("clusters.json"));

    StageResult res;
    for (std::size_t f = 0; f < cfg.folds.size(); ++f) {
        for (int cid : cluster_ids(assignment)) {
            const auto g = load_graph(cfg, cid);
            const auto topo = gat::Topology::from_graph(g);
            recurrent::CheckpointMeta meta;
            const auto weights = load_model(cfg, cid, static_cast<int>(f), &meta);
            const auto fold_windows =
                trainer::two_fold_protocol(panel, g, cfg.folds[f], cfg.window_size, cfg.horizon);
            const auto cols = station_columns(panel, topo, g);

            std::vector<ForecastRow> rows;
            for (const auto& win : fold_windows.test) {
                const Eigen::MatrixXd forecast = recurrent::rollout_forecast(win, weights, topo, panel, cols);
                for (long s = 0; s < forecast.rows(); ++s) {
                    const auto& sid = g.nodes[static_cast<std::size_t>(topo.station_nodes[static_cast<std::size_t>(s)])].id;
                    for (int h = 0; h < cfg.horizon; ++h) {
                        ForecastRow fr;
                        fr.station_id = sid;
                        fr.anchor = win.anchor;
                        fr.horizon = h + 1;
                        fr.target = win.anchor.plus_months(cfg.window_size + h);
                        fr.value = forecast(s, h);
                        rows.push_back(fr);
                    }
                }
            }
            const std::string path =
                cfg.out_path("forecast_raw_c" + std::to_string(cid) + "_f" + std::to_string(f + 1) + ".csv");
            write_forecast_csv(path, rows);
            res.outputs.push_back(path);
        }
    }
    return res;
}

StageResult stage_map_extremes(const PipelineConfig& cfg) {
    require_artifact(cfg.out_path("panel.csv"), "panel artifact");
    const auto panel = read_panel(cfg.out_path("panel.csv"), cfg.out_path("normalization.json"));
    const auto assignment = read_clusters_json(cfg.out_path("clusters.json"));
    const auto ids = cluster_ids(assignment);

    StageResult res;
    std::vector<evt::GpdFit> all_fits;
    std::vector<std::string> mapping_log;

    for (std::size_t f = 0; f < cfg.folds.size(); ++f) {
        struct ClusterOut {
            std::vector<ForecastRow> mapped;
            std::vector<evt::GpdFit> fits;
            std::vector<std::string> log;
        };
        std::vector<ClusterOut> outs(ids.size());

        parallel_for_tasks(static_cast<int>(ids.size()), cfg.threads, [&](int ci) {
            const int cid = ids[static_cast<std::size_t>(ci)];
            const auto g = load_graph(cfg, cid);
            const auto topo = gat::Topology::from_graph(g);
            recurrent::CheckpointMeta meta;
            const auto weights = load_model(cfg, cid, static_cast<int>(f), &meta);
            const auto fold_windows =
                trainer::two_fold_protocol(panel, g, cfg.folds[f], cfg.window_size, cfg.horizon);
            const auto cols = station_columns(panel, topo, g);

            // Horizon-1 in-sample predictions over the training span form the
            // prediction-side tail sample.
            std::vector<MonthlySeries> pred_series(cols.size());
            for (const auto& win : fold_windows.train) {
                const Eigen::MatrixXd forecast = recurrent::rollout_forecast(win, weights, topo, panel, cols);
                const YearMonth target = win.anchor.plus_months(cfg.window_size);
                for (std::size_t s = 0; s < cols.size(); ++s)
                    pred_series[s].set(target, forecast(static_cast<long>(s), 0));
            }

            // Observation series over the same fold training span, real units.
            const auto& fold = cfg.folds[f];
            std::vector<MonthlySeries> obs_series(cols.size());
            for (long r = 0; r < panel.rows(); ++r) {
                const YearMonth ym = panel.month_at(r);
                if (ym < fold.train_start || fold.train_end < ym) continue;
                for (std::size_t s = 0; s < cols.size(); ++s)
                    obs_series[s].set(ym, panel.inverse_scale(cols[s], panel.values(r, cols[s])));
            }

            std::map<std::string, std::map<evt::Season, evt::TailMapping>> mappings;
            ClusterOut& co = outs[static_cast<std::size_t>(ci)];
            for (std::size_t s = 0; s < cols.size(); ++s) {
                const auto& sid =
                    g.nodes[static_cast<std::size_t>(topo.station_nodes[s])].id;
                auto station_maps = evt::build_tail_mapping(obs_series[s], pred_series[s], sid, cid, cfg.evt_q,
                                                            cfg.evt_include_dry);
                for (auto& m : station_maps) {
                    if (m.enabled) {
                        co.fits.push_back(m.observation);
                        co.fits.push_back(m.prediction);
                    } else {
                        co.log.push_back("fold " + std::to_string(f + 1) + " cluster " + std::to_string(cid) +
                                         " station " + sid + " season " + evt::season_name(m.season) +
                                         " disabled: " + m.disabled_reason);
                    }
                    mappings[sid][m.season] = std::move(m);
                }
            }

            const std::string raw_path =
                cfg.out_path("forecast_raw_c" + std::to_string(cid) + "_f" + std::to_string(f + 1) + ".csv");
            auto rows = read_forecast_csv(raw_path);
            for (auto& row : rows) {
                const evt::Season season = evt::season_of(cid, row.target.month);
                const auto sit = mappings.find(row.station_id);
                double mapped = row.value;
                if (sit != mappings.end()) {
                    const auto mit = sit->second.find(season);
                    if (mit != sit->second.end()) mapped = evt::apply_tail_mapping(row.value, mit->second);
                }
                row.value = std::max(0.0, mapped);
            }
            co.mapped = std::move(rows);
        });

        for (std::size_t ci = 0; ci < ids.size(); ++ci) {
            const int cid = ids[ci];
            const std::string path =
                cfg.out_path("forecast_mapped_c" + std::to_string(cid) + "_f" + std::to_string(f + 1) + ".csv");
            write_forecast_csv(path, outs[ci].mapped);
            res.outputs.push_back(path);
            all_fits.insert(all_fits.end(), outs[ci].fits.begin(), outs[ci].fits.end());
            mapping_log.insert(mapping_log.end(), outs[ci].log.begin(), outs[ci].log.end());
        }
    }

    const std::string fits_path = cfg.out_path("gpd_fits.csv");
    evt::write_fits_csv(fits_path, all_fits);
    res.outputs.push_back(fits_path);

    const std::string log_path = cfg.out_path("mapping_log.txt");
    std::ofstream log(log_path);
    for (const auto& line : mapping_log) log << line << '\n';
    res.outputs.push_back(log_path);
    return res;
}

StageResult stage_evaluate(const PipelineConfig& cfg) {
    require_artifact(cfg.out_path("panel.csv"), "panel artifact");
    const auto panel = read_panel(cfg.out_path("panel.csv"), cfg.out_path("normalization.json"));
    const auto assignment = read_clusters_json(cfg.out_path("clusters.json"));

    const std::string cells_path = cfg.out_path("eval_cells.csv");
    std::ofstream cells(cells_path);
    cells << "fold,cluster,variant,station,horizon,count,rmse,accuracy,smape,nse\n";

    struct ClusterAgg {
        double rmse = 0.0, acc = 0.0, smape = 0.0, nse = 0.0;
        int folds = 0;
    };
    std::map<int, std::map<std::string, ClusterAgg>> agg;  // cluster -> variant

    for (std::size_t f = 0; f < cfg.folds.size(); ++f) {
        for (int cid : cluster_ids(assignment)) {
            for (const std::string variant : {"raw", "mapped"}) {
                const std::string path = cfg.out_path("forecast_" + variant + "_c" + std::to_string(cid) + "_f" +
                                                      std::to_string(f + 1) + ".csv");
                const auto rows = read_forecast_csv(path);
                std::map<std::string, metrics::SampleSet> sets;
                for (const auto& row : rows) {
                    const int col = panel.column(row.station_id);
                    if (col < 0) throw std::runtime_error("eval: unknown station " + row.station_id);
                    const long r = row.target.serial() - panel.start.serial();
                    if (r < 0 || r >= panel.rows()) continue;  // target beyond observations
                    auto& set = sets[row.station_id];
                    set.station_id = row.station_id;
                    set.horizon.push_back(row.horizon);
                    set.obs.push_back(panel.inverse_scale(col, panel.values(r, col)));
                    set.pred.push_back(row.value);
                }
                std::vector<metrics::SampleSet> ordered;
                for (auto& [sid, set] : sets) ordered.push_back(std::move(set));
                const auto table = metrics::evaluate(ordered);
                for (const auto& cell : table.cells)
                    cells << f + 1 << ',' << cid << ',' << variant << ',' << cell.station_id << ',' << cell.horizon
                          << ',' << cell.count << ',' << csv::format_double(cell.rmse) << ','
                          << csv::format_double(cell.accuracy) << ',' << csv::format_double(cell.smape) << ','
                          << (cell.nse_defined ? csv::format_double(cell.nse) : "") << '\n';
                for (const auto& cell : table.station_pooled)
                    cells << f + 1 << ',' << cid << ',' << variant << ',' << cell.station_id << ",pooled,"
                          << cell.count << ',' << csv::format_double(cell.rmse) << ','
                          << csv::format_double(cell.accuracy) << ',' << csv::format_double(cell.smape) << ','
                          << (cell.nse_defined ? csv::format_double(cell.nse) : "") << '\n';
                auto& a = agg[cid][variant];
                a.rmse += table.agg_rmse;
                a.acc += table.agg_accuracy;
                a.smape += table.agg_smape;
                a.nse += table.agg_nse;
                ++a.folds;
            }
        }
    }
    cells.close();

    const std::string eval_path = cfg.out_path("eval.csv");
    std::ofstream ev(eval_path);
    ev << "cluster,metric,raw,mapped\n";
    for (const auto& [cid, variants] : agg) {
        const auto& raw = variants.at("raw");
        const auto& mapped = variants.at("mapped");
        auto emit = [&](const std::string& metric, double rv, double mv) {
            ev << cid << ',' << metric << ',' << csv::format_double(rv) << ',' << csv::format_double(mv) << '\n';
        };
        emit("accuracy", raw.acc / raw.folds, mapped.acc / mapped.folds);
        emit("rmse", raw.rmse / raw.folds, mapped.rmse / mapped.folds);
        emit("smape", raw.smape / raw.folds, mapped.smape / mapped.folds);
        emit("nse", raw.nse / raw.folds, mapped.nse / mapped.folds);
    }
    ev.close();

    StageResult res;
    res.outputs = {cells_path, eval_path};
    return res;
}

StageResult stage_render_map(const PipelineConfig& cfg) {
    const std::string stations_path = cfg.out_path("stations_imputed.csv");
    require_artifact(stations_path, "imputed stations artifact");
    const auto records = ingest::load_station_csv(stations_path);
    const auto assignment = read_clusters_json(cfg.out_path("clusters.json"));

    std::map<std::string, std::pair<double, double>> coords;
    double lat_min = 90, lat_max = -90, lon_min = 180, lon_max = -180;
    for (const auto& r : records) {
        coords[r.station_id] = {r.lat, r.lon};
        lat_min = std::min(lat_min, r.lat);
        lat_max = std::max(lat_max, r.lat);
        lon_min = std::min(lon_min, r.lon);
        lon_max = std::max(lon_max, r.lon);
    }

    // Fold-1 mapped forecasts, merged across clusters by target month.
    std::map<long, std::vector<idw::StationValue>> by_month;
    for (int cid : cluster_ids(assignment)) {
        const std::string path = cfg.out_path("forecast_mapped_c" + std::to_string(cid) + "_f1.csv");
        for (const auto& row : read_forecast_csv(path)) {
            const auto& c = coords.at(row.station_id);
            by_month[row.target.serial()].push_back({c.first, c.second, row.value});
        }
    }

    idw::GridSpec spec;
    spec.cell = cfg.idw_cell;
    spec.lon0 = lon_min - cfg.idw_cell;
    spec.lat0 = lat_min - cfg.idw_cell;
    spec.n_lon = static_cast<int>(std::ceil((lon_max - lon_min) / cfg.idw_cell)) + 3;
    spec.n_lat = static_cast<int>(std::ceil((lat_max - lat_min) / cfg.idw_cell)) + 3;

    StageResult res;
    const fs::path maps_dir = fs::path(cfg.out_path("maps"));
    fs::create_directories(maps_dir);
    for (const auto& [serial, stations] : by_month) {
        const YearMonth ym = YearMonth::from_serial(serial);
        const auto raster = idw::idw_interpolate(stations, spec, cfg.idw_power);
        const std::string prefix = (maps_dir / ("map_" + ym.str())).string();
        const auto rendered = idw::render_map(raster, prefix);
        if (rendered.degenerate) std::cerr << "[render-map] flat raster for " << ym.str() << "\n";
        res.outputs.push_back(prefix + ".csv");
        res.outputs.push_back(rendered.image_path);
    }
    return res;
}

}  // namespace

StageResult run_stage(Stage stage, const PipelineConfig& cfg, bool force) {
    fs::path out_dir(cfg.output_dir);
    if (out_dir.is_relative()) out_dir = fs::path(cfg.config_dir) / out_dir;
    fs::create_directories(out_dir);

    if (!force) {
        StageResult skipped;
        if (manifest_matches(cfg, stage, &skipped.outputs)) {
            skipped.skipped = true;
            return skipped;
        }
        if (manifest_exists(cfg, stage))
            throw ConfigError("stage " + stage_name(stage) +
                              " has artifacts from a different config (config-hash mismatch); rerun with --force");
    }

    StageResult res;
    std::vector<std::string> inputs;
    switch (stage) {
        case Stage::Ingest:
            inputs = {cfg.resolve(cfg.stations_csv), cfg.resolve(cfg.indices_csv)};
            res = stage_ingest(cfg);
            break;
        case Stage::Cluster:
            inputs = {cfg.out_path("stations_imputed.csv")};
            res = stage_cluster(cfg);
            break;
        case Stage::Physics:
            inputs = {cfg.out_path("stations_imputed.csv"), cfg.resolve(cfg.winds_csv)};
            res = stage_physics(cfg);
            break;
        case Stage::Graph:
            inputs = {cfg.out_path("panel.csv"), cfg.out_path("clusters.json"), cfg.out_path("edge_features.csv")};
            res = stage_graph(cfg);
            break;
        case Stage::Train:
            inputs = {cfg.out_path("panel.csv"), cfg.out_path("clusters.json")};
            res = stage_train(cfg);
            break;
        case Stage::Predict:
            inputs = {cfg.out_path("panel.csv"), cfg.out_path("clusters.json")};
            res = stage_predict(cfg);
            break;
        case Stage::MapExtremes:
            inputs = {cfg.out_path("panel.csv"), cfg.out_path("clusters.json")};
            res = stage_map_extremes(cfg);
            break;
        case Stage::Evaluate:
            inputs = {cfg.out_path("panel.csv"), cfg.out_path("clusters.json")};
            res = stage_evaluate(cfg);
            break;
        case Stage::RenderMap:
            inputs = {cfg.out_path("stations_imputed.csv"), cfg.out_path("clusters.json")};
            res = stage_render_map(cfg);
            break;
    }
    write_manifest(cfg, stage, inputs, res.outputs);
    return res;
}

}  // namespace raingraph::pipeline
