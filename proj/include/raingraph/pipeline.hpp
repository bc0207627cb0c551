#pragma once

#include <optional>
#include <string>
#include <vector>

#include "raingraph/graph.hpp"
#include "raingraph/ingest.hpp"
#include "raingraph/trainer.hpp"

namespace raingraph::pipeline {

struct PipelineConfig {
    std::string config_dir;  // directory of the config file, for relative paths
    std::string stations_csv, indices_csv, winds_csv;
    std::string terrain_csv, terrain_header;  // optional
    std::optional<YearMonth> study_start, study_end;
    double coverage_min_fraction = 0.8;

    int n_components = 3;
    double distance_d = 3.0;

    double r_threshold = 0.4;
    double alpha = 0.1;
    int max_lag = 3;
    std::optional<double> extreme_percentile;

    double cw = 0.01;
    double tau_c = 0.0;
    double tau_h = 0.0;

    trainer::Hyperparams base_hp;
    trainer::HyperGrid grid;
    int window_size = 24;
    int horizon = 12;
    trainer::Objective objective = trainer::Objective::Accuracy;
    trainer::OptimizerKind optimizer = trainer::OptimizerKind::Adam;

    double evt_q = 95.0;  // percentile in [90, 95]
    bool evt_include_dry = false;

    std::vector<trainer::FoldSpec> folds;
    std::vector<graph::ForcedEdge> forced_edges;

    double idw_power = 2.0;
    double idw_cell = 0.1;

    std::uint64_t seed = 0;
    std::string output_dir = "out";
    int threads = 1;

    // Parses the JSON config; FORECAST_OUTPUT_DIR and FORECAST_THREADS
    // environment variables override their fields.
    static PipelineConfig load(const std::string& path);

    std::string resolve(const std::string& rel) const;
    std::string out_path(const std::string& name) const;
    std::string config_hash() const;  // canonical JSON + seed, FNV-1a hex
};

enum class Stage { Ingest, Cluster, Physics, Graph, Train, Predict, MapExtremes, Evaluate, RenderMap };

const std::vector<std::string>& stage_names();
Stage stage_from_name(const std::string& name);
std::string stage_name(Stage s);

struct StageResult {
    bool skipped = false;
    std::vector<std::string> outputs;
};

// Runs one stage against the artifacts directory; skips on a matching
// manifest, refuses a hash mismatch without force.
StageResult run_stage(Stage stage, const PipelineConfig& cfg, bool force = false);

// Panel artifact I/O (CSV + JSON normalization sidecar).
void write_panel(const std::string& csv_path, const std::string& norm_path, const ingest::MonthlyPanel& panel);
ingest::MonthlyPanel read_panel(const std::string& csv_path, const std::string& norm_path);

}  // namespace raingraph::pipeline
