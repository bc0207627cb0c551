#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "raingraph/gat.hpp"
#include "raingraph/ingest.hpp"

namespace raingraph::recurrent {

struct CellState {
    Eigen::MatrixXd h;  // nodes x hidden
    Eigen::MatrixXd c;

    static CellState zeros(long n_nodes, long hidden) {
        return {Eigen::MatrixXd::Zero(n_nodes, hidden), Eigen::MatrixXd::Zero(n_nodes, hidden)};
    }
};

// One GAT per gate; biases are full node x hidden matrices. The gate
// equations add h_{t-1} directly (no recurrent weight matrix); the optional
// r_* projections replace that identity when allocated.
struct GateSet {
    gat::GatWeights forget, input, cell, output;
    Eigen::MatrixXd b_forget, b_input, b_cell, b_output;
    Eigen::MatrixXd r_forget, r_input, r_cell, r_output;  // hidden x hidden, empty = identity recurrence

    bool has_projection() const { return r_forget.size() > 0; }
};

struct CellWeights {
    std::vector<GateSet> layers;  // layer 0 consumes window features, upper layers consume h below
    Eigen::MatrixXd w_read;       // horizon x hidden, shared across stations
    Eigen::VectorXd b_read;       // horizon

    int in_dim = 0;
    int hidden = 0;
    int horizon = 0;
    int n_nodes = 0;

    static CellWeights init(int n_layers, int heads, int in_dim, int hidden, int horizon, int n_nodes,
                            std::uint64_t seed, bool recurrent_projection = false);

    long parameter_count() const;
    Eigen::VectorXd flatten() const;
    void unflatten(const Eigen::VectorXd& flat);
};

struct SnapshotWindow {
    std::vector<Eigen::MatrixXd> inputs;  // window_size matrices, nodes x in_dim
    Eigen::MatrixXd targets;              // stations x horizon, panel (normalized) scale
    YearMonth anchor;                     // month of the first input step
};

// Per-step dropout masks; empty when dropout is off.
struct DropoutPlan {
    double rate = 0.0;
    std::vector<Eigen::MatrixXd> masks;  // step-major: [step*layers*4 + layer*4 + gate]
};

struct StepLayerCache {
    gat::GatCache gf, gi, gc, go;
    Eigen::MatrixXd f, i, ctilde, o;
    Eigen::MatrixXd c, tanh_c, h;
    Eigen::MatrixXd h_prev, c_prev;
};

struct RolloutCache {
    std::vector<std::vector<StepLayerCache>> steps;  // [step][layer]
    Eigen::MatrixXd prediction;                      // stations x horizon
};

// One gated step: pre_gate = GAT(x) + h_prev + b, standard LSTM order
// (c_t before h_t). Gate activations stay in (0,1) / (-1,1) by construction;
// non-finite state aborts.
CellState cell_step(const Eigen::MatrixXd& x, const CellState& state, const GateSet& gates,
                    const gat::Topology& topo, StepLayerCache* cache = nullptr,
                    const Eigen::MatrixXd* drop_f = nullptr, const Eigen::MatrixXd* drop_i = nullptr,
                    const Eigen::MatrixXd* drop_c = nullptr, const Eigen::MatrixXd* drop_o = nullptr);

// Full forward over a window from zero state; readout applies to the final
// hidden rows of station nodes.
RolloutCache rollout_forward(const SnapshotWindow& window, const CellWeights& w, const gat::Topology& topo,
                             const DropoutPlan* dropout = nullptr);

struct CellGrads {
    Eigen::VectorXd flat;  // same layout as CellWeights::flatten
};

// Exact BPTT given d(prediction).
CellGrads rollout_backward(const Eigen::MatrixXd& dprediction, const SnapshotWindow& window, const CellWeights& w,
                           const gat::Topology& topo, const RolloutCache& cache,
                           const DropoutPlan* dropout = nullptr);

// Forecast in mm/month: forward pass then per-station inverse normalization.
// station_cols maps topo.station_nodes order to panel columns.
Eigen::MatrixXd rollout_forecast(const SnapshotWindow& window, const CellWeights& w, const gat::Topology& topo,
                                 const ingest::MonthlyPanel& panel, const std::vector<int>& station_cols);

// Sliding windows over the panel; index node columns are read with their
// graph lag via clamped (head-padded) indexing so the window count is always
// rows - W - H + 1 regardless of lags.
std::vector<SnapshotWindow> make_snapshots(const ingest::MonthlyPanel& panel, const graph::TeleconnectionGraph& g,
                                           int window_size, int horizon, int stride = 1);

struct CheckpointMeta {
    int window_size = 0;
    int horizon = 0;
    int hidden = 0;
    int heads = 0;
    int layers = 0;
    int in_dim = 0;
    int n_nodes = 0;
    double dropout = 0.0;
    double leaky_slope = 0.2;
    std::uint64_t seed = 0;
    std::string normalization_ref;
    std::vector<std::string> node_ids;
};

void save_checkpoint(const std::string& blob_path, const std::string& manifest_path, const CellWeights& w,
                     const CheckpointMeta& meta);
CellWeights load_checkpoint(const std::string& blob_path, const std::string& manifest_path, CheckpointMeta* meta);

}  // namespace raingraph::recurrent
