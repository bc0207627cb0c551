#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "raingraph/recurrent.hpp"

namespace raingraph::trainer {

struct Hyperparams {
    int heads = 8;
    int hidden = 32;
    int layers = 1;
    double dropout = 0.2;
    double lr = 0.01;
    double delta = 1.0;
    int max_epochs = 200;
    int patience = 50;
};

struct HyperGrid {
    std::vector<int> heads{1, 4, 8, 16};
    std::vector<int> hidden{16, 32, 64};
    std::vector<int> layers{1, 2, 3};
    std::vector<double> dropout{0.0, 0.2, 0.5};

    std::size_t combinations() const { return heads.size() * hidden.size() * layers.size() * dropout.size(); }
    std::vector<Hyperparams> enumerate(const Hyperparams& base) const;
};

struct HuberResult {
    double loss = 0.0;
    Eigen::MatrixXd grad;  // dloss/dpred, same shape as pred
};

// Mean elementwise Huber: 0.5 r^2 inside |r| <= delta, delta(|r| - delta/2)
// outside; gradient is r/n or delta*sign(r)/n.
HuberResult adaptive_huber(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth, double delta);

enum class OptimizerKind { Adam, Sgd };

struct AdamState {
    Eigen::VectorXd m, v;
    long step = 0;
};

struct EpochStat {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double wall_ms = 0.0;
    bool clipped = false;
};

struct TrainReport {
    std::vector<EpochStat> epochs;
    int best_epoch = -1;
    double best_val_loss = 0.0;
    std::string stop_reason;  // "early_stopping" | "max_epochs" | "diverged"
    double final_train_loss = 0.0;
};

struct TrainOptions {
    OptimizerKind optimizer = OptimizerKind::Adam;
    double clip_norm = 5.0;
    std::uint64_t seed = 0;
};

// Algorithm: per-snapshot steps, shuffled each epoch with the run seed,
// validation Huber after each epoch, patience-based early stopping, best
// validation weights returned. Divergence aborts with reason "diverged".
std::pair<recurrent::CellWeights, TrainReport> train_cluster(
    const gat::Topology& topo, const std::vector<recurrent::SnapshotWindow>& train_windows,
    const std::vector<recurrent::SnapshotWindow>& val_windows, const Hyperparams& hp, int in_dim,
    const TrainOptions& opts = {});

enum class Objective { Accuracy, Rmse, Nse };

Objective objective_from_name(const std::string& name);
std::string objective_name(Objective o);

struct LeaderboardRow {
    Hyperparams hp;
    double score = 0.0;     // objective value on validation
    bool failed = false;
    std::string note;
};

struct GridSearchResult {
    Hyperparams best;
    recurrent::CellWeights best_weights;
    TrainReport best_report;
    std::vector<LeaderboardRow> leaderboard;  // sorted best-first
};

// Trains every combination; scoring needs real-scale values, hence the
// panel + station column binding.
GridSearchResult grid_search(const gat::Topology& topo, const std::vector<recurrent::SnapshotWindow>& train_windows,
                             const std::vector<recurrent::SnapshotWindow>& val_windows, const HyperGrid& grid,
                             const Hyperparams& base, Objective objective, int in_dim,
                             const ingest::MonthlyPanel& panel, const std::vector<int>& station_cols,
                             const TrainOptions& opts = {});

struct FoldSpec {
    YearMonth train_start, train_end;
    YearMonth val_start, val_end;
    YearMonth test_start, test_end;
};

struct FoldWindows {
    std::vector<recurrent::SnapshotWindow> train, val, test;
};

// Chronological split: train windows live fully inside the train span; val
// and test windows target their spans (inputs may reach back).
FoldWindows two_fold_protocol(const ingest::MonthlyPanel& panel, const graph::TeleconnectionGraph& g,
                              const FoldSpec& fold, int window_size, int horizon, int stride = 1);

// Mean validation objective for one trained model, in real units.
double score_windows(const recurrent::CellWeights& w, const gat::Topology& topo,
                     const std::vector<recurrent::SnapshotWindow>& windows, Objective objective,
                     const ingest::MonthlyPanel& panel, const std::vector<int>& station_cols);

}  // namespace raingraph::trainer
