#include "raingraph/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "raingraph/errors.hpp"
#include "raingraph/metrics.hpp"

namespace raingraph::trainer {

std::vector<Hyperparams> HyperGrid::enumerate(const Hyperparams& base) const {
    if (heads.empty() || hidden.empty() || layers.empty() || dropout.empty())
        throw std::invalid_argument("grid_search: empty grid dimension");
    std::vector<Hyperparams> out;
    for (int k : heads)
        for (int z : hidden)
            for (int l : layers)
                for (double d : dropout) {
                    Hyperparams hp = base;
                    hp.heads = k;
                    hp.hidden = z;
                    hp.layers = l;
                    hp.dropout = d;
                    out.push_back(hp);
                }
    return out;
}

HuberResult adaptive_huber(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth, double delta) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
        throw std::invalid_argument("adaptive_huber: shape mismatch");
    if (!(delta > 0.0)) throw std::invalid_argument("adaptive_huber: delta must be > 0");
    if (!pred.allFinite() || !truth.allFinite()) throw NumericalError("adaptive_huber: non-finite inputs");

    const double n = static_cast<double>(pred.size());
    HuberResult out;
    out.grad.resize(pred.rows(), pred.cols());
    double acc = 0.0;
    for (long c = 0; c < pred.cols(); ++c) {
        for (long r = 0; r < pred.rows(); ++r) {
            const double res = pred(r, c) - truth(r, c);
            const double abs_r = std::fabs(res);
            if (abs_r <= delta) {
                acc += 0.5 * res * res;
                out.grad(r, c) = res / n;
            } else {
                acc += delta * (abs_r - 0.5 * delta);
                out.grad(r, c) = delta * (res > 0.0 ? 1.0 : -1.0) / n;
            }
        }
    }
    out.loss = acc / n;
    return out;
}

namespace {

double validation_loss(const recurrent::CellWeights& w, const gat::Topology& topo,
                       const std::vector<recurrent::SnapshotWindow>& windows, double delta) {
    double acc = 0.0;
    for (const auto& win : windows) {
        recurrent::RolloutCache cache = recurrent::rollout_forward(win, w, topo, nullptr);
        acc += adaptive_huber(cache.prediction, win.targets, delta).loss;
    }
    return acc / static_cast<double>(windows.size());
}

void optimizer_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state, OptimizerKind kind,
                    double lr) {
    if (kind == OptimizerKind::Sgd) {
        params -= lr * grad;
        return;
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    if (state.m.size() != grad.size()) {
        state.m = Eigen::VectorXd::Zero(grad.size());
        state.v = Eigen::VectorXd::Zero(grad.size());
        state.step = 0;
    }
    ++state.step;
    state.m = beta1 * state.m + (1.0 - beta1) * grad;
    state.v = beta2 * state.v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    params -= (lr * (state.m / bc1).array() / ((state.v / bc2).array().sqrt() + eps)).matrix();
}

recurrent::DropoutPlan make_dropout(double rate, int steps, int n_layers, long n_nodes, long hidden,
                                    std::mt19937_64& rng) {
    recurrent::DropoutPlan plan;
    plan.rate = rate;
    if (rate <= 0.0) return plan;
    std::bernoulli_distribution keep(1.0 - rate);
    const double scale = 1.0 / (1.0 - rate);
    plan.masks.resize(static_cast<std::size_t>(steps * n_layers * 4));
    for (auto& m : plan.masks) {
        m.resize(n_nodes, hidden);
        for (long c = 0; c < hidden; ++c)
            for (long r = 0; r < n_nodes; ++r) m(r, c) = keep(rng) ? scale : 0.0;
    }
    return plan;
}

}  // namespace

std::pair<recurrent::CellWeights, TrainReport> train_cluster(
    const gat::Topology& topo, const std::vector<recurrent::SnapshotWindow>& train_windows,
    const std::vector<recurrent::SnapshotWindow>& val_windows, const Hyperparams& hp, int in_dim,
    const TrainOptions& opts) {
    if (train_windows.empty() || val_windows.empty())
        throw std::invalid_argument("train_cluster: train and validation window sets must be non-empty");
    if (hp.patience < 0 || hp.max_epochs < 1) throw std::invalid_argument("train_cluster: bad epoch limits");

    const int horizon = static_cast<int>(train_windows.front().targets.cols());
    recurrent::CellWeights weights =
        recurrent::CellWeights::init(hp.layers, hp.heads, in_dim, hp.hidden, horizon, topo.n_nodes, opts.seed);

    Eigen::VectorXd params = weights.flatten();
    AdamState adam;
    std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);

    TrainReport report;
    Eigen::VectorXd best_params = params;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;

    std::vector<std::size_t> order(train_windows.size());
    std::iota(order.begin(), order.end(), 0);

    const int steps = static_cast<int>(train_windows.front().inputs.size());
    for (int epoch = 0; epoch < hp.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);

        double train_acc = 0.0;
        bool clipped = false;
        for (std::size_t idx : order) {
            const auto& win = train_windows[idx];
            recurrent::DropoutPlan plan =
                make_dropout(hp.dropout, steps, hp.layers, topo.n_nodes, hp.hidden, rng);
            const recurrent::DropoutPlan* planp = plan.masks.empty() ? nullptr : &plan;

            recurrent::RolloutCache cache = recurrent::rollout_forward(win, weights, topo, planp);
            HuberResult hub = adaptive_huber(cache.prediction, win.targets, hp.delta);
            if (!std::isfinite(hub.loss)) {
                report.stop_reason = "diverged";
                recurrent::CellWeights best = weights;
                best.unflatten(best_params);
                return {best, report};
            }
            train_acc += hub.loss;

            recurrent::CellGrads grads = recurrent::rollout_backward(hub.grad, win, weights, topo, cache, planp);
            const double norm = grads.flat.norm();
            if (opts.clip_norm > 0.0 && norm > opts.clip_norm) {
                grads.flat *= opts.clip_norm / norm;
                clipped = true;
            }
            optimizer_step(params, grads.flat, adam, opts.optimizer, hp.lr);
            weights.unflatten(params);
        }

        const double val = validation_loss(weights, topo, val_windows, hp.delta);
        const auto t1 = std::chrono::steady_clock::now();

        EpochStat stat;
        stat.epoch = epoch;
        stat.train_loss = train_acc / static_cast<double>(train_windows.size());
        stat.val_loss = val;
        stat.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        stat.clipped = clipped;
        report.epochs.push_back(stat);
        report.final_train_loss = stat.train_loss;

        if (!std::isfinite(val)) {
            report.stop_reason = "diverged";
            break;
        }
        if (val < best_val) {
            best_val = val;
            best_params = params;
            report.best_epoch = epoch;
            since_best = 0;
        } else {
            ++since_best;
            if (since_best > hp.patience) {
                report.stop_reason = "early_stopping";
                break;
            }
        }
    }
    if (report.stop_reason.empty()) report.stop_reason = "max_epochs";
    report.best_val_loss = best_val;

    weights.unflatten(best_params);
    return {weights, report};
}

Objective objective_from_name(const std::string& name) {
    if (name == "accuracy") return Objective::Accuracy;
    if (name == "rmse") return Objective::Rmse;
    if (name == "nse") return Objective::Nse;
    throw std::invalid_argument("unknown objective: " + name);
}

std::string objective_name(Objective o) {
    switch (o) {
        case Objective::Accuracy: return "accuracy";
        case Objective::Rmse: return "rmse";
        case Objective::Nse: return "nse";
    }
    throw std::logic_error("unreachable objective");
}

double score_windows(const recurrent::CellWeights& w, const gat::Topology& topo,
                     const std::vector<recurrent::SnapshotWindow>& windows, Objective objective,
                     const ingest::MonthlyPanel& panel, const std::vector<int>& station_cols) {
    std::vector<double> obs, pred;
    for (const auto& win : windows) {
        const Eigen::MatrixXd forecast = recurrent::rollout_forecast(win, w, topo, panel, station_cols);
        for (long s = 0; s < forecast.rows(); ++s) {
            for (long h = 0; h < forecast.cols(); ++h) {
                obs.push_back(panel.inverse_scale(station_cols[static_cast<std::size_t>(s)], win.targets(s, h)));
                pred.push_back(forecast(s, h));
            }
        }
    }
    switch (objective) {
        case Objective::Accuracy: return metrics::accuracy(obs, pred).value;
        case Objective::Rmse: return metrics::rmse(obs, pred);
        case Objective::Nse: return metrics::nse(obs, pred);
    }
    throw std::logic_error("unreachable objective");
}

GridSearchResult grid_search(const gat::Topology& topo, const std::vector<recurrent::SnapshotWindow>& train_windows,
                             const std::vector<recurrent::SnapshotWindow>& val_windows, const HyperGrid& grid,
                             const Hyperparams& base, Objective objective, int in_dim,
                             const ingest::MonthlyPanel& panel, const std::vector<int>& station_cols,
                             const TrainOptions& opts) {
    const auto combos = grid.enumerate(base);
    const bool lower_is_better = objective == Objective::Rmse;

    GridSearchResult result;
    bool have_best = false;
    double best_score = 0.0;

    for (const auto& hp : combos) {
        LeaderboardRow row;
        row.hp = hp;
        try {
            auto [w, report] = train_cluster(topo, train_windows, val_windows, hp, in_dim, opts);
            if (report.stop_reason == "diverged") {
                row.failed = true;
                row.note = "diverged";
            } else {
                row.score = score_windows(w, topo, val_windows, objective, panel, station_cols);
                const bool better =
                    !have_best || (lower_is_better ? row.score < best_score : row.score > best_score);
                if (better) {
                    have_best = true;
                    best_score = row.score;
                    result.best = hp;
                    result.best_weights = std::move(w);
                    result.best_report = std::move(report);
                }
            }
        } catch (const std::exception& e) {
            row.failed = true;
            row.note = e.what();
        }
        result.leaderboard.push_back(std::move(row));
    }
    if (!have_best) throw NumericalError("grid_search: every combination failed");

    std::stable_sort(result.leaderboard.begin(), result.leaderboard.end(),
                     [&](const LeaderboardRow& a, const LeaderboardRow& b) {
                         if (a.failed != b.failed) return !a.failed;
                         if (a.failed) return false;
                         return lower_is_better ? a.score < b.score : a.score > b.score;
                     });
    return result;
}

FoldWindows two_fold_protocol(const ingest::MonthlyPanel& panel, const graph::TeleconnectionGraph& g,
                              const FoldSpec& fold, int window_size, int horizon, int stride) {
    if (!(fold.train_start <= fold.train_end) || !(fold.val_start <= fold.val_end) ||
        !(fold.test_start <= fold.test_end))
        throw std::invalid_argument("two_fold_protocol: span ends before start");
    if (!(fold.train_end < fold.val_start) || !(fold.val_end < fold.test_start))
        throw std::invalid_argument("two_fold_protocol: overlapping split boundaries");
    if (fold.train_start < panel.start || panel.month_at(panel.rows() - 1) < fold.test_end)
        throw std::invalid_argument("two_fold_protocol: panel does not cover the fold spans");

    const auto windows = recurrent::make_snapshots(panel, g, window_size, horizon, stride);
    FoldWindows out;
    for (const auto& win : windows) {
        const YearMonth first_target = win.anchor.plus_months(window_size);
        const YearMonth last_target = win.anchor.plus_months(window_size + horizon - 1);
        if (fold.train_start <= win.anchor && last_target <= fold.train_end) {
            out.train.push_back(win);
        } else if (fold.val_start <= first_target && last_target <= fold.val_end) {
            out.val.push_back(win);
        } else if (fold.test_start <= first_target && last_target <= fold.test_end) {
            out.test.push_back(win);
        }
    }
    if (out.test.empty()) throw std::invalid_argument("two_fold_protocol: empty test span");
    if (out.val.empty()) throw std::invalid_argument("two_fold_protocol: empty validation span");
    if (out.train.empty()) throw std::invalid_argument("two_fold_protocol: empty training span");
    return out;
}

}  // namespace raingraph::trainer
