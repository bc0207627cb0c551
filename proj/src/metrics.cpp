#include "raingraph/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace raingraph::metrics {

namespace {
void check_pair(const std::vector<double>& obs, const std::vector<double>& pred) {
    if (obs.empty()) throw std::invalid_argument("metrics: empty input");
    if (obs.size() != pred.size()) throw std::invalid_argument("metrics: length mismatch");
}
}  // namespace

double rmse(const std::vector<double>& obs, const std::vector<double>& pred) {
    check_pair(obs, pred);
    double s = 0.0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const double r = obs[i] - pred[i];
        s += r * r;
    }
    return std::sqrt(s / static_cast<double>(obs.size()));
}

AccuracyResult accuracy(const std::vector<double>& obs, const std::vector<double>& pred) {
    check_pair(obs, pred);
    const bool all_positive = std::all_of(obs.begin(), obs.end(), [](double y) { return y > 0.0; });
    AccuracyResult out;
    if (all_positive) {
        double mape = 0.0;
        for (std::size_t i = 0; i < obs.size(); ++i) mape += std::fabs(obs[i] - pred[i]) / obs[i];
        out.value = 100.0 - mape / static_cast<double>(obs.size()) * 100.0;
        out.used_mape = true;
    } else {
        out.value = 100.0 - smape(obs, pred);
        out.used_mape = false;
    }
    return out;
}

double smape(const std::vector<double>& obs, const std::vector<double>& pred) {
    check_pair(obs, pred);
    double s = 0.0;
    bool any_nonzero = false;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const double denom = std::fabs(obs[i]) + std::fabs(pred[i]);
        if (denom == 0.0) continue;  // both-zero pair: perfect, contributes 0
        any_nonzero = true;
        s += 2.0 * std::fabs(obs[i] - pred[i]) / denom;
    }
    if (!any_nonzero) throw std::domain_error("smape: every pair is zero/zero");
    return s / static_cast<double>(obs.size()) * 100.0;
}

double nse(const std::vector<double>& obs, const std::vector<double>& pred) {
    check_pair(obs, pred);
    double mean = 0.0;
    for (double y : obs) mean += y;
    mean /= static_cast<double>(obs.size());
    double sse = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        sse += (obs[i] - pred[i]) * (obs[i] - pred[i]);
        sst += (obs[i] - mean) * (obs[i] - mean);
    }
    if (sst == 0.0) throw std::domain_error("nse: zero-variance observations");
    return 1.0 - sse / sst;
}

EvalTable evaluate(const std::vector<SampleSet>& samples) {
    EvalTable table;
    double sum_rmse = 0.0, sum_acc = 0.0, sum_smape = 0.0;
    int cell_count = 0;
    double sum_nse = 0.0;
    int nse_count = 0;

    // A cell whose every pair is zero/zero is a perfect no-rain forecast;
    // smape() itself refuses that case, the table does not.
    auto fill_cell = [](EvalCell& cell, const std::vector<double>& o, const std::vector<double>& p) {
        cell.count = static_cast<int>(o.size());
        cell.rmse = rmse(o, p);
        bool all_zero = true;
        for (std::size_t i = 0; i < o.size(); ++i)
            if (o[i] != 0.0 || p[i] != 0.0) all_zero = false;
        if (all_zero) {
            cell.accuracy = 100.0;
            cell.smape = 0.0;
        } else {
            cell.accuracy = accuracy(o, p).value;
            cell.smape = smape(o, p);
        }
        bool variance = false;
        for (double y : o)
            if (y != o[0]) variance = true;
        if (variance) {
            cell.nse = nse(o, p);
            cell.nse_defined = true;
        }
    };

    for (const auto& set : samples) {
        if (set.obs.size() != set.pred.size() || set.obs.size() != set.horizon.size())
            throw std::invalid_argument("evaluate: ragged sample set for " + set.station_id);
        std::set<int> horizons(set.horizon.begin(), set.horizon.end());
        for (int h : horizons) {
            std::vector<double> o, p;
            for (std::size_t i = 0; i < set.obs.size(); ++i) {
                if (set.horizon[i] != h) continue;
                o.push_back(set.obs[i]);
                p.push_back(set.pred[i]);
            }
            EvalCell cell;
            cell.station_id = set.station_id;
            cell.horizon = h;
            fill_cell(cell, o, p);
            sum_rmse += cell.rmse;
            sum_acc += cell.accuracy;
            sum_smape += cell.smape;
            ++cell_count;
            table.cells.push_back(std::move(cell));
        }

        EvalCell pooled;
        pooled.station_id = set.station_id;
        pooled.horizon = 0;
        fill_cell(pooled, set.obs, set.pred);
        if (pooled.nse_defined) {
            sum_nse += pooled.nse;
            ++nse_count;
        }
        table.station_pooled.push_back(std::move(pooled));
    }

    if (cell_count > 0) {
        table.agg_rmse = sum_rmse / cell_count;
        table.agg_accuracy = sum_acc / cell_count;
        table.agg_smape = sum_smape / cell_count;
    }
    if (nse_count > 0) table.agg_nse = sum_nse / nse_count;
    return table;
}

}  // namespace raingraph::metrics
