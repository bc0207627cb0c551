#pragma once

#include <map>
#include <string>
#include <vector>

namespace raingraph::metrics {

double rmse(const std::vector<double>& obs, const std::vector<double>& pred);

struct AccuracyResult {
    double value = 0.0;          // percent, 100 - error
    bool used_mape = true;       // false when a zero observation forced the SMAPE fallback
};

// 100 - MAPE when every observation is positive, otherwise 100 - SMAPE.
AccuracyResult accuracy(const std::vector<double>& obs, const std::vector<double>& pred);

// Mean of 2|y-y'|/(|y|+|y'|) * 100; a both-zero pair counts as a perfect
// (0%) term; errors when every pair is both-zero.
double smape(const std::vector<double>& obs, const std::vector<double>& pred);

// Nash-Sutcliffe efficiency, 1 - SSE/SStot about the observed mean.
double nse(const std::vector<double>& obs, const std::vector<double>& pred);

struct EvalCell {
    std::string station_id;
    int horizon = 0;  // 1-based forecast step; 0 = pooled over horizons
    double rmse = 0.0;
    double accuracy = 0.0;
    double smape = 0.0;
    double nse = 0.0;
    bool nse_defined = false;
    int count = 0;
};

struct EvalTable {
    std::vector<EvalCell> cells;           // per (station, horizon)
    std::vector<EvalCell> station_pooled;  // per station over all horizons
    double agg_rmse = 0.0;
    double agg_accuracy = 0.0;
    double agg_smape = 0.0;
    double agg_nse = 0.0;  // mean over stations of the pooled NSE
};

// obs/pred: per station, aligned sample lists tagged by horizon.
struct SampleSet {
    std::string station_id;
    std::vector<int> horizon;
    std::vector<double> obs;
    std::vector<double> pred;
};

EvalTable evaluate(const std::vector<SampleSet>& samples);

}  // namespace raingraph::metrics
