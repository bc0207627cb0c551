#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "raingraph/time_axis.hpp"

namespace raingraph::evt {

enum class Season { SwMonsoon, NeMonsoon, Onset, Peak, Dry };

std::string season_name(Season s);
Season season_from_name(const std::string& name);

// Table-1 calendar. Clusters 1-4: SW monsoon MJJAS, NE monsoon OND, dry
// JFMA. Clusters 5 and up: onset MAM, peak JJASO, dry NDJF.
Season season_of(int cluster_id, int month);
std::vector<Season> wet_seasons(int cluster_id);

enum class FitSource { Observation, Prediction };

struct GpdFit {
    std::string station_id;
    Season season = Season::Dry;
    FitSource source = FitSource::Observation;
    double threshold = 0.0;  // u, mm/month
    double shape = 0.0;      // xi
    double scale = 1.0;      // a_u, > 0
    int n_exceedances = 0;
    double cap = 0.0;  // max observed value in the fitted slice
    bool converged = false;

    // Upper end of the excess support: -a_u/xi for xi < 0, infinite otherwise.
    double support_max() const;
};

struct PotResult {
    double threshold = 0.0;
    std::vector<double> excesses;  // y - u for y > u, original order
};

// u = empirical Q-th percentile of the values; excesses are strict.
PotResult pot_excesses(const std::vector<double>& values, double q_percentile);

// Season-filtered convenience over a monthly series.
PotResult pot_excesses_seasonal(const MonthlySeries& series, int cluster_id, Season season, double q_percentile);

// CDF of the excess distribution, Q_u(y). Excess must lie in the support.
double gpd_cdf(double excess, double shape, double scale);
// Exact inverse; p in [0,1), or p = 1 allowed when shape < 0 (finite endpoint).
double gpd_quantile(double p, double shape, double scale);

struct MleOptions {
    int grid_points = 400;
    double shape_min = -0.99;
    double shape_max = 2.0;
};

struct MleResult {
    double shape = 0.0;
    double scale = 1.0;
    bool converged = false;
    double log_likelihood = 0.0;
};

// Profile MLE over the tilt eta = xi/a (scale then analytic), safeguarded by
// a scale-free grid plus golden-section refinement. Refuses n <= 10.
MleResult fit_gpd_mle(const std::vector<double>& excesses, const MleOptions& opts = {});

struct TailMapping {
    std::string station_id;
    Season season = Season::Dry;
    bool enabled = false;  // false when either fit was refused or season is dry
    GpdFit observation;
    GpdFit prediction;
    std::string disabled_reason;
};

// Paired fits per wet season at the same percentile. Dry season stays
// disabled unless include_dry is set.
std::vector<TailMapping> build_tail_mapping(const MonthlySeries& observed, const MonthlySeries& predicted,
                                            const std::string& station_id, int cluster_id, double q_percentile,
                                            bool include_dry = false);

// CDF-match the prediction tail into the observation tail; identity below
// the prediction threshold; clamped at the observation cap.
double apply_tail_mapping(double y_pred, const TailMapping& mapping);

// CSV mirroring the fit-table column order:
// station,season,source,u,xi,a_u,exceedances,cap
void write_fits_csv(const std::string& path, const std::vector<GpdFit>& fits);
std::vector<GpdFit> read_fits_csv(const std::string& path);

}  // namespace raingraph::evt
