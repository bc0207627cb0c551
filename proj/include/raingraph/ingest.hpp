#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "raingraph/time_axis.hpp"

namespace raingraph::ingest {

struct StationRecord {
    std::string station_id;
    double lat = 0.0;        // degrees, [-90, 90]
    double lon = 0.0;        // degrees, [-180, 180]
    double elevation = 0.0;  // meters, >= 0
    MonthlySeries rainfall;  // mm/month, gaps allowed

    void validate_coords() const;
};

struct ClimateIndexSeries {
    std::string name;
    MonthlySeries values;  // monthly after preprocessing
};

enum class ColumnKind { Station, Index, Embedding };

struct ColumnNorm {
    double mean = 0.0;
    double std = 1.0;
    bool scaled = false;  // false for embeddings and zero-variance columns
};

// Rectangular monthly panel: every column spans [start, start+rows-1].
struct MonthlyPanel {
    YearMonth start{};
    std::vector<std::string> names;
    std::vector<ColumnKind> kinds;
    Eigen::MatrixXd values;        // rows = months, cols = columns
    std::vector<ColumnNorm> norm;  // one per column

    long rows() const { return values.rows(); }
    long cols() const { return values.cols(); }
    YearMonth month_at(long row) const { return start.plus_months(static_cast<int>(row)); }
    int column(const std::string& name) const;  // -1 when absent

    double inverse_scale(int col, double v) const {
        const ColumnNorm& n = norm.at(static_cast<std::size_t>(col));
        return n.scaled ? v * n.std + n.mean : v;
    }
    double scale(int col, double v) const {
        const ColumnNorm& n = norm.at(static_cast<std::size_t>(col));
        return n.scaled ? (v - n.mean) / n.std : v;
    }
};

struct RejectedRow {
    long line = 0;  // 1-based line number in the file
    std::string reason;
};

// Accepts both layouts, detected from the header:
//   long:  station_id,lat,lon,elevation_m,year,month,rain_mm
//   wide:  station_id,lat,lon,elevation_m,<YYYY-MM>,<YYYY-MM>,...
// Rows with malformed coordinates are skipped and reported through
// `rejects`; duplicate (station, month) pairs and negative rainfall throw.
std::vector<StationRecord> load_station_csv(const std::string& path,
                                            std::vector<RejectedRow>* rejects = nullptr);

// Header year,month,<name>,... ; empty cells are gaps.
std::vector<ClimateIndexSeries> load_index_csv(const std::string& path);

// Header station_id,year,month,u_ms,v_ms.
struct WindSample {
    YearMonth ym;
    double u = 0.0;
    double v = 0.0;
};
std::vector<std::pair<std::string, std::vector<WindSample>>> load_wind_csv(const std::string& path);

// Header year,month,day,value. Cadence reduction input.
std::vector<DailyValue> load_daily_csv(const std::string& path);

// Keeps stations whose reporting fraction over [span_start, span_end] is
// >= min_fraction for every calendar month. Order preserved.
std::vector<StationRecord> coverage_filter(const std::vector<StationRecord>& records, double min_fraction,
                                           std::optional<YearMonth> span_start = std::nullopt,
                                           std::optional<YearMonth> span_end = std::nullopt);

// Fills every gap inside the record's own span with the median of that
// calendar month's observed values. Idempotent.
StationRecord median_impute(const StationRecord& record);

// One value per month: the signed daily value of maximal absolute magnitude,
// so oscillation phase survives the reduction.
MonthlySeries monthly_max_amplitude(const std::vector<DailyValue>& daily);

// Rectangular panel over the intersection span (or the explicit bounds),
// with sin/cos month embeddings appended; z-scores every non-embedding
// column when normalize is set, leaving zero-variance columns unscaled.
MonthlyPanel build_panel(const std::vector<StationRecord>& records,
                         const std::vector<ClimateIndexSeries>& indices, bool normalize,
                         std::optional<YearMonth> span_start = std::nullopt,
                         std::optional<YearMonth> span_end = std::nullopt);

}  // namespace raingraph::ingest
