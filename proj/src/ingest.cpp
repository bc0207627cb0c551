#include "raingraph/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <stdexcept>

#include "raingraph/csv.hpp"
#include "raingraph/stats.hpp"

namespace raingraph::ingest {

void StationRecord::validate_coords() const {
    if (!(lat >= -90.0 && lat <= 90.0)) throw std::invalid_argument("latitude out of range for " + station_id);
    if (!(lon >= -180.0 && lon <= 180.0)) throw std::invalid_argument("longitude out of range for " + station_id);
    if (!(elevation >= 0.0)) throw std::invalid_argument("negative elevation for " + station_id);
}

int MonthlyPanel::column(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    return -1;
}

namespace {

struct CoordCells {
    double lat, lon, elev;
};

std::optional<CoordCells> parse_coords(const std::vector<std::string>& row) {
    auto lat = csv::parse_double(row[1]);
    auto lon = csv::parse_double(row[2]);
    auto elev = csv::parse_double(row[3]);
    if (!lat || !lon || !elev) return std::nullopt;
    if (*lat < -90.0 || *lat > 90.0 || *lon < -180.0 || *lon > 180.0 || *elev < 0.0) return std::nullopt;
    return CoordCells{*lat, *lon, *elev};
}

}  // namespace

std::vector<StationRecord> load_station_csv(const std::string& path, std::vector<RejectedRow>* rejects) {
    const auto rows = csv::read_file(path);
    if (rows.empty()) throw std::runtime_error("empty station file: " + path);
    const auto& header = rows[0];
    if (header.size() < 5 || header[0] != "station_id")
        throw std::runtime_error("station file header must start with station_id,lat,lon,elevation_m: " + path);

    const bool long_format = header.size() >= 7 && header[4] == "year" && header[5] == "month";

    std::vector<YearMonth> wide_months;
    if (!long_format) {
        for (std::size_t c = 4; c < header.size(); ++c) wide_months.push_back(YearMonth::parse(header[c]));
    }

    std::map<std::string, std::size_t> index_of;
    std::vector<StationRecord> records;

    auto station_slot = [&](const std::string& id, const CoordCells& cc) -> StationRecord& {
        auto it = index_of.find(id);
        if (it != index_of.end()) return records[it->second];
        StationRecord rec;
        rec.station_id = id;
        rec.lat = cc.lat;
        rec.lon = cc.lon;
        rec.elevation = cc.elev;
        index_of[id] = records.size();
        records.push_back(std::move(rec));
        return records.back();
    };

    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const long line = static_cast<long>(r) + 1;
        if (row.size() < 4 || row[0].empty()) {
            if (rejects) rejects->push_back({line, "short row"});
            continue;
        }
        auto cc = parse_coords(row);
        if (!cc) {
            if (rejects) rejects->push_back({line, "malformed coordinates"});
            continue;
        }
        if (long_format) {
            if (row.size() < 7) {
                if (rejects) rejects->push_back({line, "short row"});
                continue;
            }
            auto y = csv::parse_long(row[4]);
            auto m = csv::parse_long(row[5]);
            if (!y || !m || !valid_month(static_cast<int>(*m)))
                throw std::runtime_error(path + ":" + std::to_string(line) + ": bad year/month");
            StationRecord& rec = station_slot(row[0], *cc);
            if (row[6].empty()) continue;  // explicit gap
            auto v = csv::parse_double(row[6]);
            if (!v) throw std::runtime_error(path + ":" + std::to_string(line) + ": bad rainfall value");
            if (*v < 0.0) throw std::runtime_error(path + ":" + std::to_string(line) + ": negative rainfall");
            try {
                rec.rainfall.insert_unique({static_cast<int>(*y), static_cast<int>(*m)}, *v);
            } catch (const std::invalid_argument& e) {
                throw std::runtime_error(path + ":" + std::to_string(line) + ": " + e.what() + " for station " +
                                         row[0]);
            }
        } else {
            if (index_of.count(row[0]))
                throw std::runtime_error(path + ":" + std::to_string(line) + ": duplicate station row " + row[0]);
            if (row.size() > wide_months.size() + 4)
                throw std::runtime_error(path + ":" + std::to_string(line) + ": more cells than month columns");
            StationRecord& rec = station_slot(row[0], *cc);
            for (std::size_t c = 4; c < row.size(); ++c) {
                if (row[c].empty()) continue;
                auto v = csv::parse_double(row[c]);
                if (!v) throw std::runtime_error(path + ":" + std::to_string(line) + ": bad rainfall value");
                if (*v < 0.0) throw std::runtime_error(path + ":" + std::to_string(line) + ": negative rainfall");
                rec.rainfall.insert_unique(wide_months[c - 4], *v);
            }
        }
    }
    return records;
}

std::vector<ClimateIndexSeries> load_index_csv(const std::string& path) {
    const auto rows = csv::read_file(path);
    if (rows.empty()) throw std::runtime_error("empty index file: " + path);
    const auto& header = rows[0];
    if (header.size() < 3 || header[0] != "year" || header[1] != "month")
        throw std::runtime_error("index file header must be year,month,<name>,...: " + path);

    std::vector<ClimateIndexSeries> out(header.size() - 2);
    for (std::size_t c = 2; c < header.size(); ++c) out[c - 2].name = header[c];

    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const long line = static_cast<long>(r) + 1;
        auto y = csv::parse_long(row[0]);
        auto m = csv::parse_long(row.size() > 1 ? row[1] : "");
        if (!y || !m || !valid_month(static_cast<int>(*m)))
            throw std::runtime_error(path + ":" + std::to_string(line) + ": bad year/month");
        for (std::size_t c = 2; c < row.size() && c < header.size(); ++c) {
            if (row[c].empty()) continue;
            auto v = csv::parse_double(row[c]);
            if (!v) throw std::runtime_error(path + ":" + std::to_string(line) + ": bad index value");
            out[c - 2].values.insert_unique({static_cast<int>(*y), static_cast<int>(*m)}, *v);
        }
    }
    return out;
}

std::vector<std::pair<std::string, std::vector<WindSample>>> load_wind_csv(const std::string& path) {
    const auto rows = csv::read_file(path);
    if (rows.empty()) throw std::runtime_error("empty wind file: " + path);
    if (rows[0].size() < 5 || rows[0][0] != "station_id")
        throw std::runtime_error("wind file header must be station_id,year,month,u_ms,v_ms: " + path);
    std::map<std::string, std::size_t> index_of;
    std::vector<std::pair<std::string, std::vector<WindSample>>> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const long line = static_cast<long>(r) + 1;
        if (row.size() < 5) throw std::runtime_error(path + ":" + std::to_string(line) + ": short row");
        auto y = csv::parse_long(row[1]);
        auto m = csv::parse_long(row[2]);
        auto u = csv::parse_double(row[3]);
        auto v = csv::parse_double(row[4]);
        if (!y || !m || !valid_month(static_cast<int>(*m)) || !u || !v)
            throw std::runtime_error(path + ":" + std::to_string(line) + ": bad wind row");
        auto it = index_of.find(row[0]);
        if (it == index_of.end()) {
            index_of[row[0]] = out.size();
            out.push_back({row[0], {}});
            it = index_of.find(row[0]);
        }
        out[it->second].second.push_back({{static_cast<int>(*y), static_cast<int>(*m)}, *u, *v});
    }
    return out;
}

std::vector<DailyValue> load_daily_csv(const std::string& path) {
    const auto rows = csv::read_file(path);
    if (rows.empty()) throw std::runtime_error("empty daily file: " + path);
    if (rows[0].size() < 4 || rows[0][0] != "year")
        throw std::runtime_error("daily file header must be year,month,day,value: " + path);
    std::vector<DailyValue> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const long line = static_cast<long>(r) + 1;
        auto y = csv::parse_long(row[0]);
        auto m = csv::parse_long(row.size() > 1 ? row[1] : "");
        auto d = csv::parse_long(row.size() > 2 ? row[2] : "");
        auto v = csv::parse_double(row.size() > 3 ? row[3] : "");
        if (!y || !m || !d || !v || !valid_month(static_cast<int>(*m)))
            throw std::runtime_error(path + ":" + std::to_string(line) + ": bad daily row");
        out.push_back({static_cast<int>(*y), static_cast<int>(*m), static_cast<int>(*d), *v});
    }
    return out;
}

std::vector<StationRecord> coverage_filter(const std::vector<StationRecord>& records, double min_fraction,
                                           std::optional<YearMonth> span_start, std::optional<YearMonth> span_end) {
    if (records.empty()) throw std::invalid_argument("coverage_filter: empty input");
    if (!(min_fraction > 0.0 && min_fraction <= 1.0) && min_fraction != 0.0)
        throw std::invalid_argument("coverage_filter: min_fraction must be in (0,1] (or 0 to keep all)");

    std::vector<StationRecord> kept;
    for (const auto& rec : records) {
        if (rec.rainfall.empty()) continue;
        YearMonth lo = span_start.value_or(rec.rainfall.first());
        YearMonth hi = span_end.value_or(rec.rainfall.last());
        if (hi < lo) throw std::invalid_argument("coverage_filter: span end before start");
        // Reporting fraction per calendar month over the span.
        int total[13] = {0}, present[13] = {0};
        for (long s = lo.serial(); s <= hi.serial(); ++s) {
            YearMonth ym = YearMonth::from_serial(s);
            ++total[ym.month];
            if (rec.rainfall.contains(ym)) ++present[ym.month];
        }
        bool ok = true;
        for (int m = 1; m <= 12; ++m) {
            if (total[m] == 0) continue;
            double frac = static_cast<double>(present[m]) / static_cast<double>(total[m]);
            if (frac < min_fraction) {
                ok = false;
                break;
            }
        }
        if (ok) kept.push_back(rec);
    }
    return kept;
}

StationRecord median_impute(const StationRecord& record) {
    if (record.rainfall.empty()) throw std::invalid_argument("median_impute: empty series for " + record.station_id);
    StationRecord out = record;

    std::vector<double> by_month[13];
    for (const auto& [ym, v] : record.rainfall.entries()) by_month[ym.month].push_back(v);

    const YearMonth lo = record.rainfall.first();
    const YearMonth hi = record.rainfall.last();
    for (long s = lo.serial(); s <= hi.serial(); ++s) {
        YearMonth ym = YearMonth::from_serial(s);
        if (record.rainfall.contains(ym)) continue;
        auto& obs = by_month[ym.month];
        if (obs.empty())
            throw std::domain_error("median_impute: no observation for calendar month " + std::to_string(ym.month) +
                                    " at station " + record.station_id);
        out.rainfall.set(ym, stats::percentile(obs, 50.0));
    }
    return out;
}

MonthlySeries monthly_max_amplitude(const std::vector<DailyValue>& daily) {
    if (daily.empty()) throw std::invalid_argument("monthly_max_amplitude: empty series");
    std::map<long, double> best;  // serial month -> signed value of max |v|
    for (const auto& d : daily) {
        if (!valid_month(d.month)) throw std::invalid_argument("monthly_max_amplitude: bad month");
        long key = YearMonth{d.year, d.month}.serial();
        auto it = best.find(key);
        if (it == best.end() || std::fabs(d.value) > std::fabs(it->second)) best[key] = d.value;
    }
    MonthlySeries out;
    for (const auto& [s, v] : best) out.set(YearMonth::from_serial(s), v);
    return out;
}

MonthlyPanel build_panel(const std::vector<StationRecord>& records, const std::vector<ClimateIndexSeries>& indices,
                         bool normalize, std::optional<YearMonth> span_start, std::optional<YearMonth> span_end) {
    if (records.empty() && indices.empty()) throw std::invalid_argument("build_panel: no columns");

    // Intersection span across every column.
    long lo = std::numeric_limits<long>::min(), hi = std::numeric_limits<long>::max();
    auto meet = [&](const MonthlySeries& s, const std::string& who) {
        if (s.empty()) throw std::invalid_argument("build_panel: empty series for " + who);
        lo = std::max(lo, s.first().serial());
        hi = std::min(hi, s.last().serial());
    };
    for (const auto& r : records) meet(r.rainfall, r.station_id);
    for (const auto& ix : indices) meet(ix.values, ix.name);
    if (span_start) lo = std::max(lo, span_start->serial());
    if (span_end) hi = std::min(hi, span_end->serial());
    if (hi < lo) throw std::invalid_argument("build_panel: empty intersection span");

    const long rows = hi - lo + 1;
    const long cols = static_cast<long>(records.size() + indices.size()) + 2;

    MonthlyPanel panel;
    panel.start = YearMonth::from_serial(lo);
    panel.values.resize(rows, cols);
    panel.names.reserve(cols);
    panel.kinds.reserve(cols);

    auto fill_column = [&](long c, const MonthlySeries& s, const std::string& who) {
        for (long r = 0; r < rows; ++r) {
            YearMonth ym = YearMonth::from_serial(lo + r);
            auto v = s.get(ym);
            if (!v)
                throw std::invalid_argument("build_panel: gap at " + ym.str() + " in " + who +
                                            " (impute before building the panel)");
            panel.values(r, c) = *v;
        }
    };

    long c = 0;
    for (const auto& r : records) {
        panel.names.push_back(r.station_id);
        panel.kinds.push_back(ColumnKind::Station);
        fill_column(c++, r.rainfall, r.station_id);
    }
    for (const auto& ix : indices) {
        panel.names.push_back(ix.name);
        panel.kinds.push_back(ColumnKind::Index);
        fill_column(c++, ix.values, ix.name);
    }

    panel.names.push_back("sin_month");
    panel.kinds.push_back(ColumnKind::Embedding);
    panel.names.push_back("cos_month");
    panel.kinds.push_back(ColumnKind::Embedding);
    for (long r = 0; r < rows; ++r) {
        const int t = YearMonth::from_serial(lo + r).month;
        const double a = 2.0 * std::numbers::pi * t / 12.0;
        panel.values(r, c) = std::sin(a);
        panel.values(r, c + 1) = std::cos(a);
    }

    panel.norm.assign(static_cast<std::size_t>(cols), ColumnNorm{});
    if (normalize) {
        for (long j = 0; j + 2 < cols; ++j) {
            std::vector<double> col(panel.values.col(j).data(), panel.values.col(j).data() + rows);
            const double m = stats::mean(col);
            const double s = stats::stddev(col);
            auto& n = panel.norm[static_cast<std::size_t>(j)];
            n.mean = m;
            n.std = s;
            if (s == 0.0) {
                n.scaled = false;  // constant column: flagged, left unscaled
            } else {
                n.scaled = true;
                panel.values.col(j) = (panel.values.col(j).array() - m) / s;
            }
        }
    }
    return panel;
}

}  // namespace raingraph::ingest
