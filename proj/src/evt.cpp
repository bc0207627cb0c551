#include "raingraph/evt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "raingraph/csv.hpp"
#include "raingraph/stats.hpp"

namespace raingraph::evt {

namespace {
constexpr double kShapeZeroEps = 1e-9;   // |xi| below this uses the exponential branch
constexpr double kPMax = 1.0 - 1e-6;     // probability cap before inversion
}  // namespace

std::string season_name(Season s) {
    switch (s) {
        case Season::SwMonsoon: return "sw_monsoon";
        case Season::NeMonsoon: return "ne_monsoon";
        case Season::Onset: return "onset";
        case Season::Peak: return "peak";
        case Season::Dry: return "dry";
    }
    throw std::logic_error("unreachable season");
}

Season season_from_name(const std::string& name) {
    if (name == "sw_monsoon") return Season::SwMonsoon;
    if (name == "ne_monsoon") return Season::NeMonsoon;
    if (name == "onset") return Season::Onset;
    if (name == "peak") return Season::Peak;
    if (name == "dry") return Season::Dry;
    throw std::invalid_argument("unknown season: " + name);
}

Season season_of(int cluster_id, int month) {
    if (!valid_month(month)) throw std::invalid_argument("season_of: bad month");
    if (cluster_id < 1) throw std::invalid_argument("season_of: cluster ids are 1-based");
    if (cluster_id <= 4) {
        if (month >= 5 && month <= 9) return Season::SwMonsoon;   // MJJAS
        if (month >= 10 && month <= 12) return Season::NeMonsoon; // OND
        return Season::Dry;                                       // JFMA
    }
    if (month >= 3 && month <= 5) return Season::Onset;  // MAM
    if (month >= 6 && month <= 10) return Season::Peak;  // JJASO
    return Season::Dry;                                  // NDJF
}

std::vector<Season> wet_seasons(int cluster_id) {
    if (cluster_id <= 4) return {Season::SwMonsoon, Season::NeMonsoon};
    return {Season::Onset, Season::Peak};
}

double GpdFit::support_max() const {
    if (shape < -kShapeZeroEps) return -scale / shape;
    return std::numeric_limits<double>::infinity();
}

PotResult pot_excesses(const std::vector<double>& values, double q_percentile) {
    if (values.empty()) throw std::invalid_argument("pot_excesses: empty series");
    const double lo = *std::min_element(values.begin(), values.end());
    const double hi = *std::max_element(values.begin(), values.end());
    if (lo == hi) throw std::domain_error("pot_excesses: all values equal, degenerate percentile");
    PotResult out;
    out.threshold = stats::percentile(values, q_percentile);
    for (double y : values)
        if (y > out.threshold) out.excesses.push_back(y - out.threshold);
    return out;
}

PotResult pot_excesses_seasonal(const MonthlySeries& series, int cluster_id, Season season, double q_percentile) {
    std::vector<double> filtered;
    for (const auto& [ym, v] : series.entries())
        if (season_of(cluster_id, ym.month) == season) filtered.push_back(v);
    if (filtered.empty()) throw std::invalid_argument("pot_excesses: no months in season " + season_name(season));
    return pot_excesses(filtered, q_percentile);
}

double gpd_cdf(double excess, double shape, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("gpd_cdf: scale must be > 0");
    if (excess < 0.0) throw std::domain_error("gpd_cdf: negative excess");
    if (std::fabs(shape) < kShapeZeroEps) return 1.0 - std::exp(-excess / scale);
    const double t = 1.0 + shape * excess / scale;
    if (t <= 0.0) {
        if (shape < 0.0 && t > -1e-12) return 1.0;  // support endpoint up to roundoff
        throw std::domain_error("gpd_cdf: excess outside support");
    }
    return 1.0 - std::pow(t, -1.0 / shape);
}

double gpd_quantile(double p, double shape, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("gpd_quantile: scale must be > 0");
    if (p < 0.0 || p > 1.0) throw std::domain_error("gpd_quantile: p outside [0,1]");
    if (p == 1.0) {
        if (shape < -kShapeZeroEps) return -scale / shape;
        throw std::domain_error("gpd_quantile: p = 1 has infinite quantile for shape >= 0");
    }
    if (std::fabs(shape) < kShapeZeroEps) return -scale * std::log1p(-p);
    return scale * (std::pow(1.0 - p, -shape) - 1.0) / shape;
}

namespace {

// Profile log-likelihood in the tilt parametrization eta = xi/a:
// xi(eta) = mean(log1p(eta*y)), a = xi/eta, l = -n*(log(xi/eta) + xi + 1).
double profile_loglik(double eta, const std::vector<double>& y, double* shape_out, double* scale_out) {
    const double n = static_cast<double>(y.size());
    double acc = 0.0;
    for (double v : y) {
        const double t = eta * v;
        if (t <= -1.0) return -std::numeric_limits<double>::infinity();
        acc += std::log1p(t);
    }
    const double xi = acc / n;
    if (xi == 0.0) return -std::numeric_limits<double>::infinity();
    const double a = xi / eta;
    if (!(a > 0.0)) return -std::numeric_limits<double>::infinity();
    if (shape_out) *shape_out = xi;
    if (scale_out) *scale_out = a;
    return -n * (std::log(a) + xi + 1.0);
}

}  // namespace

MleResult fit_gpd_mle(const std::vector<double>& excesses, const MleOptions& opts) {
    if (excesses.size() <= 10)
        throw std::invalid_argument("fit_gpd_mle: refuse to fit with " + std::to_string(excesses.size()) +
                                    " exceedances (need more than 10)");
    for (double y : excesses)
        if (!(y >= 0.0) || !std::isfinite(y)) throw std::invalid_argument("fit_gpd_mle: excesses must be finite and >= 0");

    const double y_max = *std::max_element(excesses.begin(), excesses.end());
    const double y_mean = stats::mean(excesses);
    if (!(y_max > 0.0)) throw std::domain_error("fit_gpd_mle: all excesses are zero");

    // Exponential (xi = 0) candidate: a = mean, l = -n(log(mean)+1).
    MleResult best;
    best.shape = 0.0;
    best.scale = y_mean;
    best.log_likelihood = -static_cast<double>(excesses.size()) * (std::log(y_mean) + 1.0);
    best.converged = true;

    // Scale-free candidate grid: negative tilts relative to 1/y_max (the
    // support constraint), positive tilts relative to 1/y_mean. Keeping the
    // grid scale-free makes the estimator exactly scale-equivariant.
    std::vector<double> etas;
    const int m = std::max(8, opts.grid_points / 2);
    for (int j = 1; j <= m; ++j) {
        const double q = static_cast<double>(j) / (m + 1);  // in (0,1)
        etas.push_back(-q / y_max);
    }
    for (int j = 0; j < m; ++j) {
        const double t = -6.0 + 10.0 * static_cast<double>(j) / (m - 1);  // 1e-6 .. 1e4
        etas.push_back(std::pow(10.0, t) / y_mean);
    }
    std::sort(etas.begin(), etas.end());

    int best_idx = -1;
    double best_ll = -std::numeric_limits<double>::infinity();
    std::vector<double> lls(etas.size());
    for (std::size_t i = 0; i < etas.size(); ++i) {
        double xi, a;
        lls[i] = profile_loglik(etas[i], excesses, &xi, &a);
        if (xi < opts.shape_min || xi > opts.shape_max) lls[i] = -std::numeric_limits<double>::infinity();
        if (lls[i] > best_ll) {
            best_ll = lls[i];
            best_idx = static_cast<int>(i);
        }
    }

    if (best_idx >= 0 && best_ll > best.log_likelihood) {
        // Golden-section refinement inside the bracketing neighbours.
        double lo = etas[static_cast<std::size_t>(std::max(0, best_idx - 1))];
        double hi = etas[static_cast<std::size_t>(
            std::min(static_cast<int>(etas.size()) - 1, best_idx + 1))];
        const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
        double a = lo, b = hi;
        double c = b - gr * (b - a), d = a + gr * (b - a);
        double fc = profile_loglik(c, excesses, nullptr, nullptr);
        double fd = profile_loglik(d, excesses, nullptr, nullptr);
        for (int it = 0; it < 200 && (b - a) > 1e-13 * std::max(1.0, std::fabs(a)); ++it) {
            if (fc > fd) {
                b = d;
                d = c;
                fd = fc;
                c = b - gr * (b - a);
                fc = profile_loglik(c, excesses, nullptr, nullptr);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + gr * (b - a);
                fd = profile_loglik(d, excesses, nullptr, nullptr);
            }
        }
        const double eta_star = 0.5 * (a + b);
        double xi, sc;
        const double ll = profile_loglik(eta_star, excesses, &xi, &sc);
        if (ll > best.log_likelihood && xi >= opts.shape_min && xi <= opts.shape_max) {
            best.shape = xi;
            best.scale = sc;
            best.log_likelihood = ll;
            best.converged = true;
        }
    }
    return best;
}

std::vector<TailMapping> build_tail_mapping(const MonthlySeries& observed, const MonthlySeries& predicted,
                                            const std::string& station_id, int cluster_id, double q_percentile,
                                            bool include_dry) {
    if (observed.empty() || predicted.empty())
        throw std::invalid_argument("build_tail_mapping: empty series for " + station_id);

    std::vector<Season> seasons = wet_seasons(cluster_id);
    if (include_dry) seasons.push_back(Season::Dry);

    std::vector<TailMapping> out;
    for (Season season : seasons) {
        TailMapping m;
        m.station_id = station_id;
        m.season = season;
        auto fit_one = [&](const MonthlySeries& series, FitSource source, GpdFit& dst) -> bool {
            std::vector<double> filtered;
            for (const auto& [ym, v] : series.entries())
                if (season_of(cluster_id, ym.month) == season) filtered.push_back(v);
            if (filtered.empty()) {
                m.disabled_reason = "no months in season";
                return false;
            }
            PotResult pot;
            try {
                pot = pot_excesses(filtered, q_percentile);
            } catch (const std::exception& e) {
                m.disabled_reason = e.what();
                return false;
            }
            if (pot.excesses.size() <= 10) {
                m.disabled_reason = "fit refused: " + std::to_string(pot.excesses.size()) + " exceedances";
                return false;
            }
            MleResult mle;
            try {
                mle = fit_gpd_mle(pot.excesses);
            } catch (const std::exception& e) {
                m.disabled_reason = e.what();
                return false;
            }
            dst.station_id = station_id;
            dst.season = season;
            dst.source = source;
            dst.threshold = pot.threshold;
            dst.shape = mle.shape;
            dst.scale = mle.scale;
            dst.n_exceedances = static_cast<int>(pot.excesses.size());
            dst.cap = *std::max_element(filtered.begin(), filtered.end());
            dst.converged = mle.converged;
            return true;
        };
        const bool obs_ok = fit_one(observed, FitSource::Observation, m.observation);
        const bool pred_ok = obs_ok && fit_one(predicted, FitSource::Prediction, m.prediction);
        m.enabled = obs_ok && pred_ok;
        out.push_back(std::move(m));
    }
    return out;
}

double apply_tail_mapping(double y_pred, const TailMapping& mapping) {
    if (!std::isfinite(y_pred)) throw std::invalid_argument("apply_tail_mapping: non-finite prediction");
    if (!mapping.enabled) return y_pred;
    const GpdFit& pf = mapping.prediction;
    const GpdFit& of = mapping.observation;
    if (y_pred < pf.threshold) return y_pred;

    double excess = y_pred - pf.threshold;
    excess = std::min(excess, pf.support_max());  // predictions can overshoot the fitted support
    double p = gpd_cdf(excess, pf.shape, pf.scale);
    p = std::min(p, kPMax);
    const double mapped = of.threshold + gpd_quantile(p, of.shape, of.scale);
    return std::min(mapped, of.cap);
}

void write_fits_csv(const std::string& path, const std::vector<GpdFit>& fits) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write fits: " + path);
    out << "station,season,source,u,xi,a_u,exceedances,cap\n";
    for (const auto& f : fits) {
        out << f.station_id << ',' << season_name(f.season) << ','
            << (f.source == FitSource::Observation ? "observation" : "prediction") << ','
            << csv::format_double(f.threshold) << ',' << csv::format_double(f.shape) << ','
            << csv::format_double(f.scale) << ',' << f.n_exceedances << ',' << csv::format_double(f.cap) << '\n';
    }
}

std::vector<GpdFit> read_fits_csv(const std::string& path) {
    const auto rows = csv::read_file(path);
    if (rows.empty() || rows[0].size() < 8 || rows[0][0] != "station")
        throw std::runtime_error("bad fits csv header: " + path);
    std::vector<GpdFit> fits;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() < 8) throw std::runtime_error("short fits row in " + path);
        GpdFit f;
        f.station_id = row[0];
        f.season = season_from_name(row[1]);
        f.source = row[2] == "observation" ? FitSource::Observation : FitSource::Prediction;
        auto u = csv::parse_double(row[3]);
        auto xi = csv::parse_double(row[4]);
        auto a = csv::parse_double(row[5]);
        auto n = csv::parse_long(row[6]);
        auto cap = csv::parse_double(row[7]);
        if (!u || !xi || !a || !n || !cap) throw std::runtime_error("bad fits row in " + path);
        f.threshold = *u;
        f.shape = *xi;
        f.scale = *a;
        f.n_exceedances = static_cast<int>(*n);
        f.cap = *cap;
        f.converged = true;
        fits.push_back(std::move(f));
    }
    return fits;
}

}  // namespace raingraph::evt
