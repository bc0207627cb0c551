#include "raingraph/idw.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "raingraph/csv.hpp"

namespace raingraph::idw {

Raster idw_interpolate(const std::vector<StationValue>& stations, const GridSpec& spec, double power,
                       double snap_eps) {
    if (stations.empty()) throw std::invalid_argument("idw_interpolate: empty station set");
    if (!(power > 0.0)) throw std::invalid_argument("idw_interpolate: power must be > 0");
    if (spec.n_lon < 1 || spec.n_lat < 1 || !(spec.cell > 0.0))
        throw std::invalid_argument("idw_interpolate: bad grid spec");

    Raster out;
    out.spec = spec;
    out.values.resize(spec.n_lat, spec.n_lon);
    for (int r = 0; r < spec.n_lat; ++r) {
        const double lat = out.lat_at(r);
        for (int c = 0; c < spec.n_lon; ++c) {
            const double lon = out.lon_at(c);
            double wsum = 0.0, vsum = 0.0;
            bool snapped = false;
            for (const auto& s : stations) {
                const double d = std::hypot(s.lat - lat, s.lon - lon);
                if (d < snap_eps) {
                    out.values(r, c) = s.value;
                    snapped = true;
                    break;
                }
                const double w = std::pow(d, -power);
                wsum += w;
                vsum += w * s.value;
            }
            if (!snapped) out.values(r, c) = vsum / wsum;
        }
    }
    return out;
}

void write_raster_csv(const std::string& path, const Raster& raster) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write raster: " + path);
    out << "lon,lat,value\n";
    for (int r = 0; r < raster.spec.n_lat; ++r)
        for (int c = 0; c < raster.spec.n_lon; ++c)
            out << csv::format_double(raster.lon_at(c)) << ',' << csv::format_double(raster.lat_at(r)) << ','
                << csv::format_double(raster.values(r, c)) << '\n';
}

Raster read_raster_csv(const std::string& path) {
    const auto rows = csv::read_file(path);
    if (rows.size() < 2 || rows[0].size() < 3 || rows[0][0] != "lon")
        throw std::runtime_error("bad raster csv: " + path);

    std::vector<double> lons, lats, vals;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        auto lon = csv::parse_double(rows[i][0]);
        auto lat = csv::parse_double(rows[i][1]);
        auto v = csv::parse_double(rows[i][2]);
        if (!lon || !lat || !v) throw std::runtime_error("bad raster row in " + path);
        lons.push_back(*lon);
        lats.push_back(*lat);
        vals.push_back(*v);
    }
    // Row-major emission: lon varies fastest.
    int n_lon = 1;
    while (n_lon < static_cast<int>(lons.size()) && lats[static_cast<std::size_t>(n_lon)] == lats[0]) ++n_lon;
    const int n_lat = static_cast<int>(lons.size()) / n_lon;
    if (n_lon * n_lat != static_cast<int>(lons.size())) throw std::runtime_error("ragged raster csv: " + path);

    Raster out;
    out.spec.lon0 = lons[0];
    out.spec.lat0 = lats[0];
    out.spec.n_lon = n_lon;
    out.spec.n_lat = n_lat;
    out.spec.cell = n_lon > 1 ? lons[1] - lons[0] : (n_lat > 1 ? lats[static_cast<std::size_t>(n_lon)] - lats[0] : 1.0);
    out.values.resize(n_lat, n_lon);
    for (int r = 0; r < n_lat; ++r)
        for (int c = 0; c < n_lon; ++c) out.values(r, c) = vals[static_cast<std::size_t>(r * n_lon + c)];
    return out;
}

namespace {

void ramp_color(double t, unsigned char rgb[3]) {
    // Blue -> cyan -> green -> yellow -> red.
    t = std::min(1.0, std::max(0.0, t));
    const double r = std::min(1.0, std::max(0.0, 1.5 - std::fabs(4.0 * t - 3.0)));
    const double g = std::min(1.0, std::max(0.0, 1.5 - std::fabs(4.0 * t - 2.0)));
    const double b = std::min(1.0, std::max(0.0, 1.5 - std::fabs(4.0 * t - 1.0)));
    rgb[0] = static_cast<unsigned char>(std::lround(255.0 * r));
    rgb[1] = static_cast<unsigned char>(std::lround(255.0 * g));
    rgb[2] = static_cast<unsigned char>(std::lround(255.0 * b));
}

std::string legend_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

RenderResult render_map(const Raster& raster, const std::string& out_prefix) {
    if (!raster.values.allFinite()) throw std::invalid_argument("render_map: non-finite raster");
    const double lo = raster.values.minCoeff();
    const double hi = raster.values.maxCoeff();

    RenderResult res;
    res.degenerate = lo == hi;
    res.image_path = out_prefix + "_min" + legend_number(lo) + "_max" + legend_number(hi) + ".ppm";

    std::ofstream img(res.image_path, std::ios::binary);
    if (!img) throw std::runtime_error("cannot write image: " + res.image_path);
    img << "P6\n" << raster.spec.n_lon << " " << raster.spec.n_lat << "\n255\n";
    // Top row of the image is the northernmost latitude.
    for (int r = raster.spec.n_lat - 1; r >= 0; --r) {
        for (int c = 0; c < raster.spec.n_lon; ++c) {
            unsigned char rgb[3];
            const double t = res.degenerate ? 0.0 : (raster.values(r, c) - lo) / (hi - lo);
            ramp_color(t, rgb);
            img.write(reinterpret_cast<const char*>(rgb), 3);
        }
    }
    write_raster_csv(out_prefix + ".csv", raster);
    return res;
}

}  // namespace raingraph::idw
