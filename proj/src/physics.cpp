#include "raingraph/physics.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <unsupported/Eigen/FFT>

#include "raingraph/csv.hpp"
#include "nlohmann/json.hpp"

namespace raingraph::physics {

void OrographicConfig::validate() const {
    if (!(cw > 0.0)) throw std::invalid_argument("orographic config: Cw must be > 0");
    if (tau_c < 0.0 || tau_h < 0.0) throw std::invalid_argument("orographic config: tau must be >= 0");
    if (!(dx > 0.0) || !(dy > 0.0)) throw std::invalid_argument("orographic config: grid spacing must be > 0");
}

void TerrainGrid::validate() const {
    if (nx() < 2 || ny() < 2) throw std::invalid_argument("terrain grid must be at least 2x2");
    if (!elevations.allFinite()) throw std::invalid_argument("terrain grid contains non-finite values");
}

namespace {

using Cplx = std::complex<double>;
using CMatrix = Eigen::Matrix<Cplx, Eigen::Dynamic, Eigen::Dynamic>;

// Signed DFT frequency axis: index j maps to j/n for j <= n/2, (j-n)/n above.
double dft_freq(long j, long n) {
    const long half = n / 2;
    return (j <= half) ? static_cast<double>(j) / n : static_cast<double>(j - n) / n;
}

CMatrix fft2(const CMatrix& in, bool inverse) {
    Eigen::FFT<double> fft;
    CMatrix tmp(in.rows(), in.cols());
    Eigen::VectorXcd line, out;
    for (long r = 0; r < in.rows(); ++r) {
        line = in.row(r).transpose();
        if (inverse)
            fft.inv(out, line);
        else
            fft.fwd(out, line);
        tmp.row(r) = out.transpose();
    }
    CMatrix res(in.rows(), in.cols());
    for (long c = 0; c < in.cols(); ++c) {
        line = tmp.col(c);
        if (inverse)
            fft.inv(out, line);
        else
            fft.fwd(out, line);
        res.col(c) = out;
    }
    return res;
}

}  // namespace

PrecipField simulate_field(const TerrainGrid& terrain, const OrographicConfig& cfg) {
    cfg.validate();
    terrain.validate();

    const long nx = terrain.nx(), ny = terrain.ny();
    CMatrix h = terrain.elevations.cast<Cplx>();
    CMatrix h_hat = fft2(h, false);

    const double two_pi = 2.0 * std::numbers::pi;
    const Cplx iunit(0.0, 1.0);
    CMatrix p_hat(ny, nx);
    for (long iy = 0; iy < ny; ++iy) {
        const double l = two_pi * dft_freq(iy, ny) / cfg.dy;
        for (long ix = 0; ix < nx; ++ix) {
            const double k = two_pi * dft_freq(ix, nx) / cfg.dx;
            const double sigma = cfg.u * k + cfg.v * l;
            const Cplx denom = (1.0 + iunit * sigma * cfg.tau_c) * (1.0 + iunit * sigma * cfg.tau_h);
            p_hat(iy, ix) = cfg.cw * iunit * sigma * h_hat(iy, ix) / denom;
        }
    }

    CMatrix p = fft2(p_hat, true);
    PrecipField out;
    out.raw = p.real();
    out.clamped = out.raw.cwiseMax(0.0);
    return out;
}

double station_edge_feature(const ingest::StationRecord& station, const std::vector<ingest::WindSample>& winds,
                            double cw) {
    if (station.elevation < 0.0) throw std::invalid_argument("negative elevation for " + station.station_id);
    if (winds.empty()) throw std::invalid_argument("empty wind series for " + station.station_id);
    double acc = 0.0;
    for (const auto& w : winds) acc += cw * std::hypot(w.u, w.v) * station.elevation;
    return std::max(0.0, acc / static_cast<double>(winds.size()));
}

MonthlySeries station_edge_feature_series(const ingest::StationRecord& station,
                                          const std::vector<ingest::WindSample>& winds, double cw) {
    if (station.elevation < 0.0) throw std::invalid_argument("negative elevation for " + station.station_id);
    if (winds.empty()) throw std::invalid_argument("empty wind series for " + station.station_id);
    MonthlySeries out;
    for (const auto& w : winds) out.set(w.ym, std::max(0.0, cw * std::hypot(w.u, w.v) * station.elevation));
    return out;
}

double EdgeFeatureTable::at(const std::string& station_id) const {
    auto it = feature.find(station_id);
    if (it == feature.end()) throw std::out_of_range("no edge feature for station " + station_id);
    return it->second;
}

EdgeFeatureTable build_edge_feature_table(
    const std::vector<ingest::StationRecord>& stations,
    const std::vector<std::pair<std::string, std::vector<ingest::WindSample>>>& winds, double cw) {
    std::map<std::string, const std::vector<ingest::WindSample>*> by_id;
    for (const auto& [id, samples] : winds) by_id[id] = &samples;
    EdgeFeatureTable table;
    for (const auto& st : stations) {
        auto it = by_id.find(st.station_id);
        if (it == by_id.end()) throw std::invalid_argument("station missing wind data: " + st.station_id);
        table.feature[st.station_id] = station_edge_feature(st, *it->second, cw);
    }
    return table;
}

TerrainGrid load_terrain(const std::string& data_path, const std::string& header_json_path, double* dx_out,
                         double* dy_out) {
    std::ifstream hj(header_json_path);
    if (!hj) throw std::runtime_error("cannot open terrain header: " + header_json_path);
    nlohmann::json j = nlohmann::json::parse(hj);
    const long nx = j.at("nx").get<long>();
    const long ny = j.at("ny").get<long>();
    if (dx_out) *dx_out = j.at("dx").get<double>();
    if (dy_out) *dy_out = j.at("dy").get<double>();

    TerrainGrid grid;
    grid.elevations.resize(ny, nx);
    if (data_path.size() > 4 && data_path.substr(data_path.size() - 4) == ".bin") {
        std::ifstream in(data_path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open terrain data: " + data_path);
        std::vector<double> buf(static_cast<std::size_t>(nx * ny));
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(double)))
            throw std::runtime_error("terrain binary shorter than nx*ny doubles: " + data_path);
        for (long r = 0; r < ny; ++r)
            for (long c = 0; c < nx; ++c) grid.elevations(r, c) = buf[static_cast<std::size_t>(r * nx + c)];
    } else {
        const auto rows = csv::read_file(data_path);
        if (static_cast<long>(rows.size()) != ny)
            throw std::runtime_error("terrain CSV row count does not match header ny");
        for (long r = 0; r < ny; ++r) {
            if (static_cast<long>(rows[static_cast<std::size_t>(r)].size()) != nx)
                throw std::runtime_error("terrain CSV column count does not match header nx");
            for (long c = 0; c < nx; ++c) {
                auto v = csv::parse_double(rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
                if (!v) throw std::runtime_error("bad terrain cell");
                grid.elevations(r, c) = *v;
            }
        }
    }
    grid.validate();
    return grid;
}

void write_field_csv(const std::string& path, const Eigen::MatrixXd& field) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write field: " + path);
    for (long r = 0; r < field.rows(); ++r) {
        for (long c = 0; c < field.cols(); ++c) {
            if (c) out << ',';
            out << csv::format_double(field(r, c));
        }
        out << '\n';
    }
}

}  // namespace raingraph::physics
