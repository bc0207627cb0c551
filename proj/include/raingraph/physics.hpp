#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "raingraph/ingest.hpp"

namespace raingraph::physics {

struct OrographicConfig {
    double cw = 0.01;   // condensation efficiency, kg/m^3
    double tau_c = 0.0; // cloud-to-rain conversion time, s
    double tau_h = 0.0; // hydrometeor fallout time, s
    double u = 0.0;     // zonal wind, m/s
    double v = 0.0;     // meridional wind, m/s
    double dx = 1.0;    // grid spacing, m
    double dy = 1.0;

    void validate() const;
};

// elevations(iy, ix): row index walks y, column index walks x.
struct TerrainGrid {
    Eigen::MatrixXd elevations;

    long nx() const { return elevations.cols(); }
    long ny() const { return elevations.rows(); }
    void validate() const;
};

struct PrecipField {
    Eigen::MatrixXd raw;      // signed field straight from the inverse transform
    Eigen::MatrixXd clamped;  // max(raw, 0)
};

// Spectral filter P" = Cw*i*sigma*h" / ((1+i*sigma*tau_c)(1+i*sigma*tau_h)),
// sigma = U*k + V*l, over the DFT of the terrain. Wavenumber convention:
// k_j = 2*pi*j/(n*dx) with signed (negative upper-half) frequencies.
PrecipField simulate_field(const TerrainGrid& terrain, const OrographicConfig& cfg);

// Per-station flux proxy for the tau=0 limit: mean over the wind climatology
// of Cw * sqrt(U^2+V^2) * elevation, clamped at zero.
double station_edge_feature(const ingest::StationRecord& station, const std::vector<ingest::WindSample>& winds,
                            double cw);

// Per-timestep variant of the proxy, one value per wind sample month. The
// static graphs use the time-mean above; this series backs the per-timestep
// mode.
MonthlySeries station_edge_feature_series(const ingest::StationRecord& station,
                                          const std::vector<ingest::WindSample>& winds, double cw);

struct EdgeFeatureTable {
    std::map<std::string, double> feature;  // station_id -> scalar, >= 0

    double at(const std::string& station_id) const;
};

EdgeFeatureTable build_edge_feature_table(
    const std::vector<ingest::StationRecord>& stations,
    const std::vector<std::pair<std::string, std::vector<ingest::WindSample>>>& winds, double cw);

// Terrain I/O: CSV grid (rows = y) or flat little-endian float64 binary,
// either way described by a JSON header {nx, ny, dx, dy}.
TerrainGrid load_terrain(const std::string& data_path, const std::string& header_json_path, double* dx_out,
                         double* dy_out);
void write_field_csv(const std::string& path, const Eigen::MatrixXd& field);

}  // namespace raingraph::physics
