#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace raingraph::idw {

struct StationValue {
    double lat = 0.0;
    double lon = 0.0;
    double value = 0.0;
};

struct GridSpec {
    double lon0 = 0.0;  // west edge of the first cell center
    double lat0 = 0.0;  // south edge of the first cell center
    int n_lon = 1;
    int n_lat = 1;
    double cell = 0.1;  // degrees
};

struct Raster {
    GridSpec spec;
    Eigen::MatrixXd values;  // rows walk latitude (south to north), cols longitude

    double lon_at(int col) const { return spec.lon0 + col * spec.cell; }
    double lat_at(int row) const { return spec.lat0 + row * spec.cell; }
};

// Inverse-distance weighting with exponent p; a cell within snap_eps degrees
// of a station takes that station's value exactly.
Raster idw_interpolate(const std::vector<StationValue>& stations, const GridSpec& spec, double power = 2.0,
                       double snap_eps = 1e-9);

// lon,lat,value CSV; full-precision so the raster round-trips exactly.
void write_raster_csv(const std::string& path, const Raster& raster);
Raster read_raster_csv(const std::string& path);

struct RenderResult {
    std::string image_path;  // min/max legend values embedded in the filename
    bool degenerate = false; // all cells equal
};

// Emits the gridded CSV plus a binary PPM with a linear blue-to-red ramp.
RenderResult render_map(const Raster& raster, const std::string& out_prefix);

}  // namespace raingraph::idw
