#pragma once

#include <cstdint>
#include <string>

namespace raingraph::synth {

struct SynthSpec {
    int n_months = 480;
    int start_year = 1982;
    int stations_per_cluster = 4;  // two clusters
    double missing_fraction = 0.02;
    std::uint64_t seed = 42;
};

// Two-cluster teleconnection benchmark: southern stations driven by IDX1 at
// lag 1, northern stations by IDX2 at lag 2, opposite seasonal cycles,
// station winds and a ridge terrain for the physics stage. Writes
// stations.csv, indices.csv, winds.csv, terrain.csv, terrain.json and a
// turnkey config.json into out_dir.
void generate_dataset(const std::string& out_dir, const SynthSpec& spec);

}  // namespace raingraph::synth
