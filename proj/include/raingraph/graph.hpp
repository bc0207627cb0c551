#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "raingraph/ingest.hpp"
#include "raingraph/physics.hpp"

namespace raingraph::graph {

struct ClusterAssignment {
    std::map<std::string, int> cluster_of;  // station_id -> 1-based cluster id
    int n_clusters = 0;

    std::vector<std::string> members(int cluster_id) const;
};

// Algorithm: per-station 12-month climatology (z-scored per calendar month
// across stations) concatenated with [lat, lon], PCA to n_components, then
// agglomerative centroid-linkage merging while the closest centroid pair is
// nearer than distance_d. Ties break on the lowest (a, b) cluster pair.
ClusterAssignment cluster_stations(const std::vector<ingest::StationRecord>& records, int n_components,
                                   double distance_d);

enum class EdgeOrigin { Screened, Forced };

struct NodeSpec {
    std::string id;
    std::string kind;  // "station" | "index"
};

struct EdgeSpec {
    std::string src;   // index node
    std::string dst;   // station node
    int lag = 0;       // months, >= 0
    double feature = 0.0;
    EdgeOrigin origin = EdgeOrigin::Screened;
};

struct TeleconnectionGraph {
    int cluster_id = 0;
    std::vector<NodeSpec> nodes;
    std::vector<EdgeSpec> edges;

    int node_index(const std::string& id) const;  // -1 when absent
};

struct ScreenResult {
    bool accepted = false;
    double mean_abs_r = 0.0;
    std::map<std::string, double> r_per_station;
};

// Pearson screening of one index against every cluster station; with
// extreme_percentile set, only months above that station percentile count.
ScreenResult pearson_screen(const ingest::MonthlyPanel& panel, const std::string& index_name,
                            const std::vector<std::string>& stations, double r_threshold,
                            std::optional<double> extreme_percentile = std::nullopt);

struct GrangerResult {
    std::string index_name;
    int lag = 0;
    double p_value = 1.0;
    double statistic = 0.0;
};

struct GrangerDiag {
    std::vector<int> skipped_lags;  // collinear designs
    std::vector<double> p_per_lag;  // 1..max_lag, NaN when skipped
};

// Chi-square Granger test: restricted (own lags) vs unrestricted (plus index
// lags) least squares; statistic n*(RSS_r - RSS_u)/RSS_u with df = lag.
// Returns the smallest lag with p <= alpha.
std::optional<GrangerResult> granger_lag(const std::vector<double>& y, const std::vector<double>& x, int max_lag,
                                         double alpha, GrangerDiag* diag = nullptr);

struct AcceptedIndex {
    std::string name;
    int lag = 0;  // 0 when accepted by correlation only
};

struct ForcedEdge {
    std::string index_name;
    int lag = 0;
};

TeleconnectionGraph assemble_graph(int cluster_id, const std::vector<std::string>& stations,
                                   const std::vector<AcceptedIndex>& accepted,
                                   const physics::EdgeFeatureTable& features,
                                   const std::vector<ForcedEdge>& constraints,
                                   const std::vector<std::string>& known_indices);

std::string to_json(const TeleconnectionGraph& g);
TeleconnectionGraph graph_from_json(const std::string& json_text);

}  // namespace raingraph::graph
