#include "raingraph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "nlohmann/json.hpp"
#include "raingraph/stats.hpp"

namespace raingraph::graph {

std::vector<std::string> ClusterAssignment::members(int cluster_id) const {
    std::vector<std::string> out;
    for (const auto& [id, c] : cluster_of)
        if (c == cluster_id) out.push_back(id);
    return out;
}

namespace {

// PCA projection with deterministic component signs: the largest-magnitude
// loading of each component is made positive.
Eigen::MatrixXd pca_project(const Eigen::MatrixXd& data, int n_components) {
    const long n = data.rows();
    Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
    Eigen::MatrixXd cov = centered.transpose() * centered / std::max<long>(1, n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw std::runtime_error("PCA eigen-decomposition failed");

    // SelfAdjointEigenSolver sorts ascending; take the trailing columns.
    Eigen::MatrixXd components(data.cols(), n_components);
    for (int c = 0; c < n_components; ++c) {
        Eigen::VectorXd v = es.eigenvectors().col(data.cols() - 1 - c);
        long imax = 0;
        v.cwiseAbs().maxCoeff(&imax);
        if (v(imax) < 0.0) v = -v;
        components.col(c) = v;
    }
    return centered * components;
}

}  // namespace

ClusterAssignment cluster_stations(const std::vector<ingest::StationRecord>& records, int n_components,
                                   double distance_d) {
    const int n = static_cast<int>(records.size());
    if (n < 2) throw std::invalid_argument("cluster_stations: need at least 2 stations");
    if (n_components < 1 || n_components > 14)
        throw std::invalid_argument("cluster_stations: n_components must be in [1, 14]");
    if (distance_d < 0.0) throw std::invalid_argument("cluster_stations: distance must be >= 0");

    // 12-month climatology per station.
    Eigen::MatrixXd climo(n, 12);
    for (int i = 0; i < n; ++i) {
        double sum[13] = {0.0};
        int cnt[13] = {0};
        for (const auto& [ym, v] : records[static_cast<std::size_t>(i)].rainfall.entries()) {
            sum[ym.month] += v;
            ++cnt[ym.month];
        }
        for (int m = 1; m <= 12; ++m) {
            if (cnt[m] == 0)
                throw std::invalid_argument("cluster_stations: station " +
                                            records[static_cast<std::size_t>(i)].station_id +
                                            " has no observation for calendar month " + std::to_string(m));
            climo(i, m - 1) = sum[m] / cnt[m];
        }
    }
    // z-score each climatology month across stations.
    for (int m = 0; m < 12; ++m) {
        const double mean = climo.col(m).mean();
        const double sd = std::sqrt((climo.col(m).array() - mean).square().sum() / n);
        climo.col(m).array() -= mean;
        if (sd > 0.0) climo.col(m) /= sd;
    }

    Eigen::MatrixXd feats(n, 14);
    for (int i = 0; i < n; ++i) {
        feats(i, 0) = records[static_cast<std::size_t>(i)].lat;
        feats(i, 1) = records[static_cast<std::size_t>(i)].lon;
    }
    feats.block(0, 2, n, 12) = climo;

    Eigen::MatrixXd proj = pca_project(feats, n_components);

    // Agglomerative centroid linkage: merge while min centroid distance < d.
    std::vector<std::vector<int>> clusters(static_cast<std::size_t>(n));
    std::vector<Eigen::VectorXd> centroids(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        clusters[static_cast<std::size_t>(i)] = {i};
        centroids[static_cast<std::size_t>(i)] = proj.row(i).transpose();
    }

    while (clusters.size() > 1) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t ba = 0, bb = 0;
        for (std::size_t a = 0; a < clusters.size(); ++a) {
            for (std::size_t b = a + 1; b < clusters.size(); ++b) {
                const double dist = (centroids[a] - centroids[b]).norm();
                if (dist < best) {
                    best = dist;
                    ba = a;
                    bb = b;
                }
            }
        }
        if (!(best < distance_d)) break;
        // Merge bb into ba; centroid = member mean.
        auto& A = clusters[ba];
        auto& B = clusters[bb];
        const double na = static_cast<double>(A.size()), nb = static_cast<double>(B.size());
        centroids[ba] = (centroids[ba] * na + centroids[bb] * nb) / (na + nb);
        A.insert(A.end(), B.begin(), B.end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
        centroids.erase(centroids.begin() + static_cast<std::ptrdiff_t>(bb));
    }

    // Contiguous ids ordered by each cluster's smallest member index.
    std::sort(clusters.begin(), clusters.end(),
              [](const auto& a, const auto& b) { return *std::min_element(a.begin(), a.end()) <
                                                        *std::min_element(b.begin(), b.end()); });
    ClusterAssignment out;
    out.n_clusters = static_cast<int>(clusters.size());
    for (std::size_t c = 0; c < clusters.size(); ++c)
        for (int i : clusters[c])
            out.cluster_of[records[static_cast<std::size_t>(i)].station_id] = static_cast<int>(c) + 1;
    return out;
}

ScreenResult pearson_screen(const ingest::MonthlyPanel& panel, const std::string& index_name,
                            const std::vector<std::string>& stations, double r_threshold,
                            std::optional<double> extreme_percentile) {
    const int ic = panel.column(index_name);
    if (ic < 0) throw std::invalid_argument("pearson_screen: unknown index column " + index_name);
    if (panel.rows() < 24) throw std::invalid_argument("pearson_screen: need at least 24 overlapping months");

    ScreenResult out;
    double acc = 0.0;
    for (const auto& sid : stations) {
        const int sc = panel.column(sid);
        if (sc < 0) throw std::invalid_argument("pearson_screen: unknown station column " + sid);
        std::vector<double> xs, ys;
        if (extreme_percentile) {
            std::vector<double> rain(panel.values.col(sc).data(), panel.values.col(sc).data() + panel.rows());
            const double thr = stats::percentile(rain, *extreme_percentile);
            for (long r = 0; r < panel.rows(); ++r) {
                if (panel.values(r, sc) > thr) {
                    ys.push_back(panel.values(r, sc));
                    xs.push_back(panel.values(r, ic));
                }
            }
            if (xs.size() < 3)
                throw std::domain_error("pearson_screen: too few extreme months for station " + sid);
        } else {
            ys.assign(panel.values.col(sc).data(), panel.values.col(sc).data() + panel.rows());
            xs.assign(panel.values.col(ic).data(), panel.values.col(ic).data() + panel.rows());
        }
        const double r = stats::pearson(xs, ys);
        out.r_per_station[sid] = r;
        acc += std::fabs(r);
    }
    if (stations.empty()) throw std::invalid_argument("pearson_screen: no stations");
    out.mean_abs_r = acc / static_cast<double>(stations.size());
    out.accepted = out.mean_abs_r > r_threshold;
    return out;
}

std::optional<GrangerResult> granger_lag(const std::vector<double>& y, const std::vector<double>& x, int max_lag,
                                         double alpha, GrangerDiag* diag) {
    if (max_lag < 1) throw std::invalid_argument("granger_lag: max_lag must be >= 1");
    if (y.size() != x.size()) throw std::invalid_argument("granger_lag: series length mismatch");
    const long t = static_cast<long>(y.size());
    if (t <= 2L * max_lag + 10)
        throw std::invalid_argument("granger_lag: series too short for max_lag " + std::to_string(max_lag));

    if (diag) {
        diag->skipped_lags.clear();
        diag->p_per_lag.assign(static_cast<std::size_t>(max_lag), std::numeric_limits<double>::quiet_NaN());
    }

    std::optional<GrangerResult> selected;
    for (int lag = 1; lag <= max_lag; ++lag) {
        const long rows = t - lag;
        Eigen::MatrixXd xr(rows, 1 + lag);            // intercept + own lags
        Eigen::MatrixXd xu(rows, 1 + 2 * lag);        // plus index lags
        Eigen::VectorXd yv(rows);
        for (long r = 0; r < rows; ++r) {
            const long ti = r + lag;
            yv(r) = y[static_cast<std::size_t>(ti)];
            xr(r, 0) = 1.0;
            xu(r, 0) = 1.0;
            for (int i = 1; i <= lag; ++i) {
                xr(r, i) = y[static_cast<std::size_t>(ti - i)];
                xu(r, i) = y[static_cast<std::size_t>(ti - i)];
                xu(r, lag + i) = x[static_cast<std::size_t>(ti - i)];
            }
        }
        const auto restricted = stats::ols(xr, yv);
        const auto unrestricted = stats::ols(xu, yv);
        if (!restricted.full_rank || !unrestricted.full_rank || unrestricted.rss <= 0.0) {
            if (diag) diag->skipped_lags.push_back(lag);
            continue;
        }
        const double statistic = static_cast<double>(rows) * (restricted.rss - unrestricted.rss) / unrestricted.rss;
        const double p = stats::chi_square_sf(std::max(0.0, statistic), lag);
        if (diag) diag->p_per_lag[static_cast<std::size_t>(lag - 1)] = p;
        if (!selected && p <= alpha) {
            selected = GrangerResult{"", lag, p, statistic};
            if (!diag) break;  // smallest significant lag found; diag wants the full scan
        }
    }
    return selected;
}

int TeleconnectionGraph::node_index(const std::string& id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].id == id) return static_cast<int>(i);
    return -1;
}

TeleconnectionGraph assemble_graph(int cluster_id, const std::vector<std::string>& stations,
                                   const std::vector<AcceptedIndex>& accepted,
                                   const physics::EdgeFeatureTable& features,
                                   const std::vector<ForcedEdge>& constraints,
                                   const std::vector<std::string>& known_indices) {
    std::set<std::string> known(known_indices.begin(), known_indices.end());
    for (const auto& f : constraints)
        if (!known.count(f.index_name))
            throw std::invalid_argument("assemble_graph: forced edge references unknown index " + f.index_name);

    TeleconnectionGraph g;
    g.cluster_id = cluster_id;
    for (const auto& sid : stations) g.nodes.push_back({sid, "station"});

    // Forced lags win over screened lags for the same index.
    std::vector<std::pair<AcceptedIndex, EdgeOrigin>> index_nodes;
    std::set<std::string> seen;
    for (const auto& f : constraints) {
        index_nodes.push_back({{f.index_name, f.lag}, EdgeOrigin::Forced});
        seen.insert(f.index_name);
    }
    for (const auto& a : accepted) {
        if (seen.count(a.name)) continue;
        index_nodes.push_back({a, EdgeOrigin::Screened});
        seen.insert(a.name);
    }

    for (const auto& [idx, origin] : index_nodes) {
        if (idx.lag < 0) throw std::invalid_argument("assemble_graph: negative lag for " + idx.name);
        g.nodes.push_back({idx.name, "index"});
        for (const auto& sid : stations)
            g.edges.push_back({idx.name, sid, idx.lag, features.at(sid), origin});
    }
    return g;
}

std::string to_json(const TeleconnectionGraph& g) {
    nlohmann::ordered_json j;
    j["cluster_id"] = g.cluster_id;
    j["nodes"] = nlohmann::ordered_json::array();
    for (const auto& n : g.nodes) j["nodes"].push_back({{"id", n.id}, {"kind", n.kind}});
    j["edges"] = nlohmann::ordered_json::array();
    for (const auto& e : g.edges) {
        j["edges"].push_back({{"src", e.src},
                              {"dst", e.dst},
                              {"lag", e.lag},
                              {"feature", e.feature},
                              {"origin", e.origin == EdgeOrigin::Forced ? "forced" : "screened"}});
    }
    return j.dump(2) + "\n";
}

TeleconnectionGraph graph_from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    TeleconnectionGraph g;
    g.cluster_id = j.at("cluster_id").get<int>();
    for (const auto& n : j.at("nodes")) g.nodes.push_back({n.at("id").get<std::string>(), n.at("kind").get<std::string>()});
    for (const auto& e : j.at("edges")) {
        EdgeSpec spec;
        spec.src = e.at("src").get<std::string>();
        spec.dst = e.at("dst").get<std::string>();
        spec.lag = e.at("lag").get<int>();
        spec.feature = e.at("feature").get<double>();
        spec.origin = e.at("origin").get<std::string>() == "forced" ? EdgeOrigin::Forced : EdgeOrigin::Screened;
        if (spec.lag < 0) throw std::invalid_argument("graph_from_json: negative lag");
        g.edges.push_back(std::move(spec));
    }
    for (const auto& e : g.edges)
        if (g.node_index(e.src) < 0 || g.node_index(e.dst) < 0)
            throw std::invalid_argument("graph_from_json: edge references unknown node");
    return g;
}

}  // namespace raingraph::graph
