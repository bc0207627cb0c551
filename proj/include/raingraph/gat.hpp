#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

#include "raingraph/graph.hpp"

namespace raingraph::gat {

// Final nonlinearity of the layer output; the sigmoid is the layer equation,
// the alternatives exist for ablation runs.
enum class OutputActivation { Sigmoid, Identity, Elu };

struct GatConfig {
    int heads = 1;
    int in_dim = 1;
    int out_dim = 1;
    int edge_dim = 1;
    double leaky_slope = 0.2;
    OutputActivation activation = OutputActivation::Sigmoid;
};

// K >= 1 heads, mean reduction per the layer equation.
GatConfig multi_head_config(int heads, int hidden, int in_dim, int edge_dim = -1, double leaky_slope = 0.2);

struct HeadWeights {
    Eigen::MatrixXd w_node;  // out_dim x in_dim
    Eigen::VectorXd w_edge;  // edge_dim (edge feature is scalar)
    Eigen::VectorXd attn;    // 2*out_dim + edge_dim, ordered [dst | src | edge]
};

struct GatWeights {
    GatConfig cfg;
    std::vector<HeadWeights> heads;

    static GatWeights init(const GatConfig& cfg, std::mt19937_64& rng);  // U[-1/sqrt(fan_in), +1/sqrt(fan_in)]

    long parameter_count() const;
    void flatten_into(double* dst) const;
    void unflatten_from(const double* src);
};

// Directed topology compiled from a teleconnection graph: node order is the
// graph's node list, edges point src -> dst, aggregation follows in-edges.
struct Topology {
    int n_nodes = 0;
    std::vector<int> edge_src;
    std::vector<int> edge_dst;
    Eigen::VectorXd edge_feature;
    std::vector<std::vector<int>> in_edges;  // per node: edge ids entering it
    std::vector<int> station_nodes;          // node ids with kind "station"

    int n_edges() const { return static_cast<int>(edge_src.size()); }
    static Topology from_graph(const graph::TeleconnectionGraph& g);
};

struct GatCache {
    Eigen::MatrixXd x;                     // N x in_dim
    std::vector<Eigen::MatrixXd> z;        // per head: N x out_dim
    std::vector<Eigen::MatrixXd> g;        // per head: E x edge_dim
    std::vector<Eigen::VectorXd> e_pre;    // per head: E (before LeakyReLU)
    std::vector<Eigen::VectorXd> alpha;    // per head: E
    Eigen::MatrixXd pre;                   // N x out_dim, head-mean aggregation
    Eigen::MatrixXd activated;             // sigmoid(pre)
};

// Forward pass. `pre` is the head-averaged aggregation before the final
// sigmoid; the recurrent gates consume `pre`, standalone use reads
// `activated`. Nodes without in-edges fall back to their own transformed
// feature.
GatCache gat_forward(const Eigen::MatrixXd& x, const Topology& topo, const GatWeights& w);

struct GatGrads {
    std::vector<HeadWeights> heads;  // same shapes as the weights
    Eigen::MatrixXd dx;

    static GatGrads zeros(const GatWeights& w, long n_nodes);
    void accumulate_flat(double* dst) const;  // adds head grads into a flat buffer
};

// Reverse-mode through the aggregation given d(pre); exact softmax Jacobian.
GatGrads gat_backward_pre(const Eigen::MatrixXd& dpre, const GatCache& cache, const Topology& topo,
                          const GatWeights& w);

// Reverse-mode through the full layer given d(activated).
GatGrads gat_backward(const Eigen::MatrixXd& dactivated, const GatCache& cache, const Topology& topo,
                      const GatWeights& w);

}  // namespace raingraph::gat
