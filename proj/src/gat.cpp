#include "raingraph/gat.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace raingraph::gat {

GatConfig multi_head_config(int heads, int hidden, int in_dim, int edge_dim, double leaky_slope) {
    if (heads < 1) throw std::invalid_argument("multi_head_config: K must be >= 1");
    if (hidden < 1 || in_dim < 1) throw std::invalid_argument("multi_head_config: dimensions must be >= 1");
    GatConfig cfg;
    cfg.heads = heads;
    cfg.out_dim = hidden;
    cfg.in_dim = in_dim;
    cfg.edge_dim = edge_dim > 0 ? edge_dim : hidden;
    cfg.leaky_slope = leaky_slope;
    return cfg;
}

namespace {

double uniform_init(std::mt19937_64& rng, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    return dist(rng);
}

void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, std::mt19937_64& rng, long fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (long r = 0; r < m.rows(); ++r)
        for (long c = 0; c < m.cols(); ++c) m(r, c) = uniform_init(rng, bound);
}

}  // namespace

GatWeights GatWeights::init(const GatConfig& cfg, std::mt19937_64& rng) {
    if (cfg.heads < 1) throw std::invalid_argument("gat weights: K must be >= 1");
    GatWeights w;
    w.cfg = cfg;
    w.heads.resize(static_cast<std::size_t>(cfg.heads));
    for (auto& h : w.heads) {
        h.w_node.resize(cfg.out_dim, cfg.in_dim);
        h.w_edge.resize(cfg.edge_dim);
        h.attn.resize(2 * cfg.out_dim + cfg.edge_dim);
        fill_uniform(h.w_node, rng, cfg.in_dim);
        fill_uniform(h.w_edge, rng, 1);
        fill_uniform(h.attn, rng, 2 * cfg.out_dim + cfg.edge_dim);
    }
    return w;
}

long GatWeights::parameter_count() const {
    long per_head = static_cast<long>(cfg.out_dim) * cfg.in_dim + cfg.edge_dim + (2 * cfg.out_dim + cfg.edge_dim);
    return per_head * cfg.heads;
}

void GatWeights::flatten_into(double* dst) const {
    long off = 0;
    for (const auto& h : heads) {
        std::copy(h.w_node.data(), h.w_node.data() + h.w_node.size(), dst + off);
        off += h.w_node.size();
        std::copy(h.w_edge.data(), h.w_edge.data() + h.w_edge.size(), dst + off);
        off += h.w_edge.size();
        std::copy(h.attn.data(), h.attn.data() + h.attn.size(), dst + off);
        off += h.attn.size();
    }
}

void GatWeights::unflatten_from(const double* src) {
    long off = 0;
    for (auto& h : heads) {
        std::copy(src + off, src + off + h.w_node.size(), h.w_node.data());
        off += h.w_node.size();
        std::copy(src + off, src + off + h.w_edge.size(), h.w_edge.data());
        off += h.w_edge.size();
        std::copy(src + off, src + off + h.attn.size(), h.attn.data());
        off += h.attn.size();
    }
}

Topology Topology::from_graph(const graph::TeleconnectionGraph& g) {
    Topology t;
    t.n_nodes = static_cast<int>(g.nodes.size());
    t.in_edges.resize(static_cast<std::size_t>(t.n_nodes));
    t.edge_feature.resize(static_cast<long>(g.edges.size()));
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        const int src = g.node_index(g.edges[e].src);
        const int dst = g.node_index(g.edges[e].dst);
        if (src < 0 || dst < 0) throw std::invalid_argument("topology: edge references unknown node");
        t.edge_src.push_back(src);
        t.edge_dst.push_back(dst);
        t.edge_feature(static_cast<long>(e)) = g.edges[e].feature;
        t.in_edges[static_cast<std::size_t>(dst)].push_back(static_cast<int>(e));
    }
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
        if (g.nodes[i].kind == "station") t.station_nodes.push_back(static_cast<int>(i));
    return t;
}

GatCache gat_forward(const Eigen::MatrixXd& x, const Topology& topo, const GatWeights& w) {
    const GatConfig& cfg = w.cfg;
    if (x.rows() != topo.n_nodes) throw std::invalid_argument("gat_forward: one feature row per node required");
    if (x.cols() != cfg.in_dim) throw std::invalid_argument("gat_forward: feature dimension mismatch");
    if (!x.allFinite()) throw std::invalid_argument("gat_forward: non-finite input");

    const int n_edges = topo.n_edges();
    GatCache cache;
    cache.x = x;
    cache.z.resize(w.heads.size());
    cache.g.resize(w.heads.size());
    cache.e_pre.resize(w.heads.size());
    cache.alpha.resize(w.heads.size());
    cache.pre = Eigen::MatrixXd::Zero(topo.n_nodes, cfg.out_dim);

    const double inv_k = 1.0 / static_cast<double>(cfg.heads);
    for (std::size_t k = 0; k < w.heads.size(); ++k) {
        const HeadWeights& head = w.heads[k];
        Eigen::MatrixXd z = x * head.w_node.transpose();  // N x out_dim
        Eigen::MatrixXd g = topo.edge_feature * head.w_edge.transpose();  // E x edge_dim
        Eigen::VectorXd e_pre(n_edges), alpha = Eigen::VectorXd::Zero(n_edges);

        const auto a_dst = head.attn.segment(0, cfg.out_dim);
        const auto a_src = head.attn.segment(cfg.out_dim, cfg.out_dim);
        const auto a_edge = head.attn.segment(2 * cfg.out_dim, cfg.edge_dim);

        for (int e = 0; e < n_edges; ++e) {
            const int i = topo.edge_dst[static_cast<std::size_t>(e)];
            const int j = topo.edge_src[static_cast<std::size_t>(e)];
            e_pre(e) = a_dst.dot(z.row(i)) + a_src.dot(z.row(j)) + a_edge.dot(g.row(e));
        }

        for (int i = 0; i < topo.n_nodes; ++i) {
            const auto& in = topo.in_edges[static_cast<std::size_t>(i)];
            if (in.empty()) {
                cache.pre.row(i) += inv_k * z.row(i);  // isolated node: self term
                continue;
            }
            double max_e = -std::numeric_limits<double>::infinity();
            for (int e : in) {
                const double v = e_pre(e) > 0.0 ? e_pre(e) : cfg.leaky_slope * e_pre(e);
                max_e = std::max(max_e, v);
            }
            double denom = 0.0;
            for (int e : in) {
                const double v = e_pre(e) > 0.0 ? e_pre(e) : cfg.leaky_slope * e_pre(e);
                alpha(e) = std::exp(v - max_e);
                denom += alpha(e);
            }
            for (int e : in) {
                alpha(e) /= denom;
                cache.pre.row(i) += inv_k * alpha(e) * z.row(topo.edge_src[static_cast<std::size_t>(e)]);
            }
        }

        cache.z[k] = std::move(z);
        cache.g[k] = std::move(g);
        cache.e_pre[k] = std::move(e_pre);
        cache.alpha[k] = std::move(alpha);
    }

    switch (cfg.activation) {
        case OutputActivation::Sigmoid:
            cache.activated = cache.pre.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
            break;
        case OutputActivation::Identity:
            cache.activated = cache.pre;
            break;
        case OutputActivation::Elu:
            cache.activated = cache.pre.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
            break;
    }
    return cache;
}

GatGrads GatGrads::zeros(const GatWeights& w, long n_nodes) {
    GatGrads g;
    g.heads.resize(w.heads.size());
    for (std::size_t k = 0; k < w.heads.size(); ++k) {
        g.heads[k].w_node = Eigen::MatrixXd::Zero(w.heads[k].w_node.rows(), w.heads[k].w_node.cols());
        g.heads[k].w_edge = Eigen::VectorXd::Zero(w.heads[k].w_edge.size());
        g.heads[k].attn = Eigen::VectorXd::Zero(w.heads[k].attn.size());
    }
    g.dx = Eigen::MatrixXd::Zero(n_nodes, w.cfg.in_dim);
    return g;
}

void GatGrads::accumulate_flat(double* dst) const {
    long off = 0;
    for (const auto& h : heads) {
        Eigen::Map<Eigen::VectorXd>(dst + off, h.w_node.size()) +=
            Eigen::Map<const Eigen::VectorXd>(h.w_node.data(), h.w_node.size());
        off += h.w_node.size();
        Eigen::Map<Eigen::VectorXd>(dst + off, h.w_edge.size()) += h.w_edge;
        off += h.w_edge.size();
        Eigen::Map<Eigen::VectorXd>(dst + off, h.attn.size()) += h.attn;
        off += h.attn.size();
    }
}

GatGrads gat_backward_pre(const Eigen::MatrixXd& dpre, const GatCache& cache, const Topology& topo,
                          const GatWeights& w) {
    const GatConfig& cfg = w.cfg;
    if (cache.z.size() != w.heads.size() || cache.x.rows() != topo.n_nodes)
        throw std::invalid_argument("gat_backward: stale or missing cache");
    if (dpre.rows() != topo.n_nodes || dpre.cols() != cfg.out_dim)
        throw std::invalid_argument("gat_backward: upstream gradient shape mismatch");

    GatGrads grads = GatGrads::zeros(w, topo.n_nodes);
    const double inv_k = 1.0 / static_cast<double>(cfg.heads);

    for (std::size_t k = 0; k < w.heads.size(); ++k) {
        const HeadWeights& head = w.heads[k];
        const Eigen::MatrixXd& z = cache.z[k];
        const Eigen::MatrixXd& g = cache.g[k];
        const Eigen::VectorXd& e_pre = cache.e_pre[k];
        const Eigen::VectorXd& alpha = cache.alpha[k];

        Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(z.rows(), z.cols());
        Eigen::MatrixXd dg = Eigen::MatrixXd::Zero(g.rows(), g.cols());

        const auto a_dst = head.attn.segment(0, cfg.out_dim);
        const auto a_src = head.attn.segment(cfg.out_dim, cfg.out_dim);
        const auto a_edge = head.attn.segment(2 * cfg.out_dim, cfg.edge_dim);
        auto da_dst = grads.heads[k].attn.segment(0, cfg.out_dim);
        auto da_src = grads.heads[k].attn.segment(cfg.out_dim, cfg.out_dim);
        auto da_edge = grads.heads[k].attn.segment(2 * cfg.out_dim, cfg.edge_dim);

        for (int i = 0; i < topo.n_nodes; ++i) {
            const auto& in = topo.in_edges[static_cast<std::size_t>(i)];
            const Eigen::RowVectorXd ds = inv_k * dpre.row(i);
            if (in.empty()) {
                dz.row(i) += ds;
                continue;
            }
            // d(alpha) and the aggregated z path.
            double dot_sum = 0.0;
            std::vector<double> dalpha(in.size());
            for (std::size_t t = 0; t < in.size(); ++t) {
                const int e = in[t];
                const int j = topo.edge_src[static_cast<std::size_t>(e)];
                dalpha[t] = ds.dot(z.row(j));
                dz.row(j) += alpha(e) * ds;
                dot_sum += alpha(e) * dalpha[t];
            }
            // Exact softmax Jacobian, then LeakyReLU.
            for (std::size_t t = 0; t < in.size(); ++t) {
                const int e = in[t];
                const int j = topo.edge_src[static_cast<std::size_t>(e)];
                const double de_act = alpha(e) * (dalpha[t] - dot_sum);
                const double de = e_pre(e) > 0.0 ? de_act : cfg.leaky_slope * de_act;
                da_dst += de * z.row(i).transpose();
                da_src += de * z.row(j).transpose();
                da_edge += de * g.row(e).transpose();
                dz.row(i) += de * a_dst.transpose();
                dz.row(j) += de * a_src.transpose();
                dg.row(e) += de * a_edge.transpose();
            }
        }

        grads.heads[k].w_node += dz.transpose() * cache.x;
        grads.heads[k].w_edge += dg.transpose() * topo.edge_feature;
        grads.dx += dz * head.w_node;
    }
    return grads;
}

GatGrads gat_backward(const Eigen::MatrixXd& dactivated, const GatCache& cache, const Topology& topo,
                      const GatWeights& w) {
    Eigen::MatrixXd dpre;
    switch (w.cfg.activation) {
        case OutputActivation::Sigmoid:
            dpre = dactivated.array() * (cache.activated.array() * (1.0 - cache.activated.array()));
            break;
        case OutputActivation::Identity:
            dpre = dactivated;
            break;
        case OutputActivation::Elu:
            dpre = dactivated.array() * cache.pre.unaryExpr([](double v) {
                                            return v > 0.0 ? 1.0 : std::exp(v);
                                        }).array();
            break;
    }
    return gat_backward_pre(dpre, cache, topo, w);
}

}  // namespace raingraph::gat
