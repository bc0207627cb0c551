#include <cmath>
#include <random>

#include "doctest.h"
#include "raingraph/gat.hpp"

using namespace raingraph;

namespace {

// Random directed graph on n nodes with an edge-feature per edge.
gat::Topology random_topology(int n_nodes, double edge_prob, std::mt19937_64& rng) {
    gat::Topology t;
    t.n_nodes = n_nodes;
    t.in_edges.resize(static_cast<std::size_t>(n_nodes));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<double> feats;
    for (int i = 0; i < n_nodes; ++i) {
        for (int j = 0; j < n_nodes; ++j) {
            if (i == j || u01(rng) > edge_prob) continue;
            t.edge_src.push_back(j);
            t.edge_dst.push_back(i);
            t.in_edges[static_cast<std::size_t>(i)].push_back(static_cast<int>(feats.size()));
            feats.push_back(u01(rng) * 3.0);
        }
    }
    t.edge_feature = Eigen::Map<Eigen::VectorXd>(feats.data(), static_cast<long>(feats.size()));
    for (int i = 0; i < n_nodes; ++i) t.station_nodes.push_back(i);
    return t;
}

Eigen::MatrixXd random_features(int n_nodes, int dim, std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Eigen::MatrixXd x(n_nodes, dim);
    for (long r = 0; r < x.rows(); ++r)
        for (long c = 0; c < x.cols(); ++c) x(r, c) = n01(rng);
    return x;
}

double loss_sum_activated(const Eigen::MatrixXd& x, const gat::Topology& topo, const gat::GatWeights& w) {
    return gat::gat_forward(x, topo, w).activated.sum();
}

// Central finite differences on the flattened parameter vector.
double max_param_rel_err(const Eigen::MatrixXd& x, const gat::Topology& topo, gat::GatWeights w) {
    const auto cache = gat::gat_forward(x, topo, w);
    const Eigen::MatrixXd up = Eigen::MatrixXd::Ones(cache.activated.rows(), cache.activated.cols());
    const auto grads = gat::gat_backward(up, cache, topo, w);

    Eigen::VectorXd analytic = Eigen::VectorXd::Zero(w.parameter_count());
    grads.accumulate_flat(analytic.data());

    Eigen::VectorXd flat(w.parameter_count());
    w.flatten_into(flat.data());

    const double step = 1e-5;
    double worst = 0.0;
    for (long i = 0; i < flat.size(); ++i) {
        Eigen::VectorXd pert = flat;
        pert(i) += step;
        w.unflatten_from(pert.data());
        const double up_l = loss_sum_activated(x, topo, w);
        pert(i) -= 2.0 * step;
        w.unflatten_from(pert.data());
        const double dn_l = loss_sum_activated(x, topo, w);
        const double numeric = (up_l - dn_l) / (2.0 * step);
        const double denom = std::max({std::fabs(numeric), std::fabs(analytic(i)), 1e-6});
        worst = std::max(worst, std::fabs(numeric - analytic(i)) / denom);
    }
    w.unflatten_from(flat.data());
    return worst;
}

}  // namespace

TEST_CASE("degenerate neighborhoods") {
    std::mt19937_64 rng(1);
    gat::Topology t;
    t.n_nodes = 1;
    t.in_edges.resize(1);
    t.edge_feature.resize(0);
    t.station_nodes = {0};
    const auto cfg = gat::multi_head_config(2, 3, 2);
    const auto w = gat::GatWeights::init(cfg, rng);
    Eigen::MatrixXd x(1, 2);
    x << 0.5, -1.0;
    const auto cache = gat::gat_forward(x, t, w);
    // Isolated node: mean over heads of W h, then the sigmoid.
    Eigen::RowVectorXd expect = Eigen::RowVectorXd::Zero(3);
    for (const auto& h : w.heads) expect += (h.w_node * x.row(0).transpose()).transpose();
    expect /= 2.0;
    for (long c = 0; c < 3; ++c) {
        CHECK(cache.pre(0, c) == doctest::Approx(expect(c)).epsilon(1e-12));
        CHECK(cache.activated(0, c) == doctest::Approx(1.0 / (1.0 + std::exp(-expect(c)))).epsilon(1e-12));
    }
    for (const auto& a : cache.alpha) CHECK(a.size() == 0);
}

TEST_CASE("singleton and symmetric neighborhoods") {
    std::mt19937_64 rng(2);
    gat::Topology t;
    t.n_nodes = 3;
    t.in_edges.resize(3);
    // edges 1->0 and 2->0
    t.edge_src = {1, 2};
    t.edge_dst = {0, 0};
    t.in_edges[0] = {0, 1};
    t.edge_feature.resize(2);
    t.edge_feature << 1.7, 1.7;
    t.station_nodes = {0, 1, 2};

    const auto cfg = gat::multi_head_config(2, 4, 3);
    const auto w = gat::GatWeights::init(cfg, rng);
    Eigen::MatrixXd x = random_features(3, 3, rng);
    x.row(2) = x.row(1);  // identical neighbors with identical edge features

    const auto cache = gat::gat_forward(x, t, w);
    for (const auto& alpha : cache.alpha) {
        CHECK(alpha(0) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(alpha(1) == doctest::Approx(0.5).epsilon(1e-12));
    }

    // Drop one edge: softmax over a singleton is 1 regardless of weights.
    gat::Topology single = t;
    single.edge_src = {1};
    single.edge_dst = {0};
    single.in_edges[0] = {0};
    single.edge_feature.resize(1);
    single.edge_feature << 1.7;
    const auto cache1 = gat::gat_forward(x, single, w);
    for (const auto& alpha : cache1.alpha) CHECK(alpha(0) == doctest::Approx(1.0));
}

TEST_CASE("attention rows are stochastic and shift-invariant") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 3 + static_cast<int>(rng() % 6);
        const auto topo = random_topology(n, 0.5, rng);
        const auto cfg = gat::multi_head_config(1 + static_cast<int>(rng() % 3), 4, 3);
        const auto w = gat::GatWeights::init(cfg, rng);
        const Eigen::MatrixXd x = random_features(n, 3, rng);
        const auto cache = gat::gat_forward(x, topo, w);
        for (const auto& alpha : cache.alpha) {
            for (int i = 0; i < n; ++i) {
                const auto& in = topo.in_edges[static_cast<std::size_t>(i)];
                if (in.empty()) continue;
                double sum = 0.0;
                for (int e : in) {
                    CHECK(alpha(e) >= 0.0);
                    sum += alpha(e);
                }
                CHECK(std::fabs(sum - 1.0) < 1e-12);
            }
        }
    }
}

TEST_CASE("softmax is invariant to a constant shift of a node's logits") {
    // One destination with three in-edges, uniform edge features, every
    // logit positive: bumping the edge part of the attention vector adds the
    // same constant to each logit, so alpha must not move.
    gat::Topology topo;
    topo.n_nodes = 4;
    topo.in_edges.resize(4);
    topo.edge_src = {1, 2, 3};
    topo.edge_dst = {0, 0, 0};
    topo.in_edges[0] = {0, 1, 2};
    topo.edge_feature.resize(3);
    topo.edge_feature.setConstant(1.0);
    topo.station_nodes = {0, 1, 2, 3};

    gat::GatConfig cfg = gat::multi_head_config(1, 1, 1, 1, 0.2);
    gat::GatWeights w;
    w.cfg = cfg;
    w.heads.resize(1);
    w.heads[0].w_node = Eigen::MatrixXd::Ones(1, 1);
    w.heads[0].w_edge = Eigen::VectorXd::Ones(1);
    w.heads[0].attn = Eigen::VectorXd::Zero(3);
    w.heads[0].attn << 0.0, 1.0, 2.0;  // [dst | src | edge]

    Eigen::MatrixXd x(4, 1);
    x << 0.0, 1.0, 2.0, 3.0;  // logits 3, 4, 5: all positive

    const auto base = gat::gat_forward(x, topo, w);
    w.heads[0].attn(2) += 2.0;  // logits 5, 6, 7: shifted by the same constant
    const auto shifted = gat::gat_forward(x, topo, w);
    for (long e = 0; e < 3; ++e)
        CHECK(shifted.alpha[0](e) == doctest::Approx(base.alpha[0](e)).epsilon(1e-12));
}

TEST_CASE("permutation equivariance") {
    std::mt19937_64 rng(5);
    const int n = 5;
    const auto topo = random_topology(n, 0.6, rng);
    const auto cfg = gat::multi_head_config(2, 4, 3);
    const auto w = gat::GatWeights::init(cfg, rng);
    const Eigen::MatrixXd x = random_features(n, 3, rng);
    const auto base = gat::gat_forward(x, topo, w);

    // Relabel nodes by the permutation p (new id = p[old id]).
    std::vector<int> p{2, 0, 4, 1, 3};
    gat::Topology pt;
    pt.n_nodes = n;
    pt.in_edges.resize(static_cast<std::size_t>(n));
    pt.edge_feature = topo.edge_feature;
    for (std::size_t e = 0; e < topo.edge_src.size(); ++e) {
        pt.edge_src.push_back(p[static_cast<std::size_t>(topo.edge_src[e])]);
        pt.edge_dst.push_back(p[static_cast<std::size_t>(topo.edge_dst[e])]);
        pt.in_edges[static_cast<std::size_t>(pt.edge_dst.back())].push_back(static_cast<int>(e));
    }
    Eigen::MatrixXd px(n, 3);
    for (int i = 0; i < n; ++i) px.row(p[static_cast<std::size_t>(i)]) = x.row(i);
    const auto permuted = gat::gat_forward(px, pt, w);
    for (int i = 0; i < n; ++i)
        for (long c = 0; c < 4; ++c)
            CHECK(permuted.activated(p[static_cast<std::size_t>(i)], c) ==
                  doctest::Approx(base.activated(i, c)).epsilon(1e-12));
}

TEST_CASE("multi-head reduction") {
    CHECK_THROWS(gat::multi_head_config(0, 4, 3));
    std::mt19937_64 rng(6);
    const auto topo = random_topology(5, 0.6, rng);
    const Eigen::MatrixXd x = random_features(5, 3, rng);

    // K identical heads equal the single head.
    const auto cfg1 = gat::multi_head_config(1, 4, 3);
    const auto w1 = gat::GatWeights::init(cfg1, rng);
    gat::GatWeights w3 = w1;
    w3.cfg.heads = 3;
    w3.heads = {w1.heads[0], w1.heads[0], w1.heads[0]};
    const auto single = gat::gat_forward(x, topo, w1);
    const auto triple = gat::gat_forward(x, topo, w3);
    CHECK((single.activated - triple.activated).cwiseAbs().maxCoeff() < 1e-12);

    // The tuned cluster-1 setting allocates cleanly.
    const auto cfg8 = gat::multi_head_config(8, 64, 3);
    const auto w8 = gat::GatWeights::init(cfg8, rng);
    CHECK(w8.heads.size() == 8);
    CHECK(w8.heads[0].w_node.rows() == 64);
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
    std::mt19937_64 rng(7);
    const auto topo = random_topology(5, 0.6, rng);
    const auto cfg = gat::multi_head_config(2, 4, 3);
    const auto w = gat::GatWeights::init(cfg, rng);
    const Eigen::MatrixXd x = random_features(5, 3, rng);
    const auto cache = gat::gat_forward(x, topo, w);
    const auto grads = gat::gat_backward(Eigen::MatrixXd::Zero(5, 4), cache, topo, w);
    Eigen::VectorXd flat = Eigen::VectorXd::Zero(w.parameter_count());
    grads.accumulate_flat(flat.data());
    CHECK(flat.cwiseAbs().maxCoeff() == 0.0);
    CHECK(grads.dx.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("analytic gradients match central finite differences") {
    std::mt19937_64 rng(123);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 4 + static_cast<int>(rng() % 5);  // up to 8 nodes
        const int in_dim = 1 + static_cast<int>(rng() % 3);
        const int heads = trial % 2 == 0 ? 1 : 4;
        const auto topo = random_topology(n, 0.5, rng);
        const auto cfg = gat::multi_head_config(heads, 3, in_dim);
        const auto w = gat::GatWeights::init(cfg, rng);
        const Eigen::MatrixXd x = random_features(n, in_dim, rng);
        CHECK(max_param_rel_err(x, topo, w) < 1e-4);
    }
}

TEST_CASE("input gradients match finite differences") {
    std::mt19937_64 rng(321);
    const auto topo = random_topology(5, 0.6, rng);
    const auto cfg = gat::multi_head_config(2, 3, 3);
    const auto w = gat::GatWeights::init(cfg, rng);
    Eigen::MatrixXd x = random_features(5, 3, rng);

    const auto cache = gat::gat_forward(x, topo, w);
    const Eigen::MatrixXd up = Eigen::MatrixXd::Ones(5, 3);
    const auto grads = gat::gat_backward(up, cache, topo, w);

    const double step = 1e-5;
    for (long r = 0; r < x.rows(); ++r) {
        for (long c = 0; c < x.cols(); ++c) {
            x(r, c) += step;
            const double up_l = loss_sum_activated(x, topo, w);
            x(r, c) -= 2.0 * step;
            const double dn_l = loss_sum_activated(x, topo, w);
            x(r, c) += step;
            const double numeric = (up_l - dn_l) / (2.0 * step);
            const double denom = std::max({std::fabs(numeric), std::fabs(grads.dx(r, c)), 1e-6});
            CHECK(std::fabs(numeric - grads.dx(r, c)) / denom < 1e-4);
        }
    }
}

TEST_CASE("ablation activations: identity, elu and their gradients") {
    std::mt19937_64 rng(9);
    const auto topo = random_topology(5, 0.6, rng);
    const Eigen::MatrixXd x = random_features(5, 3, rng);

    for (auto act : {gat::OutputActivation::Identity, gat::OutputActivation::Elu}) {
        auto cfg = gat::multi_head_config(2, 3, 3);
        cfg.activation = act;
        gat::GatWeights w = gat::GatWeights::init(cfg, rng);

        const auto cache = gat::gat_forward(x, topo, w);
        if (act == gat::OutputActivation::Identity)
            CHECK((cache.activated - cache.pre).cwiseAbs().maxCoeff() == 0.0);

        const Eigen::MatrixXd up = Eigen::MatrixXd::Ones(5, 3);
        const auto grads = gat::gat_backward(up, cache, topo, w);
        Eigen::VectorXd analytic = Eigen::VectorXd::Zero(w.parameter_count());
        grads.accumulate_flat(analytic.data());

        Eigen::VectorXd flat(w.parameter_count());
        w.flatten_into(flat.data());
        const double step = 1e-5;
        for (long i = 0; i < flat.size(); i += 7) {  // sampled coordinates
            Eigen::VectorXd pert = flat;
            pert(i) += step;
            w.unflatten_from(pert.data());
            const double up_l = gat::gat_forward(x, topo, w).activated.sum();
            pert(i) -= 2.0 * step;
            w.unflatten_from(pert.data());
            const double dn_l = gat::gat_forward(x, topo, w).activated.sum();
            const double numeric = (up_l - dn_l) / (2.0 * step);
            const double denom = std::max({std::fabs(numeric), std::fabs(analytic(i)), 1e-6});
            CHECK(std::fabs(numeric - analytic(i)) / denom < 1e-4);
        }
        w.unflatten_from(flat.data());
    }
}
