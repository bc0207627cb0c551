#include "raingraph/recurrent.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "nlohmann/json.hpp"
#include "raingraph/errors.hpp"

namespace raingraph::recurrent {

namespace {

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& m) {
    return m.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

long gate_set_params(const GateSet& g) {
    long n = 0;
    for (const auto* w : {&g.forget, &g.input, &g.cell, &g.output}) n += w->parameter_count();
    n += 4 * g.b_forget.size();
    n += g.r_forget.size() + g.r_input.size() + g.r_cell.size() + g.r_output.size();
    return n;
}

}  // namespace

CellWeights CellWeights::init(int n_layers, int heads, int in_dim, int hidden, int horizon, int n_nodes,
                              std::uint64_t seed, bool recurrent_projection) {
    if (n_layers < 1) throw std::invalid_argument("cell weights: need at least one layer");
    if (hidden < 1 || horizon < 1 || in_dim < 1 || n_nodes < 1)
        throw std::invalid_argument("cell weights: dimensions must be positive");

    std::mt19937_64 rng(seed);
    CellWeights w;
    w.in_dim = in_dim;
    w.hidden = hidden;
    w.horizon = horizon;
    w.n_nodes = n_nodes;
    for (int l = 0; l < n_layers; ++l) {
        const int layer_in = l == 0 ? in_dim : hidden;
        gat::GatConfig cfg = gat::multi_head_config(heads, hidden, layer_in);
        GateSet g;
        g.forget = gat::GatWeights::init(cfg, rng);
        g.input = gat::GatWeights::init(cfg, rng);
        g.cell = gat::GatWeights::init(cfg, rng);
        g.output = gat::GatWeights::init(cfg, rng);
        g.b_forget = Eigen::MatrixXd::Zero(n_nodes, hidden);
        g.b_input = Eigen::MatrixXd::Zero(n_nodes, hidden);
        g.b_cell = Eigen::MatrixXd::Zero(n_nodes, hidden);
        g.b_output = Eigen::MatrixXd::Zero(n_nodes, hidden);
        if (recurrent_projection) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (auto* r : {&g.r_forget, &g.r_input, &g.r_cell, &g.r_output}) {
                r->resize(hidden, hidden);
                for (long rr = 0; rr < hidden; ++rr)
                    for (long cc = 0; cc < hidden; ++cc) (*r)(rr, cc) = dist(rng);
            }
        }
        w.layers.push_back(std::move(g));
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    std::uniform_real_distribution<double> dist(-bound, bound);
    w.w_read.resize(horizon, hidden);
    for (long r = 0; r < w.w_read.rows(); ++r)
        for (long c = 0; c < w.w_read.cols(); ++c) w.w_read(r, c) = dist(rng);
    w.b_read = Eigen::VectorXd::Zero(horizon);
    return w;
}

long CellWeights::parameter_count() const {
    long n = 0;
    for (const auto& g : layers) n += gate_set_params(g);
    return n + w_read.size() + b_read.size();
}

Eigen::VectorXd CellWeights::flatten() const {
    Eigen::VectorXd flat(parameter_count());
    long off = 0;
    auto put_mat = [&](const Eigen::MatrixXd& m) {
        std::copy(m.data(), m.data() + m.size(), flat.data() + off);
        off += m.size();
    };
    for (const auto& g : layers) {
        for (const auto* w : {&g.forget, &g.input, &g.cell, &g.output}) {
            w->flatten_into(flat.data() + off);
            off += w->parameter_count();
        }
        put_mat(g.b_forget);
        put_mat(g.b_input);
        put_mat(g.b_cell);
        put_mat(g.b_output);
        if (g.has_projection()) {
            put_mat(g.r_forget);
            put_mat(g.r_input);
            put_mat(g.r_cell);
            put_mat(g.r_output);
        }
    }
    put_mat(w_read);
    std::copy(b_read.data(), b_read.data() + b_read.size(), flat.data() + off);
    off += b_read.size();
    return flat;
}

void CellWeights::unflatten(const Eigen::VectorXd& flat) {
    if (flat.size() != parameter_count()) throw std::invalid_argument("unflatten: size mismatch");
    long off = 0;
    auto take_mat = [&](Eigen::MatrixXd& m) {
        std::copy(flat.data() + off, flat.data() + off + m.size(), m.data());
        off += m.size();
    };
    for (auto& g : layers) {
        for (auto* w : {&g.forget, &g.input, &g.cell, &g.output}) {
            w->unflatten_from(flat.data() + off);
            off += w->parameter_count();
        }
        take_mat(g.b_forget);
        take_mat(g.b_input);
        take_mat(g.b_cell);
        take_mat(g.b_output);
        if (g.has_projection()) {
            take_mat(g.r_forget);
            take_mat(g.r_input);
            take_mat(g.r_cell);
            take_mat(g.r_output);
        }
    }
    take_mat(w_read);
    std::copy(flat.data() + off, flat.data() + off + b_read.size(), b_read.data());
}

CellState cell_step(const Eigen::MatrixXd& x, const CellState& state, const GateSet& gates,
                    const gat::Topology& topo, StepLayerCache* cache, const Eigen::MatrixXd* drop_f,
                    const Eigen::MatrixXd* drop_i, const Eigen::MatrixXd* drop_c, const Eigen::MatrixXd* drop_o) {
    if (state.h.rows() != x.rows()) throw std::invalid_argument("cell_step: state/input node count mismatch");

    gat::GatCache cf = gat::gat_forward(x, topo, gates.forget);
    gat::GatCache ci = gat::gat_forward(x, topo, gates.input);
    gat::GatCache cc = gat::gat_forward(x, topo, gates.cell);
    gat::GatCache co = gat::gat_forward(x, topo, gates.output);

    Eigen::MatrixXd af = drop_f ? cf.pre.cwiseProduct(*drop_f) : cf.pre;
    Eigen::MatrixXd ai = drop_i ? ci.pre.cwiseProduct(*drop_i) : ci.pre;
    Eigen::MatrixXd ac = drop_c ? cc.pre.cwiseProduct(*drop_c) : cc.pre;
    Eigen::MatrixXd ao = drop_o ? co.pre.cwiseProduct(*drop_o) : co.pre;

    if (af.rows() != state.h.rows() || af.cols() != state.h.cols())
        throw std::invalid_argument("cell_step: GAT output shape does not match hidden state");

    const bool proj = gates.has_projection();
    Eigen::MatrixXd f = sigmoid(af + (proj ? (state.h * gates.r_forget.transpose()).eval() : state.h) + gates.b_forget);
    Eigen::MatrixXd i = sigmoid(ai + (proj ? (state.h * gates.r_input.transpose()).eval() : state.h) + gates.b_input);
    Eigen::MatrixXd ctilde =
        (ac + (proj ? (state.h * gates.r_cell.transpose()).eval() : state.h) + gates.b_cell).array().tanh();
    Eigen::MatrixXd o = sigmoid(ao + (proj ? (state.h * gates.r_output.transpose()).eval() : state.h) + gates.b_output);

    CellState next;
    next.c = f.cwiseProduct(state.c) + i.cwiseProduct(ctilde);  // c_t first,
    Eigen::MatrixXd tanh_c = next.c.array().tanh();
    next.h = o.cwiseProduct(tanh_c);                            // then h_t
    if (!next.c.allFinite() || !next.h.allFinite()) throw NumericalError("cell_step: non-finite state");

    if (cache) {
        cache->gf = std::move(cf);
        cache->gi = std::move(ci);
        cache->gc = std::move(cc);
        cache->go = std::move(co);
        cache->f = std::move(f);
        cache->i = std::move(i);
        cache->ctilde = std::move(ctilde);
        cache->o = std::move(o);
        cache->c = next.c;
        cache->tanh_c = std::move(tanh_c);
        cache->h = next.h;
        cache->h_prev = state.h;
        cache->c_prev = state.c;
    }
    return next;
}

RolloutCache rollout_forward(const SnapshotWindow& window, const CellWeights& w, const gat::Topology& topo,
                             const DropoutPlan* dropout) {
    const int steps = static_cast<int>(window.inputs.size());
    if (steps == 0) throw std::invalid_argument("rollout_forward: empty window");
    const int n_layers = static_cast<int>(w.layers.size());

    RolloutCache cache;
    cache.steps.resize(static_cast<std::size_t>(steps));
    std::vector<CellState> states(static_cast<std::size_t>(n_layers),
                                  CellState::zeros(topo.n_nodes, w.hidden));

    auto mask = [&](int t, int l, int g) -> const Eigen::MatrixXd* {
        if (!dropout || dropout->masks.empty()) return nullptr;
        return &dropout->masks[static_cast<std::size_t>((t * n_layers + l) * 4 + g)];
    };

    for (int t = 0; t < steps; ++t) {
        cache.steps[static_cast<std::size_t>(t)].resize(static_cast<std::size_t>(n_layers));
        const Eigen::MatrixXd* x = &window.inputs[static_cast<std::size_t>(t)];
        for (int l = 0; l < n_layers; ++l) {
            StepLayerCache& slc = cache.steps[static_cast<std::size_t>(t)][static_cast<std::size_t>(l)];
            states[static_cast<std::size_t>(l)] =
                cell_step(*x, states[static_cast<std::size_t>(l)], w.layers[static_cast<std::size_t>(l)], topo,
                          &slc, mask(t, l, 0), mask(t, l, 1), mask(t, l, 2), mask(t, l, 3));
            x = &slc.h;  // upper layer consumes this layer's embedding
        }
    }

    const auto& top = cache.steps.back().back();
    const long n_stations = static_cast<long>(topo.station_nodes.size());
    cache.prediction.resize(n_stations, w.horizon);
    for (long s = 0; s < n_stations; ++s) {
        const int node = topo.station_nodes[static_cast<std::size_t>(s)];
        cache.prediction.row(s) = (w.w_read * top.h.row(node).transpose() + w.b_read).transpose();
    }
    return cache;
}

CellGrads rollout_backward(const Eigen::MatrixXd& dprediction, const SnapshotWindow& window, const CellWeights& w,
                           const gat::Topology& topo, const RolloutCache& cache, const DropoutPlan* dropout) {
    const int steps = static_cast<int>(window.inputs.size());
    const int n_layers = static_cast<int>(w.layers.size());
    if (cache.steps.size() != static_cast<std::size_t>(steps)) throw std::invalid_argument("rollout_backward: stale cache");

    // Gradient accumulators mirror the flat layout through a weights-shaped copy.
    CellWeights g = w;
    g.unflatten(Eigen::VectorXd::Zero(w.parameter_count()));

    auto mask = [&](int t, int l, int gi) -> const Eigen::MatrixXd* {
        if (!dropout || dropout->masks.empty()) return nullptr;
        return &dropout->masks[static_cast<std::size_t>((t * n_layers + l) * 4 + gi)];
    };

    // Readout backward into the top layer's final hidden state.
    std::vector<Eigen::MatrixXd> dh(static_cast<std::size_t>(n_layers)),
        dc(static_cast<std::size_t>(n_layers));
    for (int l = 0; l < n_layers; ++l) {
        dh[static_cast<std::size_t>(l)] = Eigen::MatrixXd::Zero(topo.n_nodes, w.hidden);
        dc[static_cast<std::size_t>(l)] = Eigen::MatrixXd::Zero(topo.n_nodes, w.hidden);
    }
    const auto& top = cache.steps.back().back();
    for (long s = 0; s < static_cast<long>(topo.station_nodes.size()); ++s) {
        const int node = topo.station_nodes[static_cast<std::size_t>(s)];
        const Eigen::VectorXd dy = dprediction.row(s).transpose();
        g.w_read += dy * top.h.row(node);
        g.b_read += dy;
        dh.back().row(node) += (w.w_read.transpose() * dy).transpose();
    }

    for (int t = steps - 1; t >= 0; --t) {
        for (int l = n_layers - 1; l >= 0; --l) {
            const StepLayerCache& slc = cache.steps[static_cast<std::size_t>(t)][static_cast<std::size_t>(l)];
            const GateSet& gates = w.layers[static_cast<std::size_t>(l)];
            GateSet& gg = g.layers[static_cast<std::size_t>(l)];

            Eigen::MatrixXd dh_t = dh[static_cast<std::size_t>(l)];
            Eigen::MatrixXd dc_t = dc[static_cast<std::size_t>(l)];

            // h_t = o * tanh(c_t)
            Eigen::MatrixXd do_ = dh_t.cwiseProduct(slc.tanh_c);
            dc_t += dh_t.cwiseProduct(slc.o)
                        .cwiseProduct((1.0 - slc.tanh_c.array().square()).matrix());

            // c_t = f*c_prev + i*ctilde
            Eigen::MatrixXd df = dc_t.cwiseProduct(slc.c_prev);
            Eigen::MatrixXd di = dc_t.cwiseProduct(slc.ctilde);
            Eigen::MatrixXd dct = dc_t.cwiseProduct(slc.i);
            Eigen::MatrixXd dc_prev = dc_t.cwiseProduct(slc.f);

            Eigen::MatrixXd dpre_f = df.cwiseProduct(slc.f.cwiseProduct((1.0 - slc.f.array()).matrix()));
            Eigen::MatrixXd dpre_i = di.cwiseProduct(slc.i.cwiseProduct((1.0 - slc.i.array()).matrix()));
            Eigen::MatrixXd dpre_c = dct.cwiseProduct((1.0 - slc.ctilde.array().square()).matrix());
            Eigen::MatrixXd dpre_o = do_.cwiseProduct(slc.o.cwiseProduct((1.0 - slc.o.array()).matrix()));

            gg.b_forget += dpre_f;
            gg.b_input += dpre_i;
            gg.b_cell += dpre_c;
            gg.b_output += dpre_o;

            Eigen::MatrixXd dh_prev;
            if (gates.has_projection()) {
                gg.r_forget += dpre_f.transpose() * slc.h_prev;
                gg.r_input += dpre_i.transpose() * slc.h_prev;
                gg.r_cell += dpre_c.transpose() * slc.h_prev;
                gg.r_output += dpre_o.transpose() * slc.h_prev;
                dh_prev = dpre_f * gates.r_forget + dpre_i * gates.r_input + dpre_c * gates.r_cell +
                          dpre_o * gates.r_output;
            } else {
                dh_prev = dpre_f + dpre_i + dpre_c + dpre_o;
            }

            Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(slc.gf.x.rows(), slc.gf.x.cols());
            auto through_gate = [&](const Eigen::MatrixXd& dpre, const gat::GatCache& gc,
                                    const gat::GatWeights& gw, gat::GatWeights& grad_w, int gate_idx) {
                const Eigen::MatrixXd* m = mask(t, l, gate_idx);
                Eigen::MatrixXd up = m ? dpre.cwiseProduct(*m) : dpre;
                gat::GatGrads gr = gat::gat_backward_pre(up, gc, topo, gw);
                for (std::size_t k = 0; k < grad_w.heads.size(); ++k) {
                    grad_w.heads[k].w_node += gr.heads[k].w_node;
                    grad_w.heads[k].w_edge += gr.heads[k].w_edge;
                    grad_w.heads[k].attn += gr.heads[k].attn;
                }
                dx += gr.dx;
            };
            through_gate(dpre_f, slc.gf, gates.forget, gg.forget, 0);
            through_gate(dpre_i, slc.gi, gates.input, gg.input, 1);
            through_gate(dpre_c, slc.gc, gates.cell, gg.cell, 2);
            through_gate(dpre_o, slc.go, gates.output, gg.output, 3);

            if (l > 0) dh[static_cast<std::size_t>(l - 1)] += dx;

            dh[static_cast<std::size_t>(l)] = std::move(dh_prev);
            dc[static_cast<std::size_t>(l)] = std::move(dc_prev);
        }
    }

    CellGrads out;
    out.flat = g.flatten();
    return out;
}

Eigen::MatrixXd rollout_forecast(const SnapshotWindow& window, const CellWeights& w, const gat::Topology& topo,
                                 const ingest::MonthlyPanel& panel, const std::vector<int>& station_cols) {
    RolloutCache cache = rollout_forward(window, w, topo, nullptr);
    Eigen::MatrixXd out = cache.prediction;
    for (long s = 0; s < out.rows(); ++s)
        for (long h = 0; h < out.cols(); ++h)
            out(s, h) = panel.inverse_scale(station_cols[static_cast<std::size_t>(s)], out(s, h));
    return out;
}

std::vector<SnapshotWindow> make_snapshots(const ingest::MonthlyPanel& panel, const graph::TeleconnectionGraph& g,
                                           int window_size, int horizon, int stride) {
    if (window_size < 1 || horizon < 1 || stride < 1)
        throw std::invalid_argument("make_snapshots: window, horizon and stride must be positive");
    const long rows = panel.rows();
    if (rows < window_size + horizon) throw std::invalid_argument("make_snapshots: panel shorter than W + H");

    const int sin_col = panel.column("sin_month");
    const int cos_col = panel.column("cos_month");
    if (sin_col < 0 || cos_col < 0) throw std::invalid_argument("make_snapshots: panel lacks time embeddings");

    std::vector<int> node_col(g.nodes.size());
    std::vector<int> node_lag(g.nodes.size(), 0);
    for (std::size_t n = 0; n < g.nodes.size(); ++n) {
        const int col = panel.column(g.nodes[n].id);
        if (col < 0) throw std::invalid_argument("make_snapshots: panel lacks column for node " + g.nodes[n].id);
        node_col[n] = col;
        if (g.nodes[n].kind == "index") {
            for (const auto& e : g.edges) {
                if (e.src == g.nodes[n].id) {
                    node_lag[n] = e.lag;
                    break;
                }
            }
        }
    }
    std::vector<int> station_cols;
    for (std::size_t n = 0; n < g.nodes.size(); ++n)
        if (g.nodes[n].kind == "station") station_cols.push_back(node_col[n]);

    std::vector<SnapshotWindow> windows;
    for (long a = 0; a + window_size + horizon <= rows; a += stride) {
        SnapshotWindow win;
        win.anchor = panel.month_at(a);
        win.inputs.reserve(static_cast<std::size_t>(window_size));
        for (int t = 0; t < window_size; ++t) {
            Eigen::MatrixXd x(static_cast<long>(g.nodes.size()), 3);
            for (std::size_t n = 0; n < g.nodes.size(); ++n) {
                const long shifted = std::max<long>(0, a + t - node_lag[n]);
                x(static_cast<long>(n), 0) = panel.values(shifted, node_col[n]);
                x(static_cast<long>(n), 1) = panel.values(a + t, sin_col);
                x(static_cast<long>(n), 2) = panel.values(a + t, cos_col);
            }
            win.inputs.push_back(std::move(x));
        }
        win.targets.resize(static_cast<long>(station_cols.size()), horizon);
        for (std::size_t s = 0; s < station_cols.size(); ++s)
            for (int h = 0; h < horizon; ++h)
                win.targets(static_cast<long>(s), h) = panel.values(a + window_size + h, station_cols[s]);
        windows.push_back(std::move(win));
    }
    return windows;
}

void save_checkpoint(const std::string& blob_path, const std::string& manifest_path, const CellWeights& w,
                     const CheckpointMeta& meta) {
    Eigen::VectorXd flat = w.flatten();
    std::ofstream blob(blob_path, std::ios::binary);
    if (!blob) throw std::runtime_error("cannot write checkpoint blob: " + blob_path);
    blob.write(reinterpret_cast<const char*>(flat.data()), static_cast<std::streamsize>(flat.size() * sizeof(double)));

    nlohmann::ordered_json j;
    j["window_size"] = meta.window_size;
    j["horizon"] = meta.horizon;
    j["hidden"] = meta.hidden;
    j["heads"] = meta.heads;
    j["layers"] = meta.layers;
    j["in_dim"] = meta.in_dim;
    j["n_nodes"] = meta.n_nodes;
    j["dropout"] = meta.dropout;
    j["leaky_slope"] = meta.leaky_slope;
    j["seed"] = meta.seed;
    j["normalization_ref"] = meta.normalization_ref;
    j["node_ids"] = meta.node_ids;
    j["parameter_count"] = flat.size();
    std::ofstream man(manifest_path);
    if (!man) throw std::runtime_error("cannot write checkpoint manifest: " + manifest_path);
    man << j.dump(2) << "\n";
}

CellWeights load_checkpoint(const std::string& blob_path, const std::string& manifest_path, CheckpointMeta* meta) {
    std::ifstream man(manifest_path);
    if (!man) throw std::runtime_error("cannot open checkpoint manifest: " + manifest_path);
    nlohmann::json j = nlohmann::json::parse(man);
    CheckpointMeta m;
    m.window_size = j.at("window_size").get<int>();
    m.horizon = j.at("horizon").get<int>();
    m.hidden = j.at("hidden").get<int>();
    m.heads = j.at("heads").get<int>();
    m.layers = j.at("layers").get<int>();
    m.in_dim = j.at("in_dim").get<int>();
    m.n_nodes = j.at("n_nodes").get<int>();
    m.dropout = j.at("dropout").get<double>();
    m.leaky_slope = j.value("leaky_slope", 0.2);
    m.seed = j.at("seed").get<std::uint64_t>();
    m.normalization_ref = j.at("normalization_ref").get<std::string>();
    m.node_ids = j.at("node_ids").get<std::vector<std::string>>();

    CellWeights w = CellWeights::init(m.layers, m.heads, m.in_dim, m.hidden, m.horizon, m.n_nodes, 0);
    const long expected = j.at("parameter_count").get<long>();
    if (expected != w.parameter_count())
        throw std::runtime_error("checkpoint manifest parameter count does not match architecture");

    std::ifstream blob(blob_path, std::ios::binary);
    if (!blob) throw std::runtime_error("cannot open checkpoint blob: " + blob_path);
    Eigen::VectorXd flat(expected);
    blob.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(expected * sizeof(double)));
    if (blob.gcount() != static_cast<std::streamsize>(expected * sizeof(double)))
        throw std::runtime_error("checkpoint blob truncated: " + blob_path);
    w.unflatten(flat);
    if (meta) *meta = m;
    return w;
}

}  // namespace raingraph::recurrent
