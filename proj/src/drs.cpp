#include "bdlm/drs.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "bdlm/adam.hpp"
#include "bdlm/error.hpp"
#include "bdlm/io.hpp"
#include "bdlm/kernels.hpp"
#include "bdlm/rng.hpp"

namespace bdlm::drs {

Kind kind_from_string(const std::string& s) {
    if (s == "gmf") return Kind::gmf;
    if (s == "ncf") return Kind::ncf;
    if (s == "lightgcn") return Kind::lightgcn;
    fail("unknown drs kind '" + s + "' (expected gmf, ncf or lightgcn)");
}

std::string to_string(Kind k) {
    switch (k) {
        case Kind::gmf: return "gmf";
        case Kind::ncf: return "ncf";
        case Kind::lightgcn: return "lightgcn";
    }
    return "?";
}

namespace {

void xavier_init(Rng& rng, double* data, int64_t n, int64_t fan_in, int64_t fan_out) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (int64_t i = 0; i < n; ++i) data[i] = (rng.uniform01() * 2.0 - 1.0) * bound;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Params init_drs(Kind kind, int64_t n_users, int64_t n_items, int64_t d, uint64_t seed,
                int64_t lgcn_layers) {
    require(d > 0, "embedding width must be positive");
    require(kind != Kind::ncf || d % 2 == 0, "ncf needs an even embedding width");
    Params p;
    p.kind = kind;
    p.n_users = n_users;
    p.n_items = n_items;
    p.d = d;
    p.lgcn_layers = lgcn_layers;

    Rng emb_rng(derive_seed(seed, "drs-emb"));
    p.user_emb.resize(n_users, d);
    p.item_emb.resize(n_items, d);
    for (auto& v : p.user_emb.a) v = emb_rng.normal(0.0, 0.01);
    for (auto& v : p.item_emb.a) v = emb_rng.normal(0.0, 0.01);

    Rng head_rng(derive_seed(seed, "drs-head"));
    p.gmf_w.assign(static_cast<size_t>(d), 0.0);
    xavier_init(head_rng, p.gmf_w.data(), d, d, 1);
    p.gmf_b = 0.0;

    int64_t h2 = d / 2;
    p.ncf_w1.resize(2 * d, d);
    xavier_init(head_rng, p.ncf_w1.a.data(), p.ncf_w1.size(), 2 * d, d);
    p.ncf_b1.assign(static_cast<size_t>(d), 0.0);
    p.ncf_w2.resize(d, h2);
    xavier_init(head_rng, p.ncf_w2.a.data(), p.ncf_w2.size(), d, h2);
    p.ncf_b2.assign(static_cast<size_t>(h2), 0.0);
    p.ncf_w3.assign(static_cast<size_t>(h2), 0.0);
    xavier_init(head_rng, p.ncf_w3.data(), h2, h2, 1);
    p.ncf_b3 = 0.0;

    p.fused_w1.resize(3 * d, d);
    xavier_init(head_rng, p.fused_w1.a.data(), p.fused_w1.size(), 3 * d, d);
    p.fused_b1.assign(static_cast<size_t>(d), 0.0);
    p.fused_w2.assign(static_cast<size_t>(d), 0.0);
    xavier_init(head_rng, p.fused_w2.data(), d, d, 1);
    p.fused_b2 = 0.0;
    return p;
}

template <class P, class Span>
static std::vector<Span> views_impl(P& p) {
    return {
        {p.user_emb.a.data(), p.user_emb.a.size()},
        {p.item_emb.a.data(), p.item_emb.a.size()},
        {p.gmf_w.data(), p.gmf_w.size()},
        {&p.gmf_b, 1},
        {p.ncf_w1.a.data(), p.ncf_w1.a.size()},
        {p.ncf_b1.data(), p.ncf_b1.size()},
        {p.ncf_w2.a.data(), p.ncf_w2.a.size()},
        {p.ncf_b2.data(), p.ncf_b2.size()},
        {p.ncf_w3.data(), p.ncf_w3.size()},
        {&p.ncf_b3, 1},
        {p.fused_w1.a.data(), p.fused_w1.a.size()},
        {p.fused_b1.data(), p.fused_b1.size()},
        {p.fused_w2.data(), p.fused_w2.size()},
        {&p.fused_b2, 1},
    };
}

std::vector<std::span<double>> Params::param_views() {
    return views_impl<Params, std::span<double>>(*this);
}
std::vector<std::span<const double>> Params::param_views() const {
    return views_impl<const Params, std::span<const double>>(*this);
}

Grads::Grads(const Params& p) {
    user_emb.resize(p.user_emb.rows, p.user_emb.cols);
    item_emb.resize(p.item_emb.rows, p.item_emb.cols);
    gmf_w.assign(p.gmf_w.size(), 0.0);
    ncf_w1.resize(p.ncf_w1.rows, p.ncf_w1.cols);
    ncf_b1.assign(p.ncf_b1.size(), 0.0);
    ncf_w2.resize(p.ncf_w2.rows, p.ncf_w2.cols);
    ncf_b2.assign(p.ncf_b2.size(), 0.0);
    ncf_w3.assign(p.ncf_w3.size(), 0.0);
    fused_w1.resize(p.fused_w1.rows, p.fused_w1.cols);
    fused_b1.assign(p.fused_b1.size(), 0.0);
    fused_w2.assign(p.fused_w2.size(), 0.0);
}

void Grads::zero() {
    user_emb.zero();
    item_emb.zero();
    std::fill(gmf_w.begin(), gmf_w.end(), 0.0);
    gmf_b = 0.0;
    ncf_w1.zero();
    std::fill(ncf_b1.begin(), ncf_b1.end(), 0.0);
    ncf_w2.zero();
    std::fill(ncf_b2.begin(), ncf_b2.end(), 0.0);
    std::fill(ncf_w3.begin(), ncf_w3.end(), 0.0);
    ncf_b3 = 0.0;
    fused_w1.zero();
    std::fill(fused_b1.begin(), fused_b1.end(), 0.0);
    std::fill(fused_w2.begin(), fused_w2.end(), 0.0);
    fused_b2 = 0.0;
}

std::vector<std::span<const double>> Grads::views() const {
    return views_impl<const Grads, std::span<const double>>(*this);
}

LgcnGraph build_graph(const corpus::InteractionMatrix& train) {
    LgcnGraph g;
    g.n_users = train.n_users;
    g.n_items = train.n_items;
    g.user_nbrs.resize(train.n_users);
    g.item_nbrs.resize(train.n_items);
    for (const auto& e : train.entries) {
        g.user_nbrs[e.user].push_back(e.item);
        g.item_nbrs[e.item].push_back(e.user);
    }
    for (auto& v : g.user_nbrs) std::sort(v.begin(), v.end());
    for (auto& v : g.item_nbrs) std::sort(v.begin(), v.end());
    g.user_norm.resize(train.n_users);
    g.item_norm.resize(train.n_items);
    for (int64_t u = 0; u < train.n_users; ++u)
        g.user_norm[u] = g.user_nbrs[u].empty()
                             ? 0.0
                             : 1.0 / std::sqrt(static_cast<double>(g.user_nbrs[u].size()));
    for (int64_t i = 0; i < train.n_items; ++i)
        g.item_norm[i] = g.item_nbrs[i].empty()
                             ? 0.0
                             : 1.0 / std::sqrt(static_cast<double>(g.item_nbrs[i].size()));
    return g;
}

void lgcn_propagate(const Mat& user_emb, const Mat& item_emb, const LgcnGraph& graph,
                    int64_t layers, Mat& user_out, Mat& item_out) {
    require(layers >= 0, "layer count must be non-negative");
    int64_t d = user_emb.cols;
    Mat ucur = user_emb, icur = item_emb;
    user_out = user_emb;
    item_out = item_emb;
    Mat unext(user_emb.rows, d), inext(item_emb.rows, d);
    for (int64_t k = 0; k < layers; ++k) {
#pragma omp parallel for schedule(static)
        for (int64_t u = 0; u < graph.n_users; ++u) {
            double* dst = unext.row(u);
            if (graph.user_nbrs[u].empty()) {
                // isolated: carry the previous layer through
                const double* src = ucur.row(u);
                for (int64_t c = 0; c < d; ++c) dst[c] = src[c];
                continue;
            }
            for (int64_t c = 0; c < d; ++c) dst[c] = 0.0;
            for (int64_t i : graph.user_nbrs[u]) {
                double w = graph.user_norm[u] * graph.item_norm[i];
                const double* src = icur.row(i);
                for (int64_t c = 0; c < d; ++c) dst[c] += w * src[c];
            }
        }
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < graph.n_items; ++i) {
            double* dst = inext.row(i);
            if (graph.item_nbrs[i].empty()) {
                const double* src = icur.row(i);
                for (int64_t c = 0; c < d; ++c) dst[c] = src[c];
                continue;
            }
            for (int64_t c = 0; c < d; ++c) dst[c] = 0.0;
            for (int64_t u : graph.item_nbrs[i]) {
                double w = graph.item_norm[i] * graph.user_norm[u];
                const double* src = ucur.row(u);
                for (int64_t c = 0; c < d; ++c) dst[c] += w * src[c];
            }
        }
        std::swap(ucur, unext);
        std::swap(icur, inext);
        for (int64_t n = 0; n < user_out.size(); ++n) user_out.a[n] += ucur.a[n];
        for (int64_t n = 0; n < item_out.size(); ++n) item_out.a[n] += icur.a[n];
    }
    double inv = 1.0 / static_cast<double>(layers + 1);
    for (auto& v : user_out.a) v *= inv;
    for (auto& v : item_out.a) v *= inv;
}

Vec drs_feature(const Params& p, int64_t u, int64_t i, const Mat* user_prop, const Mat* item_prop) {
    require(u >= 0 && u < p.n_users && i >= 0 && i < p.n_items, "drs_feature: index out of range");
    const Mat& U = p.kind == Kind::lightgcn && user_prop ? *user_prop : p.user_emb;
    const Mat& I = p.kind == Kind::lightgcn && item_prop ? *item_prop : p.item_emb;
    require(p.kind != Kind::lightgcn || (user_prop && item_prop),
            "lightgcn feature requires propagated embeddings");
    Vec f(static_cast<size_t>(2 * p.d));
    for (int64_t c = 0; c < p.d; ++c) f[c] = U(u, c);
    for (int64_t c = 0; c < p.d; ++c) f[p.d + c] = I(i, c);
    return f;
}

double standalone_forward(const Params& p, int64_t u, int64_t i, StandaloneCache& cache,
                          const Mat* user_prop, const Mat* item_prop) {
    cache.u = u;
    cache.i = i;
    const Mat& U = p.kind == Kind::lightgcn ? *user_prop : p.user_emb;
    const Mat& I = p.kind == Kind::lightgcn ? *item_prop : p.item_emb;
    cache.uvec.assign(U.row(u), U.row(u) + p.d);
    cache.ivec.assign(I.row(i), I.row(i) + p.d);

    double z = 0.0;
    switch (p.kind) {
        case Kind::gmf: {
            for (int64_t c = 0; c < p.d; ++c) z += p.gmf_w[c] * cache.uvec[c] * cache.ivec[c];
            z += p.gmf_b;
            break;
        }
        case Kind::ncf: {
            int64_t d = p.d, h2 = d / 2;
            cache.pre1.assign(static_cast<size_t>(d), 0.0);
            for (int64_t o = 0; o < d; ++o) {
                double acc = p.ncf_b1[o];
                for (int64_t c = 0; c < d; ++c) acc += cache.uvec[c] * p.ncf_w1(c, o);
                for (int64_t c = 0; c < d; ++c) acc += cache.ivec[c] * p.ncf_w1(d + c, o);
                cache.pre1[o] = acc;
            }
            cache.h1.resize(cache.pre1.size());
            for (size_t k = 0; k < cache.h1.size(); ++k) cache.h1[k] = std::max(0.0, cache.pre1[k]);
            cache.pre2.assign(static_cast<size_t>(h2), 0.0);
            for (int64_t o = 0; o < h2; ++o) {
                double acc = p.ncf_b2[o];
                for (int64_t c = 0; c < d; ++c) acc += cache.h1[c] * p.ncf_w2(c, o);
                cache.pre2[o] = acc;
            }
            cache.h2.resize(cache.pre2.size());
            for (size_t k = 0; k < cache.h2.size(); ++k) cache.h2[k] = std::max(0.0, cache.pre2[k]);
            double acc = p.ncf_b3;
            for (int64_t c = 0; c < h2; ++c) acc += cache.h2[c] * p.ncf_w3[c];
            z = acc;
            break;
        }
        case Kind::lightgcn: {
            for (int64_t c = 0; c < p.d; ++c) z += cache.uvec[c] * cache.ivec[c];
            break;
        }
    }
    cache.yhat = sigmoid(z);
    return cache.yhat;
}

void standalone_backward(const Params& p, const StandaloneCache& cache, double dz, Grads& grads,
                         Mat* user_prop_grad, Mat* item_prop_grad) {
    int64_t d = p.d;
    Vec du(static_cast<size_t>(d), 0.0), di(static_cast<size_t>(d), 0.0);
    switch (p.kind) {
        case Kind::gmf: {
            for (int64_t c = 0; c < d; ++c) {
                grads.gmf_w[c] += dz * cache.uvec[c] * cache.ivec[c];
                du[c] = dz * p.gmf_w[c] * cache.ivec[c];
                di[c] = dz * p.gmf_w[c] * cache.uvec[c];
            }
            grads.gmf_b += dz;
            break;
        }
        case Kind::ncf: {
            int64_t h2 = d / 2;
            Vec dh2(static_cast<size_t>(h2));
            for (int64_t c = 0; c < h2; ++c) {
                grads.ncf_w3[c] += dz * cache.h2[c];
                dh2[c] = dz * p.ncf_w3[c] * (cache.pre2[c] > 0.0 ? 1.0 : 0.0);
            }
            grads.ncf_b3 += dz;
            Vec dh1(static_cast<size_t>(d), 0.0);
            for (int64_t o = 0; o < h2; ++o) {
                grads.ncf_b2[o] += dh2[o];
                for (int64_t c = 0; c < d; ++c) {
                    grads.ncf_w2(c, o) += dh2[o] * cache.h1[c];
                    dh1[c] += dh2[o] * p.ncf_w2(c, o);
                }
            }
            for (int64_t c = 0; c < d; ++c) dh1[c] *= cache.pre1[c] > 0.0 ? 1.0 : 0.0;
            for (int64_t o = 0; o < d; ++o) {
                grads.ncf_b1[o] += dh1[o];
                for (int64_t c = 0; c < d; ++c) {
                    grads.ncf_w1(c, o) += dh1[o] * cache.uvec[c];
                    grads.ncf_w1(d + c, o) += dh1[o] * cache.ivec[c];
                    du[c] += dh1[o] * p.ncf_w1(c, o);
                    di[c] += dh1[o] * p.ncf_w1(d + c, o);
                }
            }
            break;
        }
        case Kind::lightgcn: {
            for (int64_t c = 0; c < d; ++c) {
                du[c] = dz * cache.ivec[c];
                di[c] = dz * cache.uvec[c];
            }
            break;
        }
    }
    if (p.kind == Kind::lightgcn) {
        require(user_prop_grad && item_prop_grad,
                "lightgcn backward needs propagated-gradient buffers");
        for (int64_t c = 0; c < d; ++c) {
            (*user_prop_grad)(cache.u, c) += du[c];
            (*item_prop_grad)(cache.i, c) += di[c];
        }
    } else {
        for (int64_t c = 0; c < d; ++c) {
            grads.user_emb(cache.u, c) += du[c];
            grads.item_emb(cache.i, c) += di[c];
        }
    }
}

double fused_forward(const Params& p, std::span<const double> e_c, std::span<const double> feature,
                     FusedCache& cache) {
    int64_t d = p.d;
    require(static_cast<int64_t>(e_c.size()) == d, "fused head: e_c must have width d");
    require(static_cast<int64_t>(feature.size()) == 2 * d, "fused head: feature must have width 2d");
    cache.input.resize(static_cast<size_t>(3 * d));
    for (int64_t c = 0; c < d; ++c) cache.input[c] = e_c[c];
    for (int64_t c = 0; c < 2 * d; ++c) cache.input[d + c] = feature[c];
    for (double v : cache.input)
        require(std::isfinite(v), "fused head: non-finite input");

    cache.pre1.assign(static_cast<size_t>(d), 0.0);
    for (int64_t o = 0; o < d; ++o) {
        double acc = p.fused_b1[o];
        for (int64_t c = 0; c < 3 * d; ++c) acc += cache.input[c] * p.fused_w1(c, o);
        cache.pre1[o] = acc;
    }
    cache.h1.resize(cache.pre1.size());
    for (size_t k = 0; k < cache.h1.size(); ++k) cache.h1[k] = std::max(0.0, cache.pre1[k]);
    double z = p.fused_b2;
    for (int64_t c = 0; c < d; ++c) z += cache.h1[c] * p.fused_w2[c];
    cache.yhat = sigmoid(z);
    return cache.yhat;
}

double fused_predict(const Params& p, std::span<const double> e_c, std::span<const double> feature) {
    FusedCache cache;
    return fused_forward(p, e_c, feature, cache);
}

void fused_backward(const Params& p, const FusedCache& cache, double dz, Grads& grads,
                    std::span<double> d_feature) {
    int64_t d = p.d;
    Vec dh1(static_cast<size_t>(d));
    for (int64_t c = 0; c < d; ++c) {
        grads.fused_w2[c] += dz * cache.h1[c];
        dh1[c] = dz * p.fused_w2[c] * (cache.pre1[c] > 0.0 ? 1.0 : 0.0);
    }
    grads.fused_b2 += dz;
    Vec din(static_cast<size_t>(3 * d), 0.0);
    for (int64_t o = 0; o < d; ++o) {
        grads.fused_b1[o] += dh1[o];
        for (int64_t c = 0; c < 3 * d; ++c) {
            grads.fused_w1(c, o) += dh1[o] * cache.input[c];
            din[c] += dh1[o] * p.fused_w1(c, o);
        }
    }
    require(static_cast<int64_t>(d_feature.size()) == 2 * d, "fused backward: feature width");
    for (int64_t c = 0; c < 2 * d; ++c) d_feature[c] += din[d + c];
}

double drs_loss(double yhat, int label) {
    constexpr double eps = 1e-7;
    double y = std::clamp(yhat, eps, 1.0 - eps);
    return label ? -std::log(y) : -std::log(1.0 - y);
}

PretrainResult pretrain_drs(const corpus::SplitBundle& split,
                            const std::vector<corpus::CandidateSet>& valid_cands, Params init,
                            const PretrainConfig& cfg) {
    require(split.train.nnz() > 0, "pretrain_drs: empty train split");
    PretrainResult res;
    res.params = std::move(init);
    Params& p = res.params;
    Grads grads(p);
    Adam opt(cfg.lr);
    LgcnGraph graph;
    if (p.kind == Kind::lightgcn) graph = build_graph(split.train);

    std::vector<std::pair<int64_t, int64_t>> positives;
    positives.reserve(split.train.entries.size());
    for (const auto& e : split.train.entries) positives.emplace_back(e.user, e.item);

    auto validate = [&]() {
        Mat uprop, iprop;
        const Mat *up = nullptr, *ip = nullptr;
        if (p.kind == Kind::lightgcn) {
            lgcn_propagate(p.user_emb, p.item_emb, graph, p.lgcn_layers, uprop, iprop);
            up = &uprop;
            ip = &iprop;
        }
        int64_t hits = 0;
        StandaloneCache cache;
        for (const auto& cs : valid_cands) {
            double pos_score = standalone_forward(p, cs.user, cs.positive, cache, up, ip);
            bool top = true;
            for (int64_t neg : cs.negatives) {
                double s = standalone_forward(p, cs.user, neg, cache, up, ip);
                if (s > pos_score || (s == pos_score && neg < cs.positive)) {
                    top = false;
                    break;
                }
            }
            hits += top ? 1 : 0;
        }
        return valid_cands.empty() ? 0.0
                                   : static_cast<double>(hits) /
                                         static_cast<double>(valid_cands.size());
    };

    double best_metric = -1.0;
    int64_t bad_epochs = 0;
    for (int64_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        // unified epoch set: every positive plus one fresh uniform negative
        auto negs = corpus::sample_prediction_negatives(
            split.train, positives, derive_seed(cfg.seed, "drs-neg", static_cast<uint64_t>(epoch)));
        std::vector<corpus::LabeledPair> data;
        data.reserve(positives.size() + negs.size());
        for (const auto& [u, i] : positives) data.push_back({u, i, 1});
        data.insert(data.end(), negs.begin(), negs.end());
        Rng shuffle_rng(derive_seed(cfg.seed, "drs-shuffle", static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(data);

        double epoch_loss = 0.0;
        Mat uprop, iprop, duprop, diprop;
        StandaloneCache cache;
        for (size_t start = 0; start < data.size(); start += cfg.batch) {
            size_t end = std::min(data.size(), start + cfg.batch);
            int64_t bsz = static_cast<int64_t>(end - start);
            grads.zero();
            const Mat *up = nullptr, *ip = nullptr;
            if (p.kind == Kind::lightgcn) {
                lgcn_propagate(p.user_emb, p.item_emb, graph, p.lgcn_layers, uprop, iprop);
                up = &uprop;
                ip = &iprop;
                duprop.resize(p.n_users, p.d);
                diprop.resize(p.n_items, p.d);
                duprop.zero();
                diprop.zero();
            }
            for (size_t k = start; k < end; ++k) {
                const auto& ex = data[k];
                double yhat = standalone_forward(p, ex.user, ex.item, cache, up, ip);
                epoch_loss += drs_loss(yhat, ex.label);
                double dz = (yhat - static_cast<double>(ex.label)) / static_cast<double>(bsz);
                standalone_backward(p, cache, dz, grads, &duprop, &diprop);
            }
            if (p.kind == Kind::lightgcn) {
                Mat du, di;
                lgcn_propagate(duprop, diprop, graph, p.lgcn_layers, du, di);
                for (int64_t n = 0; n < du.size(); ++n) grads.user_emb.a[n] += du.a[n];
                for (int64_t n = 0; n < di.size(); ++n) grads.item_emb.a[n] += di.a[n];
            }
            require(std::isfinite(epoch_loss), "pretrain_drs diverged: non-finite loss");
            opt.step(p.param_views(), grads.views());
        }
        res.epoch_loss.push_back(epoch_loss / static_cast<double>(data.size()));

        double hr1 = validate();
        res.valid_hr1.push_back(hr1);
        if (hr1 > best_metric) {
            best_metric = hr1;
            res.best_epoch = epoch;
            res.snapshot.users = p.user_emb;
            res.snapshot.items = p.item_emb;
            bad_epochs = 0;
        } else if (++bad_epochs > cfg.patience) {
            break;
        }
    }
    if (res.best_epoch < 0) {
        res.snapshot.users = p.user_emb;
        res.snapshot.items = p.item_emb;
    }
    return res;
}

void save_checkpoint(const std::filesystem::path& dir, const Params& p, uint64_t seed,
                     int64_t step) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    io::json meta;
    meta["kind"] = to_string(p.kind);
    meta["n_users"] = p.n_users;
    meta["n_items"] = p.n_items;
    meta["d"] = p.d;
    meta["lgcn_layers"] = p.lgcn_layers;
    meta["seed"] = seed;
    meta["step"] = step;
    meta["arrays"] = io::json::object();
    auto add = [&](const std::string& name, std::span<const double> data,
                   std::vector<int64_t> shape) {
        io::write_f32(dir / (name + ".bin"), data);
        meta["arrays"][name] = {{"dtype", "float32"}, {"shape", shape}};
    };
    add("user_emb", p.user_emb.a, {p.user_emb.rows, p.user_emb.cols});
    add("item_emb", p.item_emb.a, {p.item_emb.rows, p.item_emb.cols});
    add("gmf_w", p.gmf_w, {static_cast<int64_t>(p.gmf_w.size())});
    add("gmf_b", {&p.gmf_b, 1}, {1});
    add("ncf_w1", p.ncf_w1.a, {p.ncf_w1.rows, p.ncf_w1.cols});
    add("ncf_b1", p.ncf_b1, {static_cast<int64_t>(p.ncf_b1.size())});
    add("ncf_w2", p.ncf_w2.a, {p.ncf_w2.rows, p.ncf_w2.cols});
    add("ncf_b2", p.ncf_b2, {static_cast<int64_t>(p.ncf_b2.size())});
    add("ncf_w3", p.ncf_w3, {static_cast<int64_t>(p.ncf_w3.size())});
    add("ncf_b3", {&p.ncf_b3, 1}, {1});
    add("fused_w1", p.fused_w1.a, {p.fused_w1.rows, p.fused_w1.cols});
    add("fused_b1", p.fused_b1, {static_cast<int64_t>(p.fused_b1.size())});
    add("fused_w2", p.fused_w2, {static_cast<int64_t>(p.fused_w2.size())});
    add("fused_b2", {&p.fused_b2, 1}, {1});
    io::write_json(dir / "meta.json", meta);
}

Params load_checkpoint(const std::filesystem::path& dir) {
    auto meta = io::read_json(dir / "meta.json");
    Params p;
    p.kind = kind_from_string(meta.at("kind").get<std::string>());
    p.n_users = meta.at("n_users").get<int64_t>();
    p.n_items = meta.at("n_items").get<int64_t>();
    p.d = meta.at("d").get<int64_t>();
    p.lgcn_layers = meta.at("lgcn_layers").get<int64_t>();
    int64_t d = p.d;
    p.user_emb = io::read_mat_f32(dir / "user_emb.bin", p.n_users, d);
    p.item_emb = io::read_mat_f32(dir / "item_emb.bin", p.n_items, d);
    p.gmf_w = io::read_f32(dir / "gmf_w.bin", d);
    p.gmf_b = io::read_f32(dir / "gmf_b.bin", 1)[0];
    p.ncf_w1 = io::read_mat_f32(dir / "ncf_w1.bin", 2 * d, d);
    p.ncf_b1 = io::read_f32(dir / "ncf_b1.bin", d);
    p.ncf_w2 = io::read_mat_f32(dir / "ncf_w2.bin", d, d / 2);
    p.ncf_b2 = io::read_f32(dir / "ncf_b2.bin", d / 2);
    p.ncf_w3 = io::read_f32(dir / "ncf_w3.bin", d / 2);
    p.ncf_b3 = io::read_f32(dir / "ncf_b3.bin", 1)[0];
    p.fused_w1 = io::read_mat_f32(dir / "fused_w1.bin", 3 * d, d);
    p.fused_b1 = io::read_f32(dir / "fused_b1.bin", d);
    p.fused_w2 = io::read_f32(dir / "fused_w2.bin", d);
    p.fused_b2 = io::read_f32(dir / "fused_b2.bin", 1)[0];
    return p;
}

void save_pretrained(const std::filesystem::path& dir, const Pretrained& snap) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    io::json meta;
    meta["arrays"] = {
        {"users", {{"dtype", "float32"}, {"shape", {snap.users.rows, snap.users.cols}}}},
        {"items", {{"dtype", "float32"}, {"shape", {snap.items.rows, snap.items.cols}}}}};
    io::write_json(dir / "meta.json", meta);
    io::write_mat_f32(dir / "users.bin", snap.users);
    io::write_mat_f32(dir / "items.bin", snap.items);
}

Pretrained load_pretrained(const std::filesystem::path& dir) {
    auto meta = io::read_json(dir / "meta.json");
    auto ushape = meta.at("arrays").at("users").at("shape").get<std::vector<int64_t>>();
    auto ishape = meta.at("arrays").at("items").at("shape").get<std::vector<int64_t>>();
    Pretrained snap;
    snap.users = io::read_mat_f32(dir / "users.bin", ushape[0], ushape[1]);
    snap.items = io::read_mat_f32(dir / "items.bin", ishape[0], ishape[1]);
    return snap;
}

}  // namespace bdlm::drs
