#include "bdlm/lm.hpp"

#include <algorithm>
#include <cmath>

#include "bdlm/error.hpp"
#include "bdlm/io.hpp"
#include "bdlm/kernels.hpp"
#include "bdlm/rng.hpp"

namespace bdlm::lm {

namespace {

constexpr double kLnEps = 1e-5;
// fixed batch chunking for gradient accumulation; chunk buffers reduce in
// index order, so results do not depend on thread count
constexpr int64_t kGradChunks = 4;

void add_bias_rows(Mat& x, const Vec& b) {
    for (int64_t t = 0; t < x.rows; ++t) {
        double* r = x.row(t);
        for (int64_t c = 0; c < x.cols; ++c) r[c] += b[c];
    }
}

void layer_norm_fwd(const Mat& x, const Vec& g, const Vec& b, Mat& y, Mat& xhat, Vec& invstd) {
    int64_t d = x.cols;
    y.ensure(x.rows, d);
    xhat.ensure(x.rows, d);
    invstd.resize(static_cast<size_t>(x.rows));
    for (int64_t t = 0; t < x.rows; ++t) {
        const double* xr = x.row(t);
        double mean = 0.0;
        for (int64_t c = 0; c < d; ++c) mean += xr[c];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t c = 0; c < d; ++c) {
            double v = xr[c] - mean;
            var += v * v;
        }
        var /= static_cast<double>(d);
        double inv = 1.0 / std::sqrt(var + kLnEps);
        invstd[t] = inv;
        double* xh = xhat.row(t);
        double* yr = y.row(t);
        for (int64_t c = 0; c < d; ++c) {
            xh[c] = (xr[c] - mean) * inv;
            yr[c] = xh[c] * g[c] + b[c];
        }
    }
}

// dx += backward(dy); dg/db accumulate
void layer_norm_bwd(const Mat& dy, const Mat& xhat, const Vec& invstd, const Vec& g, Mat& dx,
                    Vec& dg, Vec& db) {
    int64_t d = dy.cols;
    for (int64_t t = 0; t < dy.rows; ++t) {
        const double* dyr = dy.row(t);
        const double* xh = xhat.row(t);
        double* dxr = dx.row(t);
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        for (int64_t c = 0; c < d; ++c) {
            double dxh = dyr[c] * g[c];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh[c];
            dg[c] += dyr[c] * xh[c];
            db[c] += dyr[c];
        }
        double inv_d = 1.0 / static_cast<double>(d);
        for (int64_t c = 0; c < d; ++c) {
            double dxh = dyr[c] * g[c];
            dxr[c] += invstd[t] * (dxh - inv_d * sum_dxh - xh[c] * inv_d * sum_dxh_xh);
        }
    }
}

}  // namespace

Params init_lm(const Config& cfg, const vocab::MixedVocabulary& vocab, uint64_t seed,
               bool random_entity_rows) {
    require(cfg.d_model > 0 && cfg.n_heads > 0 && cfg.d_model % cfg.n_heads == 0,
            "d_model must be divisible by n_heads");
    require(cfg.n_layers > 0 && cfg.context_limit > 0, "invalid lm config");
    Params p;
    p.cfg = cfg;
    p.vocab_size = vocab.size();
    p.base_size = vocab.base_size;
    p.n_users = vocab.n_users;
    p.n_items = vocab.n_items;
    p.vocab_hash = vocab.hash();

    const double std0 = 0.02;
    Rng rng(derive_seed(seed, "lm-init"));
    p.embed.resize(p.vocab_size, cfg.d_model);
    for (int64_t r = 0; r < p.vocab_size; ++r) {
        bool entity = r >= p.base_size;
        for (int64_t c = 0; c < cfg.d_model; ++c) {
            double v = rng.normal(0.0, std0);  // keep the stream aligned across modes
            p.embed(r, c) = entity && !random_entity_rows ? 0.0 : v;
        }
    }
    p.pos.resize(cfg.context_limit, cfg.d_model);
    for (auto& v : p.pos.a) v = rng.normal(0.0, std0);

    int64_t d = cfg.d_model, f = cfg.ffn();
    p.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (auto& L : p.layers) {
        L.ln1_g.assign(static_cast<size_t>(d), 1.0);
        L.ln1_b.assign(static_cast<size_t>(d), 0.0);
        L.ln2_g.assign(static_cast<size_t>(d), 1.0);
        L.ln2_b.assign(static_cast<size_t>(d), 0.0);
        for (Mat* w : {&L.wq, &L.wk, &L.wv, &L.wo}) {
            w->resize(d, d);
            for (auto& v : w->a) v = rng.normal(0.0, std0);
        }
        L.bq.assign(static_cast<size_t>(d), 0.0);
        L.bk.assign(static_cast<size_t>(d), 0.0);
        L.bv.assign(static_cast<size_t>(d), 0.0);
        L.bo.assign(static_cast<size_t>(d), 0.0);
        L.ff1.resize(d, f);
        for (auto& v : L.ff1.a) v = rng.normal(0.0, std0);
        L.fb1.assign(static_cast<size_t>(f), 0.0);
        L.ff2.resize(f, d);
        for (auto& v : L.ff2.a) v = rng.normal(0.0, std0);
        L.fb2.assign(static_cast<size_t>(d), 0.0);
    }
    p.lnf_g.assign(static_cast<size_t>(d), 1.0);
    p.lnf_b.assign(static_cast<size_t>(d), 0.0);
    return p;
}

void preload_embeddings(Params& params, const drs::Pretrained& snapshot) {
    require(snapshot.users.rows == params.n_users && snapshot.users.cols == params.cfg.d_model,
            "preload: user snapshot shape mismatch");
    require(snapshot.items.rows == params.n_items && snapshot.items.cols == params.cfg.d_model,
            "preload: item snapshot shape mismatch");
    for (int64_t u = 0; u < params.n_users; ++u) {
        const double* src = snapshot.users.row(u);
        double* dst = params.embed.row(params.entity_row_user(u));
        std::copy(src, src + params.cfg.d_model, dst);
    }
    for (int64_t i = 0; i < params.n_items; ++i) {
        const double* src = snapshot.items.row(i);
        double* dst = params.embed.row(params.entity_row_item(i));
        std::copy(src, src + params.cfg.d_model, dst);
    }
}

template <class P, class Span>
static void layer_views(P& L, std::vector<Span>& out) {
    out.push_back({L.ln1_g.data(), L.ln1_g.size()});
    out.push_back({L.ln1_b.data(), L.ln1_b.size()});
    out.push_back({L.ln2_g.data(), L.ln2_g.size()});
    out.push_back({L.ln2_b.data(), L.ln2_b.size()});
    out.push_back({L.wq.a.data(), L.wq.a.size()});
    out.push_back({L.wk.a.data(), L.wk.a.size()});
    out.push_back({L.wv.a.data(), L.wv.a.size()});
    out.push_back({L.wo.a.data(), L.wo.a.size()});
    out.push_back({L.bq.data(), L.bq.size()});
    out.push_back({L.bk.data(), L.bk.size()});
    out.push_back({L.bv.data(), L.bv.size()});
    out.push_back({L.bo.data(), L.bo.size()});
    out.push_back({L.ff1.a.data(), L.ff1.a.size()});
    out.push_back({L.fb1.data(), L.fb1.size()});
    out.push_back({L.ff2.a.data(), L.ff2.a.size()});
    out.push_back({L.fb2.data(), L.fb2.size()});
}

template <class P, class Span>
static std::vector<Span> views_impl(P& p) {
    std::vector<Span> out;
    out.push_back({p.embed.a.data(), p.embed.a.size()});
    out.push_back({p.pos.a.data(), p.pos.a.size()});
    for (auto& L : p.layers) layer_views<decltype(L), Span>(L, out);
    out.push_back({p.lnf_g.data(), p.lnf_g.size()});
    out.push_back({p.lnf_b.data(), p.lnf_b.size()});
    return out;
}

std::vector<std::span<double>> Params::param_views() {
    return views_impl<Params, std::span<double>>(*this);
}
std::vector<std::span<const double>> Params::param_views() const {
    return views_impl<const Params, std::span<const double>>(*this);
}

Mat embed_prompt(const std::vector<int64_t>& ids, const Mat& embed) {
    require(!ids.empty(), "embed_prompt: empty prompt");
    Mat e(static_cast<int64_t>(ids.size()), embed.cols);
    for (size_t t = 0; t < ids.size(); ++t) {
        require(ids[t] >= 0 && ids[t] < embed.rows,
                "embed_prompt: invalid token id " + std::to_string(ids[t]));
        const double* src = embed.row(ids[t]);
        std::copy(src, src + embed.cols, e.row(static_cast<int64_t>(t)));
    }
    return e;
}

const Mat& forward(const Mat& e_c, const Params& p, ForwardCache& cache, bool want_probs) {
    int64_t L = e_c.rows, d = p.cfg.d_model;
    int64_t heads = p.cfg.n_heads, dh = d / heads;
    require(L >= 1, "forward: empty input");
    require(L <= p.cfg.context_limit, "forward: sequence length " + std::to_string(L) +
                                          " exceeds context limit " +
                                          std::to_string(p.cfg.context_limit));
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    cache.layers.resize(p.layers.size());
    cache.x0.ensure(L, d);
    for (int64_t t = 0; t < L; ++t) {
        const double* er = e_c.row(t);
        const double* pr = p.pos.row(t);
        double* xr = cache.x0.row(t);
        for (int64_t c = 0; c < d; ++c) xr[c] = er[c] + pr[c];
    }

    const Mat* x = &cache.x0;
    for (size_t l = 0; l < p.layers.size(); ++l) {
        const LayerParams& P = p.layers[l];
        LayerCache& C = cache.layers[l];
        C.x_in = *x;

        layer_norm_fwd(C.x_in, P.ln1_g, P.ln1_b, C.u, C.ln1_xhat, C.ln1_invstd);

        C.q.ensure(L, d);
        C.k.ensure(L, d);
        C.v.ensure(L, d);
        kern::matmul(C.u, P.wq, C.q);
        kern::matmul(C.u, P.wk, C.k);
        kern::matmul(C.u, P.wv, C.v);
        add_bias_rows(C.q, P.bq);
        add_bias_rows(C.k, P.bk);
        add_bias_rows(C.v, P.bv);

        C.probs.resize(static_cast<size_t>(heads));
        for (auto& prob : C.probs) {
            prob.ensure(L, L);
            if (want_probs) prob.zero();  // entries above the diagonal stay unused
        }
        C.attn.ensure(L, d);
        C.attn.zero();
        for (int64_t h = 0; h < heads; ++h) {
            Mat& prob = C.probs[h];
            int64_t off = h * dh;
#pragma omp parallel for schedule(static) if (L >= 32)
            for (int64_t i = 0; i < L; ++i) {
                // causal: position i attends to 0..i
                double* pr = prob.row(i);
                const double* qi = C.q.row(i) + off;
                double mx = -1e300;
                for (int64_t j = 0; j <= i; ++j) {
                    const double* kj = C.k.row(j) + off;
                    double s = 0.0;
                    for (int64_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
                    s *= scale;
                    pr[j] = s;
                    mx = std::max(mx, s);
                }
                double sum = 0.0;
                for (int64_t j = 0; j <= i; ++j) {
                    pr[j] = std::exp(pr[j] - mx);
                    sum += pr[j];
                }
                double inv = 1.0 / sum;
                for (int64_t j = 0; j <= i; ++j) pr[j] *= inv;
                double* ar = C.attn.row(i) + off;
                for (int64_t j = 0; j <= i; ++j) {
                    const double* vj = C.v.row(j) + off;
                    for (int64_t c = 0; c < dh; ++c) ar[c] += pr[j] * vj[c];
                }
            }
        }

        C.x_mid.ensure(L, d);
        kern::matmul(C.attn, P.wo, C.x_mid);
        add_bias_rows(C.x_mid, P.bo);
        for (int64_t n = 0; n < C.x_mid.size(); ++n) C.x_mid.a[n] += C.x_in.a[n];

        layer_norm_fwd(C.x_mid, P.ln2_g, P.ln2_b, C.vn, C.ln2_xhat, C.ln2_invstd);
        C.pre1.ensure(L, p.cfg.ffn());
        kern::matmul(C.vn, P.ff1, C.pre1);
        add_bias_rows(C.pre1, P.fb1);
        C.h1.ensure(L, p.cfg.ffn());
        for (int64_t n = 0; n < C.pre1.size(); ++n) C.h1.a[n] = std::max(0.0, C.pre1.a[n]);
        C.x_out.ensure(L, d);
        kern::matmul(C.h1, P.ff2, C.x_out);
        add_bias_rows(C.x_out, P.fb2);
        for (int64_t n = 0; n < C.x_out.size(); ++n) C.x_out.a[n] += C.x_mid.a[n];

        x = &C.x_out;
    }
    layer_norm_fwd(*x, p.lnf_g, p.lnf_b, cache.hn, cache.lnf_xhat, cache.lnf_invstd);
    return cache.hn;
}

const Mat& forward_ids(const std::vector<int64_t>& ids, const Params& p, ForwardCache& cache,
                       bool want_probs) {
    cache.ids = ids;
    Mat e = embed_prompt(ids, p.embed);
    return forward(e, p, cache, want_probs);
}

namespace {

// log softmax over the tied logits h . W_e^T at one position
double position_logprob(const Params& p, const double* h, int64_t target, Vec* probs_out) {
    Mat hrow(1, p.cfg.d_model);
    std::copy(h, h + p.cfg.d_model, hrow.a.begin());
    Mat logits(1, p.vocab_size);
    kern::matmul_abt(hrow, p.embed, logits);
    double mx = logits.a[0];
    for (int64_t k = 1; k < p.vocab_size; ++k) mx = std::max(mx, logits.a[k]);
    double sum = 0.0;
    for (int64_t k = 0; k < p.vocab_size; ++k) sum += std::exp(logits.a[k] - mx);
    double lse = mx + std::log(sum);
    if (probs_out) {
        probs_out->resize(static_cast<size_t>(p.vocab_size));
        for (int64_t k = 0; k < p.vocab_size; ++k)
            (*probs_out)[k] = std::exp(logits.a[k] - lse);
    }
    return logits.a[target] - lse;
}

}  // namespace

double answer_logprob(const std::vector<int64_t>& prompt, const std::vector<int64_t>& answer,
                      const Params& p) {
    require(!prompt.empty() && !answer.empty(), "answer_logprob: empty prompt or answer");
    std::vector<int64_t> ids = prompt;
    ids.insert(ids.end(), answer.begin(), answer.end());
    ForwardCache cache;
    const Mat& hn = forward_ids(ids, p, cache);
    int64_t lp = static_cast<int64_t>(prompt.size());
    double total = 0.0;
    for (size_t j = 0; j < answer.size(); ++j)
        total += position_logprob(p, hn.row(lp - 1 + static_cast<int64_t>(j)), answer[j], nullptr);
    return total;
}

Vec top_feature(const std::vector<int64_t>& prompt, const Params& p) {
    ForwardCache cache;
    const Mat& hn = forward_ids(prompt, p, cache);
    const double* r = hn.row(hn.rows - 1);
    return Vec(r, r + p.cfg.d_model);
}

double predict_interaction(const std::vector<int64_t>& prompt, const Params& p,
                           const vocab::MixedVocabulary& vocab) {
    require(vocab.yes_id >= 0 && vocab.no_id >= 0, "vocabulary lacks Yes/No tokens");
    ForwardCache cache;
    const Mat& hn = forward_ids(prompt, p, cache);
    const double* h = hn.row(hn.rows - 1);
    double zy = kern::dot({h, static_cast<size_t>(p.cfg.d_model)},
                          {p.embed.row(vocab.yes_id), static_cast<size_t>(p.cfg.d_model)});
    double zn = kern::dot({h, static_cast<size_t>(p.cfg.d_model)},
                          {p.embed.row(vocab.no_id), static_cast<size_t>(p.cfg.d_model)});
    double mx = std::max(zy, zn);
    double ey = std::exp(zy - mx), en = std::exp(zn - mx);
    return ey / (ey + en);
}

std::vector<int64_t> rank_candidates(const std::vector<int64_t>& prompt,
                                     std::span<const int64_t> candidate_items, const Params& p,
                                     const vocab::MixedVocabulary& vocab) {
    require(!candidate_items.empty(), "rank_candidates: empty candidate set");
    ForwardCache cache;
    const Mat& hn = forward_ids(prompt, p, cache);
    const double* h = hn.row(hn.rows - 1);
    std::vector<std::pair<double, int64_t>> scored;
    scored.reserve(candidate_items.size());
    for (int64_t item : candidate_items) {
        require(item >= 0 && item < vocab.n_items,
                "rank_candidates: item " + std::to_string(item) + " has no vocabulary token");
        int64_t row = vocab.item_token_id(item);
        double z = kern::dot({h, static_cast<size_t>(p.cfg.d_model)},
                             {p.embed.row(row), static_cast<size_t>(p.cfg.d_model)});
        scored.emplace_back(z, item);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<int64_t> out;
    out.reserve(scored.size());
    for (auto& [_, item] : scored) out.push_back(item);
    return out;
}

Grads::Grads(const Params& p) {
    embed.resize(p.embed.rows, p.embed.cols);
    pos.resize(p.pos.rows, p.pos.cols);
    layers.resize(p.layers.size());
    for (size_t l = 0; l < p.layers.size(); ++l) {
        const LayerParams& src = p.layers[l];
        LayerParams& dst = layers[l];
        dst.ln1_g.assign(src.ln1_g.size(), 0.0);
        dst.ln1_b.assign(src.ln1_b.size(), 0.0);
        dst.ln2_g.assign(src.ln2_g.size(), 0.0);
        dst.ln2_b.assign(src.ln2_b.size(), 0.0);
        dst.wq.resize(src.wq.rows, src.wq.cols);
        dst.wk.resize(src.wk.rows, src.wk.cols);
        dst.wv.resize(src.wv.rows, src.wv.cols);
        dst.wo.resize(src.wo.rows, src.wo.cols);
        dst.bq.assign(src.bq.size(), 0.0);
        dst.bk.assign(src.bk.size(), 0.0);
        dst.bv.assign(src.bv.size(), 0.0);
        dst.bo.assign(src.bo.size(), 0.0);
        dst.ff1.resize(src.ff1.rows, src.ff1.cols);
        dst.fb1.assign(src.fb1.size(), 0.0);
        dst.ff2.resize(src.ff2.rows, src.ff2.cols);
        dst.fb2.assign(src.fb2.size(), 0.0);
    }
    lnf_g.assign(p.lnf_g.size(), 0.0);
    lnf_b.assign(p.lnf_b.size(), 0.0);
}

void Grads::zero() {
    embed.zero();
    pos.zero();
    for (auto& L : layers) {
        std::fill(L.ln1_g.begin(), L.ln1_g.end(), 0.0);
        std::fill(L.ln1_b.begin(), L.ln1_b.end(), 0.0);
        std::fill(L.ln2_g.begin(), L.ln2_g.end(), 0.0);
        std::fill(L.ln2_b.begin(), L.ln2_b.end(), 0.0);
        L.wq.zero();
        L.wk.zero();
        L.wv.zero();
        L.wo.zero();
        std::fill(L.bq.begin(), L.bq.end(), 0.0);
        std::fill(L.bk.begin(), L.bk.end(), 0.0);
        std::fill(L.bv.begin(), L.bv.end(), 0.0);
        std::fill(L.bo.begin(), L.bo.end(), 0.0);
        L.ff1.zero();
        std::fill(L.fb1.begin(), L.fb1.end(), 0.0);
        L.ff2.zero();
        std::fill(L.fb2.begin(), L.fb2.end(), 0.0);
    }
    std::fill(lnf_g.begin(), lnf_g.end(), 0.0);
    std::fill(lnf_b.begin(), lnf_b.end(), 0.0);
}

std::vector<std::span<const double>> Grads::views() const {
    return views_impl<const Grads, std::span<const double>>(*this);
}
std::vector<std::span<double>> Grads::views_mut() {
    return views_impl<Grads, std::span<double>>(*this);
}

namespace {

// backward through the backbone for one example; dhn is the gradient at the
// final hidden states. Scatters into grads (embed rows by token id).
void backbone_backward(const Params& p, const ForwardCache& cache, const Mat& dhn, Grads& grads) {
    int64_t L = dhn.rows, d = p.cfg.d_model;
    int64_t heads = p.cfg.n_heads, dh = d / heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Mat dx(L, d);
    layer_norm_bwd(dhn, cache.lnf_xhat, cache.lnf_invstd, p.lnf_g, dx, grads.lnf_g, grads.lnf_b);

    Mat dmid(L, d), du(L, d), dattn(L, d), dq(L, d), dk(L, d), dv(L, d), dvn(L, d);
    Mat dpre1(L, p.cfg.ffn());
    for (int64_t l = static_cast<int64_t>(p.layers.size()) - 1; l >= 0; --l) {
        const LayerParams& P = p.layers[l];
        const LayerCache& C = cache.layers[l];
        LayerParams& G = grads.layers[l];

        // FFN block: x_out = x_mid + relu(vn ff1 + b1) ff2 + b2
        dmid = dx;  // residual
        kern::matmul_atb(C.h1, dx, G.ff2, true);
        for (int64_t t = 0; t < L; ++t) {
            const double* dxr = dx.row(t);
            for (int64_t c = 0; c < d; ++c) G.fb2[c] += dxr[c];
        }
        kern::matmul_abt(dx, P.ff2, dpre1);
        for (int64_t n = 0; n < dpre1.size(); ++n)
            if (C.pre1.a[n] <= 0.0) dpre1.a[n] = 0.0;
        kern::matmul_atb(C.vn, dpre1, G.ff1, true);
        for (int64_t t = 0; t < L; ++t) {
            const double* r = dpre1.row(t);
            for (int64_t c = 0; c < p.cfg.ffn(); ++c) G.fb1[c] += r[c];
        }
        dvn.zero();
        kern::matmul_abt(dpre1, P.ff1, dvn);
        layer_norm_bwd(dvn, C.ln2_xhat, C.ln2_invstd, P.ln2_g, dmid, G.ln2_g, G.ln2_b);

        // attention block: x_mid = x_in + attn(ln1(x_in)) wo + bo
        dx = dmid;  // residual to x_in
        kern::matmul_atb(C.attn, dmid, G.wo, true);
        for (int64_t t = 0; t < L; ++t) {
            const double* r = dmid.row(t);
            for (int64_t c = 0; c < d; ++c) G.bo[c] += r[c];
        }
        dattn.zero();
        kern::matmul_abt(dmid, P.wo, dattn);

        dq.zero();
        dk.zero();
        dv.zero();
        for (int64_t h = 0; h < heads; ++h) {
            const Mat& prob = C.probs[h];
            int64_t off = h * dh;
            for (int64_t i = 0; i < L; ++i) {
                const double* dar = dattn.row(i) + off;
                const double* pr = prob.row(i);
                // dP and softmax backward over the causal prefix
                double dot = 0.0;
                std::vector<double> dp(static_cast<size_t>(i + 1));
                for (int64_t j = 0; j <= i; ++j) {
                    const double* vj = C.v.row(j) + off;
                    double acc = 0.0;
                    for (int64_t c = 0; c < dh; ++c) acc += dar[c] * vj[c];
                    dp[j] = acc;
                    dot += acc * pr[j];
                    double* dvj = dv.row(j) + off;
                    for (int64_t c = 0; c < dh; ++c) dvj[c] += pr[j] * dar[c];
                }
                const double* qi = C.q.row(i) + off;
                double* dqi = dq.row(i) + off;
                for (int64_t j = 0; j <= i; ++j) {
                    double ds = pr[j] * (dp[j] - dot) * scale;
                    const double* kj = C.k.row(j) + off;
                    double* dkj = dk.row(j) + off;
                    for (int64_t c = 0; c < dh; ++c) {
                        dqi[c] += ds * kj[c];
                        dkj[c] += ds * qi[c];
                    }
                }
            }
        }
        kern::matmul_atb(C.u, dq, G.wq, true);
        kern::matmul_atb(C.u, dk, G.wk, true);
        kern::matmul_atb(C.u, dv, G.wv, true);
        for (int64_t t = 0; t < L; ++t) {
            for (int64_t c = 0; c < d; ++c) {
                G.bq[c] += dq(t, c);
                G.bk[c] += dk(t, c);
                G.bv[c] += dv(t, c);
            }
        }
        du.zero();
        kern::matmul_abt(dq, P.wq, du);
        kern::matmul_abt(dk, P.wk, du, true);
        kern::matmul_abt(dv, P.wv, du, true);
        layer_norm_bwd(du, C.ln1_xhat, C.ln1_invstd, P.ln1_g, dx, G.ln1_g, G.ln1_b);
    }

    // input: x0 = embed[ids] + pos
    for (int64_t t = 0; t < L; ++t) {
        const double* r = dx.row(t);
        double* pg = grads.pos.row(t);
        double* eg = grads.embed.row(cache.ids[t]);
        for (int64_t c = 0; c < d; ++c) {
            pg[c] += r[c];
            eg[c] += r[c];
        }
    }
}

// loss and gradients for one example, scaled by `scale`
double sft_example_grad(const SftExample& ex, const Params& p, ForwardCache& cache, Grads& grads,
                        double scale) {
    std::vector<int64_t> ids = ex.prompt;
    ids.insert(ids.end(), ex.answer.begin(), ex.answer.end());
    const Mat& hn = forward_ids(ids, p, cache, /*want_probs=*/true);
    int64_t L = hn.rows, lp = static_cast<int64_t>(ex.prompt.size());

    Mat dhn(L, p.cfg.d_model);
    double loss = 0.0;
    Vec probs;
    for (size_t j = 0; j < ex.answer.size(); ++j) {
        int64_t pos_idx = lp - 1 + static_cast<int64_t>(j);
        int64_t target = ex.answer[j];
        loss -= position_logprob(p, hn.row(pos_idx), target, &probs);
        // dlogits = probs - onehot(target); tied projection:
        // dh += dlogits . W_e, dW_e[k] += dlogits[k] * h
        probs[target] -= 1.0;
        const double* h = hn.row(pos_idx);
        double* dh = dhn.row(pos_idx);
#pragma omp parallel for schedule(static) if (p.vocab_size >= 1024)
        for (int64_t k = 0; k < p.vocab_size; ++k) {
            double w = probs[k] * scale;
            if (w == 0.0) continue;
            double* eg = grads.embed.row(k);
            for (int64_t c = 0; c < p.cfg.d_model; ++c) eg[c] += w * h[c];
        }
        for (int64_t k = 0; k < p.vocab_size; ++k) {
            double w = probs[k] * scale;
            if (w == 0.0) continue;
            const double* er = p.embed.row(k);
            for (int64_t c = 0; c < p.cfg.d_model; ++c) dh[c] += w * er[c];
        }
    }
    backbone_backward(p, cache, dhn, grads);
    return loss * scale;
}

}  // namespace

double sft_loss(const std::vector<SftExample>& batch, const Params& p) {
    require(!batch.empty(), "sft_loss: empty batch");
    double total = 0.0;
    for (const auto& ex : batch) total += -answer_logprob(ex.prompt, ex.answer, p);
    return total / static_cast<double>(batch.size());
}

double sft_loss_and_grads(const std::vector<SftExample>& batch, const Params& p, Grads& grads) {
    require(!batch.empty(), "sft_loss: empty batch");
    double scale = 1.0 / static_cast<double>(batch.size());
    int64_t n_chunks = std::min<int64_t>(kGradChunks, static_cast<int64_t>(batch.size()));
    std::vector<double> chunk_loss(static_cast<size_t>(n_chunks), 0.0);
    std::vector<Grads> chunk_grads;
    chunk_grads.reserve(static_cast<size_t>(n_chunks));
    for (int64_t c = 0; c < n_chunks; ++c) chunk_grads.emplace_back(p);

#pragma omp parallel for schedule(static) if (n_chunks > 1)
    for (int64_t c = 0; c < n_chunks; ++c) {
        ForwardCache cache;
        for (size_t k = static_cast<size_t>(c); k < batch.size(); k += static_cast<size_t>(n_chunks))
            chunk_loss[c] += sft_example_grad(batch[k], p, cache, chunk_grads[c], scale);
    }

    double loss = 0.0;
    for (int64_t c = 0; c < n_chunks; ++c) loss += chunk_loss[c];
    auto dst = grads.views_mut();
    for (int64_t c = 0; c < n_chunks; ++c) {
        auto src = chunk_grads[c].views();
        for (size_t v = 0; v < dst.size(); ++v) {
            for (size_t i = 0; i < dst[v].size(); ++i) dst[v][i] += src[v][i];
        }
    }
    return loss;
}

void save_checkpoint(const std::filesystem::path& dir, const Params& p, uint64_t seed,
                     int64_t step) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    io::json meta;
    meta["n_layers"] = p.cfg.n_layers;
    meta["n_heads"] = p.cfg.n_heads;
    meta["d_model"] = p.cfg.d_model;
    meta["ffn_width"] = p.cfg.ffn();
    meta["context_limit"] = p.cfg.context_limit;
    meta["vocab_size"] = p.vocab_size;
    meta["base_size"] = p.base_size;
    meta["n_users"] = p.n_users;
    meta["n_items"] = p.n_items;
    meta["vocab_hash"] = p.vocab_hash;
    meta["seed"] = seed;
    meta["step"] = step;
    io::write_json(dir / "meta.json", meta);
    auto views = p.param_views();
    Vec flat;
    size_t total = 0;
    for (auto& v : views) total += v.size();
    flat.reserve(total);
    for (auto& v : views) flat.insert(flat.end(), v.begin(), v.end());
    io::write_f32(dir / "params.bin", flat);
}

Params load_checkpoint(const std::filesystem::path& dir) {
    auto meta = io::read_json(dir / "meta.json");
    Config cfg;
    cfg.n_layers = meta.at("n_layers").get<int64_t>();
    cfg.n_heads = meta.at("n_heads").get<int64_t>();
    cfg.d_model = meta.at("d_model").get<int64_t>();
    cfg.ffn_width = meta.at("ffn_width").get<int64_t>();
    cfg.context_limit = meta.at("context_limit").get<int64_t>();

    Params p;
    p.cfg = cfg;
    p.vocab_size = meta.at("vocab_size").get<int64_t>();
    p.base_size = meta.at("base_size").get<int64_t>();
    p.n_users = meta.at("n_users").get<int64_t>();
    p.n_items = meta.at("n_items").get<int64_t>();
    p.vocab_hash = meta.at("vocab_hash").get<uint64_t>();

    int64_t d = cfg.d_model, f = cfg.ffn();
    p.embed.resize(p.vocab_size, d);
    p.pos.resize(cfg.context_limit, d);
    p.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (auto& L : p.layers) {
        L.ln1_g.assign(static_cast<size_t>(d), 0.0);
        L.ln1_b.assign(static_cast<size_t>(d), 0.0);
        L.ln2_g.assign(static_cast<size_t>(d), 0.0);
        L.ln2_b.assign(static_cast<size_t>(d), 0.0);
        L.wq.resize(d, d);
        L.wk.resize(d, d);
        L.wv.resize(d, d);
        L.wo.resize(d, d);
        L.bq.assign(static_cast<size_t>(d), 0.0);
        L.bk.assign(static_cast<size_t>(d), 0.0);
        L.bv.assign(static_cast<size_t>(d), 0.0);
        L.bo.assign(static_cast<size_t>(d), 0.0);
        L.ff1.resize(d, f);
        L.fb1.assign(static_cast<size_t>(f), 0.0);
        L.ff2.resize(f, d);
        L.fb2.assign(static_cast<size_t>(d), 0.0);
    }
    p.lnf_g.assign(static_cast<size_t>(d), 0.0);
    p.lnf_b.assign(static_cast<size_t>(d), 0.0);

    auto views = p.param_views();
    size_t total = 0;
    for (auto& v : views) total += v.size();
    Vec flat = io::read_f32(dir / "params.bin", static_cast<int64_t>(total));
    size_t off = 0;
    for (auto& v : views) {
        std::copy(flat.begin() + static_cast<int64_t>(off),
                  flat.begin() + static_cast<int64_t>(off + v.size()), v.begin());
        off += v.size();
    }
    return p;
}

}  // namespace bdlm::lm
