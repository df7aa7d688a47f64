#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bdlm/corpus.hpp"
#include "bdlm/mat.hpp"

namespace bdlm::drs {

enum class Kind { gmf, ncf, lightgcn };
Kind kind_from_string(const std::string& s);
std::string to_string(Kind k);

// Embedding-based recommender. The standalone head scores (u,i) from the
// backbone alone; the fused head consumes the LM top-layer feature
// concatenated with the 2d domain feature.
struct Params {
    Kind kind = Kind::gmf;
    int64_t n_users = 0, n_items = 0, d = 0;
    int64_t lgcn_layers = 2;

    Mat user_emb, item_emb;

    // gmf standalone head: sigmoid(w . (u*i) + b)
    Vec gmf_w;
    double gmf_b = 0.0;

    // ncf standalone tower over concat(u,i): [2d -> d] relu [d -> d/2] relu [d/2 -> 1]
    Mat ncf_w1;
    Vec ncf_b1;
    Mat ncf_w2;
    Vec ncf_b2;
    Vec ncf_w3;
    double ncf_b3 = 0.0;

    // fused head over concat(e_c, feature): [3d -> d] relu [d -> 1]
    Mat fused_w1;
    Vec fused_b1;
    Vec fused_w2;
    double fused_b2 = 0.0;

    std::vector<std::span<double>> param_views();
    std::vector<std::span<const double>> param_views() const;
};

Params init_drs(Kind kind, int64_t n_users, int64_t n_items, int64_t d, uint64_t seed,
                int64_t lgcn_layers = 2);

// Gradient buffers with the same shape/view order as Params.
struct Grads {
    Mat user_emb, item_emb;
    Vec gmf_w;
    double gmf_b = 0.0;
    Mat ncf_w1;
    Vec ncf_b1;
    Mat ncf_w2;
    Vec ncf_b2;
    Vec ncf_w3;
    double ncf_b3 = 0.0;
    Mat fused_w1;
    Vec fused_b1;
    Vec fused_w2;
    double fused_b2 = 0.0;

    explicit Grads(const Params& p);
    void zero();
    std::vector<std::span<const double>> views() const;
};

// Bipartite train graph with symmetric 1/sqrt(deg_u * deg_i) normalization.
struct LgcnGraph {
    int64_t n_users = 0, n_items = 0;
    std::vector<std::vector<int64_t>> user_nbrs, item_nbrs;
    Vec user_norm, item_norm;  // 1/sqrt(deg), 0 for isolated nodes
};
LgcnGraph build_graph(const corpus::InteractionMatrix& train);

// e^(k+1) = A_hat e^(k); isolated nodes carry their previous layer through.
// Output is the mean of layers 0..K. The operator is symmetric, so the same
// routine implements the backward pass.
void lgcn_propagate(const Mat& user_emb, const Mat& item_emb, const LgcnGraph& graph,
                    int64_t layers, Mat& user_out, Mat& item_out);

// 2d domain feature: concat of the backbone's per-entity representations
// (raw embeddings for gmf/ncf, propagated ones for lightgcn).
Vec drs_feature(const Params& p, int64_t u, int64_t i, const Mat* user_prop = nullptr,
                const Mat* item_prop = nullptr);

// ---- standalone head ----

struct StandaloneCache {
    int64_t u = 0, i = 0;
    double yhat = 0.0;
    Vec uvec, ivec;  // entity representations used (propagated for lightgcn)
    Vec h1, h2;      // ncf tower activations (post-relu)
    Vec pre1, pre2;  // ncf pre-activations
};

double standalone_forward(const Params& p, int64_t u, int64_t i, StandaloneCache& cache,
                          const Mat* user_prop = nullptr, const Mat* item_prop = nullptr);

// d(loss)/d(pre-sigmoid) = dz; accumulates into grads. For lightgcn the
// entity gradients go into prop_grads (rows of the propagated tables) and
// must be pulled back through lgcn_propagate afterwards.
void standalone_backward(const Params& p, const StandaloneCache& cache, double dz, Grads& grads,
                         Mat* user_prop_grad = nullptr, Mat* item_prop_grad = nullptr);

// ---- fused head ----

struct FusedCache {
    Vec input;  // concat(e_c, feature), 3d
    Vec h1;     // post-relu, d
    Vec pre1;
    double yhat = 0.0;
};

double fused_predict(const Params& p, std::span<const double> e_c, std::span<const double> feature);
double fused_forward(const Params& p, std::span<const double> e_c, std::span<const double> feature,
                     FusedCache& cache);
// dz = d(loss)/d(pre-sigmoid); d_feature receives the gradient w.r.t. the 2d
// domain feature (the e_c part is frozen and discarded).
void fused_backward(const Params& p, const FusedCache& cache, double dz, Grads& grads,
                    std::span<double> d_feature);

// Binary cross entropy with predictions clamped to [1e-7, 1-1e-7].
double drs_loss(double yhat, int label);

// ---- step-1 pretraining ----

struct Pretrained {
    Mat users, items;
};

struct PretrainConfig {
    double lr = 1e-3;
    int64_t batch = 256;
    int64_t max_epochs = 50;
    int64_t patience = 3;
    uint64_t seed = 1;
};

struct PretrainResult {
    Params params;
    Pretrained snapshot;  // embeddings at the best validation epoch
    std::vector<double> epoch_loss;
    std::vector<double> valid_hr1;
    int64_t best_epoch = -1;
};

// Pointwise BCE on train positives plus 1:1 per-epoch uniform negatives via
// the standalone head; snapshots embeddings at the best validation HR@1
// (standalone ranking over the given candidate sets).
PretrainResult pretrain_drs(const corpus::SplitBundle& split,
                            const std::vector<corpus::CandidateSet>& valid_cands, Params init,
                            const PretrainConfig& cfg);

void save_checkpoint(const std::filesystem::path& dir, const Params& p, uint64_t seed,
                     int64_t step);
Params load_checkpoint(const std::filesystem::path& dir);
void save_pretrained(const std::filesystem::path& dir, const Pretrained& snap);
Pretrained load_pretrained(const std::filesystem::path& dir);

}  // namespace bdlm::drs
