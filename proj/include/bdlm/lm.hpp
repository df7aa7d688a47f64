#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bdlm/drs.hpp"
#include "bdlm/mat.hpp"
#include "bdlm/vocab.hpp"

namespace bdlm::lm {

struct Config {
    int64_t n_layers = 4;
    int64_t n_heads = 4;
    int64_t d_model = 64;
    int64_t ffn_width = 0;  // 0 means 4 * d_model
    int64_t context_limit = 256;
    double dropout = 0.0;  // kept at 0; field exists for config parity

    int64_t ffn() const { return ffn_width > 0 ? ffn_width : 4 * d_model; }
};

struct LayerParams {
    Vec ln1_g, ln1_b, ln2_g, ln2_b;
    Mat wq, wk, wv, wo;  // d x d
    Vec bq, bk, bv, bo;
    Mat ff1;  // d x f
    Vec fb1;
    Mat ff2;  // f x d
    Vec fb2;
};

// Decoder-only transformer with a mixed embedding table. Rows of `embed`
// follow the vocabulary's ID ranges (base, then user, then item tokens) and
// the output projection is weight-tied to it. Pre-norm blocks, learned
// positional embeddings, causal attention.
struct Params {
    Config cfg;
    int64_t vocab_size = 0, base_size = 0, n_users = 0, n_items = 0;
    uint64_t vocab_hash = 0;

    Mat embed;  // |W| x d
    Mat pos;    // context_limit x d
    std::vector<LayerParams> layers;
    Vec lnf_g, lnf_b;

    std::vector<std::span<double>> param_views();
    std::vector<std::span<const double>> param_views() const;

    int64_t entity_row_user(int64_t u) const { return base_size + u; }
    int64_t entity_row_item(int64_t i) const { return base_size + n_users + i; }
};

// Base token rows Normal(0, 0.02^2); entity rows zero pending preload (or
// Normal(0, 0.02^2) when random_entity_rows, the no-preload ablation).
Params init_lm(const Config& cfg, const vocab::MixedVocabulary& vocab, uint64_t seed,
               bool random_entity_rows = false);

// Copies the step-1 snapshot into the entity rows; base rows untouched.
void preload_embeddings(Params& params, const drs::Pretrained& snapshot);

struct LayerCache {
    Mat x_in, u, ln1_xhat;
    Vec ln1_invstd;
    Mat q, k, v;
    std::vector<Mat> probs;  // per head, L x L, zero above the diagonal
    Mat attn, x_mid, ln2_xhat;
    Vec ln2_invstd;
    Mat vn, pre1, h1;
    Mat x_out;
};

struct ForwardCache {
    std::vector<int64_t> ids;
    Mat x0;
    std::vector<LayerCache> layers;
    Mat lnf_xhat;
    Vec lnf_invstd;
    Mat hn;  // final hidden states after the last layer norm
};

// E_C[t] = W_e[ids[t]]
Mat embed_prompt(const std::vector<int64_t>& ids, const Mat& embed);

// Runs the backbone over an embedded prompt; returns h_n (L x d). Set
// want_probs to keep attention probabilities in the cache.
const Mat& forward(const Mat& e_c, const Params& params, ForwardCache& cache,
                   bool want_probs = false);
const Mat& forward_ids(const std::vector<int64_t>& ids, const Params& params, ForwardCache& cache,
                       bool want_probs = false);

// log P(answer | prompt) under teacher forcing; prompt positions contribute
// nothing to the sum.
double answer_logprob(const std::vector<int64_t>& prompt, const std::vector<int64_t>& answer,
                      const Params& params);

// Final-layer hidden state at the last prompt position.
Vec top_feature(const std::vector<int64_t>& prompt, const Params& params);

// Two-way softmax over the Yes/No logits at the first answer position.
double predict_interaction(const std::vector<int64_t>& prompt, const Params& params,
                           const vocab::MixedVocabulary& vocab);

// Scores each candidate item by its token logit at the first answer
// position; descending, ties by item index.
std::vector<int64_t> rank_candidates(const std::vector<int64_t>& prompt,
                                     std::span<const int64_t> candidate_items,
                                     const Params& params, const vocab::MixedVocabulary& vocab);

struct SftExample {
    int64_t user = 0;
    int64_t item = 0;
    int label = 1;
    std::vector<int64_t> prompt;
    std::vector<int64_t> answer;
};

struct Grads {
    Mat embed, pos;
    std::vector<LayerParams> layers;
    Vec lnf_g, lnf_b;

    explicit Grads(const Params& p);
    void zero();
    std::vector<std::span<const double>> views() const;
    std::vector<std::span<double>> views_mut();
};

// Mean over the batch of -log P(answer | prompt), masked to answer positions.
double sft_loss(const std::vector<SftExample>& batch, const Params& params);
// Same, accumulating analytic gradients into zeroed `grads`.
double sft_loss_and_grads(const std::vector<SftExample>& batch, const Params& params, Grads& grads);

void save_checkpoint(const std::filesystem::path& dir, const Params& p, uint64_t seed,
                     int64_t step);
Params load_checkpoint(const std::filesystem::path& dir);

}  // namespace bdlm::lm
