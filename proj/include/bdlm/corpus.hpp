#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bdlm/mat.hpp"

namespace bdlm::corpus {

struct Interaction {
    int64_t user = 0;
    int64_t item = 0;
    int64_t ts = 0;
    int label = 1;
};

struct UserInfo {
    std::string orig_id;
    std::string profile;
};

struct ItemInfo {
    std::string orig_id;
    std::string title;
    std::string description;
};

// Dense, contiguously indexed entities. Original file ids are kept as the
// sidecar mapping.
struct Catalog {
    std::vector<UserInfo> users;
    std::vector<ItemInfo> items;
};

// Sparse binary interaction matrix: entries sorted by (user, item), unique,
// earliest timestamp kept. A CSR offset table gives per-user rows.
struct InteractionMatrix {
    int64_t n_users = 0;
    int64_t n_items = 0;
    std::vector<Interaction> entries;
    std::vector<int64_t> user_offsets;  // size n_users + 1

    int64_t nnz() const { return static_cast<int64_t>(entries.size()); }
    std::span<const Interaction> user_row(int64_t u) const {
        return {entries.data() + user_offsets[u],
                static_cast<size_t>(user_offsets[u + 1] - user_offsets[u])};
    }
    bool has(int64_t u, int64_t i) const;
};

enum class RawFormat { movielens_dat, amazon_jsonl, tsv };
RawFormat format_from_string(const std::string& s);
std::string to_string(RawFormat f);

struct RawData {
    Catalog catalog;
    std::vector<Interaction> interactions;
};

// Parses one of the three supported formats into densely indexed entities.
// MovieLens: "user::item::rating::ts" with an optional sibling movies.dat
// for titles. Amazon: one review object per line (reviewerID, asin,
// unixReviewTime, title). TSV: "user<TAB>item<TAB>ts" with an optional
// sibling items.tsv ("orig_id<TAB>title[<TAB>description]") for titles.
RawData load_raw(const std::filesystem::path& path, RawFormat format);

// Iteratively removes users/items with fewer interactions than the
// thresholds until a fixpoint, then re-densifies indices.
RawData filter_sparse(const RawData& data, int64_t min_user, int64_t min_item);

InteractionMatrix build_matrix(const Catalog& catalog, const std::vector<Interaction>& interactions);

struct SplitBundle {
    InteractionMatrix train;
    std::vector<std::pair<int64_t, int64_t>> valid;  // (user, held-out item)
    std::vector<std::pair<int64_t, int64_t>> test;
};

// Chronological leave-one-out: last interaction to test, second-to-last to
// valid; users with fewer than 3 interactions stay entirely in train.
// Timestamp ties break by (ts, item) order.
SplitBundle leave_one_out(const InteractionMatrix& matrix);

struct LabeledPair {
    int64_t user = 0;
    int64_t item = 0;
    int label = 0;
};

// One uniform non-interacted item per positive (1:1). `known` is the
// interaction set used for collision rejection. Saturated users are skipped
// with a warning on stderr.
std::vector<LabeledPair> sample_prediction_negatives(
    const InteractionMatrix& known, std::span<const std::pair<int64_t, int64_t>> positives,
    uint64_t seed);

// weight_i proportional to count_i^alpha, normalized to sum 1.
Vec popularity_weights(const InteractionMatrix& train, double alpha = 0.75);

// TF-IDF cosine over lowercased word tokens of title + description.
// idf(t) = ln((1 + n_docs) / (1 + df(t))) + 1, tf = raw count, vectors
// L2-normalized.
class TextSimilarityIndex {
  public:
    explicit TextSimilarityIndex(const Catalog& catalog);
    double similarity(int64_t item_a, int64_t item_b) const;
    // Most similar items from `pool`, descending score, ties by item index.
    std::vector<int64_t> top_similar(int64_t item, std::span<const int64_t> pool, int64_t k) const;

  private:
    // per item: sorted (term id, normalized weight)
    std::vector<std::vector<std::pair<int32_t, double>>> vecs_;
};

struct CandidateSet {
    int64_t user = 0;
    int64_t positive = 0;
    std::vector<int64_t> negatives;  // set_size - 1 items
};

// 1 positive + (set_size-1) non-interacted negatives: round(mix*(set_size-1))
// drawn as the items most text-similar to the positive, the rest sampled by
// popularity without replacement. `known` defines "interacted".
CandidateSet build_candidate_set(int64_t user, int64_t positive, const InteractionMatrix& known,
                                 const TextSimilarityIndex& sim, const Vec& pop_weights,
                                 double mix, uint64_t seed, int64_t set_size = 20);

struct DatasetStats {
    int64_t n_users = 0;
    int64_t n_items = 0;
    int64_t n_interactions = 0;
    double sparsity = 0.0;
};

DatasetStats dataset_stats(const InteractionMatrix& matrix);
DatasetStats dataset_stats(int64_t n_users, int64_t n_items, int64_t n_interactions);

}  // namespace bdlm::corpus
