#pragma once

#include <cstdint>

#include "bdlm/corpus.hpp"

namespace bdlm::synthetic {

// Planted-structure dataset: users and items split into latent communities,
// interactions drawn mostly in-community with a low-rank preference inside
// the community, item titles built from community word pools plus one
// item-specific rare word. Hard negatives sampled by title similarity then
// land in the positive's own community, which makes text-only ranking hard
// while the collaborative structure stays learnable.
struct PlantedConfig {
    int64_t n_users = 200;
    int64_t n_items = 100;
    int64_t n_communities = 2;
    int64_t per_user = 14;          // interactions per user
    double in_community = 0.9;      // fraction drawn from own community
    int64_t latent_dim = 2;         // rank of within-community preference
    uint64_t seed = 1;
};

corpus::RawData make_planted(const PlantedConfig& cfg);

}  // namespace bdlm::synthetic
