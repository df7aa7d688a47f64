#include "bdlm/synthetic.hpp"

#include <array>
#include <cmath>
#include <string>
#include <unordered_set>

#include "bdlm/error.hpp"
#include "bdlm/rng.hpp"

namespace bdlm::synthetic {

namespace {

const std::array<std::array<const char*, 10>, 4> kPools = {{
    {"crimson", "ember", "forge", "canyon", "saddle", "lantern", "prairie", "quartz", "mesa",
     "copper"},
    {"azure", "harbor", "tide", "compass", "ivory", "meadow", "violet", "drift", "pearl", "cove"},
    {"amber", "grove", "cinder", "ridge", "willow", "falcon", "slate", "orchard", "pine", "dune"},
    {"coral", "summit", "raven", "birch", "garnet", "fjord", "moss", "heather", "basalt", "reef"},
}};

}  // namespace

corpus::RawData make_planted(const PlantedConfig& cfg) {
    require(cfg.n_communities >= 1 && cfg.n_communities <= static_cast<int64_t>(kPools.size()),
            "n_communities must be between 1 and 4");
    require(cfg.per_user < cfg.n_items / cfg.n_communities,
            "per_user must be below the community item count");
    Rng rng(derive_seed(cfg.seed, "planted"));

    corpus::RawData out;
    auto user_comm = [&](int64_t u) { return u % cfg.n_communities; };
    auto item_comm = [&](int64_t i) { return i % cfg.n_communities; };

    // low-rank latent factors inside each community
    Mat user_f(cfg.n_users, cfg.latent_dim), item_f(cfg.n_items, cfg.latent_dim);
    for (auto& v : user_f.a) v = rng.normal();
    for (auto& v : item_f.a) v = rng.normal();

    for (int64_t u = 0; u < cfg.n_users; ++u)
        out.catalog.users.push_back({"u" + std::to_string(u), ""});
    for (int64_t i = 0; i < cfg.n_items; ++i) {
        const auto& pool = kPools[item_comm(i)];
        std::string title;
        for (int w = 0; w < 3; ++w) {
            if (w) title += " ";
            title += pool[rng.uniform_int(static_cast<int64_t>(pool.size()))];
        }
        title += " mk" + std::to_string(i);
        std::string desc = std::string(pool[rng.uniform_int(10)]) + " " +
                           pool[rng.uniform_int(10)];
        out.catalog.items.push_back({"i" + std::to_string(i), title, desc});
    }

    for (int64_t u = 0; u < cfg.n_users; ++u) {
        int64_t comm = user_comm(u);
        std::vector<int64_t> own, other;
        for (int64_t i = 0; i < cfg.n_items; ++i)
            (item_comm(i) == comm ? own : other).push_back(i);

        // preference over own-community items: softmax of latent dot product
        std::vector<double> w(own.size());
        double mx = -1e300;
        for (size_t k = 0; k < own.size(); ++k) {
            double s = 0.0;
            for (int64_t l = 0; l < cfg.latent_dim; ++l) s += user_f(u, l) * item_f(own[k], l);
            w[k] = s;
            mx = std::max(mx, s);
        }
        double total = 0.0;
        for (auto& v : w) {
            v = std::exp(v - mx);
            total += v;
        }
        for (auto& v : w) v /= total;

        std::unordered_set<int64_t> chosen;
        std::vector<int64_t> picked;
        while (static_cast<int64_t>(picked.size()) < cfg.per_user) {
            int64_t item;
            if (!other.empty() && rng.uniform01() >= cfg.in_community) {
                item = other[rng.uniform_int(static_cast<int64_t>(other.size()))];
            } else {
                double r = rng.uniform01();
                double acc = 0.0;
                size_t k = own.size() - 1;
                for (size_t idx = 0; idx < own.size(); ++idx) {
                    acc += w[idx];
                    if (r < acc) {
                        k = idx;
                        break;
                    }
                }
                item = own[k];
            }
            if (chosen.insert(item).second) picked.push_back(item);
        }
        rng.shuffle(picked);
        for (size_t k = 0; k < picked.size(); ++k)
            out.interactions.push_back({u, picked[k], static_cast<int64_t>(k + 1), 1});
    }
    return out;
}

}  // namespace bdlm::synthetic
