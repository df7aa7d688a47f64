#include "bdlm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "bdlm/error.hpp"
#include "bdlm/rng.hpp"

namespace bdlm::corpus {

namespace fs = std::filesystem;

RawFormat format_from_string(const std::string& s) {
    if (s == "movielens-dat") return RawFormat::movielens_dat;
    if (s == "amazon-jsonl") return RawFormat::amazon_jsonl;
    if (s == "tsv") return RawFormat::tsv;
    fail("unknown raw format '" + s + "' (expected movielens-dat, amazon-jsonl or tsv)");
}

std::string to_string(RawFormat f) {
    switch (f) {
        case RawFormat::movielens_dat: return "movielens-dat";
        case RawFormat::amazon_jsonl: return "amazon-jsonl";
        case RawFormat::tsv: return "tsv";
    }
    return "?";
}

bool InteractionMatrix::has(int64_t u, int64_t i) const {
    auto row = user_row(u);
    auto it = std::lower_bound(row.begin(), row.end(), i,
                               [](const Interaction& e, int64_t v) { return e.item < v; });
    return it != row.end() && it->item == i;
}

namespace {

struct Indexer {
    std::unordered_map<std::string, int64_t> map;
    std::vector<std::string> ids;
    int64_t get(const std::string& key) {
        auto [it, fresh] = map.try_emplace(key, static_cast<int64_t>(ids.size()));
        if (fresh) ids.push_back(key);
        return it->second;
    }
};

std::vector<std::string> split(const std::string& line, const std::string& sep) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (true) {
        size_t next = line.find(sep, pos);
        if (next == std::string::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, next - pos));
        pos = next + sep.size();
    }
    return out;
}

[[noreturn]] void malformed(const fs::path& path, int64_t line_no, const std::string& why) {
    fail("malformed line " + std::to_string(line_no) + " in " + path.string() + ": " + why);
}

int64_t parse_i64(const std::string& s, const fs::path& path, int64_t line_no) {
    try {
        size_t used = 0;
        int64_t v = std::stoll(s, &used);
        if (used != s.size()) malformed(path, line_no, "trailing characters in number '" + s + "'");
        return v;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        malformed(path, line_no, "not a number: '" + s + "'");
    }
}

// titles for movielens come from a movies.dat next to the ratings file
std::unordered_map<std::string, std::string> load_movielens_titles(const fs::path& ratings_path) {
    std::unordered_map<std::string, std::string> titles;
    fs::path movies = ratings_path.parent_path() / "movies.dat";
    if (!fs::exists(movies)) return titles;
    std::ifstream in(movies);
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto parts = split(line, "::");
        if (parts.size() < 2) malformed(movies, line_no, "expected id::title[::genres]");
        titles[parts[0]] = parts[1];
    }
    return titles;
}

RawData finish_catalog(Indexer users, Indexer items,
                       std::unordered_map<std::string, std::string> titles,
                       std::unordered_map<std::string, std::string> descs,
                       std::vector<Interaction> interactions) {
    RawData out;
    out.catalog.users.reserve(users.ids.size());
    for (auto& id : users.ids) out.catalog.users.push_back({id, ""});
    out.catalog.items.reserve(items.ids.size());
    for (auto& id : items.ids) {
        ItemInfo info;
        info.orig_id = id;
        auto t = titles.find(id);
        info.title = (t != titles.end() && !t->second.empty()) ? t->second : "item " + id;
        auto d = descs.find(id);
        if (d != descs.end()) info.description = d->second;
        out.catalog.items.push_back(std::move(info));
    }
    out.interactions = std::move(interactions);
    return out;
}

RawData load_movielens(const fs::path& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open: " + path.string());
    Indexer users, items;
    std::vector<Interaction> inter;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto parts = split(line, "::");
        if (parts.size() != 4) malformed(path, line_no, "expected user::item::rating::ts");
        Interaction e;
        e.user = users.get(parts[0]);
        e.item = items.get(parts[1]);
        parse_i64(parts[2], path, line_no);  // rating is binarized away
        e.ts = parse_i64(parts[3], path, line_no);
        inter.push_back(e);
    }
    require(!inter.empty(), "no interactions in " + path.string());
    return finish_catalog(std::move(users), std::move(items), load_movielens_titles(path), {},
                          std::move(inter));
}

RawData load_amazon(const fs::path& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open: " + path.string());
    Indexer users, items;
    std::unordered_map<std::string, std::string> titles, descs;
    std::vector<Interaction> inter;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            malformed(path, line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!j.contains("reviewerID") || !j.contains("asin"))
            malformed(path, line_no, "missing reviewerID or asin");
        Interaction e;
        e.user = users.get(j["reviewerID"].get<std::string>());
        std::string asin = j["asin"].get<std::string>();
        e.item = items.get(asin);
        e.ts = j.contains("unixReviewTime") ? j["unixReviewTime"].get<int64_t>() : line_no;
        if (j.contains("title") && j["title"].is_string()) {
            std::string t = j["title"].get<std::string>();
            if (!t.empty()) titles[asin] = t;
        }
        if (j.contains("description") && j["description"].is_string())
            descs[asin] = j["description"].get<std::string>();
        inter.push_back(e);
    }
    require(!inter.empty(), "no interactions in " + path.string());
    return finish_catalog(std::move(users), std::move(items), std::move(titles), std::move(descs),
                          std::move(inter));
}

RawData load_tsv(const fs::path& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open: " + path.string());
    Indexer users, items;
    std::vector<Interaction> inter;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto parts = split(line, "\t");
        if (parts.size() != 3) malformed(path, line_no, "expected user<TAB>item<TAB>ts");
        Interaction e;
        e.user = users.get(parts[0]);
        e.item = items.get(parts[1]);
        e.ts = parse_i64(parts[2], path, line_no);
        inter.push_back(e);
    }
    require(!inter.empty(), "no interactions in " + path.string());

    std::unordered_map<std::string, std::string> titles, descs;
    fs::path items_file = path.parent_path() / "items.tsv";
    if (fs::exists(items_file)) {
        std::ifstream tin(items_file);
        std::string tline;
        int64_t tno = 0;
        while (std::getline(tin, tline)) {
            ++tno;
            if (!tline.empty() && tline.back() == '\r') tline.pop_back();
            if (tline.empty()) continue;
            auto parts = split(tline, "\t");
            if (parts.size() < 2) malformed(items_file, tno, "expected id<TAB>title[<TAB>desc]");
            titles[parts[0]] = parts[1];
            if (parts.size() >= 3) descs[parts[0]] = parts[2];
        }
    }
    return finish_catalog(std::move(users), std::move(items), std::move(titles), std::move(descs),
                          std::move(inter));
}

}  // namespace

RawData load_raw(const fs::path& path, RawFormat format) {
    require(fs::exists(path), "raw file does not exist: " + path.string());
    switch (format) {
        case RawFormat::movielens_dat: return load_movielens(path);
        case RawFormat::amazon_jsonl: return load_amazon(path);
        case RawFormat::tsv: return load_tsv(path);
    }
    fail("unreachable");
}

RawData filter_sparse(const RawData& data, int64_t min_user, int64_t min_item) {
    require(min_user >= 0 && min_item >= 0, "filter thresholds must be non-negative");
    int64_t n_users = static_cast<int64_t>(data.catalog.users.size());
    int64_t n_items = static_cast<int64_t>(data.catalog.items.size());
    std::vector<char> user_alive(n_users, 1), item_alive(n_items, 1);

    // iterate removals until stable
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<int64_t> ucount(n_users, 0), icount(n_items, 0);
        for (const auto& e : data.interactions) {
            if (user_alive[e.user] && item_alive[e.item]) {
                ++ucount[e.user];
                ++icount[e.item];
            }
        }
        for (int64_t u = 0; u < n_users; ++u) {
            if (user_alive[u] && ucount[u] < min_user) {
                user_alive[u] = 0;
                changed = true;
            }
        }
        for (int64_t i = 0; i < n_items; ++i) {
            if (item_alive[i] && icount[i] < min_item) {
                item_alive[i] = 0;
                changed = true;
            }
        }
    }

    std::vector<int64_t> user_new(n_users, -1), item_new(n_items, -1);
    RawData out;
    for (int64_t u = 0; u < n_users; ++u) {
        if (user_alive[u]) {
            user_new[u] = static_cast<int64_t>(out.catalog.users.size());
            out.catalog.users.push_back(data.catalog.users[u]);
        }
    }
    for (int64_t i = 0; i < n_items; ++i) {
        if (item_alive[i]) {
            item_new[i] = static_cast<int64_t>(out.catalog.items.size());
            out.catalog.items.push_back(data.catalog.items[i]);
        }
    }
    for (const auto& e : data.interactions) {
        if (user_alive[e.user] && item_alive[e.item]) {
            Interaction f = e;
            f.user = user_new[e.user];
            f.item = item_new[e.item];
            out.interactions.push_back(f);
        }
    }
    require(!out.interactions.empty(),
            "filter_sparse(min_user=" + std::to_string(min_user) +
                ", min_item=" + std::to_string(min_item) + ") emptied the dataset");
    return out;
}

InteractionMatrix build_matrix(const Catalog& catalog, const std::vector<Interaction>& interactions) {
    InteractionMatrix m;
    m.n_users = static_cast<int64_t>(catalog.users.size());
    m.n_items = static_cast<int64_t>(catalog.items.size());
    require(m.n_users > 0 && m.n_items > 0, "catalog must be nonempty");
    m.entries = interactions;
    for (const auto& e : m.entries) {
        require(e.user >= 0 && e.user < m.n_users,
                "user index out of range: " + std::to_string(e.user));
        require(e.item >= 0 && e.item < m.n_items,
                "item index out of range: " + std::to_string(e.item));
    }
    std::sort(m.entries.begin(), m.entries.end(), [](const Interaction& a, const Interaction& b) {
        if (a.user != b.user) return a.user < b.user;
        if (a.item != b.item) return a.item < b.item;
        return a.ts < b.ts;
    });
    // collapse duplicates keeping the earliest timestamp
    std::vector<Interaction> dedup;
    dedup.reserve(m.entries.size());
    for (const auto& e : m.entries) {
        if (!dedup.empty() && dedup.back().user == e.user && dedup.back().item == e.item) continue;
        dedup.push_back(e);
    }
    m.entries = std::move(dedup);
    m.user_offsets.assign(m.n_users + 1, 0);
    for (const auto& e : m.entries) ++m.user_offsets[e.user + 1];
    for (int64_t u = 0; u < m.n_users; ++u) m.user_offsets[u + 1] += m.user_offsets[u];
    return m;
}

SplitBundle leave_one_out(const InteractionMatrix& matrix) {
    SplitBundle out;
    std::vector<Interaction> train_entries;
    for (int64_t u = 0; u < matrix.n_users; ++u) {
        auto row = matrix.user_row(u);
        std::vector<Interaction> sorted(row.begin(), row.end());
        std::sort(sorted.begin(), sorted.end(), [](const Interaction& a, const Interaction& b) {
            if (a.ts != b.ts) return a.ts < b.ts;
            return a.item < b.item;
        });
        if (sorted.size() < 3) {
            train_entries.insert(train_entries.end(), sorted.begin(), sorted.end());
            continue;
        }
        out.test.emplace_back(u, sorted.back().item);
        out.valid.emplace_back(u, sorted[sorted.size() - 2].item);
        train_entries.insert(train_entries.end(), sorted.begin(), sorted.end() - 2);
    }
    Catalog shape;
    shape.users.resize(matrix.n_users);
    shape.items.resize(matrix.n_items);
    out.train = build_matrix(shape, train_entries);
    return out;
}

std::vector<LabeledPair> sample_prediction_negatives(
    const InteractionMatrix& known, std::span<const std::pair<int64_t, int64_t>> positives,
    uint64_t seed) {
    Rng rng(seed);
    std::vector<LabeledPair> out;
    out.reserve(positives.size());
    std::unordered_set<int64_t> warned;
    for (const auto& [u, _] : positives) {
        int64_t interacted = known.user_offsets[u + 1] - known.user_offsets[u];
        if (interacted >= known.n_items) {
            if (warned.insert(u).second)
                std::cerr << "warning: user " << u
                          << " interacted with every item; skipping its negative\n";
            continue;
        }
        int64_t item = rng.uniform_int(known.n_items);
        while (known.has(u, item)) item = rng.uniform_int(known.n_items);
        out.push_back({u, item, 0});
    }
    return out;
}

Vec popularity_weights(const InteractionMatrix& train, double alpha) {
    require(train.nnz() > 0, "popularity_weights: empty train matrix");
    Vec w(static_cast<size_t>(train.n_items), 0.0);
    for (const auto& e : train.entries) w[e.item] += 1.0;
    double sum = 0.0;
    for (auto& v : w) {
        v = v > 0.0 ? std::pow(v, alpha) : 0.0;
        sum += v;
    }
    if (sum <= 0.0) {
        // alpha=0 with no counts cannot happen (nnz>0); uniform fallback
        std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(train.n_items));
        return w;
    }
    for (auto& v : w) v /= sum;
    return w;
}

namespace {

std::vector<std::string> lowercase_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        bool word = std::isalnum(static_cast<unsigned char>(c)) || c == '\'';
        if (word) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

}  // namespace

TextSimilarityIndex::TextSimilarityIndex(const Catalog& catalog) {
    int64_t n = static_cast<int64_t>(catalog.items.size());
    std::unordered_map<std::string, int32_t> term_id;
    std::vector<std::vector<std::pair<int32_t, double>>> counts(n);
    std::unordered_map<int32_t, int64_t> df;
    for (int64_t i = 0; i < n; ++i) {
        std::map<int32_t, double> tf;
        auto words = lowercase_words(catalog.items[i].title + " " + catalog.items[i].description);
        for (const auto& w : words) {
            auto [it, _] = term_id.try_emplace(w, static_cast<int32_t>(term_id.size()));
            tf[it->second] += 1.0;
        }
        counts[i].assign(tf.begin(), tf.end());
        for (const auto& [t, _] : tf) ++df[t];
    }
    double n_docs = static_cast<double>(n);
    vecs_.resize(n);
    for (int64_t i = 0; i < n; ++i) {
        double norm2 = 0.0;
        for (auto& [t, v] : counts[i]) {
            double idf = std::log((1.0 + n_docs) / (1.0 + static_cast<double>(df[t]))) + 1.0;
            v *= idf;
            norm2 += v * v;
        }
        if (norm2 > 0.0) {
            double inv = 1.0 / std::sqrt(norm2);
            for (auto& [t, v] : counts[i]) v *= inv;
        }
        vecs_[i] = std::move(counts[i]);
    }
}

double TextSimilarityIndex::similarity(int64_t a, int64_t b) const {
    const auto& va = vecs_[a];
    const auto& vb = vecs_[b];
    if (va.empty() || vb.empty()) return 0.0;
    double dot = 0.0;
    size_t i = 0, j = 0;
    while (i < va.size() && j < vb.size()) {
        if (va[i].first == vb[j].first) {
            dot += va[i].second * vb[j].second;
            ++i;
            ++j;
        } else if (va[i].first < vb[j].first) {
            ++i;
        } else {
            ++j;
        }
    }
    return dot;
}

std::vector<int64_t> TextSimilarityIndex::top_similar(int64_t item, std::span<const int64_t> pool,
                                                      int64_t k) const {
    std::vector<std::pair<double, int64_t>> scored;
    scored.reserve(pool.size());
    for (int64_t p : pool) scored.emplace_back(similarity(item, p), p);
    std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first > y.first;
        return x.second < y.second;
    });
    std::vector<int64_t> out;
    for (int64_t i = 0; i < k && i < static_cast<int64_t>(scored.size()); ++i)
        out.push_back(scored[i].second);
    return out;
}

CandidateSet build_candidate_set(int64_t user, int64_t positive, const InteractionMatrix& known,
                                 const TextSimilarityIndex& sim, const Vec& pop_weights,
                                 double mix, uint64_t seed, int64_t set_size) {
    require(mix >= 0.0 && mix <= 1.0, "candidate mix must be in [0,1]");
    require(set_size >= 2, "candidate set size must be at least 2");
    int64_t need = set_size - 1;

    std::vector<int64_t> eligible;
    for (int64_t i = 0; i < known.n_items; ++i) {
        if (i != positive && !known.has(user, i)) eligible.push_back(i);
    }
    require(static_cast<int64_t>(eligible.size()) >= need,
            "user " + std::to_string(user) + " has only " + std::to_string(eligible.size()) +
                " eligible negatives, need " + std::to_string(need));

    CandidateSet cs;
    cs.user = user;
    cs.positive = positive;
    if (static_cast<int64_t>(eligible.size()) == need) {
        cs.negatives = std::move(eligible);
        return cs;
    }

    int64_t n_sim = std::llround(mix * static_cast<double>(need));
    cs.negatives = sim.top_similar(positive, eligible, n_sim);
    std::unordered_set<int64_t> taken(cs.negatives.begin(), cs.negatives.end());

    // popularity draws without replacement over the rest of the pool
    std::vector<int64_t> pool;
    std::vector<double> pw;
    for (int64_t i : eligible) {
        if (!taken.count(i)) {
            pool.push_back(i);
            pw.push_back(pop_weights[i]);
        }
    }
    Rng rng(seed);
    while (static_cast<int64_t>(cs.negatives.size()) < need) {
        double total = 0.0;
        for (double v : pw) total += v;
        int64_t pick;
        if (total <= 0.0) {
            pick = rng.uniform_int(static_cast<int64_t>(pool.size()));
        } else {
            double r = rng.uniform01() * total;
            double acc = 0.0;
            pick = static_cast<int64_t>(pool.size()) - 1;
            for (size_t idx = 0; idx < pool.size(); ++idx) {
                acc += pw[idx];
                if (r < acc) {
                    pick = static_cast<int64_t>(idx);
                    break;
                }
            }
        }
        cs.negatives.push_back(pool[pick]);
        pool.erase(pool.begin() + pick);
        pw.erase(pw.begin() + pick);
    }
    return cs;
}

DatasetStats dataset_stats(const InteractionMatrix& matrix) {
    return dataset_stats(matrix.n_users, matrix.n_items, matrix.nnz());
}

DatasetStats dataset_stats(int64_t n_users, int64_t n_items, int64_t n_interactions) {
    DatasetStats s;
    s.n_users = n_users;
    s.n_items = n_items;
    s.n_interactions = n_interactions;
    double cells = static_cast<double>(n_users) * static_cast<double>(n_items);
    s.sparsity = cells > 0.0 ? 1.0 - static_cast<double>(n_interactions) / cells : 1.0;
    return s;
}

}  // namespace bdlm::corpus
