#include "bdlm/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bdlm/error.hpp"
#include "bdlm/io.hpp"
#include "bdlm/metrics_io.hpp"
#include "bdlm/rng.hpp"

namespace bdlm::pipeline {

namespace fs = std::filesystem;

PreparedDataset prepare_dataset(const corpus::RawData& raw, const config::RunConfig& cfg) {
    PreparedDataset ds;
    ds.seed = cfg.seed;
    corpus::RawData filtered = corpus::filter_sparse(raw, cfg.min_user, cfg.min_item);
    ds.catalog = std::move(filtered.catalog);
    ds.full = corpus::build_matrix(ds.catalog, filtered.interactions);
    ds.split = corpus::leave_one_out(ds.full);
    ds.stats = corpus::dataset_stats(ds.full);

    // balanced interaction-prediction test set
    for (const auto& [u, i] : ds.split.test) ds.test_pairs.push_back({u, i, 1});
    auto negs = corpus::sample_prediction_negatives(ds.full, ds.split.test,
                                                    derive_seed(cfg.seed, "prediction-negatives"));
    ds.test_pairs.insert(ds.test_pairs.end(), negs.begin(), negs.end());

    corpus::TextSimilarityIndex sim(ds.catalog);
    Vec pop = corpus::popularity_weights(ds.split.train);
    for (size_t k = 0; k < ds.split.test.size(); ++k) {
        const auto& [u, i] = ds.split.test[k];
        ds.test_cands.push_back(corpus::build_candidate_set(
            u, i, ds.full, sim, pop, cfg.candidate_mix,
            derive_seed(cfg.seed, "candidates-test", static_cast<uint64_t>(k)),
            cfg.candidate_size));
    }
    size_t n_valid = ds.split.valid.size();
    if (cfg.valid_cases_cap > 0)
        n_valid = std::min(n_valid, static_cast<size_t>(cfg.valid_cases_cap));
    for (size_t k = 0; k < n_valid; ++k) {
        const auto& [u, i] = ds.split.valid[k];
        ds.valid_cands.push_back(corpus::build_candidate_set(
            u, i, ds.full, sim, pop, cfg.candidate_mix,
            derive_seed(cfg.seed, "candidates-valid", static_cast<uint64_t>(k)),
            cfg.candidate_size));
    }
    return ds;
}

namespace {

std::vector<int64_t> pack_pairs(const std::vector<std::pair<int64_t, int64_t>>& pairs) {
    std::vector<int64_t> flat;
    flat.reserve(pairs.size() * 2);
    for (const auto& [a, b] : pairs) {
        flat.push_back(a);
        flat.push_back(b);
    }
    return flat;
}

std::vector<std::pair<int64_t, int64_t>> unpack_pairs(const std::vector<int64_t>& flat) {
    std::vector<std::pair<int64_t, int64_t>> pairs(flat.size() / 2);
    for (size_t k = 0; k < pairs.size(); ++k) pairs[k] = {flat[2 * k], flat[2 * k + 1]};
    return pairs;
}

std::vector<int64_t> pack_cands(const std::vector<corpus::CandidateSet>& cands, int64_t k) {
    std::vector<int64_t> flat;
    flat.reserve(cands.size() * static_cast<size_t>(k + 1));
    for (const auto& c : cands) {
        flat.push_back(c.user);
        flat.push_back(c.positive);
        require(static_cast<int64_t>(c.negatives.size()) == k - 1,
                "candidate set size mismatch while saving");
        flat.insert(flat.end(), c.negatives.begin(), c.negatives.end());
    }
    return flat;
}

std::vector<corpus::CandidateSet> unpack_cands(const std::vector<int64_t>& flat, int64_t k) {
    size_t stride = static_cast<size_t>(k + 1);
    require(flat.size() % stride == 0, "candidate array has bad length");
    std::vector<corpus::CandidateSet> cands(flat.size() / stride);
    for (size_t c = 0; c < cands.size(); ++c) {
        const int64_t* p = flat.data() + c * stride;
        cands[c].user = p[0];
        cands[c].positive = p[1];
        cands[c].negatives.assign(p + 2, p + stride);
    }
    return cands;
}

}  // namespace

void save_dataset(const fs::path& dir, const PreparedDataset& ds, const config::RunConfig& cfg) {
    fs::create_directories(dir);
    io::json meta;
    meta["seed"] = ds.seed;
    meta["format"] = cfg.dataset_format;
    meta["min_user"] = cfg.min_user;
    meta["min_item"] = cfg.min_item;
    meta["candidate_mix"] = cfg.candidate_mix;
    meta["candidate_size"] = cfg.candidate_size;
    meta["stats"] = {{"n_users", ds.stats.n_users},
                     {"n_items", ds.stats.n_items},
                     {"n_interactions", ds.stats.n_interactions},
                     {"sparsity", ds.stats.sparsity}};
    meta["n_train"] = ds.split.train.nnz();
    meta["n_valid"] = static_cast<int64_t>(ds.split.valid.size());
    meta["n_test"] = static_cast<int64_t>(ds.split.test.size());
    meta["n_test_pairs"] = static_cast<int64_t>(ds.test_pairs.size());
    meta["n_test_cands"] = static_cast<int64_t>(ds.test_cands.size());
    meta["n_valid_cands"] = static_cast<int64_t>(ds.valid_cands.size());
    io::write_json(dir / "meta.json", meta);

    io::json cat;
    cat["users"] = io::json::array();
    for (const auto& u : ds.catalog.users)
        cat["users"].push_back({{"id", u.orig_id}, {"profile", u.profile}});
    cat["items"] = io::json::array();
    for (const auto& it : ds.catalog.items)
        cat["items"].push_back(
            {{"id", it.orig_id}, {"title", it.title}, {"description", it.description}});
    io::write_json(dir / "catalog.json", cat);

    std::vector<int64_t> tu, ti, ts;
    for (const auto& e : ds.split.train.entries) {
        tu.push_back(e.user);
        ti.push_back(e.item);
        ts.push_back(e.ts);
    }
    io::write_i64(dir / "train_user.bin", tu);
    io::write_i64(dir / "train_item.bin", ti);
    io::write_i64(dir / "train_ts.bin", ts);
    io::write_i64(dir / "valid_pairs.bin", pack_pairs(ds.split.valid));
    io::write_i64(dir / "test_pairs.bin", pack_pairs(ds.split.test));

    // timestamps of held-out interactions so the full matrix reloads exactly
    std::vector<int64_t> held_ts;
    auto find_ts = [&ds](int64_t u, int64_t i) {
        for (const auto& e : ds.full.user_row(u))
            if (e.item == i) return e.ts;
        fail("held-out pair missing from the full matrix");
    };
    for (const auto& [u, i] : ds.split.valid) held_ts.push_back(find_ts(u, i));
    for (const auto& [u, i] : ds.split.test) held_ts.push_back(find_ts(u, i));
    io::write_i64(dir / "heldout_ts.bin", held_ts);

    std::vector<int64_t> pp;
    for (const auto& p : ds.test_pairs) {
        pp.push_back(p.user);
        pp.push_back(p.item);
        pp.push_back(p.label);
    }
    io::write_i64(dir / "prediction_pairs.bin", pp);
    io::write_i64(dir / "cands_test.bin", pack_cands(ds.test_cands, cfg.candidate_size));
    io::write_i64(dir / "cands_valid.bin", pack_cands(ds.valid_cands, cfg.candidate_size));
}

PreparedDataset load_dataset(const fs::path& dir) {
    require(fs::exists(dir / "meta.json"), "no prepared dataset at " + dir.string() +
                                               " (run the prepare command first)");
    auto meta = io::read_json(dir / "meta.json");
    PreparedDataset ds;
    ds.seed = meta.at("seed").get<uint64_t>();
    int64_t cand_k = meta.at("candidate_size").get<int64_t>();

    auto cat = io::read_json(dir / "catalog.json");
    for (const auto& u : cat.at("users"))
        ds.catalog.users.push_back({u.at("id").get<std::string>(), u.value("profile", "")});
    for (const auto& it : cat.at("items"))
        ds.catalog.items.push_back({it.at("id").get<std::string>(),
                                    it.at("title").get<std::string>(),
                                    it.value("description", "")});

    auto tu = io::read_i64(dir / "train_user.bin");
    auto ti = io::read_i64(dir / "train_item.bin", static_cast<int64_t>(tu.size()));
    auto ts = io::read_i64(dir / "train_ts.bin", static_cast<int64_t>(tu.size()));
    std::vector<corpus::Interaction> train_entries(tu.size());
    for (size_t k = 0; k < tu.size(); ++k) train_entries[k] = {tu[k], ti[k], ts[k], 1};
    ds.split.train = corpus::build_matrix(ds.catalog, train_entries);
    ds.split.valid = unpack_pairs(io::read_i64(dir / "valid_pairs.bin"));
    ds.split.test = unpack_pairs(io::read_i64(dir / "test_pairs.bin"));

    auto held_ts = io::read_i64(dir / "heldout_ts.bin",
                                static_cast<int64_t>(ds.split.valid.size() + ds.split.test.size()));
    std::vector<corpus::Interaction> all = train_entries;
    size_t idx = 0;
    for (const auto& [u, i] : ds.split.valid) all.push_back({u, i, held_ts[idx++], 1});
    for (const auto& [u, i] : ds.split.test) all.push_back({u, i, held_ts[idx++], 1});
    ds.full = corpus::build_matrix(ds.catalog, all);
    ds.stats = corpus::dataset_stats(ds.full);

    auto pp = io::read_i64(dir / "prediction_pairs.bin");
    require(pp.size() % 3 == 0, "prediction_pairs.bin has bad length");
    for (size_t k = 0; k < pp.size(); k += 3)
        ds.test_pairs.push_back({pp[k], pp[k + 1], static_cast<int>(pp[k + 2])});
    ds.test_cands = unpack_cands(io::read_i64(dir / "cands_test.bin"), cand_k);
    ds.valid_cands = unpack_cands(io::read_i64(dir / "cands_valid.bin"), cand_k);
    return ds;
}

vocab::MixedVocabulary build_vocabulary(const PreparedDataset& ds, const config::RunConfig& cfg,
                                        bool extend_entities) {
    std::vector<std::string> texts;
    texts.reserve(ds.catalog.items.size() + 2);
    for (const auto& it : ds.catalog.items) {
        texts.push_back(it.title);
        if (!it.description.empty()) texts.push_back(it.description);
    }
    texts.push_back("User has " + cfg.verb_past + " the following " + cfg.noun_plural +
                    " ( ) , . Predict if he/she will " + cfg.verb + " next . Answer :");
    texts.push_back("Predict which 1 " + cfg.noun_singular +
                    " in candidate set will he/she " + cfg.verb + " most probably ? Candidates :");
    auto base = vocab::build_base_vocab(texts, cfg.vocab_min_freq);
    if (extend_entities)
        return vocab::extend_vocab(std::move(base),
                                   static_cast<int64_t>(ds.catalog.users.size()),
                                   static_cast<int64_t>(ds.catalog.items.size()));
    return vocab::extend_vocab(std::move(base), 0, 0);
}

ExampleFactory::ExampleFactory(const PreparedDataset& ds, const vocab::MixedVocabulary& vocab,
                               const config::RunConfig& cfg, vocab::PromptMode mode)
    : ds_(ds), vocab_(vocab), cfg_(cfg), mode_(mode) {
    strings_.noun_plural = cfg.noun_plural;
    strings_.noun_singular = cfg.noun_singular;
    strings_.verb_past = cfg.verb_past;
    strings_.verb = cfg.verb;
}

std::vector<vocab::HistoryItem> ExampleFactory::train_history(int64_t user, int64_t before_ts,
                                                              int64_t before_item) const {
    auto row = ds_.split.train.user_row(user);
    std::vector<corpus::Interaction> sorted(row.begin(), row.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const corpus::Interaction& a, const corpus::Interaction& b) {
                  if (a.ts != b.ts) return a.ts < b.ts;
                  return a.item < b.item;
              });
    std::vector<vocab::HistoryItem> hist;
    for (const auto& e : sorted) {
        if (e.ts < before_ts || (e.ts == before_ts && e.item < before_item))
            hist.push_back({e.item, ds_.catalog.items[e.item].title});
    }
    int64_t cap = cfg_.history_cap;
    if (static_cast<int64_t>(hist.size()) > cap)
        hist.erase(hist.begin(), hist.end() - cap);
    return hist;
}

std::vector<vocab::HistoryItem> ExampleFactory::full_history(int64_t user) const {
    return train_history(user, INT64_MAX, INT64_MAX);
}

std::vector<int64_t> ExampleFactory::encode_prompt(const std::string& text) const {
    return vocab::encode(text, vocab_, cfg_.lm_context - 8);
}

namespace {

// shrink the history until the prompt fits the context window
template <class RenderFn>
std::vector<int64_t> encode_fitting(std::vector<vocab::HistoryItem> hist, const RenderFn& render,
                                    const vocab::MixedVocabulary& vocab, int64_t limit) {
    while (true) {
        require(!hist.empty(), "prompt does not fit the context window even with one history item");
        vocab::RenderedPrompt r = render(hist);
        auto ids = vocab::encode(r.prompt, vocab, -1);
        if (static_cast<int64_t>(ids.size()) <= limit) return ids;
        hist.erase(hist.begin());
    }
}

}  // namespace

std::vector<lm::SftExample> ExampleFactory::training_examples() const {
    std::vector<lm::SftExample> out;
    const auto& train = ds_.split.train;
    int64_t limit = cfg_.lm_context - 8;

    // per-positive uniform negatives
    std::vector<std::pair<int64_t, int64_t>> positives;
    positives.reserve(train.entries.size());
    for (const auto& e : train.entries) positives.emplace_back(e.user, e.item);
    auto negatives = corpus::sample_prediction_negatives(
        train, positives, derive_seed(ds_.seed, "sft-negatives"));

    std::optional<corpus::TextSimilarityIndex> sim;
    Vec pop;
    if (cfg_.include_topk_examples) {
        sim.emplace(ds_.catalog);
        pop = corpus::popularity_weights(train);
    }

    size_t neg_idx = 0;
    // negatives follow the positive order; saturated users produced none
    auto take_negative = [&](int64_t user) -> const corpus::LabeledPair* {
        if (neg_idx < negatives.size() && negatives[neg_idx].user == user)
            return &negatives[neg_idx++];
        return nullptr;
    };
    for (size_t k = 0; k < train.entries.size(); ++k) {
        const auto& e = train.entries[k];
        auto hist = train_history(e.user, e.ts, e.item);
        if (hist.empty()) {
            // the user's earliest interaction has nothing to condition on
            take_negative(e.user);
            continue;
        }
        const std::string& title = ds_.catalog.items[e.item].title;

        lm::SftExample pos;
        pos.user = e.user;
        pos.item = e.item;
        pos.label = 1;
        auto render_pos = [&](const std::vector<vocab::HistoryItem>& h) {
            return vocab::render_interaction_prompt(e.user, h, e.item, title, true, mode_,
                                                    strings_);
        };
        pos.prompt = encode_fitting(hist, render_pos, vocab_, limit);
        pos.answer = vocab::encode(render_pos(hist).answer, vocab_, -1);
        out.push_back(pos);

        if (const corpus::LabeledPair* n = take_negative(e.user)) {
            lm::SftExample neg;
            neg.user = n->user;
            neg.item = n->item;
            neg.label = 0;
            const std::string& ntitle = ds_.catalog.items[n->item].title;
            auto render_neg = [&](const std::vector<vocab::HistoryItem>& h) {
                return vocab::render_interaction_prompt(n->user, h, n->item, ntitle, false, mode_,
                                                        strings_);
            };
            neg.prompt = encode_fitting(hist, render_neg, vocab_, limit);
            neg.answer = vocab::encode("No", vocab_, -1);
            out.push_back(neg);
        }

        if (cfg_.include_topk_examples) {
            auto cs = corpus::build_candidate_set(
                e.user, e.item, train, *sim, pop, cfg_.candidate_mix,
                derive_seed(ds_.seed, "train-candidates", static_cast<uint64_t>(k)),
                cfg_.candidate_size);
            std::vector<int64_t> cand_items = cs.negatives;
            cand_items.push_back(cs.positive);
            Rng order_rng(derive_seed(ds_.seed, "train-candidate-order", static_cast<uint64_t>(k)));
            order_rng.shuffle(cand_items);
            std::vector<vocab::HistoryItem> cands;
            for (int64_t c : cand_items) cands.push_back({c, ds_.catalog.items[c].title});

            lm::SftExample topk;
            topk.user = e.user;
            topk.item = e.item;
            topk.label = 1;
            auto render_topk = [&](const std::vector<vocab::HistoryItem>& h) {
                return vocab::render_topk_prompt(e.user, h, cands, e.item, mode_, strings_);
            };
            topk.prompt = encode_fitting(hist, render_topk, vocab_, limit);
            topk.answer = vocab::encode(render_topk(hist).answer, vocab_, -1);
            out.push_back(topk);
        }
    }
    return out;
}

std::vector<eval::InteractionCase> ExampleFactory::interaction_cases(
    std::span<const corpus::LabeledPair> pairs) const {
    std::vector<eval::InteractionCase> cases;
    cases.reserve(pairs.size());
    int64_t limit = cfg_.lm_context - 8;
    for (const auto& p : pairs) {
        auto hist = full_history(p.user);
        if (hist.empty()) continue;  // users without train history cannot be prompted
        eval::InteractionCase c;
        c.user = p.user;
        c.item = p.item;
        c.label = p.label;
        const std::string& title = ds_.catalog.items[p.item].title;
        auto render = [&](const std::vector<vocab::HistoryItem>& h) {
            return vocab::render_interaction_prompt(p.user, h, p.item, title, p.label == 1, mode_,
                                                    strings_);
        };
        c.prompt = encode_fitting(hist, render, vocab_, limit);
        cases.push_back(std::move(c));
    }
    return cases;
}

std::vector<eval::TopkCase> ExampleFactory::topk_cases(
    std::span<const corpus::CandidateSet> cands) const {
    std::vector<eval::TopkCase> cases;
    cases.reserve(cands.size());
    int64_t limit = cfg_.lm_context - 8;
    for (const auto& cs : cands) {
        auto hist = full_history(cs.user);
        if (hist.empty()) continue;
        eval::TopkCase c;
        c.user = cs.user;
        c.positive = cs.positive;
        c.candidates = cs.negatives;
        c.candidates.push_back(cs.positive);
        uint64_t order_key = static_cast<uint64_t>(cs.user) * 1315423911ULL +
                             static_cast<uint64_t>(cs.positive);
        Rng order_rng(derive_seed(ds_.seed, "candidate-order", order_key));
        order_rng.shuffle(c.candidates);

        std::vector<vocab::HistoryItem> cand_items;
        for (int64_t item : c.candidates) cand_items.push_back({item, ds_.catalog.items[item].title});
        auto render = [&](const std::vector<vocab::HistoryItem>& h) {
            return vocab::render_topk_prompt(cs.user, h, cand_items, cs.positive, mode_, strings_);
        };
        c.topk_prompt = encode_fitting(hist, render, vocab_, limit);

        for (int64_t item : c.candidates) {
            const std::string& title = ds_.catalog.items[item].title;
            auto render_one = [&](const std::vector<vocab::HistoryItem>& h) {
                return vocab::render_interaction_prompt(cs.user, h, item, title, true, mode_,
                                                        strings_);
            };
            c.cand_prompts.push_back(encode_fitting(hist, render_one, vocab_, limit));
            c.cand_answers.push_back(vocab::encode(title, vocab_, -1));
        }
        cases.push_back(std::move(c));
    }
    return cases;
}

Variant variant_from_string(const std::string& s) {
    if (s == "full") return Variant::full;
    if (s == "wo_JL") return Variant::wo_JL;
    if (s == "wo_PE") return Variant::wo_PE;
    if (s == "wo_ET") return Variant::wo_ET;
    fail("unknown ablation variant '" + s + "' (expected full, wo_JL, wo_PE or wo_ET)");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::wo_JL: return "wo_JL";
        case Variant::wo_PE: return "wo_PE";
        case Variant::wo_ET: return "wo_ET";
    }
    return "?";
}

Step1Result run_step1(const PreparedDataset& ds, const config::RunConfig& cfg) {
    drs::Params init = drs::init_drs(drs::kind_from_string(cfg.drs_kind), ds.stats.n_users,
                                     ds.stats.n_items, cfg.drs_d, cfg.seed, cfg.lgcn_layers);
    drs::PretrainConfig pc;
    pc.lr = cfg.drs_lr;
    pc.batch = cfg.drs_batch;
    pc.max_epochs = cfg.drs_epochs;
    pc.patience = cfg.drs_patience;
    pc.seed = cfg.seed;
    auto res = drs::pretrain_drs(ds.split, ds.valid_cands, std::move(init), pc);
    Step1Result out;
    out.params = std::move(res.params);
    out.snapshot = std::move(res.snapshot);
    out.epoch_loss = std::move(res.epoch_loss);
    out.valid_hr1 = std::move(res.valid_hr1);
    return out;
}

namespace {

struct Propagated {
    Mat users, items;
    bool active = false;
    const Mat* user_ptr() const { return active ? &users : nullptr; }
    const Mat* item_ptr() const { return active ? &items : nullptr; }
};

Propagated propagate_if_lgcn(const drs::Params& p, const corpus::InteractionMatrix& train) {
    Propagated out;
    if (p.kind == drs::Kind::lightgcn) {
        auto graph = drs::build_graph(train);
        drs::lgcn_propagate(p.user_emb, p.item_emb, graph, p.lgcn_layers, out.users, out.items);
        out.active = true;
    }
    return out;
}

double topk_hr1(const std::vector<eval::TopkCase>& cases, const eval::TopkRanker& ranker) {
    if (cases.empty()) return 0.0;
    return eval::eval_topk("valid", cases, ranker).hr_at_1;
}

}  // namespace

VariantArtifacts run_variant_training(
    const PreparedDataset& ds, const config::RunConfig& cfg, Variant variant,
    const Step1Result& step1, const std::function<void(const bridge::StepRecord&)>& on_step) {
    VariantArtifacts art;
    art.mode = variant == Variant::wo_ET ? vocab::PromptMode::text_only : vocab::PromptMode::tokens;
    art.vocab = build_vocabulary(ds, cfg, /*extend_entities=*/variant != Variant::wo_ET);

    ExampleFactory factory(ds, art.vocab, cfg, art.mode);
    auto examples = factory.training_examples();
    auto valid_cases = factory.topk_cases(ds.valid_cands);

    lm::Config lmc;
    lmc.n_layers = cfg.lm_layers;
    lmc.n_heads = cfg.lm_heads;
    lmc.d_model = cfg.lm_d;
    lmc.ffn_width = cfg.lm_ffn_width;
    lmc.context_limit = cfg.lm_context;
    lm::Params lm0 = lm::init_lm(lmc, art.vocab, cfg.seed,
                                 /*random_entity_rows=*/variant == Variant::wo_PE);
    if (variant == Variant::full || variant == Variant::wo_JL)
        lm::preload_embeddings(lm0, step1.snapshot);

    drs::Params drs0 = drs::init_drs(drs::kind_from_string(cfg.drs_kind), ds.stats.n_users,
                                     ds.stats.n_items, cfg.drs_d,
                                     derive_seed(cfg.seed, "drs-joint"), cfg.lgcn_layers);

    auto lm_ranker = [&](const lm::Params& p) {
        return art.mode == vocab::PromptMode::tokens ? eval::lm_topk_ranker(p, art.vocab)
                                                     : eval::lm_title_topk_ranker(p);
    };
    auto drs_hr1 = [&](const drs::Params& dp, const lm::Params& lp) {
        Propagated prop = propagate_if_lgcn(dp, ds.split.train);
        return topk_hr1(valid_cases,
                        eval::drs_fused_topk_ranker(dp, lp, prop.user_ptr(), prop.item_ptr()));
    };

    if (variant == Variant::full || variant == Variant::wo_PE) {
        bridge::JointConfig jc;
        jc.gamma = cfg.gamma;
        jc.eta1 = cfg.eta1;
        jc.eta2 = cfg.eta2;
        jc.batch_size = cfg.batch;
        jc.max_epochs = cfg.max_epochs;
        jc.patience = cfg.patience;
        jc.writeback_post_update = cfg.writeback_post_update;
        jc.seed = cfg.seed;
        auto validate = [&](const lm::Params& lp, const drs::Params& dp) {
            bridge::ValidScore v;
            v.hr1_llm = topk_hr1(valid_cases, lm_ranker(lp));
            v.hr1_drs = drs_hr1(dp, lp);
            return v;
        };
        auto res = bridge::train_joint(examples, std::move(lm0), std::move(drs0),
                                       bridge::init_sharing(step1.snapshot), ds.split.train, jc,
                                       validate, on_step);
        if (res.diverged)
            std::cerr << "warning: joint training hit a non-finite loss; keeping the last good "
                         "snapshot\n";
        art.lm = std::move(res.best_lm);
        art.drs = std::move(res.best_drs);
        art.sharing = std::move(res.sharing);
        art.has_sharing = true;
        art.diverged = res.diverged;
        return art;
    }

    // sequential variants: LM first, then the fused DRS against the frozen LM
    bridge::SideConfig lm_sc{cfg.eta1, cfg.batch, cfg.max_epochs, cfg.patience, cfg.seed};
    auto lm_best = bridge::train_lm_only(examples, std::move(lm0), lm_sc, [&](const lm::Params& p) {
        return topk_hr1(valid_cases, lm_ranker(p));
    });
    bridge::SideConfig drs_sc{cfg.eta2, cfg.batch, cfg.max_epochs, cfg.patience,
                              derive_seed(cfg.seed, "drs-stage")};
    auto drs_best = bridge::train_drs_fused(
        examples, std::move(drs0), lm_best, ds.split.train, drs_sc,
        [&](const drs::Params& dp) { return drs_hr1(dp, lm_best); });
    art.lm = std::move(lm_best);
    art.drs = std::move(drs_best);
    return art;
}

std::vector<eval::MetricReport> evaluate_variant(const PreparedDataset& ds,
                                                 const config::RunConfig& cfg,
                                                 const VariantArtifacts& art,
                                                 const std::string& tag_prefix) {
    ExampleFactory factory(ds, art.vocab, cfg, art.mode);
    auto icases = factory.interaction_cases(ds.test_pairs);
    auto tcases = factory.topk_cases(ds.test_cands);
    Propagated prop = propagate_if_lgcn(art.drs, ds.split.train);

    std::vector<eval::MetricReport> reports;
    reports.push_back(eval::eval_interaction_prediction(
        tag_prefix + "-llm", icases, eval::lm_interaction_scorer(art.lm, art.vocab)));
    reports.push_back(eval::eval_topk(
        tag_prefix + "-llm", tcases,
        art.mode == vocab::PromptMode::tokens ? eval::lm_topk_ranker(art.lm, art.vocab)
                                              : eval::lm_title_topk_ranker(art.lm)));
    reports.push_back(eval::eval_interaction_prediction(
        tag_prefix + "-drs", icases,
        eval::drs_fused_interaction_scorer(art.drs, art.lm, prop.user_ptr(), prop.item_ptr())));
    reports.push_back(eval::eval_topk(
        tag_prefix + "-drs", tcases,
        eval::drs_fused_topk_ranker(art.drs, art.lm, prop.user_ptr(), prop.item_ptr())));
    return reports;
}

std::vector<eval::MetricReport> evaluate_drs_only(const PreparedDataset& ds,
                                                  const config::RunConfig& cfg,
                                                  const Step1Result& step1) {
    // prompts are irrelevant to the standalone head; reuse the tokens factory
    vocab::MixedVocabulary v = build_vocabulary(ds, cfg, true);
    ExampleFactory factory(ds, v, cfg, vocab::PromptMode::tokens);
    auto icases = factory.interaction_cases(ds.test_pairs);
    auto tcases = factory.topk_cases(ds.test_cands);
    Propagated prop = propagate_if_lgcn(step1.params, ds.split.train);
    std::vector<eval::MetricReport> reports;
    reports.push_back(eval::eval_interaction_prediction(
        "drs-only", icases,
        eval::drs_standalone_interaction_scorer(step1.params, prop.user_ptr(), prop.item_ptr())));
    reports.push_back(eval::eval_topk(
        "drs-only", tcases,
        eval::drs_standalone_topk_ranker(step1.params, prop.user_ptr(), prop.item_ptr())));
    return reports;
}

double embedding_alignment_mse(const lm::Params& lmp, const drs::Params& drsp) {
    require(lmp.n_users == drsp.n_users && lmp.n_items == drsp.n_items &&
                lmp.cfg.d_model == drsp.d,
            "alignment: table shapes differ");
    int64_t d = drsp.d;
    double total = 0.0;
    for (int64_t u = 0; u < drsp.n_users; ++u) {
        const double* a = lmp.embed.row(lmp.entity_row_user(u));
        const double* b = drsp.user_emb.row(u);
        double acc = 0.0;
        for (int64_t c = 0; c < d; ++c) {
            double v = a[c] - b[c];
            acc += v * v;
        }
        total += acc / static_cast<double>(d);
    }
    for (int64_t i = 0; i < drsp.n_items; ++i) {
        const double* a = lmp.embed.row(lmp.entity_row_item(i));
        const double* b = drsp.item_emb.row(i);
        double acc = 0.0;
        for (int64_t c = 0; c < d; ++c) {
            double v = a[c] - b[c];
            acc += v * v;
        }
        total += acc / static_cast<double>(d);
    }
    return total / static_cast<double>(drsp.n_users + drsp.n_items);
}

// ---- commands ----

namespace {

fs::path dataset_dir_of(const config::RunConfig& cfg) {
    return cfg.dataset_dir.empty() ? fs::path(cfg.out_dir) / "dataset" : fs::path(cfg.dataset_dir);
}

void save_sharing(const fs::path& dir, const bridge::SharingModule& M) {
    fs::create_directories(dir);
    io::json meta;
    meta["arrays"] = {{"users", {{"dtype", "float32"}, {"shape", {M.users.rows, M.users.cols}}}},
                      {"items", {{"dtype", "float32"}, {"shape", {M.items.rows, M.items.cols}}}}};
    io::write_json(dir / "meta.json", meta);
    io::write_mat_f32(dir / "users.bin", M.users);
    io::write_mat_f32(dir / "items.bin", M.items);
}

bridge::SharingModule load_sharing(const fs::path& dir) {
    auto meta = io::read_json(dir / "meta.json");
    auto us = meta.at("arrays").at("users").at("shape").get<std::vector<int64_t>>();
    auto is = meta.at("arrays").at("items").at("shape").get<std::vector<int64_t>>();
    bridge::SharingModule M;
    M.users = io::read_mat_f32(dir / "users.bin", us[0], us[1]);
    M.items = io::read_mat_f32(dir / "items.bin", is[0], is[1]);
    return M;
}

}  // namespace

void cmd_prepare(const config::RunConfig& cfg) {
    require(!cfg.dataset_path.empty(), "prepare: dataset.path is required");
    auto raw = corpus::load_raw(cfg.dataset_path, corpus::format_from_string(cfg.dataset_format));
    PreparedDataset ds = prepare_dataset(raw, cfg);
    fs::path dir = dataset_dir_of(cfg);
    save_dataset(dir, ds, cfg);

    io::json stats = {{"n_users", ds.stats.n_users},
                      {"n_items", ds.stats.n_items},
                      {"n_interactions", ds.stats.n_interactions},
                      {"sparsity", ds.stats.sparsity}};
    io::write_json(dir / "stats.json", stats);
    std::cout << "prepared dataset at " << dir.string() << "\n"
              << "users " << ds.stats.n_users << ", items " << ds.stats.n_items
              << ", interactions " << ds.stats.n_interactions << ", sparsity " << ds.stats.sparsity
              << "\n";
}

void cmd_train_drs(const config::RunConfig& cfg) {
    PreparedDataset ds = load_dataset(dataset_dir_of(cfg));
    Step1Result res = run_step1(ds, cfg);
    fs::path dir = fs::path(cfg.out_dir) / "step1";
    drs::save_checkpoint(dir / "drs0", res.params, cfg.seed, 0);
    drs::save_pretrained(dir / "snapshot", res.snapshot);
    std::ostringstream curve;
    for (size_t e = 0; e < res.epoch_loss.size(); ++e) {
        io::json rec = {{"epoch", e}, {"loss", res.epoch_loss[e]}, {"valid_hr1", res.valid_hr1[e]}};
        curve << rec.dump() << "\n";
    }
    io::write_text(dir / "curve.jsonl", curve.str());
    std::cout << "step-1 pretraining done: " << res.epoch_loss.size() << " epochs, snapshot at "
              << (dir / "snapshot").string() << "\n";
}

void cmd_train_joint(const config::RunConfig& cfg, bool resume) {
    PreparedDataset ds = load_dataset(dataset_dir_of(cfg));
    fs::path step1_dir = fs::path(cfg.out_dir) / "step1";
    require(fs::exists(step1_dir / "snapshot" / "meta.json"),
            "train-joint: no step-1 snapshot at " + (step1_dir / "snapshot").string() +
                " (run train-drs first)");
    Step1Result step1;
    step1.snapshot = drs::load_pretrained(step1_dir / "snapshot");
    step1.params = drs::load_checkpoint(step1_dir / "drs0");

    fs::path dir = fs::path(cfg.out_dir) / "joint";
    fs::create_directories(dir);

    VariantArtifacts art;
    art.mode = vocab::PromptMode::tokens;
    art.vocab = build_vocabulary(ds, cfg, true);
    vocab::save_vocab(fs::path(cfg.out_dir) / "vocab.json", art.vocab);

    ExampleFactory factory(ds, art.vocab, cfg, art.mode);
    auto examples = factory.training_examples();
    auto valid_cases = factory.topk_cases(ds.valid_cands);

    lm::Config lmc;
    lmc.n_layers = cfg.lm_layers;
    lmc.n_heads = cfg.lm_heads;
    lmc.d_model = cfg.lm_d;
    lmc.ffn_width = cfg.lm_ffn_width;
    lmc.context_limit = cfg.lm_context;

    bridge::JointConfig jc;
    jc.gamma = cfg.gamma;
    jc.eta1 = cfg.eta1;
    jc.eta2 = cfg.eta2;
    jc.batch_size = cfg.batch;
    jc.max_epochs = cfg.max_epochs;
    jc.patience = cfg.patience;
    jc.writeback_post_update = cfg.writeback_post_update;
    jc.seed = cfg.seed;

    lm::Params lm0;
    drs::Params drs0;
    bridge::SharingModule M0;
    fs::path state_path = dir / "state.json";
    if (resume && fs::exists(state_path)) {
        auto state = io::read_json(state_path);
        jc.start_epoch = state.at("next_epoch").get<int64_t>();
        jc.initial_best = state.at("best_metric").get<double>();
        lm0 = lm::load_checkpoint(dir / "last_lm");
        drs0 = drs::load_checkpoint(dir / "last_drs");
        M0 = load_sharing(dir / "last_sharing");
        require(lm0.vocab_hash == art.vocab.hash(),
                "train-joint: checkpoint was built against a different vocabulary");
        std::cout << "resuming joint training from epoch " << jc.start_epoch << "\n";
    } else {
        lm0 = lm::init_lm(lmc, art.vocab, cfg.seed, false);
        lm::preload_embeddings(lm0, step1.snapshot);
        drs0 = drs::init_drs(drs::kind_from_string(cfg.drs_kind), ds.stats.n_users,
                             ds.stats.n_items, cfg.drs_d, derive_seed(cfg.seed, "drs-joint"),
                             cfg.lgcn_layers);
        M0 = bridge::init_sharing(step1.snapshot);
    }

    std::ofstream history(dir / "history.jsonl", resume ? std::ios::app : std::ios::trunc);
    require(history.good(), "cannot open history.jsonl for writing");
    auto on_step = [&history](const bridge::StepRecord& rec) {
        io::json j = {{"step", rec.step},
                      {"L_llm", rec.losses.l_llm},
                      {"L_drs", rec.losses.l_drs},
                      {"L_m1", rec.losses.l_m1},
                      {"L_m2", rec.losses.l_m2},
                      {"L", bridge::total_loss(rec.losses.l_llm, rec.losses.l_drs, rec.losses.l_m1,
                                               rec.losses.l_m2, rec.gamma)},
                      {"gamma", rec.gamma}};
        history << j.dump() << "\n";
    };
    auto on_epoch = [&](const bridge::EpochRecord& rec) {
        lm::save_checkpoint(dir / "last_lm", *rec.lmp, cfg.seed, rec.epoch);
        drs::save_checkpoint(dir / "last_drs", *rec.drsp, cfg.seed, rec.epoch);
        save_sharing(dir / "last_sharing", *rec.sharing);
        io::json state = {{"next_epoch", rec.epoch + 1},
                          {"best_metric", rec.best_metric},
                          {"gamma", cfg.gamma}};
        io::write_json(state_path, state);
        history.flush();
    };

    auto lm_ranker = [&](const lm::Params& p) { return eval::lm_topk_ranker(p, art.vocab); };
    auto validate = [&](const lm::Params& lp, const drs::Params& dp) {
        bridge::ValidScore v;
        v.hr1_llm = topk_hr1(valid_cases, lm_ranker(lp));
        Propagated prop = propagate_if_lgcn(dp, ds.split.train);
        v.hr1_drs = topk_hr1(valid_cases, eval::drs_fused_topk_ranker(dp, lp, prop.user_ptr(),
                                                                      prop.item_ptr()));
        return v;
    };

    auto res = bridge::train_joint(examples, std::move(lm0), std::move(drs0), std::move(M0),
                                   ds.split.train, jc, validate, on_step, on_epoch);

    bool keep_previous_best = resume && res.best_epoch < 0 && fs::exists(dir / "lm");
    if (!keep_previous_best) {
        lm::save_checkpoint(dir / "lm", res.best_lm, cfg.seed, res.steps);
        drs::save_checkpoint(dir / "drs", res.best_drs, cfg.seed, res.steps);
    }
    save_sharing(dir / "sharing", res.sharing);
    require(!res.diverged, "joint training aborted on a non-finite loss; last good checkpoints "
                           "are in " + dir.string());
    std::cout << "joint training done: best epoch " << res.best_epoch << ", checkpoints at "
              << dir.string() << "\n";
}

void cmd_eval(const config::RunConfig& cfg, const std::string& model_tag) {
    PreparedDataset ds = load_dataset(dataset_dir_of(cfg));
    fs::path out(cfg.out_dir);
    std::vector<eval::MetricReport> reports;

    bool want = model_tag.empty();
    auto wanted = [&](const std::string& tag) { return want || model_tag == tag; };

    if (fs::exists(out / "joint" / "lm" / "meta.json") &&
        fs::exists(out / "joint" / "drs" / "meta.json")) {
        VariantArtifacts art;
        art.mode = vocab::PromptMode::tokens;
        art.vocab = vocab::load_vocab(out / "vocab.json");
        art.lm = lm::load_checkpoint(out / "joint" / "lm");
        require(art.lm.vocab_hash == art.vocab.hash(),
                "eval: lm checkpoint was built against a different vocabulary");
        art.drs = drs::load_checkpoint(out / "joint" / "drs");
        if (wanted("bdlm-llm") || wanted("bdlm-drs")) {
            auto reps = evaluate_variant(ds, cfg, art, "bdlm");
            for (auto& r : reps)
                if (wanted(r.model_tag)) reports.push_back(r);
        }
    } else if (!model_tag.empty() && model_tag.rfind("bdlm", 0) == 0) {
        fail("eval: missing joint checkpoints under " + (out / "joint").string());
    }

    if (fs::exists(out / "step1" / "drs0" / "meta.json") &&
        (want || model_tag == "drs-only")) {
        Step1Result step1;
        step1.params = drs::load_checkpoint(out / "step1" / "drs0");
        auto reps = evaluate_drs_only(ds, cfg, step1);
        reports.insert(reports.end(), reps.begin(), reps.end());
    }
    require(!reports.empty(), "eval: no model artifacts matching '" + model_tag + "' under " +
                                  out.string());

    fs::create_directories(out / "eval");
    eval::save_reports(out / "eval" / "reports.json", reports);
    eval::save_reports_csv(out / "eval" / "reports.csv", reports);
    std::cout << eval::format_report_table(reports);
}

void cmd_report(const config::RunConfig& cfg) {
    fs::path out(cfg.out_dir);
    bool any = false;
    for (const char* sub : {"eval", "ablate", "sweep"}) {
        fs::path p = out / sub / "reports.json";
        if (fs::exists(p)) {
            any = true;
            std::cout << "== " << sub << " ==\n"
                      << eval::format_report_table(eval::load_reports(p));
        }
    }
    require(any, "report: no reports found under " + out.string());
}

}  // namespace bdlm::pipeline
