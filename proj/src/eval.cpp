#include "bdlm/eval.hpp"

#include <algorithm>
#include <cmath>

#include "bdlm/error.hpp"

namespace bdlm::eval {

double hit_rate_at_k(const std::vector<RankedCase>& cases, int64_t k) {
    require(k >= 1, "hit_rate_at_k: k must be at least 1");
    if (cases.empty()) return 0.0;
    int64_t hits = 0;
    for (const auto& c : cases) {
        require(k <= static_cast<int64_t>(c.ranking.size()),
                "hit_rate_at_k: k exceeds ranking length");
        for (int64_t r = 0; r < k; ++r) {
            if (c.ranking[r] == c.positive) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(cases.size());
}

Prf precision_recall_f1(const std::vector<int>& predictions, const std::vector<int>& labels) {
    require(predictions.size() == labels.size(), "precision_recall_f1: length mismatch");
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] && labels[i]) ++tp;
        if (predictions[i] && !labels[i]) ++fp;
        if (!predictions[i] && labels[i]) ++fn;
    }
    Prf out;
    if (tp + fp > 0) {
        out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    } else {
        out.degenerate = true;
    }
    if (tp + fn > 0) {
        out.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    } else {
        out.degenerate = true;
    }
    if (out.precision + out.recall > 0.0) {
        out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
    } else {
        out.degenerate = true;
    }
    return out;
}

MetricReport eval_interaction_prediction(const std::string& model_tag,
                                         const std::vector<InteractionCase>& cases,
                                         const InteractionScorer& scorer) {
    require(!cases.empty(), "eval_interaction_prediction: no cases");
    int64_t n = static_cast<int64_t>(cases.size());
    std::vector<int> preds(cases.size()), labels(cases.size());
#pragma omp parallel for schedule(static)
    for (int64_t k = 0; k < n; ++k) {
        double score = scorer(cases[k]);
        preds[k] = score >= 0.5 ? 1 : 0;
        labels[k] = cases[k].label;
    }
    Prf prf = precision_recall_f1(preds, labels);
    MetricReport rep;
    rep.model_tag = model_tag;
    rep.task = "interaction";
    rep.n_cases = n;
    rep.precision = prf.precision;
    rep.recall = prf.recall;
    rep.f1 = prf.f1;
    rep.degenerate = prf.degenerate;
    return rep;
}

MetricReport eval_topk(const std::string& model_tag, const std::vector<TopkCase>& cases,
                       const TopkRanker& ranker) {
    require(!cases.empty(), "eval_topk: no cases");
    int64_t n = static_cast<int64_t>(cases.size());
    std::vector<RankedCase> ranked(cases.size());
#pragma omp parallel for schedule(dynamic)
    for (int64_t k = 0; k < n; ++k) {
        ranked[k].ranking = ranker(cases[k]);
        ranked[k].positive = cases[k].positive;
    }
    MetricReport rep;
    rep.model_tag = model_tag;
    rep.task = "topk";
    rep.n_cases = n;
    rep.hr_at_1 = hit_rate_at_k(ranked, 1);
    rep.hr_at_2 = hit_rate_at_k(ranked, 2);
    return rep;
}

InteractionScorer lm_interaction_scorer(const lm::Params& p, const vocab::MixedVocabulary& v) {
    return [&p, &v](const InteractionCase& c) { return lm::predict_interaction(c.prompt, p, v); };
}

InteractionScorer drs_fused_interaction_scorer(const drs::Params& dp, const lm::Params& lp,
                                               const Mat* user_prop, const Mat* item_prop) {
    return [&dp, &lp, user_prop, item_prop](const InteractionCase& c) {
        Vec e_c = lm::top_feature(c.prompt, lp);
        Vec feat = drs::drs_feature(dp, c.user, c.item, user_prop, item_prop);
        return drs::fused_predict(dp, e_c, feat);
    };
}

InteractionScorer drs_standalone_interaction_scorer(const drs::Params& dp, const Mat* user_prop,
                                                    const Mat* item_prop) {
    return [&dp, user_prop, item_prop](const InteractionCase& c) {
        drs::StandaloneCache cache;
        return drs::standalone_forward(dp, c.user, c.item, cache, user_prop, item_prop);
    };
}

TopkRanker lm_topk_ranker(const lm::Params& p, const vocab::MixedVocabulary& v) {
    return [&p, &v](const TopkCase& c) {
        return lm::rank_candidates(c.topk_prompt, c.candidates, p, v);
    };
}

namespace {

std::vector<int64_t> rank_by_scores(const std::vector<int64_t>& candidates,
                                    const std::vector<double>& scores) {
    std::vector<std::pair<double, int64_t>> scored;
    scored.reserve(candidates.size());
    for (size_t k = 0; k < candidates.size(); ++k) scored.emplace_back(scores[k], candidates[k]);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<int64_t> out;
    out.reserve(scored.size());
    for (auto& [_, item] : scored) out.push_back(item);
    return out;
}

}  // namespace

TopkRanker lm_title_topk_ranker(const lm::Params& p) {
    return [&p](const TopkCase& c) {
        require(c.cand_answers.size() == c.candidates.size(),
                "title ranking needs encoded candidate titles");
        std::vector<double> scores(c.candidates.size());
        for (size_t k = 0; k < c.candidates.size(); ++k) {
            double lp = lm::answer_logprob(c.topk_prompt, c.cand_answers[k], p);
            scores[k] = lp / static_cast<double>(c.cand_answers[k].size());
        }
        return rank_by_scores(c.candidates, scores);
    };
}

TopkRanker drs_fused_topk_ranker(const drs::Params& dp, const lm::Params& lp, const Mat* user_prop,
                                 const Mat* item_prop) {
    return [&dp, &lp, user_prop, item_prop](const TopkCase& c) {
        require(c.cand_prompts.size() == c.candidates.size(),
                "fused ranking needs per-candidate prompts");
        std::vector<double> scores(c.candidates.size());
        for (size_t k = 0; k < c.candidates.size(); ++k) {
            Vec e_c = lm::top_feature(c.cand_prompts[k], lp);
            Vec feat = drs::drs_feature(dp, c.user, c.candidates[k], user_prop, item_prop);
            scores[k] = drs::fused_predict(dp, e_c, feat);
        }
        return rank_by_scores(c.candidates, scores);
    };
}

TopkRanker drs_standalone_topk_ranker(const drs::Params& dp, const Mat* user_prop,
                                      const Mat* item_prop) {
    return [&dp, user_prop, item_prop](const TopkCase& c) {
        std::vector<double> scores(c.candidates.size());
        drs::StandaloneCache cache;
        for (size_t k = 0; k < c.candidates.size(); ++k)
            scores[k] = drs::standalone_forward(dp, c.user, c.candidates[k], cache, user_prop,
                                                item_prop);
        return rank_by_scores(c.candidates, scores);
    };
}

}  // namespace bdlm::eval
