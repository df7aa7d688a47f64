#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bdlm/corpus.hpp"
#include "bdlm/drs.hpp"
#include "bdlm/lm.hpp"
#include "bdlm/vocab.hpp"

namespace bdlm::eval {

struct MetricReport {
    double hr_at_1 = 0.0, hr_at_2 = 0.0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    int64_t n_cases = 0;
    std::string model_tag;
    std::string task;  // "interaction" or "topk"
    bool degenerate = false;  // some precision/recall denominator was zero
};

struct RankedCase {
    std::vector<int64_t> ranking;  // permutation of the candidate set
    int64_t positive = 0;
};

double hit_rate_at_k(const std::vector<RankedCase>& cases, int64_t k);

struct Prf {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    bool degenerate = false;
};

Prf precision_recall_f1(const std::vector<int>& predictions, const std::vector<int>& labels);

// ---- task harnesses ----

// A prepared binary-classification case: prompt already rendered/encoded.
struct InteractionCase {
    int64_t user = 0, item = 0;
    int label = 0;
    std::vector<int64_t> prompt;
};

// A prepared ranking case: candidate order fixed up front, token-mode topk
// prompt plus one interaction prompt per candidate for feature extraction.
struct TopkCase {
    int64_t user = 0, positive = 0;
    std::vector<int64_t> candidates;          // in prompt order
    std::vector<int64_t> topk_prompt;         // token or text_only mode
    std::vector<std::vector<int64_t>> cand_prompts;   // interaction prompt per candidate
    std::vector<std::vector<int64_t>> cand_answers;   // encoded candidate titles (text_only ranking)
};

using InteractionScorer = std::function<double(const InteractionCase&)>;
using TopkRanker = std::function<std::vector<int64_t>(const TopkCase&)>;

// Threshold 0.5 on the scorer output; fills precision/recall/f1.
MetricReport eval_interaction_prediction(const std::string& model_tag,
                                         const std::vector<InteractionCase>& cases,
                                         const InteractionScorer& scorer);

// Fills hr@1 / hr@2 from the ranker output.
MetricReport eval_topk(const std::string& model_tag, const std::vector<TopkCase>& cases,
                       const TopkRanker& ranker);

// ---- standard scorers ----

InteractionScorer lm_interaction_scorer(const lm::Params& p, const vocab::MixedVocabulary& v);
InteractionScorer drs_fused_interaction_scorer(const drs::Params& dp, const lm::Params& lp,
                                               const Mat* user_prop, const Mat* item_prop);
InteractionScorer drs_standalone_interaction_scorer(const drs::Params& dp, const Mat* user_prop,
                                                    const Mat* item_prop);

TopkRanker lm_topk_ranker(const lm::Params& p, const vocab::MixedVocabulary& v);
// Length-normalized title log-probability; used when entity tokens are
// unavailable (text-only ablation).
TopkRanker lm_title_topk_ranker(const lm::Params& p);
// Ranks by the fused head's score, one interaction prompt per candidate.
TopkRanker drs_fused_topk_ranker(const drs::Params& dp, const lm::Params& lp, const Mat* user_prop,
                                 const Mat* item_prop);
TopkRanker drs_standalone_topk_ranker(const drs::Params& dp, const Mat* user_prop,
                                      const Mat* item_prop);

}  // namespace bdlm::eval
