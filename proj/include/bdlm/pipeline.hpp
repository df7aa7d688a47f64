#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bdlm/bridge.hpp"
#include "bdlm/config.hpp"
#include "bdlm/corpus.hpp"
#include "bdlm/drs.hpp"
#include "bdlm/eval.hpp"
#include "bdlm/lm.hpp"
#include "bdlm/vocab.hpp"

namespace bdlm::pipeline {

// Everything the trainers and evaluators consume, built once per dataset
// seed and persisted by `prepare`.
struct PreparedDataset {
    corpus::Catalog catalog;
    corpus::SplitBundle split;
    corpus::InteractionMatrix full;
    std::vector<corpus::LabeledPair> test_pairs;  // balanced positives + negatives
    std::vector<corpus::CandidateSet> test_cands;
    std::vector<corpus::CandidateSet> valid_cands;
    corpus::DatasetStats stats;
    uint64_t seed = 0;
};

PreparedDataset prepare_dataset(const corpus::RawData& raw, const config::RunConfig& cfg);
void save_dataset(const std::filesystem::path& dir, const PreparedDataset& ds,
                  const config::RunConfig& cfg);
PreparedDataset load_dataset(const std::filesystem::path& dir);

// Base vocabulary from item texts plus template wording; optionally extended
// with entity tokens.
vocab::MixedVocabulary build_vocabulary(const PreparedDataset& ds, const config::RunConfig& cfg,
                                        bool extend_entities);

// Single source of prompts for training and evaluation. Histories come from
// the train split; training histories stop before the target interaction.
class ExampleFactory {
  public:
    ExampleFactory(const PreparedDataset& ds, const vocab::MixedVocabulary& vocab,
                   const config::RunConfig& cfg, vocab::PromptMode mode);

    // Per train positive with nonempty earlier history: an interaction
    // example (answer Yes), a sampled negative (answer No), and optionally a
    // candidate-ranking example answered by the positive's token/title.
    std::vector<lm::SftExample> training_examples() const;

    std::vector<eval::InteractionCase> interaction_cases(
        std::span<const corpus::LabeledPair> pairs) const;
    std::vector<eval::TopkCase> topk_cases(std::span<const corpus::CandidateSet> cands) const;

    vocab::PromptMode mode() const { return mode_; }

  private:
    std::vector<vocab::HistoryItem> train_history(int64_t user, int64_t before_ts,
                                                  int64_t before_item) const;
    std::vector<vocab::HistoryItem> full_history(int64_t user) const;
    std::vector<int64_t> encode_prompt(const std::string& text) const;

    const PreparedDataset& ds_;
    const vocab::MixedVocabulary& vocab_;
    const config::RunConfig& cfg_;
    vocab::PromptMode mode_;
    vocab::PromptStrings strings_;
};

enum class Variant { full, wo_JL, wo_PE, wo_ET };
Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct Step1Result {
    drs::Params params;
    drs::Pretrained snapshot;
    std::vector<double> epoch_loss;
    std::vector<double> valid_hr1;
};

// Algorithm step 1: standalone DRS pretraining.
Step1Result run_step1(const PreparedDataset& ds, const config::RunConfig& cfg);

struct VariantArtifacts {
    vocab::MixedVocabulary vocab;
    lm::Params lm;
    drs::Params drs;
    bridge::SharingModule sharing;
    bool has_sharing = false;
    bool diverged = false;
    vocab::PromptMode mode = vocab::PromptMode::tokens;
};

// Steps 2-3 under the given ablation variant (full = extend + preload +
// joint loop).
VariantArtifacts run_variant_training(
    const PreparedDataset& ds, const config::RunConfig& cfg, Variant variant,
    const Step1Result& step1,
    const std::function<void(const bridge::StepRecord&)>& on_step = {});

// Both tasks for both sides of a trained variant; tags are
// "<prefix>-llm" / "<prefix>-drs".
std::vector<eval::MetricReport> evaluate_variant(const PreparedDataset& ds,
                                                 const config::RunConfig& cfg,
                                                 const VariantArtifacts& art,
                                                 const std::string& tag_prefix);

// The step-1 model alone through its standalone head (tag "drs-only").
std::vector<eval::MetricReport> evaluate_drs_only(const PreparedDataset& ds,
                                                  const config::RunConfig& cfg,
                                                  const Step1Result& step1);

// Mean squared distance between the two sides' entity embedding tables,
// averaged over all users and items (the alignment measurement).
double embedding_alignment_mse(const lm::Params& lmp, const drs::Params& drsp);

// ---- filesystem commands backing the CLI ----

void cmd_prepare(const config::RunConfig& cfg);
void cmd_train_drs(const config::RunConfig& cfg);
void cmd_train_joint(const config::RunConfig& cfg, bool resume = false);
void cmd_eval(const config::RunConfig& cfg, const std::string& model_tag = "");
void cmd_ablate(const config::RunConfig& cfg);
void cmd_sweep(const config::RunConfig& cfg);
void cmd_report(const config::RunConfig& cfg);

}  // namespace bdlm::pipeline
