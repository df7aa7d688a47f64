#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace bdlm::config {

// Run configuration. File format is "key = value" lines with '#' comments;
// keys are validated against the schema in config.cpp and CLI --set
// overrides win over file values. The full key list is documented in the
// README.
struct RunConfig {
    uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir = "runs/out";

    // dataset
    std::string dataset_path;
    std::string dataset_format = "tsv";
    int64_t min_user = 5;
    int64_t min_item = 5;
    std::string dataset_dir;  // processed dataset directory

    // drs
    std::string drs_kind = "lightgcn";
    int64_t drs_d = 64;
    int64_t lgcn_layers = 2;

    // lm
    int64_t lm_d = 64;
    int64_t lm_layers = 4;
    int64_t lm_heads = 4;
    int64_t lm_ffn_width = 0;  // 0 -> 4 * d
    int64_t lm_context = 256;
    int64_t vocab_min_freq = 1;

    // training
    double gamma = 0.1;
    double eta1 = 1e-4;
    double eta2 = 1e-4;
    int64_t batch = 16;
    int64_t max_epochs = 50;
    int64_t patience = 3;
    bool writeback_post_update = false;
    bool include_topk_examples = true;
    double drs_lr = 1e-3;
    int64_t drs_batch = 256;
    int64_t drs_epochs = 50;
    int64_t drs_patience = 3;

    // eval
    double candidate_mix = 0.5;
    int64_t candidate_size = 20;
    int64_t history_cap = 10;
    int64_t valid_cases_cap = 0;  // 0 = all

    // prompt wording
    std::string noun_plural = "movies";
    std::string noun_singular = "movie";
    std::string verb_past = "watched";
    std::string verb = "watch";

    // experiments
    std::vector<double> sweep_gammas = {0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0};
    std::vector<std::string> ablate_variants = {"full", "wo_JL", "wo_PE", "wo_ET"};
    std::vector<uint64_t> experiment_seeds = {1, 2, 3, 4, 5};
};

RunConfig load_config(const std::filesystem::path& path);
// "key=value" override, same schema as the file
void apply_override(RunConfig& cfg, const std::string& assignment);
// cross-field checks (seed mandatory, drs.d == lm.d, ranges)
void validate(const RunConfig& cfg);
// environment overrides: BDLM_OUTPUT_DIR and BDLM_THREADS
void apply_env(RunConfig& cfg);

std::string documented_keys();

}  // namespace bdlm::config
