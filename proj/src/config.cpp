#include "bdlm/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "bdlm/error.hpp"

namespace bdlm::config {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int64_t to_i64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        int64_t x = std::stoll(v, &used);
        require(used == v.size(), "");
        return x;
    } catch (...) {
        fail("config key '" + key + "' expects an integer, got '" + v + "'");
    }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        uint64_t x = std::stoull(v, &used);
        require(used == v.size(), "");
        return x;
    } catch (...) {
        fail("config key '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
}

double to_f64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        double x = std::stod(v, &used);
        require(used == v.size(), "");
        return x;
    } catch (...) {
        fail("config key '" + key + "' expects a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail("config key '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (!part.empty()) out.push_back(part);
    }
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& schema() {
    static const std::map<std::string, Setter> s = {
        {"seed",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.seed = to_u64(k, v);
             c.seed_set = true;
         }},
        {"out_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},
        {"dataset.path",
         [](RunConfig& c, const std::string&, const std::string& v) { c.dataset_path = v; }},
        {"dataset.format",
         [](RunConfig& c, const std::string&, const std::string& v) { c.dataset_format = v; }},
        {"dataset.min_user",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.min_user = to_i64(k, v); }},
        {"dataset.min_item",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.min_item = to_i64(k, v); }},
        {"dataset.dir",
         [](RunConfig& c, const std::string&, const std::string& v) { c.dataset_dir = v; }},
        {"drs.kind",
         [](RunConfig& c, const std::string&, const std::string& v) { c.drs_kind = v; }},
        {"drs.d",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.drs_d = to_i64(k, v); }},
        {"drs.lgcn_layers",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.lgcn_layers = to_i64(k, v);
         }},
        {"lm.d",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.lm_d = to_i64(k, v); }},
        {"lm.layers",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.lm_layers = to_i64(k, v); }},
        {"lm.heads",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.lm_heads = to_i64(k, v); }},
        {"lm.ffn_width",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.lm_ffn_width = to_i64(k, v);
         }},
        {"lm.context",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.lm_context = to_i64(k, v); }},
        {"vocab.min_freq",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.vocab_min_freq = to_i64(k, v);
         }},
        {"train.gamma",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.gamma = to_f64(k, v); }},
        {"train.eta1",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.eta1 = to_f64(k, v); }},
        {"train.eta2",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.eta2 = to_f64(k, v); }},
        {"train.batch",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.batch = to_i64(k, v); }},
        {"train.max_epochs",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.max_epochs = to_i64(k, v);
         }},
        {"train.patience",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.patience = to_i64(k, v); }},
        {"train.writeback_post_update",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.writeback_post_update = to_bool(k, v);
         }},
        {"train.include_topk_examples",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.include_topk_examples = to_bool(k, v);
         }},
        {"train.drs_lr",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.drs_lr = to_f64(k, v); }},
        {"train.drs_batch",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.drs_batch = to_i64(k, v); }},
        {"train.drs_epochs",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.drs_epochs = to_i64(k, v);
         }},
        {"train.drs_patience",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.drs_patience = to_i64(k, v);
         }},
        {"eval.candidate_mix",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.candidate_mix = to_f64(k, v);
         }},
        {"eval.candidate_size",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.candidate_size = to_i64(k, v);
         }},
        {"eval.history_cap",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.history_cap = to_i64(k, v);
         }},
        {"eval.valid_cases_cap",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.valid_cases_cap = to_i64(k, v);
         }},
        {"prompt.noun_plural",
         [](RunConfig& c, const std::string&, const std::string& v) { c.noun_plural = v; }},
        {"prompt.noun_singular",
         [](RunConfig& c, const std::string&, const std::string& v) { c.noun_singular = v; }},
        {"prompt.verb_past",
         [](RunConfig& c, const std::string&, const std::string& v) { c.verb_past = v; }},
        {"prompt.verb",
         [](RunConfig& c, const std::string&, const std::string& v) { c.verb = v; }},
        {"sweep.gammas",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.sweep_gammas.clear();
             for (auto& p : split_list(v)) c.sweep_gammas.push_back(to_f64(k, p));
         }},
        {"ablate.variants",
         [](RunConfig& c, const std::string&, const std::string& v) {
             c.ablate_variants = split_list(v);
         }},
        {"experiment.seeds",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.experiment_seeds.clear();
             for (auto& p : split_list(v)) c.experiment_seeds.push_back(to_u64(k, p));
         }},
    };
    return s;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    auto it = schema().find(key);
    require(it != schema().end(), "unknown config key '" + key + "'");
    it->second(cfg, key, value);
}

}  // namespace

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open config file: " + path.string());
    RunConfig cfg;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        require(eq != std::string::npos, "config line " + std::to_string(line_no) +
                                             " is not 'key = value': " + line);
        set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    auto eq = assignment.find('=');
    require(eq != std::string::npos, "override must be key=value: " + assignment);
    set_key(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void validate(const RunConfig& cfg) {
    require(cfg.seed_set, "config: 'seed' is mandatory");
    require(cfg.drs_d == cfg.lm_d,
            "config: drs.d (" + std::to_string(cfg.drs_d) + ") must equal lm.d (" +
                std::to_string(cfg.lm_d) + "); preloading and the mutual loss require one width");
    require(cfg.lm_d > 0 && cfg.lm_heads > 0 && cfg.lm_d % cfg.lm_heads == 0,
            "config: lm.d must be divisible by lm.heads");
    require(cfg.gamma >= 0.0, "config: train.gamma must be >= 0");
    require(cfg.eta1 > 0.0 && cfg.eta2 > 0.0 && cfg.drs_lr > 0.0,
            "config: learning rates must be positive");
    require(cfg.batch > 0 && cfg.max_epochs > 0 && cfg.patience >= 0, "config: bad training spec");
    require(cfg.candidate_mix >= 0.0 && cfg.candidate_mix <= 1.0,
            "config: eval.candidate_mix must be in [0,1]");
    require(cfg.candidate_size >= 2, "config: eval.candidate_size must be at least 2");
    require(cfg.history_cap >= 1, "config: eval.history_cap must be at least 1");
    require(cfg.min_user >= 0 && cfg.min_item >= 0, "config: negative filter threshold");
}

void apply_env(RunConfig& cfg) {
    if (const char* dir = std::getenv("BDLM_OUTPUT_DIR")) cfg.out_dir = dir;
    if (const char* threads = std::getenv("BDLM_THREADS")) {
#ifdef _OPENMP
        omp_set_num_threads(static_cast<int>(to_i64("BDLM_THREADS", threads)));
#else
        (void)threads;
#endif
    }
}

std::string documented_keys() {
    std::string out;
    for (const auto& [k, _] : schema()) out += k + "\n";
    return out;
}

}  // namespace bdlm::config
