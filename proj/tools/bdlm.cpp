#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bdlm/config.hpp"
#include "bdlm/error.hpp"
#include "bdlm/pipeline.hpp"

using bdlm::config::RunConfig;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    int64_t seed = -1;
    bool seed_given = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "config file (key = value lines)");
    cmd->add_option("--set", opts.overrides, "override a config key, e.g. --set train.gamma=0.1")
        ->take_all();
    cmd->add_option("-o,--out", opts.out_dir, "output directory (overrides out_dir)");
    cmd->add_option("--seed", opts.seed, "run seed (overrides seed)");
}

RunConfig resolve(const CommonOpts& opts) {
    RunConfig cfg;
    if (!opts.config_path.empty()) cfg = bdlm::config::load_config(opts.config_path);
    for (const auto& o : opts.overrides) bdlm::config::apply_override(cfg, o);
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    if (opts.seed >= 0) {
        cfg.seed = static_cast<uint64_t>(opts.seed);
        cfg.seed_set = true;
    }
    bdlm::config::apply_env(cfg);
    bdlm::config::validate(cfg);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BDLM: joint training of a small LM and an embedding recommender"};
    app.require_subcommand(1);

    CommonOpts prepare_o, train_drs_o, train_joint_o, eval_o, ablate_o, sweep_o, report_o;
    bool resume = false;
    std::string model_tag;

    auto* prepare = app.add_subcommand("prepare", "ingest raw data into a dataset directory");
    add_common(prepare, prepare_o);
    auto* train_drs = app.add_subcommand("train-drs", "step 1: pretrain the domain recommender");
    add_common(train_drs, train_drs_o);
    auto* train_joint = app.add_subcommand("train-joint", "steps 2-3: preload and joint training");
    add_common(train_joint, train_joint_o);
    train_joint->add_flag("--resume", resume, "continue from the last epoch checkpoint");
    auto* eval_cmd = app.add_subcommand("eval", "evaluate trained checkpoints on both tasks");
    add_common(eval_cmd, eval_o);
    eval_cmd->add_option("--model-tag", model_tag,
                         "restrict to one tag (bdlm-llm, bdlm-drs, drs-only)");
    auto* ablate = app.add_subcommand("ablate", "run the ablation variants over seeds");
    add_common(ablate, ablate_o);
    auto* sweep = app.add_subcommand("sweep", "sweep the trade-off parameter gamma over seeds");
    add_common(sweep, sweep_o);
    auto* report = app.add_subcommand("report", "print tables for existing reports");
    add_common(report, report_o);

    CLI11_PARSE(app, argc, argv);

    try {
        if (prepare->parsed()) bdlm::pipeline::cmd_prepare(resolve(prepare_o));
        if (train_drs->parsed()) bdlm::pipeline::cmd_train_drs(resolve(train_drs_o));
        if (train_joint->parsed()) bdlm::pipeline::cmd_train_joint(resolve(train_joint_o), resume);
        if (eval_cmd->parsed()) bdlm::pipeline::cmd_eval(resolve(eval_o), model_tag);
        if (ablate->parsed()) bdlm::pipeline::cmd_ablate(resolve(ablate_o));
        if (sweep->parsed()) bdlm::pipeline::cmd_sweep(resolve(sweep_o));
        if (report->parsed()) bdlm::pipeline::cmd_report(resolve(report_o));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
