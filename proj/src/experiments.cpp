#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

#include "bdlm/error.hpp"
#include "bdlm/io.hpp"
#include "bdlm/metrics_io.hpp"
#include "bdlm/pipeline.hpp"
#include "bdlm/plot.hpp"

// Multi-seed experiment drivers: the ablation table and the gamma sweep.

namespace bdlm::pipeline {

namespace fs = std::filesystem;

namespace {

struct Cell {
    std::string group;  // e.g. "full-llm" or "gamma=0.1-drs"
    uint64_t seed = 0;
    eval::MetricReport report;
};

void save_cells_csv(const fs::path& path, const std::vector<Cell>& cells) {
    std::ostringstream os;
    os << "group,seed,task,n_cases,hr_at_1,hr_at_2,precision,recall,f1\n";
    for (const auto& c : cells) {
        os << c.group << "," << c.seed << "," << c.report.task << "," << c.report.n_cases << ","
           << c.report.hr_at_1 << "," << c.report.hr_at_2 << "," << c.report.precision << ","
           << c.report.recall << "," << c.report.f1 << "\n";
    }
    io::write_text(path, os.str());
}

struct Agg {
    double mean = 0.0;
    double sd = 0.0;
};

Agg aggregate(const std::vector<double>& xs) {
    Agg a;
    if (xs.empty()) return a;
    for (double x : xs) a.mean += x;
    a.mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - a.mean) * (x - a.mean);
    a.sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
    return a;
}

// mean +/- sd per (group, task) over seeds
io::json aggregate_cells(const std::vector<Cell>& cells) {
    std::map<std::pair<std::string, std::string>, std::vector<const eval::MetricReport*>> by_group;
    for (const auto& c : cells) by_group[{c.group, c.report.task}].push_back(&c.report);
    io::json out = io::json::array();
    for (const auto& [key, reps] : by_group) {
        auto collect = [&reps](double eval::MetricReport::* field) {
            std::vector<double> xs;
            for (const auto* r : reps) xs.push_back(r->*field);
            return aggregate(xs);
        };
        Agg hr1 = collect(&eval::MetricReport::hr_at_1);
        Agg hr2 = collect(&eval::MetricReport::hr_at_2);
        Agg prec = collect(&eval::MetricReport::precision);
        Agg rec = collect(&eval::MetricReport::recall);
        Agg f1 = collect(&eval::MetricReport::f1);
        out.push_back({{"group", key.first},
                       {"task", key.second},
                       {"n_seeds", reps.size()},
                       {"hr_at_1", {{"mean", hr1.mean}, {"sd", hr1.sd}}},
                       {"hr_at_2", {{"mean", hr2.mean}, {"sd", hr2.sd}}},
                       {"precision", {{"mean", prec.mean}, {"sd", prec.sd}}},
                       {"recall", {{"mean", rec.mean}, {"sd", rec.sd}}},
                       {"f1", {{"mean", f1.mean}, {"sd", f1.sd}}}});
    }
    return out;
}

double group_task_mean(const std::vector<Cell>& cells, const std::string& group,
                       const std::string& task, double eval::MetricReport::* field) {
    std::vector<double> xs;
    for (const auto& c : cells)
        if (c.group == group && c.report.task == task) xs.push_back(c.report.*field);
    return aggregate(xs).mean;
}

fs::path dataset_dir_of(const config::RunConfig& cfg) {
    return cfg.dataset_dir.empty() ? fs::path(cfg.out_dir) / "dataset" : fs::path(cfg.dataset_dir);
}

}  // namespace

void cmd_ablate(const config::RunConfig& base_cfg) {
    PreparedDataset ds = load_dataset(dataset_dir_of(base_cfg));
    std::vector<Cell> cells;
    std::vector<eval::MetricReport> flat;
    for (uint64_t seed : base_cfg.experiment_seeds) {
        config::RunConfig cfg = base_cfg;
        cfg.seed = seed;
        Step1Result step1 = run_step1(ds, cfg);
        {
            auto reps = evaluate_drs_only(ds, cfg, step1);
            for (auto& r : reps) cells.push_back({"drs-only", seed, r});
        }
        for (const auto& vname : cfg.ablate_variants) {
            Variant v = variant_from_string(vname);
            VariantArtifacts art = run_variant_training(ds, cfg, v, step1);
            auto reps = evaluate_variant(ds, cfg, art, vname);
            for (auto& r : reps) {
                cells.push_back({r.model_tag, seed, r});
                flat.push_back(r);
            }
            std::cerr << "ablate: seed " << seed << " variant " << vname << " done\n";
        }
    }
    fs::path out = fs::path(base_cfg.out_dir) / "ablate";
    fs::create_directories(out);
    save_cells_csv(out / "cells.csv", cells);
    io::write_json(out / "aggregate.json", aggregate_cells(cells));
    eval::save_reports(out / "reports.json", flat);

    // bar chart: HR@1 per variant, one series per side
    std::vector<plot::BarGroup> groups;
    for (const auto& vname : base_cfg.ablate_variants) {
        plot::BarGroup g;
        g.label = vname;
        g.values = {group_task_mean(cells, vname + "-llm", "topk", &eval::MetricReport::hr_at_1),
                    group_task_mean(cells, vname + "-drs", "topk", &eval::MetricReport::hr_at_1)};
        groups.push_back(std::move(g));
    }
    plot::write_bar_chart(out / "ablation.svg", "Ablations (HR@1, mean over seeds)", "HR@1",
                          {"llm side", "drs side"}, groups);
    std::cout << "ablation finished; results under " << out.string() << "\n";
}

void cmd_sweep(const config::RunConfig& base_cfg) {
    PreparedDataset ds = load_dataset(dataset_dir_of(base_cfg));
    std::vector<Cell> cells;
    std::vector<eval::MetricReport> flat;
    for (uint64_t seed : base_cfg.experiment_seeds) {
        config::RunConfig cfg = base_cfg;
        cfg.seed = seed;
        Step1Result step1 = run_step1(ds, cfg);
        for (double gamma : base_cfg.sweep_gammas) {
            cfg.gamma = gamma;
            std::ostringstream tag;
            tag << "gamma=" << gamma;
            VariantArtifacts art = run_variant_training(ds, cfg, Variant::full, step1);
            auto reps = evaluate_variant(ds, cfg, art, tag.str());
            for (auto& r : reps) {
                cells.push_back({r.model_tag, seed, r});
                flat.push_back(r);
            }
            std::cerr << "sweep: seed " << seed << " gamma " << gamma << " done\n";
        }
    }
    fs::path out = fs::path(base_cfg.out_dir) / "sweep";
    fs::create_directories(out);
    save_cells_csv(out / "cells.csv", cells);
    io::write_json(out / "aggregate.json", aggregate_cells(cells));
    eval::save_reports(out / "reports.json", flat);

    std::vector<plot::Series> series(2);
    series[0].name = "llm side";
    series[1].name = "drs side";
    for (double gamma : base_cfg.sweep_gammas) {
        std::ostringstream tag;
        tag << "gamma=" << gamma;
        series[0].x.push_back(gamma);
        series[0].y.push_back(
            group_task_mean(cells, tag.str() + "-llm", "topk", &eval::MetricReport::hr_at_1));
        series[1].x.push_back(gamma);
        series[1].y.push_back(
            group_task_mean(cells, tag.str() + "-drs", "topk", &eval::MetricReport::hr_at_1));
    }
    plot::write_line_chart(out / "sweep.svg", "Trade-off parameter sweep (HR@1)", "gamma", "HR@1",
                           series, /*log_x=*/true);
    std::cout << "gamma sweep finished; results under " << out.string() << "\n";
}

}  // namespace bdlm::pipeline
