#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "icda/config.hpp"
#include "icda/diagnostics.hpp"
#include "icda/harness.hpp"
#include "icda/verify.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::string method;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "configuration file (sectioned key = value)");
    cmd->add_option("--seed", o.seed, "single seed replacing the configured seed list");
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--method", o.method, "loss method: ce|la|isda|risda|icda|meta_icda");
    cmd->add_option("--override", o.overrides, "section.key=value, repeatable");
}

icda::ExperimentConfig make_config(const CommonOpts& o, const CLI::App* cmd) {
    icda::ExperimentConfig cfg =
        o.config_path.empty() ? icda::ExperimentConfig{} : icda::load_config(o.config_path);
    if (!o.method.empty()) cfg.train.method = o.method;
    for (const auto& ov : o.overrides) icda::apply_override(cfg, ov);
    if (cmd->count("--seed") > 0) cfg.seeds = {o.seed};
    if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
    icda::validate_config(cfg);
    return cfg;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << content;
}

int cmd_train(const CommonOpts& o, const CLI::App* cmd) {
    icda::ExperimentConfig cfg = make_config(o, cmd);
    icda::AggregateResult agg = icda::run_experiment(cfg);
    std::cout << "method " << cfg.train.method << " over " << cfg.seeds.size() << " seed(s)\n";
    std::cout << "  accuracy        " << agg.mean.accuracy << " +/- " << agg.stddev.accuracy
              << "\n";
    std::cout << "  tail accuracy   " << agg.mean.tail_accuracy << " +/- "
              << agg.stddev.tail_accuracy << "\n";
    std::cout << "  worst group     " << agg.mean.worst_group << " +/- "
              << agg.stddev.worst_group << "\n";
    std::cout << "  test loss       " << agg.mean.test_loss << " +/- " << agg.stddev.test_loss
              << "\n";
    std::cout << "artifacts in " << cfg.out_dir << "\n";
    return 0;
}

int cmd_verify(const std::string& suite, std::uint64_t seed, const std::string& out_dir) {
    icda::VerifyOptions opt;
    opt.seed = seed;
    std::vector<icda::SuiteResult> results = icda::run_verify(suite, opt);
    const std::string json = icda::verify_json(results);
    for (const auto& r : results)
        std::cout << (r.failures == 0 ? "[PASS] " : "[FAIL] ") << r.suite << ": " << r.checks
                  << " checks, " << r.failures << " failures, worst " << r.worst_error
                  << " (tolerance " << r.tolerance << ")\n";
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_text(out_dir + "/verify.json", json);
        std::cout << "report in " << out_dir << "/verify.json\n";
    } else {
        std::cout << json;
    }
    return icda::all_passed(results) ? 0 : 1;
}

int cmd_sweep(const CommonOpts& o, const CLI::App* cmd, const std::vector<std::string>& grids) {
    icda::ExperimentConfig cfg = make_config(o, cmd);
    std::vector<icda::SweepAxis> axes;
    for (const auto& g : grids) axes.push_back(icda::parse_sweep_axis(g));
    const std::string csv = icda::run_sweep(cfg, axes, cfg.out_dir);
    std::size_t rows = 0;
    for (char c : csv)
        if (c == '\n') ++rows;
    std::cout << "sweep wrote " << (rows > 0 ? rows - 1 : 0) << " cells to " << cfg.out_dir
              << "/sweep.csv\n";
    return 0;
}

int cmd_diag(const CommonOpts& o, const CLI::App* cmd) {
    icda::ExperimentConfig cfg = make_config(o, cmd);
    const std::uint64_t seed = cfg.seeds.front();
    icda::BuiltSplits splits = icda::build_splits(cfg, seed);
    icda::TrainReport rep = icda::run_single(cfg, seed);

    std::filesystem::create_directories(cfg.out_dir);
    write_text(cfg.out_dir + "/diagnostics.json", icda::diagnostics_json(cfg, rep, splits));

    icda::ForwardCache test_cache = icda::forward(rep.backbone, rep.head, splits.test.features);
    icda::MarginHistogram margins =
        icda::margin_distribution(test_cache.logits, splits.test.labels);
    write_text(cfg.out_dir + "/margin_hist.csv", icda::margin_histogram_csv(margins));

    std::cout << "method " << rep.method << " seed " << seed << "\n";
    std::cout << "  accuracy              " << rep.final_eval.accuracy << "\n";
    std::cout << "  tail accuracy         " << rep.final_eval.tail_accuracy << "\n";
    std::cout << "  worst group           " << rep.final_eval.worst_group << "\n";
    std::cout << "  small-margin fraction " << margins.small_margin_fraction << "\n";
    std::cout << "diagnostics in " << cfg.out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic training laboratory for implicit counterfactual augmentation"};
    app.require_subcommand(1);

    CommonOpts train_opts;
    CLI::App* train_cmd = app.add_subcommand("train", "train one method over the seed list");
    add_common(train_cmd, train_opts);

    std::string suite = "all";
    std::uint64_t verify_seed = 12345;
    std::string verify_out;
    CLI::App* verify_cmd = app.add_subcommand("verify", "run property suites");
    verify_cmd->add_option("suite", suite, "gradients|bound|reductions|stats|taylor|all");
    verify_cmd->add_option("--seed", verify_seed, "seed for generated instances");
    verify_cmd->add_option("--out", verify_out, "directory for verify.json (stdout if absent)");

    CommonOpts sweep_opts;
    std::vector<std::string> grids;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "cross-product grid of experiments");
    add_common(sweep_cmd, sweep_opts);
    sweep_cmd->add_option("--grid", grids, "section.key=v1,v2,... axis, repeatable")->required();

    CommonOpts diag_opts;
    CLI::App* diag_cmd = app.add_subcommand("diag", "train one seed and emit diagnostics");
    add_common(diag_cmd, diag_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(train_opts, train_cmd);
        if (verify_cmd->parsed()) return cmd_verify(suite, verify_seed, verify_out);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_opts, sweep_cmd, grids);
        if (diag_cmd->parsed()) return cmd_diag(diag_opts, diag_cmd);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
