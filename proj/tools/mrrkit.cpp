// mrrkit: material-removal-rate prediction experiments on CMP sensor data.
// Subcommands: generate | extract | train | evaluate | run | report.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mrr/experiment.hpp"

namespace {

struct CommonArgs {
    std::string config;
    std::vector<std::string> overrides;  // key=value pairs from --set
    bool has_seed = false;
    std::uint64_t seed = 0;
    bool has_attempts = false;
    std::size_t attempts = 0;
    std::string out;
    std::string methods;
};

void add_common(CLI::App* app, CommonArgs& args) {
    app->add_option("--config", args.config, "flat key=value config file");
    app->add_option("--set", args.overrides, "config override, key=value (repeatable)");
    app->add_option("--seed", args.seed, "global seed override")
        ->each([&](const std::string&) { args.has_seed = true; });
    app->add_option("--attempts", args.attempts, "attempt count override")
        ->each([&](const std::string&) { args.has_attempts = true; });
    app->add_option("--out", args.out, "output directory");
    app->add_option("--method", args.methods, "comma-separated method list override");
}

mrr::cli::RunConfig build_config(const CommonArgs& args) {
    mrr::cli::RunConfig cfg;
    if (!args.config.empty()) cfg = mrr::cli::parse_config_file(args.config);
    for (const std::string& kv : args.overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw mrr::config_error("--set expects key=value, got '" + kv + "'");
        mrr::cli::apply_config_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (args.has_seed) cfg.seed = args.seed;
    if (args.has_attempts) cfg.attempts = args.attempts;
    if (!args.out.empty()) cfg.out_dir = args.out;
    if (!args.methods.empty()) mrr::cli::apply_config_override(cfg, "methods", args.methods);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"autoencoder latent clustering experiments for CMP MRR prediction"};
    app.require_subcommand(1);

    CommonArgs gen_args, ext_args, train_args, eval_args, run_args;
    bool force = false;
    std::string extract_method = "moment18x4";
    std::string train_method = "ae_both";
    std::string eval_checkpoint;
    std::string extract_out = "features.csv";
    std::string report_file;
    std::string report_out = "out";

    CLI::App* gen = app.add_subcommand("generate", "write a synthetic dataset as CSV");
    add_common(gen, gen_args);
    gen->add_flag("--force", force, "overwrite existing dataset files");

    CLI::App* ext = app.add_subcommand("extract", "extract feature vectors to CSV");
    add_common(ext, ext_args);
    ext->add_option("--extractor", extract_method,
                    "moment18x4 | moment12x4 | rawspace12x50 | pca30");
    ext->add_option("--features-out", extract_out, "output CSV file");

    CLI::App* trn = app.add_subcommand("train", "train an autoencoder variant");
    add_common(trn, train_args);
    trn->add_option("--ae", train_method, "ae_reconstruction | ae_clustering | ae_both");

    CLI::App* ev = app.add_subcommand("evaluate", "latent regression from a checkpoint");
    add_common(ev, eval_args);
    ev->add_option("--checkpoint", eval_checkpoint, "network checkpoint file")->required();

    CLI::App* run = app.add_subcommand("run", "full baseline + autoencoder ladder");
    add_common(run, run_args);

    CLI::App* rep = app.add_subcommand("report", "render tables and CSVs from report.json");
    rep->add_option("--report", report_file, "report.json path")->required();
    rep->add_option("--out", report_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            auto cfg = build_config(gen_args);
            return mrr::cli::cmd_generate(cfg, cfg.out_dir, force);
        }
        if (ext->parsed()) {
            auto cfg = build_config(ext_args);
            return mrr::cli::cmd_extract(cfg, extract_method, extract_out);
        }
        if (trn->parsed()) {
            auto cfg = build_config(train_args);
            return mrr::cli::cmd_train(cfg, train_method, cfg.out_dir);
        }
        if (ev->parsed()) {
            auto cfg = build_config(eval_args);
            return mrr::cli::cmd_evaluate(cfg, eval_checkpoint, cfg.out_dir);
        }
        if (run->parsed()) {
            return mrr::cli::cmd_run(build_config(run_args));
        }
        if (rep->parsed()) {
            return mrr::cli::cmd_report(report_file, report_out);
        }
    } catch (const mrr::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const mrr::data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const mrr::numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
