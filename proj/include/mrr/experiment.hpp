#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mrr/dataset.hpp"
#include "mrr/features.hpp"
#include "mrr/regression.hpp"
#include "mrr/trainer.hpp"

namespace mrr::cli {

enum class Method {
    moment18x4,
    moment12x4,
    rawspace12x50,
    pca30,
    ae_reconstruction,
    ae_clustering,
    ae_both,
};

std::string_view method_name(Method m);
Method parse_method(std::string_view name);
const std::vector<Method>& all_methods();

// Flat key=value run configuration. Every field maps 1:1 to a config key;
// unknown keys are rejected by name before any work starts.
struct RunConfig {
    std::uint64_t seed = 1;
    std::size_t attempts = 10;
    std::vector<Method> methods = all_methods();
    std::string data_dir;  // empty -> synthetic data
    std::string out_dir = "out";
    bool attempt_regenerate = true;  // synthetic only: fresh dataset per attempt

    data::SyntheticSpec synth;  // synth.seed is derived from `seed`, not a key

    std::vector<std::size_t> net_layers = {600, 500, 100};
    double train_eta = 0.05;
    double train_rho = 0.98;
    std::size_t train_weight_batch = 2;
    std::size_t train_kmeans_batch = 40;
    std::size_t train_iters_reconstruction = 1000;
    std::size_t train_iters_clustering = 1000;
    std::size_t train_refresh_period = 25;
    std::size_t train_cluster_steps = 5;
    bool train_combined_simultaneous = false;
    cluster::Kind cluster_kind = cluster::Kind::kmeans;
    std::size_t cluster_count = 2;
    double cluster_prune_threshold = 0.0;
    double cluster_sigma = 1.0;
    double loss_weight_reconstruction = 1.0;
    double loss_weight_clustering = 1.0;
    double ridge_lambda = 0.0;

    void validate() const;
};

RunConfig parse_config_file(const std::filesystem::path& file);
RunConfig parse_config_text(const std::string& text, const std::string& origin);
void apply_config_override(RunConfig& cfg, const std::string& key, const std::string& value);

struct CellResult {
    double rmse = 0.0;
    std::size_t n = 0;
};

struct AttemptResult {
    std::optional<CellResult> low;
    std::optional<CellResult> high;
    std::string error;  // non-empty when the attempt failed for this method
};

struct MethodResult {
    std::vector<AttemptResult> attempts;
    std::vector<train::TrainReport> train_reports;  // AE methods only, one per attempt

    std::optional<double> mean_rmse(data::Wear wear) const;
};

struct HistogramBin {
    std::string split;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
};

struct ExperimentReport {
    std::map<std::string, std::string> config_snapshot;  // key -> value, as parsed
    std::uint64_t seed = 0;
    std::size_t attempts = 0;
    std::string kernel_backend;
    std::map<Method, MethodResult> methods;
    std::vector<HistogramBin> histogram;
    std::map<std::string, std::size_t> split_wear_counts;  // "train/low" -> n
    bool incomplete = false;
    double wall_time_s = 0.0;
    std::string timestamp;
};

std::string report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const std::string& text);
std::string render_tables(const ExperimentReport& report);
void write_report_files(const std::filesystem::path& dir, const ExperimentReport& report);

// Builds the dataset a run would use for one attempt: loaded from data_dir
// when set, otherwise generated from the seed-derived synthetic spec.
data::DatasetSplit dataset_for_attempt(const RunConfig& cfg, std::size_t attempt);

// Full ladder over cfg.methods and cfg.attempts.
ExperimentReport run_experiment(const RunConfig& cfg);

// Subcommand entry points; they throw mrr errors which main() maps to the
// documented exit codes (0 ok, 2 config, 3 data, 4 numeric).
int cmd_generate(const RunConfig& cfg, const std::filesystem::path& out, bool force);
int cmd_extract(const RunConfig& cfg, const std::string& method,
                const std::filesystem::path& out_file);
int cmd_train(const RunConfig& cfg, const std::string& method,
              const std::filesystem::path& out_dir);
int cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                 const std::filesystem::path& out_dir);
int cmd_run(const RunConfig& cfg);
int cmd_report(const std::filesystem::path& report_file, const std::filesystem::path& out_dir);

}  // namespace mrr::cli
