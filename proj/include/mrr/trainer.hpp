#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mrr/clustering.hpp"
#include "mrr/features.hpp"
#include "mrr/network.hpp"

namespace mrr::train {

enum class PhaseKind { reconstruction, clustering, combined };
std::string_view phase_name(PhaseKind p);

struct Phase {
    PhaseKind kind = PhaseKind::reconstruction;
    std::size_t iters = 0;  // one iteration = one minibatch weight update
};

struct TrainConfig {
    std::vector<Phase> schedule = {{PhaseKind::reconstruction, 1000},
                                   {PhaseKind::clustering, 1000}};
    double eta = 0.05;
    double rho = 0.98;
    std::size_t weight_batch = 2;
    std::size_t kmeans_batch = 40;
    cluster::Kind cluster_kind = cluster::Kind::kmeans;
    std::size_t cluster_count = 2;  // K for kmeans, initial T for igmm
    double prune_threshold = 0.0;   // 0 means the 1/(10 T) default
    double sigma = 1.0;
    double loss_weight_reconstruction = 1.0;
    double loss_weight_clustering = 1.0;
    // Weight steps between cluster re-estimations, and cluster refinement
    // rounds (minibatch kmeans steps or full EM iterations) per refresh.
    std::size_t cluster_refresh_period = 25;
    std::size_t cluster_steps_per_refresh = 5;
    std::uint64_t seed = 0;

    void validate() const;
    double effective_prune_threshold() const;
};

std::uint64_t config_hash(const TrainConfig& cfg);

struct TracePoint {
    std::size_t iter = 0;  // global weight-update index
    PhaseKind phase = PhaseKind::reconstruction;
    double loss = 0.0;

    friend bool operator==(const TracePoint&, const TracePoint&) = default;
};

struct TrainReport {
    std::vector<TracePoint> trace;
    double wall_time_s = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    std::size_t cluster_refreshes = 0;
    std::size_t reconstruction_grad_calls = 0;
    std::size_t clustering_grad_calls = 0;
    bool aborted = false;
    std::string abort_reason;
};

struct TrainResult {
    nn::Network net;
    std::optional<cluster::ClusterModel> model;  // absent for reconstruction-only schedules
    TrainReport report;
};

// Runs the phase schedule over the feature vectors. Within clustering and
// combined phases the full training set is re-encoded and the cluster model
// re-estimated every cluster_refresh_period weight steps; weight updates pull
// each latent toward its assigned mean. Deterministic under a fixed seed.
// Numeric failures stop training and are recorded in the report.
TrainResult train(nn::Network net, const std::vector<feat::FeatureVector>& features,
                  const TrainConfig& cfg);

std::vector<feat::FeatureVector> encode_dataset(const nn::Network& net,
                                                const std::vector<feat::FeatureVector>& features);

// CSV: iter,phase,loss
void write_trace_csv(const std::filesystem::path& file, const TrainReport& report);
std::string report_to_json(const TrainReport& report);

}  // namespace mrr::train
