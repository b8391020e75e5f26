#pragma once

#include <span>
#include <string>
#include <vector>

#include "mrr/common.hpp"
#include "mrr/rng.hpp"

namespace mrr::cluster {

enum class Kind { kmeans, igmm };
std::string_view kind_name(Kind k);

// Latent-space partition: means, mixture weights, one shared scalar variance.
// sigma is kept constant for every cluster and therefore never enters the
// assignment score. Assignments are the most recent hard E-step over the
// batch last fitted; pruning invalidates them.
struct ClusterModel {
    Kind kind = Kind::kmeans;
    std::vector<Vec> means;
    Vec pi;
    double sigma = 1.0;
    std::vector<int> assignments;

    std::size_t t_active() const { return means.size(); }
    std::size_t dim() const { return means.empty() ? 0 : means.front().size(); }
};

// kmeans++-style seeding from the sample; pi uniform at 1/k.
ClusterModel init_clusters(std::span<const Vec> sample, std::size_t k, Kind kind, double sigma,
                           Rng& rng);

// Hard assignment to the squared-distance-minimizing mean; ties go to the
// lowest cluster index.
std::vector<int> kmeans_assign(const ClusterModel& model, std::span<const Vec> z);

// Each mean becomes the average of its assigned samples; empty clusters keep
// their previous mean.
void kmeans_update(ClusterModel& model, std::span<const Vec> z, const std::vector<int>& assign);

// Hard assignment maximizing ln pi_k - 1/2 ||z - B_k||^2.
std::vector<int> igmm_e_step(const ClusterModel& model, std::span<const Vec> z);

// Means as in kmeans; pi_k = fraction of samples assigned to k.
void igmm_m_step(ClusterModel& model, std::span<const Vec> z, const std::vector<int>& assign);

// Drops clusters with pi below threshold and renormalizes. The largest-pi
// cluster always survives.
void prune_clusters(ClusterModel& model, double threshold);

std::size_t nearest_mean_index(const ClusterModel& model, const Vec& z);
const Vec& nearest_mean(const ClusterModel& model, const Vec& z);

double kmeans_objective(const ClusterModel& model, std::span<const Vec> z,
                        const std::vector<int>& assign);
double igmm_objective(const ClusterModel& model, std::span<const Vec> z,
                      const std::vector<int>& assign);

// Full-batch Lloyd iteration to a fixed point (or max_iters); returns the
// number of assign+update rounds executed.
std::size_t lloyd_fit(ClusterModel& model, std::span<const Vec> z, std::size_t max_iters);

// Full-batch hard EM with per-iteration pruning; returns rounds executed.
std::size_t igmm_fit(ClusterModel& model, std::span<const Vec> z, std::size_t max_iters,
                     double prune_threshold);

// One minibatch round: sample `batch` points, assign, update.
void kmeans_minibatch_step(ClusterModel& model, std::span<const Vec> z, std::size_t batch,
                           Rng& rng);

std::string to_json(const ClusterModel& model);
ClusterModel model_from_json(const std::string& text);

}  // namespace mrr::cluster
