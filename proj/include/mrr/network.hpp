#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "mrr/clustering.hpp"
#include "mrr/common.hpp"

namespace mrr::nn {

enum class Act { tanh_fn, sigmoid_fn };

// Symmetric dense autoencoder. encoder_sizes lists the encoder widths
// (input first, latent last); the decoder mirrors them with its own weights.
// Activation schedule: tanh on hidden layers, sigmoid on the latent layer and
// on the output layer, mirrored in the decoder.
struct Network {
    std::vector<std::size_t> encoder_sizes;
    std::vector<Matrix> w;   // weight layer l: out x in
    std::vector<Vec> b;
    std::vector<Matrix> vw;  // momentum velocities, same shapes
    std::vector<Vec> vb;
    std::vector<Act> act;

    std::size_t layer_count() const { return w.size(); }
    std::size_t encoder_layer_count() const { return encoder_sizes.size() - 1; }
    std::size_t input_dim() const { return encoder_sizes.front(); }
    std::size_t latent_dim() const { return encoder_sizes.back(); }

    friend bool operator==(const Network&, const Network&) = default;
};

struct Gradients {
    std::vector<Matrix> w;
    std::vector<Vec> b;
};

// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases and
// velocities zero. Same seed, same bytes.
Network init_network(const std::vector<std::size_t>& encoder_sizes, std::uint64_t seed);

Gradients zero_gradients(const Network& net);

Vec encode(const Network& net, const Vec& x);
Vec decode(const Network& net, const Vec& z);
std::pair<Vec, Vec> forward(const Network& net, const Vec& x);  // (z, y)

// Mean over the batch of 1/2 ||x - y||^2 and its exact gradients.
double grad_reconstruction(const Network& net, const std::vector<const Vec*>& xs,
                           Gradients& out);

// Mean over the batch of 1/2 ||z - target||^2, gradients through the encoder
// only (decoder entries of `out` are left untouched). Targets are the
// per-sample assigned cluster means, fixed for the evaluation.
double grad_clustering(const Network& net, const std::vector<const Vec*>& xs,
                       const std::vector<const Vec*>& targets, Gradients& out);

// Convenience overload: looks each sample's nearest mean up in the model.
double grad_clustering(const Network& net, const std::vector<const Vec*>& xs,
                       const cluster::ClusterModel& model, Gradients& out);

double reconstruction_loss(const Network& net, const std::vector<const Vec*>& xs);
double clustering_loss(const Network& net, const std::vector<const Vec*>& xs,
                       const std::vector<const Vec*>& targets);

// V_t = rho V_{t-1} + (1 - rho) g ; w_t = w_{t-1} - eta V_t, per weight and
// bias. Throws numeric_error on non-finite gradients.
void sgd_momentum_step(Network& net, const Gradients& g, double eta, double rho);

// Deep copy with velocities zeroed (weight reuse across wear regimes).
Network reuse_weights(const Network& net);

// Little-endian binary checkpoint: magic, version, encoder sizes, then
// row-major weights, biases and velocities per layer.
void save_checkpoint(const std::filesystem::path& file, const Network& net);
Network load_checkpoint(const std::filesystem::path& file);

// JSON export for inspection (weights included; not meant to be reloaded).
std::string to_json(const Network& net);

}  // namespace mrr::nn
