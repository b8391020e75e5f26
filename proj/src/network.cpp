#include "mrr/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mrr/kernels.hpp"
#include "mrr/rng.hpp"

namespace mrr::nn {

namespace {

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

inline void activate(Act act, Vec& v) {
    if (act == Act::tanh_fn) {
        for (double& x : v) x = std::tanh(x);
    } else {
        for (double& x : v) x = sigmoid(x);
    }
}

// Derivative from the activation value: tanh' = 1 - t^2, sigmoid' = s(1 - s).
inline double act_deriv(Act act, double value) {
    return act == Act::tanh_fn ? 1.0 - value * value : value * (1.0 - value);
}

std::vector<std::size_t> full_widths(const std::vector<std::size_t>& encoder_sizes) {
    std::vector<std::size_t> widths(encoder_sizes);
    for (std::size_t i = encoder_sizes.size() - 1; i-- > 0;) widths.push_back(encoder_sizes[i]);
    return widths;
}

// Activations for layers 0..stop (inclusive of layer outputs). acts[0] = x.
void run_forward(const Network& net, const Vec& x, std::size_t stop, std::vector<Vec>& acts) {
    if (x.size() != net.input_dim())
        throw data_error("input dimension " + std::to_string(x.size()) +
                         " does not match network input " + std::to_string(net.input_dim()));
    acts.resize(stop + 1);
    acts[0] = x;
    for (std::size_t l = 0; l < stop; ++l) {
        const Matrix& w = net.w[l];
        acts[l + 1].resize(w.rows);
        kern::matvec(w.a.data(), w.rows, w.cols, acts[l].data(), net.b[l].data(),
                     acts[l + 1].data());
        activate(net.act[l], acts[l + 1]);
    }
}

// Backpropagates `delta` (already multiplied by the activation derivative of
// layer `top`) down to layer 0, accumulating scaled gradients.
void backprop(const Network& net, const std::vector<Vec>& acts, Vec delta, std::size_t top,
              double scale, Gradients& out) {
    for (std::size_t l = top + 1; l-- > 0;) {
        const Matrix& w = net.w[l];
        kern::ger(scale, delta.data(), w.rows, acts[l].data(), w.cols, out.w[l].a.data());
        kern::axpy(scale, delta.data(), out.b[l].data(), w.rows);
        if (l == 0) break;
        Vec prev(w.cols);
        kern::matvec_t(w.a.data(), w.rows, w.cols, delta.data(), prev.data());
        for (std::size_t j = 0; j < prev.size(); ++j)
            prev[j] *= act_deriv(net.act[l - 1], acts[l][j]);
        delta = std::move(prev);
    }
}

void check_finite_tensor(const double* p, std::size_t n, const char* what) {
    const double sq = kern::dot(p, p, n);
    if (!std::isfinite(sq))
        throw numeric_error(std::string("non-finite gradient in ") + what +
                            "; training aborted");
}

}  // namespace

Network init_network(const std::vector<std::size_t>& encoder_sizes, std::uint64_t seed) {
    if (encoder_sizes.size() < 2)
        throw config_error("network needs at least an input and a latent width");
    for (std::size_t s : encoder_sizes)
        if (s == 0) throw config_error("network layer sizes must be positive");

    Network net;
    net.encoder_sizes = encoder_sizes;
    const auto widths = full_widths(encoder_sizes);
    const std::size_t latent_layer = encoder_sizes.size() - 1;

    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t in = widths[l];
        const std::size_t out = widths[l + 1];
        Matrix w(out, in);
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (double& x : w.a) x = rng.uniform(-bound, bound);
        net.w.push_back(std::move(w));
        net.b.emplace_back(out, 0.0);
        net.vw.emplace_back(out, in, 0.0);
        net.vb.emplace_back(out, 0.0);
        const bool is_latent = l == latent_layer - 1;
        const bool is_output = l + 2 == widths.size();
        net.act.push_back(is_latent || is_output ? Act::sigmoid_fn : Act::tanh_fn);
    }
    return net;
}

Gradients zero_gradients(const Network& net) {
    Gradients g;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        g.w.emplace_back(net.w[l].rows, net.w[l].cols, 0.0);
        g.b.emplace_back(net.b[l].size(), 0.0);
    }
    return g;
}

Vec encode(const Network& net, const Vec& x) {
    std::vector<Vec> acts;
    run_forward(net, x, net.encoder_layer_count(), acts);
    return std::move(acts.back());
}

Vec decode(const Network& net, const Vec& z) {
    if (z.size() != net.latent_dim()) throw data_error("latent dimension mismatch in decode");
    Vec cur = z;
    for (std::size_t l = net.encoder_layer_count(); l < net.layer_count(); ++l) {
        const Matrix& w = net.w[l];
        Vec next(w.rows);
        kern::matvec(w.a.data(), w.rows, w.cols, cur.data(), net.b[l].data(), next.data());
        activate(net.act[l], next);
        cur = std::move(next);
    }
    return cur;
}

std::pair<Vec, Vec> forward(const Network& net, const Vec& x) {
    std::vector<Vec> acts;
    run_forward(net, x, net.layer_count(), acts);
    return {acts[net.encoder_layer_count()], acts.back()};
}

double grad_reconstruction(const Network& net, const std::vector<const Vec*>& xs,
                           Gradients& out) {
    if (xs.empty()) throw data_error("grad_reconstruction requires a non-empty batch");
    const double scale = 1.0 / static_cast<double>(xs.size());
    const std::size_t last = net.layer_count();
    double loss = 0.0;
    std::vector<Vec> acts;
    for (const Vec* x : xs) {
        run_forward(net, *x, last, acts);
        const Vec& y = acts[last];
        Vec delta(y.size());
        for (std::size_t j = 0; j < y.size(); ++j) {
            const double r = y[j] - (*x)[j];
            loss += 0.5 * r * r * scale;
            delta[j] = r * act_deriv(net.act[last - 1], y[j]);
        }
        backprop(net, acts, std::move(delta), last - 1, scale, out);
    }
    return loss;
}

double grad_clustering(const Network& net, const std::vector<const Vec*>& xs,
                       const std::vector<const Vec*>& targets, Gradients& out) {
    if (xs.empty()) throw data_error("grad_clustering requires a non-empty batch");
    if (targets.size() != xs.size())
        throw data_error("grad_clustering needs one target per sample");
    const double scale = 1.0 / static_cast<double>(xs.size());
    const std::size_t enc = net.encoder_layer_count();
    double loss = 0.0;
    std::vector<Vec> acts;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        run_forward(net, *xs[i], enc, acts);
        const Vec& z = acts[enc];
        const Vec& t = *targets[i];
        if (t.size() != z.size()) throw data_error("cluster mean dimension mismatch");
        Vec delta(z.size());
        for (std::size_t j = 0; j < z.size(); ++j) {
            const double r = z[j] - t[j];
            loss += 0.5 * r * r * scale;
            delta[j] = r * act_deriv(net.act[enc - 1], z[j]);
        }
        backprop(net, acts, std::move(delta), enc - 1, scale, out);
    }
    return loss;
}

double grad_clustering(const Network& net, const std::vector<const Vec*>& xs,
                       const cluster::ClusterModel& model, Gradients& out) {
    if (model.means.empty()) throw numeric_error("cluster model has no active clusters");
    std::vector<const Vec*> targets;
    targets.reserve(xs.size());
    for (const Vec* x : xs) {
        const Vec z = encode(net, *x);
        targets.push_back(&cluster::nearest_mean(model, z));
    }
    return grad_clustering(net, xs, targets, out);
}

double reconstruction_loss(const Network& net, const std::vector<const Vec*>& xs) {
    if (xs.empty()) throw data_error("reconstruction_loss requires a non-empty batch");
    double loss = 0.0;
    for (const Vec* x : xs) {
        const Vec y = forward(net, *x).second;
        loss += 0.5 * kern::sqdist(x->data(), y.data(), y.size());
    }
    return loss / static_cast<double>(xs.size());
}

double clustering_loss(const Network& net, const std::vector<const Vec*>& xs,
                       const std::vector<const Vec*>& targets) {
    if (xs.empty() || targets.size() != xs.size())
        throw data_error("clustering_loss needs one target per sample");
    double loss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const Vec z = encode(net, *xs[i]);
        loss += 0.5 * kern::sqdist(z.data(), targets[i]->data(), z.size());
    }
    return loss / static_cast<double>(xs.size());
}

void sgd_momentum_step(Network& net, const Gradients& g, double eta, double rho) {
    if (!(eta > 0.0)) throw config_error("learning rate must be > 0");
    if (!(rho >= 0.0 && rho < 1.0)) throw config_error("momentum must lie in [0, 1)");
    if (g.w.size() != net.layer_count() || g.b.size() != net.layer_count())
        throw data_error("gradient shapes do not match the network");
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        if (g.w[l].rows != net.w[l].rows || g.w[l].cols != net.w[l].cols ||
            g.b[l].size() != net.b[l].size())
            throw data_error("gradient shapes do not match the network");
        check_finite_tensor(g.w[l].a.data(), g.w[l].a.size(), "weight layer");
        check_finite_tensor(g.b[l].data(), g.b[l].size(), "bias layer");

        kern::axpby(1.0 - rho, g.w[l].a.data(), rho, net.vw[l].a.data(), net.vw[l].a.size());
        kern::axpy(-eta, net.vw[l].a.data(), net.w[l].a.data(), net.w[l].a.size());
        kern::axpby(1.0 - rho, g.b[l].data(), rho, net.vb[l].data(), net.vb[l].size());
        kern::axpy(-eta, net.vb[l].data(), net.b[l].data(), net.b[l].size());
    }
}

Network reuse_weights(const Network& net) {
    Network copy = net;
    for (Matrix& v : copy.vw) std::fill(v.a.begin(), v.a.end(), 0.0);
    for (Vec& v : copy.vb) std::fill(v.begin(), v.end(), 0.0);
    return copy;
}

namespace {

constexpr char kMagic[8] = {'M', 'R', 'R', 'A', 'E', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ofstream& out, const T* p, std::size_t count) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * sizeof(T)));
}

template <typename T>
void read_raw(std::ifstream& in, T* p, std::size_t count) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count * sizeof(T)));
    if (!in) throw data_error("checkpoint file truncated");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const Network& net) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw data_error("cannot write checkpoint " + file.string());
    write_raw(out, kMagic, 8);
    write_raw(out, &kVersion, 1);
    const std::uint32_t n = static_cast<std::uint32_t>(net.encoder_sizes.size());
    write_raw(out, &n, 1);
    for (std::size_t s : net.encoder_sizes) {
        const std::uint32_t v = static_cast<std::uint32_t>(s);
        write_raw(out, &v, 1);
    }
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        write_raw(out, net.w[l].a.data(), net.w[l].a.size());
        write_raw(out, net.b[l].data(), net.b[l].size());
        write_raw(out, net.vw[l].a.data(), net.vw[l].a.size());
        write_raw(out, net.vb[l].data(), net.vb[l].size());
    }
}

Network load_checkpoint(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw data_error("cannot open checkpoint " + file.string());
    char magic[8];
    read_raw(in, magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw data_error(file.string() + " is not a network checkpoint");
    std::uint32_t version = 0;
    read_raw(in, &version, 1);
    if (version != kVersion)
        throw data_error("unsupported checkpoint version " + std::to_string(version));
    std::uint32_t n = 0;
    read_raw(in, &n, 1);
    if (n < 2) throw data_error("checkpoint has an invalid layer list");
    std::vector<std::size_t> sizes(n);
    for (auto& s : sizes) {
        std::uint32_t v = 0;
        read_raw(in, &v, 1);
        if (v == 0) throw data_error("checkpoint has a zero layer size");
        s = v;
    }
    Network net = init_network(sizes, 0);
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        read_raw(in, net.w[l].a.data(), net.w[l].a.size());
        read_raw(in, net.b[l].data(), net.b[l].size());
        read_raw(in, net.vw[l].a.data(), net.vw[l].a.size());
        read_raw(in, net.vb[l].data(), net.vb[l].size());
    }
    return net;
}

std::string to_json(const Network& net) {
    nlohmann::json j;
    j["encoder_sizes"] = net.encoder_sizes;
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        nlohmann::json jl;
        jl["rows"] = net.w[l].rows;
        jl["cols"] = net.w[l].cols;
        jl["activation"] = net.act[l] == Act::tanh_fn ? "tanh" : "sigmoid";
        jl["weights"] = net.w[l].a;
        jl["bias"] = net.b[l];
        layers.push_back(std::move(jl));
    }
    j["layers"] = std::move(layers);
    return j.dump();
}

}  // namespace mrr::nn
