#include "mrr/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mrr/kernels.hpp"
#include "mrr/rng.hpp"

namespace mrr::train {

std::string_view phase_name(PhaseKind p) {
    switch (p) {
        case PhaseKind::reconstruction: return "reconstruction";
        case PhaseKind::clustering: return "clustering";
        case PhaseKind::combined: return "combined";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (!(eta > 0.0)) throw config_error("eta must be > 0");
    if (!(rho >= 0.0 && rho < 1.0)) throw config_error("rho must lie in [0, 1)");
    if (weight_batch == 0) throw config_error("weight batch size must be >= 1");
    if (kmeans_batch == 0) throw config_error("kmeans batch size must be >= 1");
    if (cluster_count == 0) throw config_error("cluster count must be >= 1");
    if (!(sigma > 0.0)) throw config_error("sigma must be > 0");
    if (prune_threshold < 0.0 || prune_threshold >= 1.0)
        throw config_error("prune threshold must lie in [0, 1)");
    if (cluster_refresh_period == 0) throw config_error("cluster refresh period must be >= 1");
    if (cluster_steps_per_refresh == 0) throw config_error("cluster steps must be >= 1");
    if (!(loss_weight_reconstruction >= 0.0) || !(loss_weight_clustering >= 0.0))
        throw config_error("loss weights must be >= 0");
}

double TrainConfig::effective_prune_threshold() const {
    if (prune_threshold > 0.0) return prune_threshold;
    return 1.0 / (10.0 * static_cast<double>(cluster_count));
}

std::uint64_t config_hash(const TrainConfig& cfg) {
    std::string s;
    for (const Phase& p : cfg.schedule) {
        s += phase_name(p.kind);
        s += ':' + std::to_string(p.iters) + ';';
    }
    s += std::to_string(cfg.eta) + '|' + std::to_string(cfg.rho) + '|' +
         std::to_string(cfg.weight_batch) + '|' + std::to_string(cfg.kmeans_batch) + '|' +
         std::string(cluster::kind_name(cfg.cluster_kind)) + '|' +
         std::to_string(cfg.cluster_count) + '|' + std::to_string(cfg.prune_threshold) + '|' +
         std::to_string(cfg.sigma) + '|' + std::to_string(cfg.loss_weight_reconstruction) + '|' +
         std::to_string(cfg.loss_weight_clustering) + '|' +
         std::to_string(cfg.cluster_refresh_period) + '|' +
         std::to_string(cfg.cluster_steps_per_refresh) + '|' + std::to_string(cfg.seed);
    return Rng::fnv1a(s);
}

namespace {

void scale_gradients(nn::Gradients& g, double w) {
    if (w == 1.0) return;
    for (Matrix& m : g.w)
        for (double& x : m.a) x *= w;
    for (Vec& b : g.b)
        for (double& x : b) x *= w;
}

void accumulate_gradients(nn::Gradients& acc, const nn::Gradients& g, double w) {
    for (std::size_t l = 0; l < acc.w.size(); ++l) {
        kern::axpy(w, g.w[l].a.data(), acc.w[l].a.data(), acc.w[l].a.size());
        kern::axpy(w, g.b[l].data(), acc.b[l].data(), acc.b[l].size());
    }
}

struct BatchCursor {
    std::vector<std::size_t> order;
    std::size_t pos = 0;
    Rng rng;

    BatchCursor(std::size_t n, Rng r) : rng(std::move(r)) {
        order.resize(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        rng.shuffle(order);
    }

    std::vector<std::size_t> next(std::size_t batch) {
        std::vector<std::size_t> out;
        out.reserve(batch);
        while (out.size() < batch) {
            if (pos == order.size()) {
                rng.shuffle(order);
                pos = 0;
            }
            out.push_back(order[pos++]);
        }
        return out;
    }
};

}  // namespace

TrainResult train(nn::Network net, const std::vector<feat::FeatureVector>& features,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (features.empty()) throw data_error("train requires a non-empty feature set");
    for (const auto& fv : features)
        if (fv.values.size() != net.input_dim())
            throw data_error("feature dimension of run " + fv.run_id +
                             " does not match the network input");

    const auto t0 = std::chrono::steady_clock::now();

    TrainResult result{std::move(net), std::nullopt, {}};
    TrainReport& report = result.report;
    report.seed = cfg.seed;
    report.config_hash = config_hash(cfg);

    Rng root(cfg.seed);
    BatchCursor cursor(features.size(), root.stream("shuffle"));
    Rng cluster_rng = root.stream("clusters");

    const std::size_t batch_size = std::min(cfg.weight_batch, features.size());
    std::size_t steps_since_refresh = 0;

    auto encode_all = [&]() {
        std::vector<Vec> latents;
        latents.reserve(features.size());
        for (const auto& fv : features) latents.push_back(nn::encode(result.net, fv.values));
        return latents;
    };

    auto refresh_clusters = [&]() {
        const std::vector<Vec> latents = encode_all();
        if (!result.model) {
            const std::size_t k = std::min(cfg.cluster_count, latents.size());
            result.model = cluster::init_clusters(latents, k, cfg.cluster_kind, cfg.sigma,
                                                  cluster_rng);
        }
        if (cfg.cluster_kind == cluster::Kind::kmeans) {
            for (std::size_t s = 0; s < cfg.cluster_steps_per_refresh; ++s)
                cluster::kmeans_minibatch_step(*result.model, latents, cfg.kmeans_batch,
                                               cluster_rng);
        } else {
            cluster::igmm_fit(*result.model, latents, cfg.cluster_steps_per_refresh,
                              cfg.effective_prune_threshold());
        }
        ++report.cluster_refreshes;
        steps_since_refresh = 0;
    };

    std::size_t global_iter = 0;
    try {
        for (const Phase& phase : cfg.schedule) {
            const bool needs_clusters = phase.kind != PhaseKind::reconstruction;
            for (std::size_t it = 0; it < phase.iters; ++it, ++global_iter) {
                if (needs_clusters &&
                    (!result.model || steps_since_refresh >= cfg.cluster_refresh_period))
                    refresh_clusters();

                const auto idx = cursor.next(batch_size);
                std::vector<const Vec*> xs(idx.size());
                for (std::size_t i = 0; i < idx.size(); ++i) xs[i] = &features[idx[i]].values;

                nn::Gradients g = nn::zero_gradients(result.net);
                double loss = 0.0;
                switch (phase.kind) {
                    case PhaseKind::reconstruction: {
                        loss = nn::grad_reconstruction(result.net, xs, g);
                        scale_gradients(g, cfg.loss_weight_reconstruction);
                        ++report.reconstruction_grad_calls;
                        break;
                    }
                    case PhaseKind::clustering: {
                        loss = nn::grad_clustering(result.net, xs, *result.model, g);
                        scale_gradients(g, cfg.loss_weight_clustering);
                        ++report.clustering_grad_calls;
                        break;
                    }
                    case PhaseKind::combined: {
                        const double lr = nn::grad_reconstruction(result.net, xs, g);
                        scale_gradients(g, cfg.loss_weight_reconstruction);
                        nn::Gradients gc = nn::zero_gradients(result.net);
                        const double lc = nn::grad_clustering(result.net, xs, *result.model, gc);
                        accumulate_gradients(g, gc, cfg.loss_weight_clustering);
                        loss = cfg.loss_weight_reconstruction * lr +
                               cfg.loss_weight_clustering * lc;
                        ++report.reconstruction_grad_calls;
                        ++report.clustering_grad_calls;
                        break;
                    }
                }
                if (!std::isfinite(loss))
                    throw numeric_error("non-finite loss at iteration " +
                                        std::to_string(global_iter));
                report.trace.push_back({global_iter, phase.kind, loss});
                nn::sgd_momentum_step(result.net, g, cfg.eta, cfg.rho);
                if (needs_clusters) ++steps_since_refresh;
            }
        }
    } catch (const numeric_error& e) {
        report.aborted = true;
        report.abort_reason = e.what();
    }

    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

std::vector<feat::FeatureVector> encode_dataset(
    const nn::Network& net, const std::vector<feat::FeatureVector>& features) {
    std::vector<feat::FeatureVector> out;
    out.reserve(features.size());
    for (const auto& fv : features) {
        feat::FeatureVector lv;
        lv.run_id = fv.run_id;
        lv.mrr = fv.mrr;
        lv.split = fv.split;
        lv.wear = fv.wear;
        lv.tag = feat::Extractor::latent;
        lv.values = nn::encode(net, fv.values);
        out.push_back(std::move(lv));
    }
    return out;
}

void write_trace_csv(const std::filesystem::path& file, const TrainReport& report) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw data_error("cannot write " + file.string());
    out << "iter,phase,loss\n";
    char buf[32];
    for (const TracePoint& p : report.trace) {
        auto [end, ec] = std::to_chars(buf, buf + sizeof buf, p.loss);
        out << p.iter << ',' << phase_name(p.phase) << ',' << std::string_view(buf, end)
            << '\n';
    }
}

std::string report_to_json(const TrainReport& report) {
    nlohmann::json j;
    j["seed"] = report.seed;
    j["config_hash"] = report.config_hash;
    j["wall_time_s"] = report.wall_time_s;
    j["cluster_refreshes"] = report.cluster_refreshes;
    j["reconstruction_grad_calls"] = report.reconstruction_grad_calls;
    j["clustering_grad_calls"] = report.clustering_grad_calls;
    j["aborted"] = report.aborted;
    if (report.aborted) j["abort_reason"] = report.abort_reason;
    nlohmann::json trace = nlohmann::json::array();
    for (const TracePoint& p : report.trace)
        trace.push_back({p.iter, std::string(phase_name(p.phase)), p.loss});
    j["trace"] = std::move(trace);
    return j.dump();
}

}  // namespace mrr::train
