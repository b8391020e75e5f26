#include "mrr/clustering.hpp"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "mrr/kernels.hpp"

namespace mrr::cluster {

std::string_view kind_name(Kind k) { return k == Kind::kmeans ? "kmeans" : "igmm"; }

namespace {

void check_nonempty(const ClusterModel& model) {
    if (model.means.empty()) throw numeric_error("cluster model has no active clusters");
}

void check_batch(const ClusterModel& model, std::span<const Vec> z) {
    for (const Vec& v : z)
        if (v.size() != model.dim())
            throw data_error("latent vector dimension does not match cluster means");
}

}  // namespace

ClusterModel init_clusters(std::span<const Vec> sample, std::size_t k, Kind kind, double sigma,
                           Rng& rng) {
    if (k == 0) throw config_error("cluster count must be >= 1");
    if (sample.size() < k)
        throw data_error("cluster seeding needs at least as many samples as clusters: have " +
                         std::to_string(sample.size()) + ", want " + std::to_string(k));
    if (!(sigma > 0.0)) throw config_error("cluster sigma must be > 0");

    ClusterModel model;
    model.kind = kind;
    model.sigma = sigma;

    const std::size_t n = sample.size();
    const std::size_t dim = sample[0].size();
    model.means.push_back(sample[rng.index(n)]);

    // kmeans++: each further seed drawn proportionally to the squared
    // distance from the nearest seed so far.
    Vec d2(n);
    while (model.means.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec& m : model.means)
                best = std::min(best, kern::sqdist(sample[i].data(), m.data(), dim));
            d2[i] = best;
            total += best;
        }
        std::size_t pick;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            pick = n - 1;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.index(n);
        }
        model.means.push_back(sample[pick]);
    }

    model.pi.assign(k, 1.0 / static_cast<double>(k));
    return model;
}

std::vector<int> kmeans_assign(const ClusterModel& model, std::span<const Vec> z) {
    check_nonempty(model);
    check_batch(model, z);
    std::vector<int> assign(z.size());
    const std::size_t dim = model.dim();
    for (std::size_t i = 0; i < z.size(); ++i) {
        int best = 0;
        double best_d = kern::sqdist(z[i].data(), model.means[0].data(), dim);
        for (std::size_t k = 1; k < model.means.size(); ++k) {
            const double d = kern::sqdist(z[i].data(), model.means[k].data(), dim);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(k);
            }
        }
        assign[i] = best;
    }
    return assign;
}

namespace {

// Shared mean update: average of assigned samples, empty clusters untouched.
void update_means(ClusterModel& model, std::span<const Vec> z, const std::vector<int>& assign,
                  std::vector<std::size_t>& counts) {
    if (assign.size() != z.size())
        throw data_error("assignment vector does not match the batch size");
    const std::size_t t = model.t_active();
    const std::size_t dim = model.dim();
    counts.assign(t, 0);
    std::vector<Vec> sums(t, Vec(dim, 0.0));
    for (std::size_t i = 0; i < z.size(); ++i) {
        const int k = assign[i];
        if (k < 0 || static_cast<std::size_t>(k) >= t)
            throw data_error("assignment index out of range");
        kern::axpy(1.0, z[i].data(), sums[k].data(), dim);
        ++counts[k];
    }
    for (std::size_t k = 0; k < t; ++k) {
        if (counts[k] == 0) continue;
        const double inv = 1.0 / static_cast<double>(counts[k]);
        for (std::size_t j = 0; j < dim; ++j) model.means[k][j] = sums[k][j] * inv;
    }
}

}  // namespace

void kmeans_update(ClusterModel& model, std::span<const Vec> z, const std::vector<int>& assign) {
    check_nonempty(model);
    check_batch(model, z);
    std::vector<std::size_t> counts;
    update_means(model, z, assign, counts);
    model.assignments = assign;
}

std::vector<int> igmm_e_step(const ClusterModel& model, std::span<const Vec> z) {
    check_nonempty(model);
    check_batch(model, z);
    if (model.pi.size() != model.means.size())
        throw numeric_error("igmm model has inconsistent pi");
    std::vector<double> log_pi(model.pi.size());
    for (std::size_t k = 0; k < model.pi.size(); ++k) {
        if (!(model.pi[k] > 0.0))
            throw numeric_error("active igmm cluster " + std::to_string(k) +
                                " has pi = 0; it should have been pruned");
        log_pi[k] = std::log(model.pi[k]);
    }
    std::vector<int> assign(z.size());
    const std::size_t dim = model.dim();
    for (std::size_t i = 0; i < z.size(); ++i) {
        int best = 0;
        double best_s = log_pi[0] - 0.5 * kern::sqdist(z[i].data(), model.means[0].data(), dim);
        for (std::size_t k = 1; k < model.means.size(); ++k) {
            const double s =
                log_pi[k] - 0.5 * kern::sqdist(z[i].data(), model.means[k].data(), dim);
            if (s > best_s) {
                best_s = s;
                best = static_cast<int>(k);
            }
        }
        assign[i] = best;
    }
    return assign;
}

void igmm_m_step(ClusterModel& model, std::span<const Vec> z, const std::vector<int>& assign) {
    check_nonempty(model);
    check_batch(model, z);
    if (z.empty()) throw data_error("igmm_m_step requires a non-empty batch");
    std::vector<std::size_t> counts;
    update_means(model, z, assign, counts);
    model.pi.resize(model.t_active());
    const double inv_n = 1.0 / static_cast<double>(z.size());
    for (std::size_t k = 0; k < counts.size(); ++k)
        model.pi[k] = static_cast<double>(counts[k]) * inv_n;
    model.assignments = assign;
}

void prune_clusters(ClusterModel& model, double threshold) {
    if (model.kind != Kind::igmm) throw config_error("prune_clusters requires an igmm model");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw config_error("prune threshold must lie in (0, 1)");
    check_nonempty(model);

    std::size_t keep_anchor = 0;
    for (std::size_t k = 1; k < model.pi.size(); ++k)
        if (model.pi[k] > model.pi[keep_anchor]) keep_anchor = k;

    std::vector<Vec> means;
    Vec pi;
    for (std::size_t k = 0; k < model.pi.size(); ++k) {
        if (model.pi[k] >= threshold || k == keep_anchor) {
            means.push_back(std::move(model.means[k]));
            pi.push_back(model.pi[k]);
        }
    }
    if (means.size() == model.means.size()) {
        model.means = std::move(means);  // nothing pruned
        return;
    }
    double total = kern::sum(pi.data(), pi.size());
    if (!(total > 0.0)) total = 1.0;
    for (double& p : pi) p /= total;
    model.means = std::move(means);
    model.pi = std::move(pi);
    model.assignments.clear();  // indices are stale after pruning
}

std::size_t nearest_mean_index(const ClusterModel& model, const Vec& z) {
    check_nonempty(model);
    if (model.kind == Kind::igmm) {
        std::span<const Vec> one(&z, 1);
        return static_cast<std::size_t>(igmm_e_step(model, one)[0]);
    }
    std::span<const Vec> one(&z, 1);
    return static_cast<std::size_t>(kmeans_assign(model, one)[0]);
}

const Vec& nearest_mean(const ClusterModel& model, const Vec& z) {
    return model.means[nearest_mean_index(model, z)];
}

double kmeans_objective(const ClusterModel& model, std::span<const Vec> z,
                        const std::vector<int>& assign) {
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i)
        total += kern::sqdist(z[i].data(), model.means[assign[i]].data(), model.dim());
    return total;
}

double igmm_objective(const ClusterModel& model, std::span<const Vec> z,
                      const std::vector<int>& assign) {
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        total += std::log(model.pi[assign[i]]) -
                 0.5 * kern::sqdist(z[i].data(), model.means[assign[i]].data(), model.dim());
    }
    return total;
}

std::size_t lloyd_fit(ClusterModel& model, std::span<const Vec> z, std::size_t max_iters) {
    std::vector<int> prev;
    for (std::size_t it = 0; it < max_iters; ++it) {
        std::vector<int> assign = kmeans_assign(model, z);
        if (assign == prev) return it;
        kmeans_update(model, z, assign);
        prev = std::move(assign);
    }
    return max_iters;
}

std::size_t igmm_fit(ClusterModel& model, std::span<const Vec> z, std::size_t max_iters,
                     double prune_threshold) {
    std::vector<int> prev;
    for (std::size_t it = 0; it < max_iters; ++it) {
        std::vector<int> assign = igmm_e_step(model, z);
        const bool stable = assign == prev;
        igmm_m_step(model, z, assign);
        const std::size_t before = model.t_active();
        prune_clusters(model, prune_threshold);
        const bool pruned = model.t_active() != before;
        if (stable && !pruned) return it;
        prev = pruned ? std::vector<int>{} : std::move(assign);
    }
    return max_iters;
}

void kmeans_minibatch_step(ClusterModel& model, std::span<const Vec> z, std::size_t batch,
                           Rng& rng) {
    if (z.empty()) throw data_error("kmeans_minibatch_step requires samples");
    if (z.size() <= batch) {
        // The whole set fits in one batch: plain Lloyd step, no resampling.
        auto assign = kmeans_assign(model, z);
        kmeans_update(model, z, assign);
        return;
    }
    std::vector<Vec> sub(batch);
    for (std::size_t i = 0; i < batch; ++i) sub[i] = z[rng.index(z.size())];
    auto assign = kmeans_assign(model, sub);
    kmeans_update(model, sub, assign);
}

std::string to_json(const ClusterModel& model) {
    nlohmann::json j;
    j["kind"] = std::string(kind_name(model.kind));
    j["sigma"] = model.sigma;
    j["t_active"] = model.t_active();
    j["pi"] = model.pi;
    j["means"] = model.means;
    return j.dump(2);
}

ClusterModel model_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ClusterModel model;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "kmeans")
        model.kind = Kind::kmeans;
    else if (kind == "igmm")
        model.kind = Kind::igmm;
    else
        throw data_error("unknown cluster kind '" + kind + "'");
    model.sigma = j.at("sigma").get<double>();
    model.pi = j.at("pi").get<Vec>();
    model.means = j.at("means").get<std::vector<Vec>>();
    if (model.means.empty()) throw data_error("cluster model must have at least one mean");
    if (j.at("t_active").get<std::size_t>() != model.means.size())
        throw data_error("cluster model t_active does not match means");
    for (const Vec& m : model.means)
        if (m.size() != model.means[0].size())
            throw data_error("cluster means have inconsistent dimensions");
    return model;
}

}  // namespace mrr::cluster
