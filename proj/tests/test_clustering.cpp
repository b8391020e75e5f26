#include <doctest.h>

#include <cmath>
#include <set>

#include "mrr/clustering.hpp"
#include "mrr/kernels.hpp"

using namespace mrr;
namespace cl = mrr::cluster;

namespace {

std::vector<Vec> random_points(Rng& rng, std::size_t n, std::size_t dim, double lo = -5.0,
                               double hi = 5.0) {
    std::vector<Vec> z(n, Vec(dim));
    for (auto& v : z)
        for (double& x : v) x = rng.uniform(lo, hi);
    return z;
}

double sqd(const Vec& a, const Vec& b) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) acc += (a[j] - b[j]) * (a[j] - b[j]);
    return acc;
}

// Exhaustive oracle over all k^n assignments: global optimum objective and
// the set of Lloyd fixed-point objectives (assignment consistent with the
// centroids of its own non-empty clusters under the lowest-index tie rule).
struct LloydOracle {
    double best_objective = 0.0;
    std::vector<double> fixed_point_objectives;
};

LloydOracle lloyd_oracle(const std::vector<Vec>& z, std::size_t k) {
    const std::size_t n = z.size();
    LloydOracle out;
    out.best_objective = std::numeric_limits<double>::infinity();
    std::vector<int> assign(n, 0);
    std::vector<Vec> means(k, Vec(z[0].size()));
    std::vector<std::size_t> counts(k);

    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= k;
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t c = code;
        for (std::size_t i = 0; i < n; ++i) {
            assign[i] = static_cast<int>(c % k);
            c /= k;
        }
        for (auto& m : means) std::fill(m.begin(), m.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0u);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[assign[i]];
            for (std::size_t j = 0; j < z[0].size(); ++j) means[assign[i]][j] += z[i][j];
        }
        for (std::size_t q = 0; q < k; ++q)
            if (counts[q] > 0)
                for (double& v : means[q]) v /= static_cast<double>(counts[q]);

        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i) obj += sqd(z[i], means[assign[i]]);
        out.best_objective = std::min(out.best_objective, obj);

        bool fixed = true;
        for (std::size_t i = 0; i < n && fixed; ++i) {
            int arg = -1;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t q = 0; q < k; ++q) {
                if (counts[q] == 0) continue;
                const double d = sqd(z[i], means[q]);
                if (d < best) {
                    best = d;
                    arg = static_cast<int>(q);
                }
            }
            if (arg != assign[i]) fixed = false;
        }
        if (fixed) out.fixed_point_objectives.push_back(obj);
    }
    return out;
}

std::vector<Vec> three_gaussians(Rng& rng, std::size_t per_blob, std::size_t dim,
                                 double spread) {
    const std::vector<Vec> centers = {Vec(dim, 0.0), Vec(dim, 6.0), Vec(dim, -6.0)};
    std::vector<Vec> z;
    for (const auto& c : centers) {
        for (std::size_t i = 0; i < per_blob; ++i) {
            Vec v(dim);
            for (std::size_t j = 0; j < dim; ++j) v[j] = c[j] + spread * rng.normal();
            z.push_back(std::move(v));
        }
    }
    return z;
}

}  // namespace

TEST_CASE("kmeans_assign: exact hits, ties, brute-force equivalence") {
    cl::ClusterModel model;
    model.kind = cl::Kind::kmeans;
    model.means = {Vec{0.0, 0.0}, Vec{2.0, 2.0}, Vec{5.0, 0.0}};
    model.pi = {1.0 / 3, 1.0 / 3, 1.0 / 3};

    const std::vector<Vec> z1 = {Vec{2.0, 2.0}};
    CHECK(cl::kmeans_assign(model, z1) == std::vector<int>{1});

    // Equidistant between means 0 and 1 -> lowest index.
    const std::vector<Vec> z2 = {Vec{1.0, 1.0}};
    CHECK(cl::kmeans_assign(model, z2) == std::vector<int>{0});

    Rng rng(7);
    const auto z = random_points(rng, 20, 2);
    const auto got = cl::kmeans_assign(model, z);
    for (std::size_t i = 0; i < z.size(); ++i) {
        int arg = 0;
        double best = sqd(z[i], model.means[0]);
        for (std::size_t k = 1; k < model.means.size(); ++k) {
            const double d = sqd(z[i], model.means[k]);
            if (d < best) {
                best = d;
                arg = static_cast<int>(k);
            }
        }
        CHECK(got[i] == arg);
    }
}

TEST_CASE("kmeans_update: centroids and the empty-cluster rule") {
    cl::ClusterModel model;
    model.kind = cl::Kind::kmeans;
    model.means = {Vec{9.0, 9.0}, Vec{-3.0, -3.0}};
    model.pi = {0.5, 0.5};

    const std::vector<Vec> z = {Vec{0.0, 0.0}, Vec{2.0, 2.0}};
    cl::kmeans_update(model, z, {0, 0});
    CHECK(model.means[0] == Vec{1.0, 1.0});
    CHECK(model.means[1] == Vec{-3.0, -3.0});  // empty cluster keeps its mean
    CHECK(model.assignments == std::vector<int>{0, 0});
}

TEST_CASE("full-batch Lloyd reaches an enumerated fixed point on 6 points") {
    Rng rng(11);
    for (int inst = 0; inst < 30; ++inst) {
        const auto z = random_points(rng, 6, 1);
        Rng seed_rng(100 + inst);
        auto model = cl::init_clusters(z, 2, cl::Kind::kmeans, 1.0, seed_rng);
        cl::lloyd_fit(model, z, 100);
        const auto assign = cl::kmeans_assign(model, z);
        const double obj = cl::kmeans_objective(model, z, assign);

        const auto oracle = lloyd_oracle(z, 2);
        bool matches = false;
        for (double fp : oracle.fixed_point_objectives)
            if (std::fabs(fp - obj) <= 1e-9 * std::max(1.0, std::fabs(fp))) matches = true;
        CHECK(matches);
        CHECK(obj >= oracle.best_objective - 1e-9);
    }
}

TEST_CASE("full-batch Lloyd objective never increases") {
    Rng rng(13);
    for (int inst = 0; inst < 20; ++inst) {
        const auto z = random_points(rng, 30, 3);
        Rng seed_rng(500 + inst);
        auto model = cl::init_clusters(z, 4, cl::Kind::kmeans, 1.0, seed_rng);
        double prev = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 25; ++it) {
            const auto assign = cl::kmeans_assign(model, z);
            const double obj = cl::kmeans_objective(model, z, assign);
            CHECK(obj <= prev + 1e-10);
            prev = obj;
            cl::kmeans_update(model, z, assign);
        }
    }
}

TEST_CASE("igmm_e_step: uniform pi reduces to kmeans, priors break ties") {
    cl::ClusterModel model;
    model.kind = cl::Kind::igmm;
    model.means = {Vec{0.0}, Vec{4.0}, Vec{8.0}, Vec{-6.0}};
    model.pi = {0.25, 0.25, 0.25, 0.25};

    Rng rng(17);
    const auto z = random_points(rng, 15, 1, -10.0, 10.0);
    CHECK(cl::igmm_e_step(model, z) == cl::kmeans_assign(model, z));

    // Equidistant means, pi = (0.9, 0.1): the prior wins.
    cl::ClusterModel two;
    two.kind = cl::Kind::igmm;
    two.means = {Vec{-1.0}, Vec{1.0}};
    two.pi = {0.9, 0.1};
    CHECK(cl::igmm_e_step(two, std::vector<Vec>{Vec{0.0}}) == std::vector<int>{0});
    two.pi = {0.1, 0.9};
    CHECK(cl::igmm_e_step(two, std::vector<Vec>{Vec{0.0}}) == std::vector<int>{1});

    // Score-table oracle.
    model.pi = {0.4, 0.3, 0.2, 0.1};
    const auto got = cl::igmm_e_step(model, z);
    for (std::size_t i = 0; i < z.size(); ++i) {
        int arg = 0;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < model.means.size(); ++k) {
            const double s = std::log(model.pi[k]) - 0.5 * sqd(z[i], model.means[k]);
            if (s > best) {
                best = s;
                arg = static_cast<int>(k);
            }
        }
        CHECK(got[i] == arg);
    }

    model.pi = {0.5, 0.5, 0.0, 0.0};
    CHECK_THROWS_AS(cl::igmm_e_step(model, z), numeric_error);
}

TEST_CASE("igmm_m_step: counting pi and the closed-form oracle") {
    cl::ClusterModel model;
    model.kind = cl::Kind::igmm;
    model.means = {Vec{0.0}, Vec{1.0}};
    model.pi = {0.5, 0.5};
    std::vector<Vec> z;
    std::vector<int> assign;
    for (int i = 0; i < 7; ++i) {
        z.push_back(Vec{static_cast<double>(i)});
        assign.push_back(0);
    }
    for (int i = 0; i < 3; ++i) {
        z.push_back(Vec{10.0 + i});
        assign.push_back(1);
    }
    cl::igmm_m_step(model, z, assign);
    CHECK(model.pi[0] == doctest::Approx(0.7));
    CHECK(model.pi[1] == doctest::Approx(0.3));
    CHECK(model.means[0][0] == doctest::Approx(3.0));
    CHECK(model.means[1][0] == doctest::Approx(11.0));
    CHECK(std::fabs(model.pi[0] + model.pi[1] - 1.0) <= 1e-12);

    cl::ClusterModel one;
    one.kind = cl::Kind::igmm;
    one.means = {Vec{0.0}};
    one.pi = {1.0};
    cl::igmm_m_step(one, z, std::vector<int>(z.size(), 0));
    CHECK(one.pi == Vec{1.0});

    // Independent three-cluster oracle with hand-rolled loops.
    Rng rng(23);
    cl::ClusterModel three;
    three.kind = cl::Kind::igmm;
    three.means = {Vec{0.0, 0.0}, Vec{1.0, 1.0}, Vec{2.0, 2.0}};
    three.pi = {0.3, 0.3, 0.4};
    const auto pts = random_points(rng, 12, 2);
    std::vector<int> a(12);
    for (auto& v : a) v = static_cast<int>(rng.index(3));
    cl::igmm_m_step(three, pts, a);
    for (int k = 0; k < 3; ++k) {
        Vec sum(2, 0.0);
        std::size_t count = 0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (a[i] != k) continue;
            ++count;
            sum[0] += pts[i][0];
            sum[1] += pts[i][1];
        }
        CHECK(three.pi[k] == doctest::Approx(static_cast<double>(count) / 12.0));
        if (count > 0) {
            CHECK(three.means[k][0] == doctest::Approx(sum[0] / count));
            CHECK(three.means[k][1] == doctest::Approx(sum[1] / count));
        }
    }
}

TEST_CASE("prune_clusters: drops weightless clusters, keeps the anchor") {
    cl::ClusterModel model;
    model.kind = cl::Kind::igmm;
    model.means = {Vec{0.0}, Vec{1.0}, Vec{2.0}};
    model.pi = {0.5, 0.5, 0.0};
    cl::prune_clusters(model, 0.01);
    CHECK(model.t_active() == 2);
    CHECK(model.pi == Vec{0.5, 0.5});
    CHECK(model.means[1] == Vec{1.0});

    // All above threshold: unchanged.
    cl::prune_clusters(model, 0.01);
    CHECK(model.t_active() == 2);

    // Everything below threshold except the anchor.
    cl::ClusterModel tiny;
    tiny.kind = cl::Kind::igmm;
    tiny.means = {Vec{0.0}, Vec{1.0}};
    tiny.pi = {0.6, 0.4};
    cl::prune_clusters(tiny, 0.99);
    CHECK(tiny.t_active() == 1);
    CHECK(tiny.pi == Vec{1.0});
    CHECK(tiny.means[0] == Vec{0.0});

    cl::ClusterModel km;
    km.kind = cl::Kind::kmeans;
    km.means = {Vec{0.0}};
    km.pi = {1.0};
    CHECK_THROWS_AS(cl::prune_clusters(km, 0.5), config_error);
}

TEST_CASE("hard-EM objective is non-decreasing over full-batch iterations") {
    Rng rng(29);
    for (int inst = 0; inst < 20; ++inst) {
        const auto z = random_points(rng, 40, 2);
        Rng seed_rng(900 + inst);
        auto model = cl::init_clusters(z, 5, cl::Kind::igmm, 1.0, seed_rng);
        // First M-step grounds pi in actual counts before measuring.
        auto assign = cl::igmm_e_step(model, z);
        cl::igmm_m_step(model, z, assign);
        cl::prune_clusters(model, 1e-12);

        double prev = -std::numeric_limits<double>::infinity();
        for (int it = 0; it < 30; ++it) {
            assign = cl::igmm_e_step(model, z);
            const double obj = cl::igmm_objective(model, z, assign);
            CHECK(obj >= prev - 1e-10);
            prev = obj;
            cl::igmm_m_step(model, z, assign);
            cl::prune_clusters(model, 1e-12);  // removes exactly-empty clusters only
        }
    }
}

TEST_CASE("igmm model selection: T = 10 collapses to the 3 generated blobs") {
    Rng data_rng(31);
    const auto z = three_gaussians(data_rng, 100, 4, 0.5);
    Rng seed_rng(77);
    auto model = cl::init_clusters(z, 10, cl::Kind::igmm, 1.0, seed_rng);
    cl::igmm_fit(model, z, 300, 1.0 / (10.0 * 10.0));
    CHECK(model.t_active() == 3);
    // Every blob center is close to some surviving mean.
    for (double center : {0.0, 6.0, -6.0}) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& m : model.means) best = std::min(best, std::fabs(m[0] - center));
        CHECK(best < 1.0);
    }
}

TEST_CASE("nearest_mean matches a linear-scan oracle") {
    Rng rng(37);
    cl::ClusterModel model;
    model.kind = cl::Kind::kmeans;
    model.means = random_points(rng, 6, 3);
    model.pi.assign(6, 1.0 / 6.0);

    const Vec z = model.means[1];
    CHECK(cl::nearest_mean(model, z) == model.means[1]);

    cl::ClusterModel single;
    single.kind = cl::Kind::kmeans;
    single.means = {Vec{1.0, 2.0, 3.0}};
    single.pi = {1.0};
    CHECK(cl::nearest_mean(single, Vec{9.0, 9.0, 9.0}) == single.means[0]);

    for (int rep = 0; rep < 25; ++rep) {
        Vec probe(3);
        for (double& v : probe) v = rng.uniform(-6.0, 6.0);
        std::size_t arg = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < model.means.size(); ++k) {
            const double d = sqd(probe, model.means[k]);
            if (d < best) {
                best = d;
                arg = k;
            }
        }
        CHECK(cl::nearest_mean_index(model, probe) == arg);
    }

    // igmm flavor honors the pi-weighted score.
    cl::ClusterModel ig;
    ig.kind = cl::Kind::igmm;
    ig.means = {Vec{-1.0}, Vec{1.0}};
    ig.pi = {0.95, 0.05};
    CHECK(cl::nearest_mean_index(ig, Vec{0.2}) == 0);
}

TEST_CASE("init_clusters: determinism, validation and blob coverage") {
    Rng rng(41);
    const auto z = random_points(rng, 50, 2);
    Rng s1(5), s2(5), s3(6);
    const auto a = cl::init_clusters(z, 4, cl::Kind::kmeans, 1.0, s1);
    const auto b = cl::init_clusters(z, 4, cl::Kind::kmeans, 1.0, s2);
    CHECK(a.means == b.means);
    const auto c = cl::init_clusters(z, 4, cl::Kind::kmeans, 1.0, s3);
    CHECK(a.means != c.means);
    CHECK(a.pi == Vec(4, 0.25));

    Rng s4(7);
    CHECK_THROWS_AS(cl::init_clusters(std::vector<Vec>{Vec{0.0}}, 2, cl::Kind::kmeans, 1.0, s4),
                    data_error);

    // K = 1 seeds from a single sample point.
    Rng s5(8);
    const auto one = cl::init_clusters(z, 1, cl::Kind::kmeans, 1.0, s5);
    bool is_sample = false;
    for (const auto& p : z)
        if (p == one.means[0]) is_sample = true;
    CHECK(is_sample);

    // Two well-separated blobs: kmeans++ lands one seed per blob nearly always.
    Rng blob_rng(43);
    std::vector<Vec> blobs;
    for (int i = 0; i < 30; ++i) {
        blobs.push_back(Vec{blob_rng.normal() * 0.2, blob_rng.normal() * 0.2});
        blobs.push_back(Vec{20.0 + blob_rng.normal() * 0.2, blob_rng.normal() * 0.2});
    }
    std::size_t split_ok = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng sr(seed);
        const auto m = cl::init_clusters(blobs, 2, cl::Kind::kmeans, 1.0, sr);
        const bool left0 = m.means[0][0] < 10.0;
        const bool left1 = m.means[1][0] < 10.0;
        if (left0 != left1) ++split_ok;
    }
    CHECK(split_ok >= 99);
}

TEST_CASE("cluster model JSON round-trips") {
    cl::ClusterModel model;
    model.kind = cl::Kind::igmm;
    model.means = {Vec{0.5, 1.5}, Vec{-2.0, 0.25}};
    model.pi = {0.75, 0.25};
    model.sigma = 2.0;
    const auto text = cl::to_json(model);
    const auto back = cl::model_from_json(text);
    CHECK(back.kind == model.kind);
    CHECK(back.means == model.means);
    CHECK(back.pi == model.pi);
    CHECK(back.sigma == model.sigma);

    CHECK_THROWS_AS(cl::model_from_json("{\"kind\":\"ward\"}"), std::exception);
}

TEST_CASE("kmeans/igmm consistency: uniform pi gives identical assignments") {
    Rng rng(47);
    const auto z = random_points(rng, 60, 4);
    cl::ClusterModel model;
    model.kind = cl::Kind::igmm;
    model.means = random_points(rng, 5, 4);
    model.pi.assign(5, 0.2);
    CHECK(cl::igmm_e_step(model, z) == cl::kmeans_assign(model, z));
}
