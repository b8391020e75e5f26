#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mrr/network.hpp"
#include "mrr/rng.hpp"

using namespace mrr;

namespace {

std::vector<const Vec*> as_batch(const std::vector<Vec>& xs) {
    std::vector<const Vec*> out;
    for (const auto& x : xs) out.push_back(&x);
    return out;
}

nn::Network random_net(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
    return nn::init_network(sizes, seed);
}

std::vector<Vec> random_batch(Rng& rng, std::size_t n, std::size_t dim, double lo = 0.0,
                              double hi = 1.0) {
    std::vector<Vec> xs(n, Vec(dim));
    for (auto& x : xs)
        for (double& v : x) v = rng.uniform(lo, hi);
    return xs;
}

// Central finite differences over every parameter, against a loss functor.
template <typename Loss>
double max_grad_rel_error(nn::Network& net, const nn::Gradients& analytic, Loss loss,
                          double eps = 1e-5) {
    double worst = 0.0;
    auto probe = [&](double& param, double analytic_g) {
        const double keep = param;
        param = keep + eps;
        const double up = loss(net);
        param = keep - eps;
        const double down = loss(net);
        param = keep;
        const double fd = (up - down) / (2.0 * eps);
        const double denom = std::max({1e-8, std::fabs(fd), std::fabs(analytic_g)});
        worst = std::max(worst, std::fabs(fd - analytic_g) / denom);
    };
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        for (std::size_t k = 0; k < net.w[l].a.size(); ++k)
            probe(net.w[l].a[k], analytic.w[l].a[k]);
        for (std::size_t k = 0; k < net.b[l].size(); ++k) probe(net.b[l][k], analytic.b[l][k]);
    }
    return worst;
}

}  // namespace

TEST_CASE("init_network: shapes, determinism, zero velocities") {
    const auto net = nn::init_network({600, 500, 100}, 7);
    REQUIRE(net.layer_count() == 4);
    CHECK(net.w[0].rows == 500);
    CHECK(net.w[0].cols == 600);
    CHECK(net.w[1].rows == 100);
    CHECK(net.w[1].cols == 500);
    CHECK(net.w[2].rows == 500);
    CHECK(net.w[2].cols == 100);
    CHECK(net.w[3].rows == 600);
    CHECK(net.w[3].cols == 500);
    CHECK(net.act[0] == nn::Act::tanh_fn);
    CHECK(net.act[1] == nn::Act::sigmoid_fn);  // latent
    CHECK(net.act[2] == nn::Act::tanh_fn);
    CHECK(net.act[3] == nn::Act::sigmoid_fn);  // output
    CHECK(net.latent_dim() == 100);

    const auto again = nn::init_network({600, 500, 100}, 7);
    CHECK(net == again);
    CHECK(nn::init_network({600, 500, 100}, 8) != net);

    for (const auto& v : net.vw)
        for (double x : v.a) CHECK(x == 0.0);
    for (const auto& v : net.vb)
        for (double x : v) CHECK(x == 0.0);

    const double bound = 1.0 / std::sqrt(600.0);
    for (double x : net.w[0].a) {
        CHECK(x >= -bound);
        CHECK(x <= bound);
    }

    CHECK_THROWS_AS(nn::init_network({600, 0, 10}, 1), config_error);
    CHECK_THROWS_AS(nn::init_network({600}, 1), config_error);
}

TEST_CASE("forward: zero weights give z = 0.5, latent stays in (0,1)") {
    auto net = nn::init_network({6, 4, 3}, 1);
    for (auto& w : net.w) std::fill(w.a.begin(), w.a.end(), 0.0);
    const Vec x = {0.3, -1.0, 2.0, 0.1, 0.0, 5.0};
    const auto [z, y] = nn::forward(net, x);
    REQUIRE(z.size() == 3);
    for (double v : z) CHECK(v == 0.5);
    REQUIRE(y.size() == 6);
    for (double v : y) CHECK(v == 0.5);

    Rng rng(3);
    auto net2 = nn::init_network({6, 4, 3}, 2);
    for (int rep = 0; rep < 20; ++rep) {
        Vec xr(6);
        for (double& v : xr) v = rng.uniform(-4.0, 4.0);
        const Vec zr = nn::encode(net2, xr);
        for (double v : zr) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }

    CHECK_THROWS_AS(nn::encode(net2, Vec{1.0, 2.0}), data_error);
}

TEST_CASE("2-2-1 toy network matches a hand-computed latent") {
    auto net = nn::init_network({2, 2, 1}, 1);
    net.w[0].a = {0.5, -0.25, 0.1, 0.7};  // rows: hidden neuron weights
    net.b[0] = {0.05, -0.1};
    net.w[1].a = {0.3, -0.6};
    net.b[1] = {0.2};
    const Vec x = {0.8, -0.4};

    const long double h0 = std::tanh(0.5L * 0.8L + (-0.25L) * (-0.4L) + 0.05L);
    const long double h1 = std::tanh(0.1L * 0.8L + 0.7L * (-0.4L) - 0.1L);
    const long double a = 0.3L * h0 - 0.6L * h1 + 0.2L;
    const long double z_hand = 1.0L / (1.0L + std::exp(-a));

    const Vec z = nn::encode(net, x);
    REQUIRE(z.size() == 1);
    CHECK(z[0] == doctest::Approx(static_cast<double>(z_hand)).epsilon(1e-12));

    // decode runs the mirrored half.
    const Vec y = nn::decode(net, z);
    CHECK(y.size() == 2);
    const auto [z2, y2] = nn::forward(net, x);
    CHECK(z2 == z);
    CHECK(y2 == y);
}

TEST_CASE("reconstruction gradient is zero at a fixed point") {
    auto net = nn::init_network({4, 3, 2}, 5);
    for (auto& w : net.w) std::fill(w.a.begin(), w.a.end(), 0.0);
    for (auto& b : net.b) std::fill(b.begin(), b.end(), 0.0);
    // Zero net maps everything to 0.5, so x = 0.5 reproduces itself.
    const std::vector<Vec> xs = {Vec(4, 0.5)};
    auto g = nn::zero_gradients(net);
    const double loss = nn::grad_reconstruction(net, as_batch(xs), g);
    CHECK(loss == 0.0);
    for (const auto& w : g.w)
        for (double v : w.a) CHECK(v == 0.0);
    for (const auto& b : g.b)
        for (double v : b) CHECK(v == 0.0);
}

TEST_CASE("reconstruction gradients match central finite differences") {
    Rng rng(101);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto net = random_net({4, 3, 2}, 1000 + seed);
        const auto xs = random_batch(rng, 3, 4);
        const auto batch = as_batch(xs);
        auto g = nn::zero_gradients(net);
        nn::grad_reconstruction(net, batch, g);
        const double err = max_grad_rel_error(
            net, g, [&](const nn::Network& n) { return nn::reconstruction_loss(n, batch); });
        CHECK(err <= 1e-5);
    }
}

TEST_CASE("clustering gradients match central finite differences, decoder untouched") {
    Rng rng(202);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto net = random_net({3, 4, 2}, 2000 + seed);
        const auto xs = random_batch(rng, 3, 3);
        const auto batch = as_batch(xs);

        // Fixed targets, as the loss is evaluated with the assignment frozen.
        std::vector<Vec> targets_store;
        for (const auto* x : batch) {
            Vec t = nn::encode(net, *x);
            for (double& v : t) v += rng.uniform(-0.2, 0.2);
            targets_store.push_back(std::move(t));
        }
        const auto targets = as_batch(targets_store);

        auto g = nn::zero_gradients(net);
        nn::grad_clustering(net, batch, targets, g);

        // Decoder layers get no clustering gradient.
        for (std::size_t l = net.encoder_layer_count(); l < net.layer_count(); ++l) {
            for (double v : g.w[l].a) CHECK(v == 0.0);
            for (double v : g.b[l]) CHECK(v == 0.0);
        }

        const double err = max_grad_rel_error(net, g, [&](const nn::Network& n) {
            return nn::clustering_loss(n, batch, targets);
        });
        CHECK(err <= 1e-5);
    }
}

TEST_CASE("clustering gradient is zero when z sits on its mean") {
    auto net = random_net({3, 2}, 77);
    const std::vector<Vec> xs = {Vec{0.2, 0.4, 0.6}};
    const Vec z = nn::encode(net, xs[0]);
    cluster::ClusterModel model;
    model.kind = cluster::Kind::kmeans;
    model.means = {z};
    model.pi = {1.0};
    auto g = nn::zero_gradients(net);
    const double loss = nn::grad_clustering(net, as_batch(xs), model, g);
    CHECK(loss == 0.0);
    for (const auto& w : g.w)
        for (double v : w.a) CHECK(v == 0.0);
}

TEST_CASE("duplicated batch leaves the mean gradient unchanged") {
    Rng rng(303);
    auto net = random_net({4, 3, 2}, 42);
    const auto xs = random_batch(rng, 2, 4);
    std::vector<Vec> doubled = xs;
    doubled.insert(doubled.end(), xs.begin(), xs.end());

    auto g1 = nn::zero_gradients(net);
    auto g2 = nn::zero_gradients(net);
    nn::grad_reconstruction(net, as_batch(xs), g1);
    nn::grad_reconstruction(net, as_batch(doubled), g2);
    for (std::size_t l = 0; l < net.layer_count(); ++l)
        for (std::size_t k = 0; k < g1.w[l].a.size(); ++k)
            CHECK(g1.w[l].a[k] == doctest::Approx(g2.w[l].a[k]).epsilon(1e-14));
}

TEST_CASE("sgd with momentum follows the update rule") {
    SUBCASE("rho = 0 reduces to plain SGD") {
        auto net = random_net({2, 2}, 9);
        auto before = net;
        auto g = nn::zero_gradients(net);
        for (auto& w : g.w)
            for (double& v : w.a) v = 0.5;
        nn::sgd_momentum_step(net, g, 0.1, 0.0);
        for (std::size_t k = 0; k < net.w[0].a.size(); ++k)
            CHECK(net.w[0].a[k] == doctest::Approx(before.w[0].a[k] - 0.1 * 0.5).epsilon(1e-15));
    }

    SUBCASE("two steps with constant gradient accumulate the hand-iterated velocity") {
        const double rho = 0.98, eta = 0.05, grad = 0.7;
        auto net = random_net({2, 2}, 10);
        const double w0 = net.w[0].a[0];
        auto g = nn::zero_gradients(net);
        g.w[0].a[0] = grad;
        nn::sgd_momentum_step(net, g, eta, rho);
        nn::sgd_momentum_step(net, g, eta, rho);
        const double v1 = (1.0 - rho) * grad;
        const double v2 = rho * v1 + (1.0 - rho) * grad;
        CHECK(net.vw[0].a[0] == doctest::Approx(v2).epsilon(1e-15));
        CHECK(net.w[0].a[0] == doctest::Approx(w0 - eta * v1 - eta * v2).epsilon(1e-12));
    }

    SUBCASE("zero gradient and zero velocity is a fixed point") {
        auto net = random_net({3, 2}, 11);
        const auto before = net;
        const auto g = nn::zero_gradients(net);
        nn::sgd_momentum_step(net, g, 0.1, 0.9);
        CHECK(net == before);
    }

    SUBCASE("non-finite gradients abort") {
        auto net = random_net({3, 2}, 12);
        auto g = nn::zero_gradients(net);
        g.w[0].a[1] = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(nn::sgd_momentum_step(net, g, 0.1, 0.9), numeric_error);
    }
}

TEST_CASE("one small full-batch reconstruction step does not increase the loss") {
    Rng rng(404);
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto net = random_net({5, 3, 2}, 5000 + seed);
        const auto xs = random_batch(rng, 6, 5);
        const auto batch = as_batch(xs);
        auto g = nn::zero_gradients(net);
        const double before = nn::grad_reconstruction(net, batch, g);
        double norm2 = 0.0;
        for (const auto& w : g.w)
            for (double v : w.a) norm2 += v * v;
        nn::sgd_momentum_step(net, g, 1e-3, 0.0);
        const double after = nn::reconstruction_loss(net, batch);
        if (std::sqrt(norm2) >= 1e-12) {
            CHECK(after <= before + 1e-12);
            ++checked;
        }
    }
    CHECK(checked >= 95);  // essentially every random instance has gradient signal
}

TEST_CASE("reuse_weights deep-copies and zeroes the velocities") {
    auto net = random_net({4, 3}, 13);
    for (auto& v : net.vw)
        for (double& x : v.a) x = 0.25;
    auto copy = nn::reuse_weights(net);
    CHECK(copy.w == net.w);
    CHECK(copy.b == net.b);
    for (const auto& v : copy.vw)
        for (double x : v.a) CHECK(x == 0.0);
    copy.w[0].a[0] += 1.0;
    CHECK(copy.w[0].a[0] != net.w[0].a[0]);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    auto net = random_net({7, 5, 3}, 99);
    // Touch velocities so they are non-trivial in the file.
    auto g = nn::zero_gradients(net);
    for (auto& w : g.w)
        for (double& v : w.a) v = 0.01;
    nn::sgd_momentum_step(net, g, 0.1, 0.5);

    const auto file = std::filesystem::temp_directory_path() / "mrr_test_net.ckpt";
    nn::save_checkpoint(file, net);
    const auto loaded = nn::load_checkpoint(file);
    CHECK(loaded == net);

    const std::string json = nn::to_json(net);
    CHECK(json.find("encoder_sizes") != std::string::npos);
    std::filesystem::remove(file);
}
