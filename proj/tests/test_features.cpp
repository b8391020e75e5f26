#include <doctest.h>

#include <cmath>

#include "mrr/features.hpp"
#include "mrr/rng.hpp"

using namespace mrr;

namespace {

// Independent oracle: moments straight from the definition sums in long
// double, no shared code with the implementation.
feat::Moments oracle_moments(const Vec& s) {
    long double mean = 0.0L;
    for (double v : s) mean += v;
    mean /= static_cast<long double>(s.size());
    long double m2 = 0.0L, m3 = 0.0L, m4 = 0.0L;
    for (double v : s) {
        const long double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= s.size();
    m3 /= s.size();
    m4 /= s.size();
    feat::Moments out;
    out.mean = static_cast<double>(mean);
    out.stddev = static_cast<double>(std::sqrt(m2));
    out.skewness = m2 > 0 ? static_cast<double>(m3 / std::pow(m2, 1.5L)) : 0.0;
    out.kurtosis = m2 > 0 ? static_cast<double>(m4 / (m2 * m2)) : 0.0;
    return out;
}

data::WaferRun make_run(std::uint64_t seed, std::size_t len = 400) {
    Rng rng(seed);
    data::WaferRun run;
    run.run_id = "toy";
    run.mrr = 75.0;
    run.wear = data::Wear::low;
    for (const auto& name : data::variable_names()) {
        Vec s(len);
        for (double& v : s) v = rng.uniform(-2.0, 5.0);
        run.series[name] = std::move(s);
    }
    return run;
}

// Independent eigensolver for the oracle: plain cyclic Jacobi written
// against the Gram matrix route, no shared code with the implementation.
Vec oracle_gram_eigenvalues(const std::vector<Vec>& rows) {
    const std::size_t n = rows.size();
    const std::size_t d = rows[0].size();
    std::vector<long double> mean(d, 0.0L);
    for (const auto& r : rows)
        for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
    for (auto& m : mean) m /= static_cast<long double>(n);

    std::vector<std::vector<long double>> g(n, std::vector<long double>(n, 0.0L));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = i; k < n; ++k) {
            long double acc = 0.0L;
            for (std::size_t j = 0; j < d; ++j)
                acc += (rows[i][j] - mean[j]) * (rows[k][j] - mean[j]);
            g[i][k] = g[k][i] = acc / static_cast<long double>(n);
        }
    }

    for (int sweep = 0; sweep < 200; ++sweep) {
        long double off = 0.0L;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += g[p][q] * g[p][q];
        if (off < 1e-30L) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (g[p][q] == 0.0L) continue;
                const long double theta = (g[q][q] - g[p][p]) / (2.0L * g[p][q]);
                const long double t =
                    (theta >= 0 ? 1.0L : -1.0L) / (std::fabs(theta) + std::sqrt(theta * theta + 1));
                const long double c = 1.0L / std::sqrt(t * t + 1);
                const long double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const long double gip = g[i][p], giq = g[i][q];
                    g[i][p] = c * gip - s * giq;
                    g[i][q] = s * gip + c * giq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const long double gpi = g[p][i], gqi = g[q][i];
                    g[p][i] = c * gpi - s * gqi;
                    g[q][i] = s * gpi + c * gqi;
                }
            }
        }
    }
    Vec vals(n);
    for (std::size_t i = 0; i < n; ++i) vals[i] = static_cast<double>(g[i][i]);
    std::sort(vals.begin(), vals.end(), std::greater<double>());
    return vals;
}

}  // namespace

TEST_CASE("central moments: degenerate and symmetric cases") {
    const auto flat = feat::central_moments({5.0, 5.0, 5.0, 5.0});
    CHECK(flat.mean == 5.0);
    CHECK(flat.stddev == 0.0);
    CHECK(flat.skewness == 0.0);
    CHECK(flat.kurtosis == 0.0);

    // Constant values whose mean rounds at the ulp level must still count as
    // degenerate.
    const auto tenth = feat::central_moments({0.1, 0.1, 0.1});
    CHECK(tenth.stddev == 0.0);
    CHECK(tenth.skewness == 0.0);

    const auto sym = feat::central_moments({-1.0, 0.0, 1.0});
    CHECK(sym.skewness == 0.0);

    CHECK_THROWS_AS(feat::central_moments({1.0}), data_error);
}

TEST_CASE("central moments match the direct-summation oracle") {
    const Vec probe = {0.0, 0.0, 0.0, 1.0};
    const auto got = feat::central_moments(probe);
    const auto want = oracle_moments(probe);
    CHECK(got.mean == doctest::Approx(want.mean).epsilon(1e-12));
    CHECK(got.stddev == doctest::Approx(want.stddev).epsilon(1e-12));
    CHECK(got.skewness == doctest::Approx(want.skewness).epsilon(1e-12));
    CHECK(got.kurtosis == doctest::Approx(want.kurtosis).epsilon(1e-12));

    Rng rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        Vec s(2 + rng.index(40));
        for (double& v : s) v = rng.uniform(-100.0, 100.0);
        const auto a = feat::central_moments(s);
        const auto b = oracle_moments(s);
        CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-10));
        CHECK(a.stddev == doctest::Approx(b.stddev).epsilon(1e-10));
        CHECK(a.skewness == doctest::Approx(b.skewness).epsilon(1e-8));
        CHECK(a.kurtosis == doctest::Approx(b.kurtosis).epsilon(1e-8));
    }
}

TEST_CASE("extract_moments dimensions and composition") {
    const auto run = make_run(21, 64);
    const auto fv18 = feat::extract_moments(run, feat::MomentPreset::all18);
    const auto fv12 = feat::extract_moments(run, feat::MomentPreset::retained12);
    CHECK(fv18.values.size() == 72);
    CHECK(fv18.tag == feat::Extractor::moment18x4);
    CHECK(fv12.values.size() == 48);
    CHECK(fv12.tag == feat::Extractor::moment12x4);
    CHECK(fv18.mrr == run.mrr);

    // Composition: the vector is exactly the per-variable moments in
    // canonical order.
    std::size_t at = 0;
    for (const auto& name : data::variable_names()) {
        const auto m = feat::central_moments(run.series.at(name));
        CHECK(fv18.values[at++] == m.mean);
        CHECK(fv18.values[at++] == m.stddev);
        CHECK(fv18.values[at++] == m.skewness);
        CHECK(fv18.values[at++] == m.kurtosis);
    }

    data::WaferRun constant = run;
    for (auto& [name, s] : constant.series) std::fill(s.begin(), s.end(), 3.5);
    const auto fvc = feat::extract_moments(constant, feat::MomentPreset::all18);
    for (std::size_t v = 0; v < 18; ++v) {
        CHECK(fvc.values[4 * v + 0] == 3.5);
        CHECK(fvc.values[4 * v + 1] == 0.0);
        CHECK(fvc.values[4 * v + 2] == 0.0);
        CHECK(fvc.values[4 * v + 3] == 0.0);
    }
}

TEST_CASE("rawspace block means and dimension") {
    auto run = make_run(31, 400);
    // Ramp 0..399 on the first retained variable: block means 3.5, 11.5, ...
    Vec ramp(400);
    for (std::size_t i = 0; i < 400; ++i) ramp[i] = static_cast<double>(i);
    run.series["usage_backing_film"] = ramp;

    const Vec raw = feat::rawspace_raw(run);
    CHECK(raw.size() == 600);
    for (std::size_t b = 0; b < 50; ++b)
        CHECK(raw[b] == doctest::Approx(8.0 * b + 3.5).epsilon(1e-13));

    data::WaferRun constant = run;
    for (auto& [name, s] : constant.series) std::fill(s.begin(), s.end(), 2.25);
    const Vec craw = feat::rawspace_raw(constant);
    for (double v : craw) CHECK(v == doctest::Approx(2.25).epsilon(1e-14));

    data::WaferRun tiny = run;
    tiny.series["usage_dresser"] = Vec{1.0, 2.0, 3.0};  // shorter than one block
    CHECK_THROWS_AS(feat::rawspace_raw(tiny), data_error);
}

TEST_CASE("rawspace is affine-equivariant before normalization") {
    const auto run = make_run(41, 200);  // also exercises the 200 -> 400 resample
    data::WaferRun scaled = run;
    const double a = 2.5, b = -1.25;
    for (auto& [name, s] : scaled.series)
        for (double& v : s) v = a * v + b;
    const Vec r0 = feat::rawspace_raw(run);
    const Vec r1 = feat::rawspace_raw(scaled);
    for (std::size_t j = 0; j < r0.size(); ++j)
        CHECK(r1[j] == doctest::Approx(a * r0[j] + b).epsilon(1e-12));
}

TEST_CASE("normalizer: train-only fit, [0,1] on train, constant dims to 0") {
    Rng rng(5);
    std::vector<Vec> train(8, Vec(5));
    for (auto& v : train)
        for (std::size_t j = 0; j < 4; ++j) v[j] = rng.uniform(-3.0, 3.0);
    for (auto& v : train) v[4] = 7.0;  // constant dimension

    const auto norm = feat::Normalizer::fit(train);
    for (const auto& v : train) {
        const Vec n = norm.apply(v);
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(n[j] >= 0.0);
            CHECK(n[j] <= 1.0);
        }
        CHECK(n[4] == 0.0);
    }

    // Values outside the training range extrapolate linearly; the fitted
    // bounds do not move.
    Vec outside = {100.0, 100.0, 100.0, 100.0, 7.0};
    const Vec n1 = norm.apply(outside);
    CHECK(n1[0] > 1.0);
    CHECK(norm.minimums() == feat::Normalizer::fit(train).minimums());

    const Vec again = norm.apply(outside);
    CHECK(n1 == again);
}

TEST_CASE("pca: rank-1 data concentrates in the first eigenvalue") {
    Rng rng(17);
    Vec direction(40);
    for (double& v : direction) v = rng.normal();
    std::vector<Vec> train;
    for (int i = 0; i < 50; ++i) {
        const double t = rng.uniform(-2.0, 2.0);
        Vec v(40);
        for (std::size_t j = 0; j < 40; ++j) v[j] = 0.5 + t * direction[j];
        train.push_back(std::move(v));
    }
    const auto model = feat::PcaModel::fit(train, 10);
    const auto& ev = model.eigenvalues();
    CHECK(ev[0] > 0.0);
    for (std::size_t k = 1; k < ev.size(); ++k) CHECK(std::fabs(ev[k]) <= 1e-8 * ev[0]);
}

TEST_CASE("pca basis is orthonormal and low-rank data round-trips") {
    Rng rng(23);
    // Data spanning an 8-dim subspace of R^30; 8 components must reconstruct
    // exactly.
    std::vector<Vec> basis(8, Vec(30));
    for (auto& b : basis)
        for (double& v : b) v = rng.normal();
    std::vector<Vec> train;
    for (int i = 0; i < 60; ++i) {
        Vec v(30, 0.0);
        for (const auto& b : basis) {
            const double t = rng.normal();
            for (std::size_t j = 0; j < 30; ++j) v[j] += t * b[j];
        }
        train.push_back(std::move(v));
    }
    const auto model = feat::PcaModel::fit(train, 8);

    const auto& g = model.basis();
    for (std::size_t i = 0; i < g.rows; ++i) {
        for (std::size_t j = 0; j < g.rows; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < g.cols; ++k) dot += g(i, k) * g(j, k);
            CHECK(std::fabs(dot - (i == j ? 1.0 : 0.0)) <= 1e-8);
        }
    }

    for (int i = 0; i < 5; ++i) {
        const Vec& x = train[i];
        const Vec rec = model.reconstruct(model.project(x));
        for (std::size_t j = 0; j < x.size(); ++j)
            CHECK(rec[j] == doctest::Approx(x[j]).epsilon(1e-8));
    }

    // Eigenvalues descending.
    for (std::size_t k = 1; k < model.eigenvalues().size(); ++k)
        CHECK(model.eigenvalues()[k - 1] >= model.eigenvalues()[k] - 1e-12);
}

TEST_CASE("pca eigenvalues match the independent Gram-matrix oracle") {
    Rng rng(29);
    std::vector<Vec> train;
    for (int i = 0; i < 20; ++i) {
        Vec v(600);
        for (double& x : v) x = rng.uniform(0.0, 1.0);
        train.push_back(std::move(v));
    }
    const auto model = feat::PcaModel::fit(train, 19);
    const Vec oracle = oracle_gram_eigenvalues(train);

    double retained = 0.0, captured = 0.0;
    for (std::size_t k = 0; k < 19; ++k) {
        CHECK(model.eigenvalues()[k] == doctest::Approx(oracle[k]).epsilon(1e-8));
        retained += model.eigenvalues()[k];
        captured += oracle[k];
    }
    CHECK(retained == doctest::Approx(captured).epsilon(1e-10));

    CHECK_THROWS_AS(feat::PcaModel::fit(train, 20), data_error);  // needs > components samples
}

TEST_CASE("sign convention makes the basis deterministic") {
    Rng rng(37);
    std::vector<Vec> train;
    for (int i = 0; i < 25; ++i) {
        Vec v(12);
        for (double& x : v) x = rng.normal();
        train.push_back(std::move(v));
    }
    const auto a = feat::PcaModel::fit(train, 5);
    const auto b = feat::PcaModel::fit(train, 5);
    CHECK(a.basis() == b.basis());
    for (std::size_t c = 0; c < a.basis().rows; ++c) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < a.basis().cols; ++j)
            if (std::fabs(a.basis()(c, j)) > std::fabs(a.basis()(c, arg))) arg = j;
        CHECK(a.basis()(c, arg) > 0.0);
    }
}
