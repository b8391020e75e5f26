#include "mrr/regression.hpp"

#include <cmath>

#include "mrr/kernels.hpp"

namespace mrr::reg {

namespace {

// In-place Cholesky of a symmetric positive-definite matrix; returns false
// when a pivot degenerates.
bool cholesky(Matrix& a) {
    const std::size_t n = a.rows;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j) - kern::dot(a.row(i), a.row(j), j);
            if (i == j) {
                if (!(s > 0.0) || !std::isfinite(s)) return false;
                a(i, i) = std::sqrt(s);
            } else {
                a(i, j) = s / a(j, j);
            }
        }
    }
    return true;
}

Vec cholesky_solve(const Matrix& l, const Vec& rhs) {
    const std::size_t n = l.rows;
    Vec y(n);
    for (std::size_t i = 0; i < n; ++i)
        y[i] = (rhs[i] - kern::dot(l.row(i), y.data(), i)) / l(i, i);
    Vec x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = y[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
        x[i] = s / l(i, i);
    }
    return x;
}

}  // namespace

RegressionModel fit_ols(std::span<const feat::FeatureVector> x, double lambda) {
    if (x.empty()) throw data_error("fit_ols requires at least one sample");
    if (lambda < 0.0) throw config_error("ridge lambda must be >= 0");
    const std::size_t dim = x[0].values.size();
    const std::size_t aug = dim + 1;  // intercept column last

    // Normal system over [X 1].
    Matrix xtx(aug, aug);
    Vec xty(aug, 0.0);
    for (const auto& fv : x) {
        if (fv.values.size() != dim) throw data_error("fit_ols: inconsistent feature dimensions");
        const double* v = fv.values.data();
        for (std::size_t i = 0; i < dim; ++i)
            kern::axpy(v[i], v + i, xtx.row(i) + i, dim - i);  // upper triangle
        for (std::size_t i = 0; i < dim; ++i) xtx(i, dim) += v[i];
        xtx(dim, dim) += 1.0;
        kern::axpy(fv.mrr, v, xty.data(), dim);
        xty[dim] += fv.mrr;
    }
    for (std::size_t i = 0; i < aug; ++i)
        for (std::size_t j = 0; j < i; ++j) xtx(i, j) = xtx(j, i);

    auto solve_with = [&](double lam) -> std::optional<Vec> {
        Matrix a = xtx;
        for (std::size_t i = 0; i < dim; ++i) a(i, i) += lam;  // intercept unpenalized
        if (!cholesky(a)) return std::nullopt;
        return cholesky_solve(a, xty);
    };

    double lam = lambda;
    auto solution = solve_with(lam);
    if (!solution && lambda == 0.0) {
        lam = 1e-8;
        solution = solve_with(lam);
    }
    if (!solution)
        throw numeric_error("normal equations are singular even with the ridge fallback");

    RegressionModel model;
    model.dim = dim;
    model.lambda_used = lam;
    model.coef.assign(solution->begin(), solution->begin() + dim);
    model.intercept = (*solution)[dim];
    for (double c : model.coef)
        if (!std::isfinite(c)) throw numeric_error("regression produced non-finite coefficients");
    if (!std::isfinite(model.intercept))
        throw numeric_error("regression produced a non-finite intercept");
    return model;
}

Vec predict(const RegressionModel& model, std::span<const feat::FeatureVector> x) {
    Vec out;
    out.reserve(x.size());
    for (const auto& fv : x) {
        if (fv.values.size() != model.dim)
            throw data_error("predict: feature dimension does not match the model");
        out.push_back(kern::dot(model.coef.data(), fv.values.data(), model.dim) +
                      model.intercept);
    }
    return out;
}

EvalResult evaluate(const RegressionModel& model, std::span<const feat::FeatureVector> x) {
    if (x.empty()) throw data_error("evaluate requires at least one sample");
    const Vec yhat = predict(model, x);
    EvalResult res;
    res.n = x.size();
    res.residuals.reserve(x.size());
    res.run_ids.reserve(x.size());
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = x[i].mrr - yhat[i];
        res.residuals.push_back(r);
        res.run_ids.push_back(x[i].run_id);
        sse += r * r;
    }
    res.rmse = std::sqrt(sse / static_cast<double>(x.size()));
    return res;
}

PerWearModels fit_per_wear(std::span<const feat::FeatureVector> features, double lambda) {
    std::vector<feat::FeatureVector> low_pool, high_pool;
    for (const auto& fv : features) {
        if (fv.split == data::Split::test) continue;
        if (fv.wear == data::Wear::low) low_pool.push_back(fv);
        else if (fv.wear == data::Wear::high) high_pool.push_back(fv);
    }
    PerWearModels out;
    if (!low_pool.empty()) out.low = fit_ols(low_pool, lambda);
    if (!high_pool.empty()) out.high = fit_ols(high_pool, lambda);
    return out;
}

}  // namespace mrr::reg
