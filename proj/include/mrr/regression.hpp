#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrr/common.hpp"
#include "mrr/features.hpp"

namespace mrr::reg {

struct RegressionModel {
    Vec coef;
    double intercept = 0.0;
    std::size_t dim = 0;
    double lambda_used = 0.0;
};

struct EvalResult {
    double rmse = 0.0;
    std::size_t n = 0;
    Vec residuals;  // y - yhat, in input order
    std::vector<std::string> run_ids;
};

// Minimizes sum (y - Xw - b)^2 + lambda ||w||^2 (intercept unpenalized) via
// the normal equations and a Cholesky solve. A singular system at lambda = 0
// is retried with lambda = 1e-8 and the value recorded in the model.
RegressionModel fit_ols(std::span<const feat::FeatureVector> x, double lambda = 0.0);

Vec predict(const RegressionModel& model, std::span<const feat::FeatureVector> x);
EvalResult evaluate(const RegressionModel& model, std::span<const feat::FeatureVector> x);

struct PerWearModels {
    std::optional<RegressionModel> low;
    std::optional<RegressionModel> high;
};

// One model per wear regime, each fit on that regime's train + validation
// pool. A wear with an empty pool yields an absent model.
PerWearModels fit_per_wear(std::span<const feat::FeatureVector> features, double lambda = 0.0);

}  // namespace mrr::reg
