#include "mrr/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "mrr/kernels.hpp"

namespace mrr::feat {

std::string_view extractor_name(Extractor e) {
    switch (e) {
        case Extractor::moment18x4: return "moment18x4";
        case Extractor::moment12x4: return "moment12x4";
        case Extractor::rawspace12x50: return "rawspace12x50";
        case Extractor::pca30: return "pca30";
        case Extractor::latent: return "latent";
    }
    return "?";
}

Moments central_moments(const Vec& series) {
    const std::size_t n = series.size();
    if (n < 2) throw data_error("central_moments requires a series of length >= 2");
    for (double v : series)
        if (!std::isfinite(v)) throw data_error("central_moments requires finite samples");

    const double mean = kern::sum(series.data(), n) / static_cast<double>(n);
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : series) {
        const double d = v - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    m2 *= inv_n;
    m3 *= inv_n;
    m4 *= inv_n;

    Moments out;
    out.mean = mean;
    const double std_ = std::sqrt(m2);
    // Flat traces (usage counters are often constant) have std rounded at the
    // ulp level; treat those as exactly degenerate.
    if (std_ <= 1e-12 * (1.0 + std::fabs(mean))) {
        out.stddev = 0.0;
        out.skewness = 0.0;
        out.kurtosis = 0.0;
        return out;
    }
    out.stddev = std_;
    out.skewness = m3 / (std_ * std_ * std_);
    out.kurtosis = m4 / (m2 * m2);
    return out;
}

FeatureVector extract_moments(const data::WaferRun& run, MomentPreset preset) {
    FeatureVector fv;
    fv.run_id = run.run_id;
    fv.mrr = run.mrr;
    fv.split = run.split;
    fv.wear = run.wear;
    fv.tag = preset == MomentPreset::all18 ? Extractor::moment18x4 : Extractor::moment12x4;

    auto emit = [&](const std::string& name) {
        auto it = run.series.find(name);
        if (it == run.series.end())
            throw data_error("run " + run.run_id + " is missing variable " + name);
        const Moments m = central_moments(it->second);
        fv.values.push_back(m.mean);
        fv.values.push_back(m.stddev);
        fv.values.push_back(m.skewness);
        fv.values.push_back(m.kurtosis);
    };

    if (preset == MomentPreset::all18) {
        for (const auto& name : data::variable_names()) emit(name);
    } else {
        for (const auto& name : data::retained_variable_names()) emit(name);
    }
    return fv;
}

namespace {

Vec resample_linear(const Vec& s, std::size_t target) {
    if (s.size() == target) return s;
    Vec out(target);
    const double scale = static_cast<double>(s.size() - 1) / static_cast<double>(target - 1);
    for (std::size_t i = 0; i < target; ++i) {
        const double pos = static_cast<double>(i) * scale;
        const std::size_t lo = std::min(static_cast<std::size_t>(pos), s.size() - 2);
        const double frac = pos - static_cast<double>(lo);
        out[i] = s[lo] * (1.0 - frac) + s[lo + 1] * frac;
    }
    return out;
}

}  // namespace

Vec rawspace_raw(const data::WaferRun& run) {
    constexpr std::size_t kSeriesLen = 400;
    constexpr std::size_t kBlock = 8;
    Vec out;
    out.reserve(12 * kSeriesLen / kBlock);
    for (const auto& name : data::retained_variable_names()) {
        auto it = run.series.find(name);
        if (it == run.series.end())
            throw data_error("run " + run.run_id + " is missing variable " + name);
        if (it->second.size() < kBlock)
            throw data_error("run " + run.run_id + " variable " + name +
                             ": series too short to downsample by 8");
        const Vec s = resample_linear(it->second, kSeriesLen);
        for (std::size_t b = 0; b < kSeriesLen / kBlock; ++b) {
            out.push_back(kern::sum(s.data() + b * kBlock, kBlock) /
                          static_cast<double>(kBlock));
        }
    }
    return out;
}

Normalizer Normalizer::fit(std::span<const Vec> train) {
    if (train.empty()) throw data_error("Normalizer::fit requires at least one vector");
    Normalizer norm;
    norm.min_ = train[0];
    norm.max_ = train[0];
    for (const Vec& v : train) {
        if (v.size() != norm.min_.size())
            throw data_error("Normalizer::fit: inconsistent dimensions");
        for (std::size_t j = 0; j < v.size(); ++j) {
            norm.min_[j] = std::min(norm.min_[j], v[j]);
            norm.max_[j] = std::max(norm.max_[j], v[j]);
        }
    }
    return norm;
}

Vec Normalizer::apply(const Vec& v) const {
    if (v.size() != min_.size()) throw data_error("Normalizer::apply: dimension mismatch");
    Vec out(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) {
        const double range = max_[j] - min_[j];
        out[j] = range > 0.0 ? (v[j] - min_[j]) / range : 0.0;
    }
    return out;
}

FeatureVector extract_rawspace(const data::WaferRun& run, const Normalizer& norm) {
    FeatureVector fv;
    fv.run_id = run.run_id;
    fv.mrr = run.mrr;
    fv.split = run.split;
    fv.wear = run.wear;
    fv.tag = Extractor::rawspace12x50;
    fv.values = norm.apply(rawspace_raw(run));
    return fv;
}

std::pair<Vec, Matrix> symmetric_eigen(const Matrix& a_in) {
    if (a_in.rows != a_in.cols) throw numeric_error("symmetric_eigen: matrix must be square");
    const std::size_t n = a_in.rows;
    Matrix a = a_in;
    Matrix vt(n, n);  // rows are eigenvectors
    for (std::size_t i = 0; i < n; ++i) vt(i, i) = 1.0;

    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    double norm0 = std::sqrt(2.0 * off);
    if (norm0 == 0.0) norm0 = 1.0;

    constexpr int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double off1 = 0.0, off2 = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                off1 += std::fabs(a(p, q));
                off2 += a(p, q) * a(p, q);
            }
        }
        if (std::sqrt(2.0 * off2) <= 1e-13 * norm0) break;
        // Early sweeps skip negligible elements (Numerical Recipes rule);
        // later sweeps rotate everything that is not exactly zero.
        const double thresh = sweep < 4 ? 0.2 * off1 / static_cast<double>(n * n) : 0.0;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0 || std::fabs(apq) <= thresh) continue;
                const double app = a(p, p);
                const double aqq = a(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                kern::rot(a.row(p), a.row(q), c, s, n);
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a(i, p);
                    const double aiq = a(i, q);
                    a(i, p) = c * aip - s * aiq;
                    a(i, q) = s * aip + c * aiq;
                }
                kern::rot(vt.row(p), vt.row(q), c, s, n);
            }
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

    Vec values(n);
    Matrix vectors(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        values[i] = a(order[i], order[i]);
        const double* src = vt.row(order[i]);
        std::copy(src, src + n, vectors.row(i));
    }
    return {std::move(values), std::move(vectors)};
}

PcaModel PcaModel::fit(std::span<const Vec> train, std::size_t components) {
    if (components == 0) throw config_error("PCA needs at least one component");
    if (train.size() <= components)
        throw data_error("PCA fit needs more samples than components: have " +
                         std::to_string(train.size()) + ", want > " + std::to_string(components));
    const std::size_t dim = train[0].size();
    if (components > dim) throw config_error("PCA components exceed input dimension");

    PcaModel model;
    model.mean_.assign(dim, 0.0);
    for (const Vec& v : train) {
        if (v.size() != dim) throw data_error("PCA fit: inconsistent dimensions");
        kern::axpy(1.0, v.data(), model.mean_.data(), dim);
    }
    const double inv_n = 1.0 / static_cast<double>(train.size());
    for (double& m : model.mean_) m *= inv_n;

    Matrix cov(dim, dim);
    Vec centered(dim);
    for (const Vec& v : train) {
        for (std::size_t j = 0; j < dim; ++j) centered[j] = v[j] - model.mean_[j];
        // Upper triangle only; mirrored afterwards.
        for (std::size_t i = 0; i < dim; ++i)
            kern::axpy(centered[i] * inv_n, centered.data() + i, cov.row(i) + i, dim - i);
    }
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < i; ++j) cov(i, j) = cov(j, i);

    auto [values, vectors] = symmetric_eigen(cov);

    model.eigenvalues_.assign(values.begin(), values.begin() + components);
    model.basis_ = Matrix(components, dim);
    for (std::size_t c = 0; c < components; ++c) {
        const double* src = vectors.row(c);
        double* dst = model.basis_.row(c);
        std::copy(src, src + dim, dst);
        std::size_t arg = 0;
        for (std::size_t j = 1; j < dim; ++j)
            if (std::fabs(dst[j]) > std::fabs(dst[arg])) arg = j;
        if (dst[arg] < 0.0)
            for (std::size_t j = 0; j < dim; ++j) dst[j] = -dst[j];
    }
    return model;
}

Vec PcaModel::project(const Vec& v) const {
    if (v.size() != mean_.size()) throw data_error("PCA project: dimension mismatch");
    Vec centered(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) centered[j] = v[j] - mean_[j];
    Vec out(basis_.rows);
    kern::matvec(basis_.a.data(), basis_.rows, basis_.cols, centered.data(), nullptr, out.data());
    return out;
}

Vec PcaModel::reconstruct(const Vec& projected) const {
    if (projected.size() != basis_.rows) throw data_error("PCA reconstruct: dimension mismatch");
    Vec out = mean_;
    for (std::size_t c = 0; c < basis_.rows; ++c)
        kern::axpy(projected[c], basis_.row(c), out.data(), basis_.cols);
    return out;
}

FeatureVector project_pca(const PcaModel& model, const FeatureVector& raw600) {
    FeatureVector fv = raw600;
    fv.tag = Extractor::pca30;
    fv.values = model.project(raw600.values);
    return fv;
}

void write_features_csv(const std::filesystem::path& file,
                        std::span<const FeatureVector> features) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw data_error("cannot write " + file.string());
    const std::size_t dim = features.empty() ? 0 : features[0].values.size();
    out << "run_id,mrr";
    for (std::size_t j = 0; j < dim; ++j) out << ",f" << j;
    out << '\n';
    char buf[32];
    for (const auto& fv : features) {
        if (fv.values.size() != dim) throw data_error("feature dimensions are inconsistent");
        out << fv.run_id;
        auto [pm, _] = std::to_chars(buf, buf + sizeof buf, fv.mrr);
        out << ',' << std::string_view(buf, pm);
        for (double v : fv.values) {
            auto [p, __] = std::to_chars(buf, buf + sizeof buf, v);
            out << ',' << std::string_view(buf, p);
        }
        out << '\n';
    }
}

}  // namespace mrr::feat
