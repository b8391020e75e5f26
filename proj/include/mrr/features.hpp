#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mrr/common.hpp"
#include "mrr/dataset.hpp"

namespace mrr::feat {

enum class Extractor { moment18x4, moment12x4, rawspace12x50, pca30, latent };
std::string_view extractor_name(Extractor e);

struct FeatureVector {
    std::string run_id;
    Vec values;
    Extractor tag = Extractor::moment18x4;
    double mrr = 0.0;
    data::Split split = data::Split::train;
    data::Wear wear = data::Wear::unknown;
};

struct Moments {
    double mean = 0.0;
    double stddev = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0;
};

// Population central moments: std = sqrt(E[(x-mu)^2]), skew = m3/std^3,
// kurt = m4/std^4. A (numerically) zero std yields skew = kurt = 0.
Moments central_moments(const Vec& series);

enum class MomentPreset { all18, retained12 };

// Canonical variable order, then (mean, std, skew, kurt) per variable.
// Dimension 72 for all18, 48 for retained12.
FeatureVector extract_moments(const data::WaferRun& run, MomentPreset preset);

// The 12 retained series, each linearly resampled to length 400 when needed,
// block-averaged by 8 down to 50, concatenated to 600 dims. No normalization.
Vec rawspace_raw(const data::WaferRun& run);

// Per-dimension min-max scaler fit on training vectors only.
class Normalizer {
public:
    static Normalizer fit(std::span<const Vec> train);
    Vec apply(const Vec& v) const;
    std::size_t dim() const { return min_.size(); }
    const Vec& minimums() const { return min_; }
    const Vec& maximums() const { return max_; }

private:
    Vec min_;
    Vec max_;
};

FeatureVector extract_rawspace(const data::WaferRun& run, const Normalizer& norm);

class PcaModel {
public:
    // Eigendecomposition of the population covariance of mean-centered
    // training data; keeps the top `components` eigenpairs, eigenvalues
    // descending. Sign convention: the largest-magnitude entry of each basis
    // vector is positive.
    static PcaModel fit(std::span<const Vec> train, std::size_t components);

    Vec project(const Vec& v) const;
    Vec reconstruct(const Vec& projected) const;

    std::size_t components() const { return basis_.rows; }
    std::size_t input_dim() const { return mean_.size(); }
    const Vec& eigenvalues() const { return eigenvalues_; }
    const Vec& mean() const { return mean_; }
    const Matrix& basis() const { return basis_; }  // components x dim, rows orthonormal

private:
    Vec mean_;
    Matrix basis_;
    Vec eigenvalues_;
};

FeatureVector project_pca(const PcaModel& model, const FeatureVector& raw600);

// Header: run_id,mrr,f0..f{D-1}
void write_features_csv(const std::filesystem::path& file,
                        std::span<const FeatureVector> features);

// Symmetric eigendecomposition by cyclic Jacobi rotations; returns
// (eigenvalues, eigenvector rows) sorted descending. Shared with the PCA
// fit and exposed for reuse.
std::pair<Vec, Matrix> symmetric_eigen(const Matrix& a);

}  // namespace mrr::feat
