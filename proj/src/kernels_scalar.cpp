#include "mrr/kernels.hpp"

namespace mrr::kern::scalar {

void matvec(const double* A, std::size_t m, std::size_t n, const double* x, const double* bias,
            double* y) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = A + i * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
        y[i] = bias ? acc + bias[i] : acc;
    }
}

void matvec_t(const double* A, std::size_t m, std::size_t n, const double* x, double* y) {
    for (std::size_t j = 0; j < n; ++j) y[j] = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = A + i * n;
        const double xi = x[i];
        for (std::size_t j = 0; j < n; ++j) y[j] += xi * row[j];
    }
}

void ger(double alpha, const double* x, std::size_t m, const double* y, std::size_t n, double* A) {
    for (std::size_t i = 0; i < m; ++i) {
        double* row = A + i * n;
        const double axi = alpha * x[i];
        for (std::size_t j = 0; j < n; ++j) row[j] += axi * y[j];
    }
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) y[j] += alpha * x[j];
}

void axpby(double alpha, const double* x, double beta, double* y, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) y[j] = alpha * x[j] + beta * y[j];
}

double dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += a[j] * b[j];
    return acc;
}

double sum(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += a[j];
    return acc;
}

double sqdist(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double d = a[j] - b[j];
        acc += d * d;
    }
    return acc;
}

void rot(double* x, double* y, double c, double s, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        const double xj = x[j];
        const double yj = y[j];
        x[j] = c * xj - s * yj;
        y[j] = s * xj + c * yj;
    }
}

}  // namespace mrr::kern::scalar
