// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma; it must only be entered after the runtime CPUID check in
// kernels.cpp.

#include <immintrin.h>

#include "mrr/kernels.hpp"

namespace mrr::kern::avx2 {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swap = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swap));
}

}  // namespace

void matvec(const double* A, std::size_t m, std::size_t n, const double* x, const double* bias,
            double* y) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = A + i * n;
        __m256d acc0 = _mm256_setzero_pd();
        __m256d acc1 = _mm256_setzero_pd();
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8) {
            acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(row + j), _mm256_loadu_pd(x + j), acc0);
            acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(row + j + 4), _mm256_loadu_pd(x + j + 4), acc1);
        }
        for (; j + 4 <= n; j += 4) {
            acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(row + j), _mm256_loadu_pd(x + j), acc0);
        }
        double acc = hsum(_mm256_add_pd(acc0, acc1));
        for (; j < n; ++j) acc += row[j] * x[j];
        y[i] = bias ? acc + bias[i] : acc;
    }
}

void matvec_t(const double* A, std::size_t m, std::size_t n, const double* x, double* y) {
    std::size_t j = 0;
    const __m256d zero = _mm256_setzero_pd();
    for (; j + 4 <= n; j += 4) _mm256_storeu_pd(y + j, zero);
    for (; j < n; ++j) y[j] = 0.0;

    for (std::size_t i = 0; i < m; ++i) {
        const double* row = A + i * n;
        const __m256d xi = _mm256_set1_pd(x[i]);
        std::size_t k = 0;
        for (; k + 4 <= n; k += 4) {
            __m256d acc = _mm256_loadu_pd(y + k);
            acc = _mm256_fmadd_pd(xi, _mm256_loadu_pd(row + k), acc);
            _mm256_storeu_pd(y + k, acc);
        }
        const double xs = x[i];
        for (; k < n; ++k) y[k] += xs * row[k];
    }
}

void ger(double alpha, const double* x, std::size_t m, const double* y, std::size_t n, double* A) {
    for (std::size_t i = 0; i < m; ++i) {
        double* row = A + i * n;
        const double axi = alpha * x[i];
        const __m256d va = _mm256_set1_pd(axi);
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            __m256d acc = _mm256_loadu_pd(row + j);
            acc = _mm256_fmadd_pd(va, _mm256_loadu_pd(y + j), acc);
            _mm256_storeu_pd(row + j, acc);
        }
        for (; j < n; ++j) row[j] += axi * y[j];
    }
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        __m256d acc = _mm256_loadu_pd(y + j);
        acc = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + j), acc);
        _mm256_storeu_pd(y + j, acc);
    }
    for (; j < n; ++j) y[j] += alpha * x[j];
}

void axpby(double alpha, const double* x, double beta, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    const __m256d vb = _mm256_set1_pd(beta);
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        __m256d t = _mm256_mul_pd(vb, _mm256_loadu_pd(y + j));
        t = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + j), t);
        _mm256_storeu_pd(y + j, t);
    }
    for (; j < n; ++j) y[j] = alpha * x[j] + beta * y[j];
}

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + j + 4), _mm256_loadu_pd(b + j + 4), acc1);
    }
    for (; j + 4 <= n; j += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j), acc0);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; j < n; ++j) acc += a[j] * b[j];
    return acc;
}

double sum(const double* a, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + j));
    double acc = hsum(acc0);
    for (; j < n; ++j) acc += a[j];
    return acc;
}

double sqdist(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j));
        acc0 = _mm256_fmadd_pd(d, d, acc0);
    }
    double acc = hsum(acc0);
    for (; j < n; ++j) {
        const double d = a[j] - b[j];
        acc += d * d;
    }
    return acc;
}

void rot(double* x, double* y, double c, double s, std::size_t n) {
    const __m256d vc = _mm256_set1_pd(c);
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        const __m256d xv = _mm256_loadu_pd(x + j);
        const __m256d yv = _mm256_loadu_pd(y + j);
        _mm256_storeu_pd(x + j, _mm256_fmsub_pd(vc, xv, _mm256_mul_pd(vs, yv)));
        _mm256_storeu_pd(y + j, _mm256_fmadd_pd(vs, xv, _mm256_mul_pd(vc, yv)));
    }
    for (; j < n; ++j) {
        const double xj = x[j];
        const double yj = y[j];
        x[j] = c * xj - s * yj;
        y[j] = s * xj + c * yj;
    }
}

}  // namespace mrr::kern::avx2
