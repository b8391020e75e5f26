#pragma once

#include <cstddef>
#include <string_view>

// Data-parallel inner loops used by the feature, network, clustering and
// regression code. Every kernel has a scalar reference implementation and,
// on x86-64, an AVX2+FMA variant; the active backend is picked once at
// runtime from CPUID (override with set_backend or MRR_KERNELS=scalar).
// The two backends may differ in the last bits because vector accumulation
// reassociates sums; the equivalence tests bound that difference.

namespace mrr::kern {

enum class Backend { scalar, avx2 };

Backend active_backend();
void set_backend(Backend b);  // throws config_error if unsupported on this CPU
bool backend_available(Backend b);
std::string_view backend_name(Backend b);

// y = A x + bias (bias may be null). A is row-major m x n.
void matvec(const double* A, std::size_t m, std::size_t n, const double* x, const double* bias,
            double* y);

// y = A^T x. A is row-major m x n, x has m entries, y has n entries.
void matvec_t(const double* A, std::size_t m, std::size_t n, const double* x, double* y);

// A += alpha * x y^T. A is row-major m x n.
void ger(double alpha, const double* x, std::size_t m, const double* y, std::size_t n, double* A);

// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);

// y = alpha * x + beta * y
void axpby(double alpha, const double* x, double beta, double* y, std::size_t n);

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double sqdist(const double* a, const double* b, std::size_t n);

// Plane rotation: (x, y) <- (c x - s y, s x + c y). Used by the Jacobi
// eigensolver.
void rot(double* x, double* y, double c, double s, std::size_t n);

// Reference implementations, always available. The dispatch table and the
// equivalence tests point at these.
namespace scalar {
void matvec(const double* A, std::size_t m, std::size_t n, const double* x, const double* bias,
            double* y);
void matvec_t(const double* A, std::size_t m, std::size_t n, const double* x, double* y);
void ger(double alpha, const double* x, std::size_t m, const double* y, std::size_t n, double* A);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void axpby(double alpha, const double* x, double beta, double* y, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double sqdist(const double* a, const double* b, std::size_t n);
void rot(double* x, double* y, double c, double s, std::size_t n);
}  // namespace scalar

#ifdef MRR_HAVE_AVX2
namespace avx2 {
void matvec(const double* A, std::size_t m, std::size_t n, const double* x, const double* bias,
            double* y);
void matvec_t(const double* A, std::size_t m, std::size_t n, const double* x, double* y);
void ger(double alpha, const double* x, std::size_t m, const double* y, std::size_t n, double* A);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void axpby(double alpha, const double* x, double beta, double* y, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double sqdist(const double* a, const double* b, std::size_t n);
void rot(double* x, double* y, double c, double s, std::size_t n);
}  // namespace avx2
#endif

}  // namespace mrr::kern
