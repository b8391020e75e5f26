#include "mrr/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "mrr/common.hpp"

namespace mrr::kern {

namespace {

struct Table {
    void (*matvec)(const double*, std::size_t, std::size_t, const double*, const double*, double*);
    void (*matvec_t)(const double*, std::size_t, std::size_t, const double*, double*);
    void (*ger)(double, const double*, std::size_t, const double*, std::size_t, double*);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*axpby)(double, const double*, double, double*, std::size_t);
    double (*dot)(const double*, const double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*sqdist)(const double*, const double*, std::size_t);
    void (*rot)(double*, double*, double, double, std::size_t);
};

constexpr Table kScalar = {scalar::matvec, scalar::matvec_t, scalar::ger,    scalar::axpy,
                           scalar::axpby,  scalar::dot,      scalar::sum,    scalar::sqdist,
                           scalar::rot};

#ifdef MRR_HAVE_AVX2
constexpr Table kAvx2 = {avx2::matvec, avx2::matvec_t, avx2::ger,    avx2::axpy, avx2::axpby,
                         avx2::dot,    avx2::sum,      avx2::sqdist, avx2::rot};
#endif

bool cpu_has_avx2() {
#ifdef MRR_HAVE_AVX2
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend pick_default() {
    if (const char* env = std::getenv("MRR_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Backend::avx2;
    }
    return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

Backend g_backend = pick_default();

const Table& table() {
#ifdef MRR_HAVE_AVX2
    if (g_backend == Backend::avx2) return kAvx2;
#endif
    return kScalar;
}

}  // namespace

Backend active_backend() { return g_backend; }

bool backend_available(Backend b) {
    switch (b) {
        case Backend::scalar: return true;
        case Backend::avx2: return cpu_has_avx2();
    }
    return false;
}

void set_backend(Backend b) {
    if (!backend_available(b))
        throw config_error("kernel backend not supported on this CPU: " +
                           std::string(backend_name(b)));
    g_backend = b;
}

std::string_view backend_name(Backend b) {
    switch (b) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
    }
    return "?";
}

void matvec(const double* A, std::size_t m, std::size_t n, const double* x, const double* bias,
            double* y) {
    table().matvec(A, m, n, x, bias, y);
}
void matvec_t(const double* A, std::size_t m, std::size_t n, const double* x, double* y) {
    table().matvec_t(A, m, n, x, y);
}
void ger(double alpha, const double* x, std::size_t m, const double* y, std::size_t n, double* A) {
    table().ger(alpha, x, m, y, n, A);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
    table().axpy(alpha, x, y, n);
}
void axpby(double alpha, const double* x, double beta, double* y, std::size_t n) {
    table().axpby(alpha, x, beta, y, n);
}
double dot(const double* a, const double* b, std::size_t n) { return table().dot(a, b, n); }
double sum(const double* a, std::size_t n) { return table().sum(a, n); }
double sqdist(const double* a, const double* b, std::size_t n) { return table().sqdist(a, b, n); }
void rot(double* x, double* y, double c, double s, std::size_t n) { table().rot(x, y, c, s, n); }

}  // namespace mrr::kern
