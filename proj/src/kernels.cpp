#include "pbrak/kernels.hpp"

#include <cstdlib>
#include <stdexcept>

namespace pbrak::kernels {

namespace {

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_add_scalar(double* out, const double* base, double s, const double* d, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = base[i] + s * d[i];
}

void rk4_combine_scalar(double* y, const double* k1, const double* k2, const double* k3,
                        const double* k4, double h, std::size_t n) {
    const double w = h / 6.0;
    for (std::size_t i = 0; i < n; ++i)
        y[i] += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void matmul_scalar(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
                   std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        for (std::size_t l = 0; l < k; ++l) {
            const double ail = a[i * k + l];
            const double* brow = b + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += ail * brow[j];
        }
    }
}

void matvec_scalar(double* y, const double* a, const double* x, std::size_t m, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) y[i] = dot_scalar(a + i * n, x, n);
}

const Backend kScalar = {
    "scalar",     axpy_scalar,   scale_add_scalar, rk4_combine_scalar,
    dot_scalar,   matmul_scalar, matvec_scalar,
};

const Backend* pick_default() {
    if (const char* env = std::getenv("PBRAK_KERNELS")) {
        std::string want(env);
        if (want == "scalar") return &kScalar;
        if (want == "avx2" && avx2_available()) return &avx2_backend();
        // Unknown or unavailable request falls through to auto-detect.
    }
    if (avx2_available()) return &avx2_backend();
    return &kScalar;
}

const Backend*& current() {
    static const Backend* b = pick_default();
    return b;
}

}  // namespace

const Backend& scalar_backend() { return kScalar; }

#if !PBRAK_HAVE_AVX2_TU
bool avx2_available() { return false; }
const Backend& avx2_backend() { return kScalar; }
#endif

const Backend& active() { return *current(); }

void select(const std::string& name) {
    if (name == "scalar") {
        current() = &kScalar;
    } else if (name == "avx2") {
        if (!avx2_available()) throw std::invalid_argument("avx2 backend not available");
        current() = &avx2_backend();
    } else {
        throw std::invalid_argument("unknown kernel backend: " + name);
    }
}

}  // namespace pbrak::kernels
