#pragma once

#include <cstddef>
#include <string>

// Dense double-precision kernels used by the integrator and bracket
// contractions. A scalar reference implementation is always available;
// on x86-64 an AVX2+FMA variant is selected at runtime when the CPU
// supports it. The two backends are equivalence-tested against each
// other in tests/test_kernels.cpp.
//
// Selection order: PBRAK_KERNELS environment variable ("scalar" or
// "avx2") if set, otherwise the widest backend the CPU supports.

namespace pbrak::kernels {

struct Backend {
    const char* name;
    // y[i] += a * x[i]
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    // out[i] = base[i] + s * d[i]
    void (*scale_add)(double* out, const double* base, double s, const double* d, std::size_t n);
    // y[i] += (h/6) * (k1[i] + 2 k2[i] + 2 k3[i] + k4[i])
    void (*rk4_combine)(double* y, const double* k1, const double* k2, const double* k3,
                        const double* k4, double h, std::size_t n);
    double (*dot)(const double* a, const double* b, std::size_t n);
    // c = a * b, row-major, a is m x k, b is k x n, c is m x n (overwritten)
    void (*matmul)(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
                   std::size_t n);
    // y = a * x, a is m x n row-major (y overwritten)
    void (*matvec)(double* y, const double* a, const double* x, std::size_t m, std::size_t n);
};

const Backend& scalar_backend();

// True when the AVX2 translation unit was compiled in and the CPU
// reports AVX2+FMA support.
bool avx2_available();
const Backend& avx2_backend();  // only valid when avx2_available()

// Currently selected backend.
const Backend& active();

// Force a backend (tests use this to compare paths). Throws
// std::invalid_argument for an unavailable backend.
void select(const std::string& name);

inline void axpy(double a, const double* x, double* y, std::size_t n) {
    active().axpy(a, x, y, n);
}
inline void scale_add(double* out, const double* base, double s, const double* d, std::size_t n) {
    active().scale_add(out, base, s, d, n);
}
inline void rk4_combine(double* y, const double* k1, const double* k2, const double* k3,
                        const double* k4, double h, std::size_t n) {
    active().rk4_combine(y, k1, k2, k3, k4, h, n);
}
inline double dot(const double* a, const double* b, std::size_t n) {
    return active().dot(a, b, n);
}
inline void matmul(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
                   std::size_t n) {
    active().matmul(c, a, b, m, k, n);
}
inline void matvec(double* y, const double* a, const double* x, std::size_t m, std::size_t n) {
    active().matvec(y, a, x, m, n);
}

}  // namespace pbrak::kernels
