// AVX2+FMA kernel variants. This translation unit is the only one built
// with -mavx2 -mfma; everything else stays at the base ISA, so the scalar
// fallback remains usable on machines without AVX2.

#include "pbrak/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace pbrak::kernels {

namespace {

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale_add_avx2(double* out, const double* base, double s, const double* d, std::size_t n) {
    const __m256d sv = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d r = _mm256_fmadd_pd(sv, _mm256_loadu_pd(d + i), _mm256_loadu_pd(base + i));
        _mm256_storeu_pd(out + i, r);
    }
    for (; i < n; ++i) out[i] = base[i] + s * d[i];
}

void rk4_combine_avx2(double* y, const double* k1, const double* k2, const double* k3,
                      const double* k4, double h, std::size_t n) {
    const double w = h / 6.0;
    const __m256d wv = _mm256_set1_pd(w);
    const __m256d two = _mm256_set1_pd(2.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d s = _mm256_add_pd(_mm256_loadu_pd(k1 + i), _mm256_loadu_pd(k4 + i));
        s = _mm256_fmadd_pd(two, _mm256_loadu_pd(k2 + i), s);
        s = _mm256_fmadd_pd(two, _mm256_loadu_pd(k3 + i), s);
        __m256d yv = _mm256_fmadd_pd(wv, s, _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void matmul_avx2(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
                 std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) _mm256_storeu_pd(crow + j, _mm256_setzero_pd());
        for (; j < n; ++j) crow[j] = 0.0;
        for (std::size_t l = 0; l < k; ++l) {
            const double ail = a[i * k + l];
            const __m256d av = _mm256_set1_pd(ail);
            const double* brow = b + l * n;
            j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                cv = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), cv);
                _mm256_storeu_pd(crow + j, cv);
            }
            for (; j < n; ++j) crow[j] += ail * brow[j];
        }
    }
}

void matvec_avx2(double* y, const double* a, const double* x, std::size_t m, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) y[i] = dot_avx2(a + i * n, x, n);
}

const Backend kAvx2 = {
    "avx2",     axpy_avx2,   scale_add_avx2, rk4_combine_avx2,
    dot_avx2,   matmul_avx2, matvec_avx2,
};

}  // namespace

bool avx2_available() {
    static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return ok;
}

const Backend& avx2_backend() { return kAvx2; }

}  // namespace pbrak::kernels

#endif  // x86-64
