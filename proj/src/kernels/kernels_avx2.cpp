// Compiled with -mavx2 -mfma. Only intrinsics and C headers are included here
// so no inline standard-library code is emitted with AVX2 encodings.
#include "simprob/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

namespace simprob::kernels::detail {

namespace {

inline double hsum(__m256d v)
{
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(const double * a, const double * b, std::size_t n)
{
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void gemv(const double * w, const double * x, const double * b, double * y, std::size_t rows, std::size_t cols)
{
    for (std::size_t r = 0; r < rows; ++r) {
        y[r] = (b ? b[r] : 0.0) + dot(w + r * cols, x, cols);
    }
}

void axpy(double alpha, const double * x, double * y, std::size_t n)
{
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_t_acc(const double * w, const double * g, double * out, std::size_t rows, std::size_t cols)
{
    for (std::size_t r = 0; r < rows; ++r) axpy(g[r], w + r * cols, out, cols);
}

void outer_acc(double * grad, const double * g, const double * x, std::size_t rows, std::size_t cols)
{
    for (std::size_t r = 0; r < rows; ++r) axpy(g[r], x, grad + r * cols, cols);
}

double max(const double * x, std::size_t n)
{
    const double neg_inf = -__builtin_inf();
    __m256d m = _mm256_set1_pd(neg_inf);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) m = _mm256_max_pd(m, _mm256_loadu_pd(x + i));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, m);
    double out = neg_inf;
    for (double v : lanes) out = v > out ? v : out;
    for (; i < n; ++i) out = x[i] > out ? x[i] : out;
    return out;
}

double scaled_sq_sum(const double * obs, const double * mean, std::size_t n, double rel, double floor)
{
    const __m256d vrel = _mm256_set1_pd(rel);
    const __m256d vfloor = _mm256_set1_pd(floor);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d m = _mm256_loadu_pd(mean + i);
        const __m256d sigma = _mm256_mul_pd(vrel, _mm256_max_pd(m, vfloor));
        const __m256d z = _mm256_div_pd(_mm256_sub_pd(_mm256_loadu_pd(obs + i), m), sigma);
        acc = _mm256_fmadd_pd(z, z, acc);
    }
    double out = hsum(acc);
    for (; i < n; ++i) {
        const double s = rel * (mean[i] > floor ? mean[i] : floor);
        const double z = (obs[i] - mean[i]) / s;
        out += z * z;
    }
    return out;
}

} // namespace

const KernelTable & avx2_table()
{
    static const KernelTable table{"avx2", dot, gemv, gemv_t_acc, outer_acc, axpy, max, scaled_sq_sum};
    return table;
}

} // namespace simprob::kernels::detail

#endif
