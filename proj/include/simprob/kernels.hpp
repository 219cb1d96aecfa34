#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Dense arithmetic inner loops. Every kernel has a portable scalar reference
// and, on x86-64, an AVX2/FMA variant selected once at runtime. The variants
// agree to rounding (reductions associate differently), which the kernel
// equivalence tests pin down.
namespace simprob::kernels {

struct KernelTable {
    std::string_view name;

    double (*dot)(const double * a, const double * b, std::size_t n);
    // y[r] = b[r] + sum_c W[r, c] x[c]; W row-major rows x cols. b may be null.
    void (*gemv)(const double * w, const double * x, const double * b, double * y, std::size_t rows,
                 std::size_t cols);
    // out[c] += sum_r W[r, c] g[r]
    void (*gemv_t_acc)(const double * w, const double * g, double * out, std::size_t rows, std::size_t cols);
    // G[r, c] += g[r] x[c]
    void (*outer_acc)(double * grad, const double * g, const double * x, std::size_t rows, std::size_t cols);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double * x, double * y, std::size_t n);
    // max_i x[i]; -infinity for n == 0
    double (*max)(const double * x, std::size_t n);
    // sum_i ((obs[i] - mean[i]) / (rel * max(mean[i], floor)))^2
    double (*scaled_sq_sum)(const double * obs, const double * mean, std::size_t n, double rel, double floor);
};

const KernelTable & scalar();
// Null when the AVX2 variant is not compiled in or the CPU lacks AVX2/FMA.
const KernelTable * avx2();
// The table used by the library. AVX2 when available unless the environment
// variable SIMPROB_KERNELS is set to "scalar".
const KernelTable & active();

// Sum of log N(obs[i]; mean[i], rel * max(mean[i], floor)) over all cells.
double relative_gaussian_loglik(const KernelTable & k, std::span<const double> obs, std::span<const double> mean,
                                double rel, double floor);

} // namespace simprob::kernels
