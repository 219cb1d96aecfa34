#include <algorithm>
#include <limits>

#include "simprob/kernels.hpp"

namespace simprob::kernels {

namespace {

double dot(const double * a, const double * b, std::size_t n)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void gemv(const double * w, const double * x, const double * b, double * y, std::size_t rows, std::size_t cols)
{
    for (std::size_t r = 0; r < rows; ++r) {
        y[r] = (b ? b[r] : 0.0) + dot(w + r * cols, x, cols);
    }
}

void gemv_t_acc(const double * w, const double * g, double * out, std::size_t rows, std::size_t cols)
{
    for (std::size_t r = 0; r < rows; ++r) {
        const double gr = g[r];
        const double * row = w + r * cols;
        for (std::size_t c = 0; c < cols; ++c) out[c] += row[c] * gr;
    }
}

void outer_acc(double * grad, const double * g, const double * x, std::size_t rows, std::size_t cols)
{
    for (std::size_t r = 0; r < rows; ++r) {
        double * row = grad + r * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += g[r] * x[c];
    }
}

void axpy(double alpha, const double * x, double * y, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double max(const double * x, std::size_t n)
{
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

double scaled_sq_sum(const double * obs, const double * mean, std::size_t n, double rel, double floor)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = (obs[i] - mean[i]) / (rel * std::max(mean[i], floor));
        acc += z * z;
    }
    return acc;
}

} // namespace

const KernelTable & scalar()
{
    static const KernelTable table{"scalar", dot, gemv, gemv_t_acc, outer_acc, axpy, max, scaled_sq_sum};
    return table;
}

} // namespace simprob::kernels
