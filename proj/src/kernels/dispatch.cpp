#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string_view>

#include "simprob/errors.hpp"
#include "simprob/kernels.hpp"

namespace simprob::kernels {

#if defined(SIMPROB_HAVE_AVX2)
namespace detail {
const KernelTable & avx2_table();
}
#endif

const KernelTable * avx2()
{
#if defined(SIMPROB_HAVE_AVX2)
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &detail::avx2_table() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable & active()
{
    static const KernelTable & table = [] () -> const KernelTable & {
        const char * env = std::getenv("SIMPROB_KERNELS");
        if (env != nullptr && std::string_view(env) == "scalar") return scalar();
        if (const auto * t = avx2()) return *t;
        return scalar();
    }();
    return table;
}

double relative_gaussian_loglik(const KernelTable & k, std::span<const double> obs, std::span<const double> mean,
                                double rel, double floor)
{
    if (obs.size() != mean.size()) throw DimensionMismatch("observation and mean lengths differ");
    constexpr double kHalfLog2Pi = 0.91893853320467274178;
    double log_sigma = 0.0;
    for (double m : mean) log_sigma += std::log(std::max(m, floor));
    const auto n = static_cast<double>(obs.size());
    return -0.5 * k.scaled_sq_sum(obs.data(), mean.data(), obs.size(), rel, floor) - log_sigma -
           n * (std::log(rel) + kHalfLog2Pi);
}

} // namespace simprob::kernels
