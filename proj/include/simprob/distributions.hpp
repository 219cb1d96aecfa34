#pragma once

#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "simprob/random.hpp"
#include "simprob/trace.hpp"

namespace simprob {

namespace family {
struct Normal {
    double mu;
    double sigma;
};
struct Uniform {
    double lo;
    double hi;
};
struct Categorical {
    std::vector<double> probs;
};
struct Exponential {
    double rate;
};
struct Poisson {
    double rate;
};
// Beta(alpha, beta) mapped affinely onto [lo, hi]; proposal for Uniform priors.
struct ScaledBeta {
    double alpha;
    double beta;
    double lo;
    double hi;
};
// Proposal for Exponential priors.
struct LogNormal {
    double mu;
    double sigma;
};
} // namespace family

// Immutable, validated distribution value. Parameter constraints are checked
// at construction; an invalid parameter set never produces an object.
class Distribution {
public:
    using Variant = std::variant<family::Normal, family::Uniform, family::Categorical, family::Exponential,
                                 family::Poisson, family::ScaledBeta, family::LogNormal>;

    static Distribution normal(double mu, double sigma);
    static Distribution uniform(double lo, double hi);
    static Distribution categorical(std::vector<double> probs);
    static Distribution exponential(double rate);
    static Distribution poisson(double rate);
    static Distribution scaled_beta(double alpha, double beta, double lo, double hi);
    static Distribution log_normal(double mu, double sigma);

    // Rebuilds a distribution from its family name and ordered constructor
    // parameters, as stored in serialized traces.
    static Distribution from_params(std::string_view family_name, std::span<const double> params);

    std::string_view family() const noexcept;
    std::vector<double> params() const;
    bool integer_valued() const noexcept;

    Value sample(Rng & rng) const;
    // Exact log-density (or log-mass); -infinity outside the support.
    double log_prob(const Value & x) const;

    double mean() const;
    double variance() const;

    const Variant & variant() const noexcept { return v_; }

private:
    explicit Distribution(Variant v) : v_(std::move(v)) {}
    Variant v_;
};

// Unconstrained -> positive map used for every scale, rate and shape
// parameter: softplus plus a small floor so the result is never zero.
double positive(double raw) noexcept;
double positive_derivative(double raw) noexcept;
double inverse_positive(double value);

inline constexpr double kPositiveFloor = 1e-9;
// Mixing weight of the uniform component in categorical proposals; keeps
// every category's proposal mass strictly positive.
inline constexpr double kCategoricalFloor = 1e-9;

// Number of raw network outputs that parameterize the proposal for `prior`.
std::size_t proposal_dim(const Distribution & prior);

// Family tag of the proposal used for `prior`.
std::string_view proposal_family(const Distribution & prior);

// Maps raw unconstrained parameters to the proposal for `prior`:
// Normal -> Normal(r0, pos(r1)); Uniform(lo,hi) -> ScaledBeta(pos(r0), pos(r1), lo, hi);
// Categorical(k) -> Categorical(mix(softmax(r))); Exponential -> LogNormal(r0, pos(r1));
// Poisson -> Poisson(pos(r0)). Throws DimensionMismatch on a wrong raw size.
Distribution proposal_from_params(const Distribution & prior, std::span<const double> raw);

// -log q(x) for q = proposal_from_params(prior, raw), and its gradient with
// respect to raw (written into d_raw, which must have proposal_dim entries).
double proposal_nll(const Distribution & prior, std::span<const double> raw, const Value & x,
                    std::span<double> d_raw);

// Raw parameters whose proposal reproduces the given distribution (where the
// family allows it); used to pin proposals in tests and fixed proposal sources.
std::vector<double> raw_params_for(const Distribution & prior, const Distribution & target);

} // namespace simprob
