#include "simprob/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include <boost/math/special_functions/digamma.hpp>

#include "simprob/errors.hpp"

namespace simprob {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178;
// Beta densities are evaluated with the unit-interval coordinate kept this
// far from the endpoints, so the log-density stays finite on all of [lo, hi].
constexpr double kBetaEdge = 1e-12;

template<class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template<class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require(bool ok, const char * what)
{
    if (!ok) throw InvalidParameter(what);
}

bool finite(double x) { return std::isfinite(x); }

double normal_draw(Rng & rng)
{
    const double u1 = uniform_open01(rng);
    const double u2 = uniform_open01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double log_beta_fn(double a, double b)
{
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

double beta_unit(double x, double lo, double hi)
{
    return std::clamp((x - lo) / (hi - lo), kBetaEdge, 1.0 - kBetaEdge);
}

// Integer index carried by a value, or -1 when the value is not a whole number.
std::int64_t as_index(const Value & x)
{
    if (x.is_integer()) return x.as_int();
    const double d = x.as_double();
    if (!finite(d) || d != std::floor(d) || std::fabs(d) > 9.0e15) return -1;
    return static_cast<std::int64_t>(d);
}

std::vector<double> softmax(std::span<const double> raw)
{
    const double m = *std::max_element(raw.begin(), raw.end());
    std::vector<double> s(raw.size());
    double total = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        s[i] = std::exp(raw[i] - m);
        total += s[i];
    }
    for (auto & v : s) v /= total;
    return s;
}

void check_raw(std::span<const double> raw, std::size_t expected)
{
    if (raw.size() != expected) {
        throw DimensionMismatch("proposal expects " + std::to_string(expected) + " raw parameters, got " +
                                std::to_string(raw.size()));
    }
    for (double r : raw) {
        if (!finite(r)) throw InvalidParameter("non-finite raw proposal parameter");
    }
}

} // namespace

double positive(double raw) noexcept
{
    return std::max(raw, 0.0) + std::log1p(std::exp(-std::fabs(raw))) + kPositiveFloor;
}

double positive_derivative(double raw) noexcept
{
    return raw >= 0.0 ? 1.0 / (1.0 + std::exp(-raw)) : std::exp(raw) / (1.0 + std::exp(raw));
}

double inverse_positive(double value)
{
    const double y = value - kPositiveFloor;
    if (!(y > 0.0)) throw InvalidParameter("inverse_positive: value must exceed the positivity floor");
    // softplus^-1(y) = y + log(1 - exp(-y))
    return y + std::log(-std::expm1(-y));
}

Distribution Distribution::normal(double mu, double sigma)
{
    require(finite(mu) && finite(sigma), "Normal parameters must be finite");
    require(sigma > 0.0, "Normal requires sigma > 0");
    return Distribution(family::Normal{mu, sigma});
}

Distribution Distribution::uniform(double lo, double hi)
{
    require(finite(lo) && finite(hi), "Uniform bounds must be finite");
    require(lo < hi, "Uniform requires lo < hi");
    return Distribution(family::Uniform{lo, hi});
}

Distribution Distribution::categorical(std::vector<double> probs)
{
    require(!probs.empty(), "Categorical requires at least one category");
    double total = 0.0;
    for (double p : probs) {
        require(finite(p) && p >= 0.0, "Categorical probabilities must be finite and non-negative");
        total += p;
    }
    require(std::fabs(total - 1.0) <= 1e-9, "Categorical probabilities must sum to 1");
    return Distribution(family::Categorical{std::move(probs)});
}

Distribution Distribution::exponential(double rate)
{
    require(finite(rate) && rate > 0.0, "Exponential requires a finite rate > 0");
    return Distribution(family::Exponential{rate});
}

Distribution Distribution::poisson(double rate)
{
    require(finite(rate) && rate > 0.0, "Poisson requires a finite rate > 0");
    return Distribution(family::Poisson{rate});
}

Distribution Distribution::scaled_beta(double alpha, double beta, double lo, double hi)
{
    require(finite(alpha) && finite(beta) && alpha > 0.0 && beta > 0.0, "Beta requires alpha, beta > 0");
    require(finite(lo) && finite(hi) && lo < hi, "Beta requires finite lo < hi");
    return Distribution(family::ScaledBeta{alpha, beta, lo, hi});
}

Distribution Distribution::log_normal(double mu, double sigma)
{
    require(finite(mu) && finite(sigma), "LogNormal parameters must be finite");
    require(sigma > 0.0, "LogNormal requires sigma > 0");
    return Distribution(family::LogNormal{mu, sigma});
}

Distribution Distribution::from_params(std::string_view name, std::span<const double> p)
{
    auto need = [&](std::size_t n) {
        if (p.size() != n) {
            throw DimensionMismatch(std::string(name) + " takes " + std::to_string(n) + " parameters, got " +
                                    std::to_string(p.size()));
        }
    };
    if (name == "Normal") return need(2), normal(p[0], p[1]);
    if (name == "Uniform") return need(2), uniform(p[0], p[1]);
    if (name == "Categorical") return categorical(std::vector<double>(p.begin(), p.end()));
    if (name == "Exponential") return need(1), exponential(p[0]);
    if (name == "Poisson") return need(1), poisson(p[0]);
    if (name == "Beta") return need(4), scaled_beta(p[0], p[1], p[2], p[3]);
    if (name == "LogNormal") return need(2), log_normal(p[0], p[1]);
    throw InvalidParameter("unknown distribution family '" + std::string(name) + "'");
}

std::string_view Distribution::family() const noexcept
{
    return std::visit(overloaded{
                          [](const family::Normal &) { return std::string_view("Normal"); },
                          [](const family::Uniform &) { return std::string_view("Uniform"); },
                          [](const family::Categorical &) { return std::string_view("Categorical"); },
                          [](const family::Exponential &) { return std::string_view("Exponential"); },
                          [](const family::Poisson &) { return std::string_view("Poisson"); },
                          [](const family::ScaledBeta &) { return std::string_view("Beta"); },
                          [](const family::LogNormal &) { return std::string_view("LogNormal"); },
                      },
                      v_);
}

std::vector<double> Distribution::params() const
{
    return std::visit(overloaded{
                          [](const family::Normal & d) { return std::vector<double>{d.mu, d.sigma}; },
                          [](const family::Uniform & d) { return std::vector<double>{d.lo, d.hi}; },
                          [](const family::Categorical & d) { return d.probs; },
                          [](const family::Exponential & d) { return std::vector<double>{d.rate}; },
                          [](const family::Poisson & d) { return std::vector<double>{d.rate}; },
                          [](const family::ScaledBeta & d) {
                              return std::vector<double>{d.alpha, d.beta, d.lo, d.hi};
                          },
                          [](const family::LogNormal & d) { return std::vector<double>{d.mu, d.sigma}; },
                      },
                      v_);
}

bool Distribution::integer_valued() const noexcept
{
    return std::holds_alternative<family::Categorical>(v_) || std::holds_alternative<family::Poisson>(v_);
}

Value Distribution::sample(Rng & rng) const
{
    return std::visit(
        overloaded{
            [&](const family::Normal & d) { return Value(d.mu + d.sigma * normal_draw(rng)); },
            [&](const family::Uniform & d) { return Value(d.lo + (d.hi - d.lo) * uniform_open01(rng)); },
            [&](const family::Categorical & d) {
                const double u = uniform_open01(rng);
                double c = 0.0;
                std::int64_t last_positive = 0;
                for (std::size_t i = 0; i < d.probs.size(); ++i) {
                    if (d.probs[i] <= 0.0) continue;
                    last_positive = static_cast<std::int64_t>(i);
                    c += d.probs[i];
                    if (u < c) return Value(last_positive);
                }
                return Value(last_positive);
            },
            [&](const family::Exponential & d) { return Value(-std::log(uniform_open01(rng)) / d.rate); },
            [&](const family::Poisson & d) {
                std::poisson_distribution<std::int64_t> pois(d.rate);
                return Value(pois(rng));
            },
            [&](const family::ScaledBeta & d) {
                std::gamma_distribution<double> ga(d.alpha, 1.0);
                std::gamma_distribution<double> gb(d.beta, 1.0);
                const double x = ga(rng);
                const double y = gb(rng);
                double t = (x + y > 0.0) ? x / (x + y) : (d.alpha >= d.beta ? 1.0 : 0.0);
                t = std::clamp(t, kBetaEdge, 1.0 - kBetaEdge);
                return Value(d.lo + (d.hi - d.lo) * t);
            },
            [&](const family::LogNormal & d) { return Value(std::exp(d.mu + d.sigma * normal_draw(rng))); },
        },
        v_);
}

double Distribution::log_prob(const Value & value) const
{
    return std::visit(
        overloaded{
            [&](const family::Normal & d) {
                const double x = value.as_double();
                if (!finite(x)) return kNegInf;
                const double z = (x - d.mu) / d.sigma;
                return -0.5 * z * z - std::log(d.sigma) - kHalfLog2Pi;
            },
            [&](const family::Uniform & d) {
                const double x = value.as_double();
                return (x >= d.lo && x <= d.hi) ? -std::log(d.hi - d.lo) : kNegInf;
            },
            [&](const family::Categorical & d) {
                const auto i = as_index(value);
                if (i < 0 || i >= static_cast<std::int64_t>(d.probs.size())) return kNegInf;
                return std::log(d.probs[static_cast<std::size_t>(i)]);
            },
            [&](const family::Exponential & d) {
                const double x = value.as_double();
                return (x > 0.0 && finite(x)) ? std::log(d.rate) - d.rate * x : kNegInf;
            },
            [&](const family::Poisson & d) {
                const auto k = as_index(value);
                if (k < 0) return kNegInf;
                const double kd = static_cast<double>(k);
                return kd * std::log(d.rate) - d.rate - std::lgamma(kd + 1.0);
            },
            [&](const family::ScaledBeta & d) {
                const double x = value.as_double();
                if (!(x >= d.lo && x <= d.hi)) return kNegInf;
                const double t = beta_unit(x, d.lo, d.hi);
                return (d.alpha - 1.0) * std::log(t) + (d.beta - 1.0) * std::log1p(-t) -
                       log_beta_fn(d.alpha, d.beta) - std::log(d.hi - d.lo);
            },
            [&](const family::LogNormal & d) {
                const double x = value.as_double();
                if (!(x > 0.0) || !finite(x)) return kNegInf;
                const double lx = std::log(x);
                const double z = (lx - d.mu) / d.sigma;
                return -0.5 * z * z - lx - std::log(d.sigma) - kHalfLog2Pi;
            },
        },
        v_);
}

double Distribution::mean() const
{
    return std::visit(overloaded{
                          [](const family::Normal & d) { return d.mu; },
                          [](const family::Uniform & d) { return 0.5 * (d.lo + d.hi); },
                          [](const family::Categorical & d) {
                              double m = 0.0;
                              for (std::size_t i = 0; i < d.probs.size(); ++i) m += static_cast<double>(i) * d.probs[i];
                              return m;
                          },
                          [](const family::Exponential & d) { return 1.0 / d.rate; },
                          [](const family::Poisson & d) { return d.rate; },
                          [](const family::ScaledBeta & d) {
                              return d.lo + (d.hi - d.lo) * d.alpha / (d.alpha + d.beta);
                          },
                          [](const family::LogNormal & d) { return std::exp(d.mu + 0.5 * d.sigma * d.sigma); },
                      },
                      v_);
}

double Distribution::variance() const
{
    return std::visit(overloaded{
                          [](const family::Normal & d) { return d.sigma * d.sigma; },
                          [](const family::Uniform & d) { return (d.hi - d.lo) * (d.hi - d.lo) / 12.0; },
                          [](const family::Categorical & d) {
                              double m = 0.0, m2 = 0.0;
                              for (std::size_t i = 0; i < d.probs.size(); ++i) {
                                  const double x = static_cast<double>(i);
                                  m += x * d.probs[i];
                                  m2 += x * x * d.probs[i];
                              }
                              return m2 - m * m;
                          },
                          [](const family::Exponential & d) { return 1.0 / (d.rate * d.rate); },
                          [](const family::Poisson & d) { return d.rate; },
                          [](const family::ScaledBeta & d) {
                              const double s = d.alpha + d.beta;
                              const double w = d.hi - d.lo;
                              return w * w * d.alpha * d.beta / (s * s * (s + 1.0));
                          },
                          [](const family::LogNormal & d) {
                              const double s2 = d.sigma * d.sigma;
                              return std::expm1(s2) * std::exp(2.0 * d.mu + s2);
                          },
                      },
                      v_);
}

std::size_t proposal_dim(const Distribution & prior)
{
    return std::visit(overloaded{
                          [](const family::Categorical & d) { return d.probs.size(); },
                          [](const family::Poisson &) { return std::size_t{1}; },
                          [](const auto &) { return std::size_t{2}; },
                      },
                      prior.variant());
}

std::string_view proposal_family(const Distribution & prior)
{
    return std::visit(overloaded{
                          [](const family::Normal &) { return std::string_view("Normal"); },
                          [](const family::Uniform &) { return std::string_view("Beta"); },
                          [](const family::Categorical &) { return std::string_view("Categorical"); },
                          [](const family::Exponential &) { return std::string_view("LogNormal"); },
                          [](const family::Poisson &) { return std::string_view("Poisson"); },
                          [](const family::ScaledBeta &) { return std::string_view("Beta"); },
                          [](const family::LogNormal &) { return std::string_view("LogNormal"); },
                      },
                      prior.variant());
}

Distribution proposal_from_params(const Distribution & prior, std::span<const double> raw)
{
    check_raw(raw, proposal_dim(prior));
    return std::visit(
        overloaded{
            [&](const family::Normal &) { return Distribution::normal(raw[0], positive(raw[1])); },
            [&](const family::Uniform & d) {
                return Distribution::scaled_beta(positive(raw[0]), positive(raw[1]), d.lo, d.hi);
            },
            [&](const family::ScaledBeta & d) {
                return Distribution::scaled_beta(positive(raw[0]), positive(raw[1]), d.lo, d.hi);
            },
            [&](const family::Categorical &) {
                auto s = softmax(raw);
                const double k = static_cast<double>(s.size());
                double total = 0.0;
                for (auto & p : s) {
                    p = (1.0 - kCategoricalFloor) * p + kCategoricalFloor / k;
                    total += p;
                }
                // Absorb rounding so the sum-to-one check cannot trip.
                for (auto & p : s) p /= total;
                return Distribution::categorical(std::move(s));
            },
            [&](const family::Exponential &) { return Distribution::log_normal(raw[0], positive(raw[1])); },
            [&](const family::LogNormal &) { return Distribution::log_normal(raw[0], positive(raw[1])); },
            [&](const family::Poisson &) { return Distribution::poisson(positive(raw[0])); },
        },
        prior.variant());
}

double proposal_nll(const Distribution & prior, std::span<const double> raw, const Value & value,
                    std::span<double> d_raw)
{
    check_raw(raw, proposal_dim(prior));
    if (d_raw.size() != raw.size()) throw DimensionMismatch("gradient buffer has the wrong size");

    auto gaussian_nll = [&](double x) {
        // x is the (possibly log-transformed) value; returns nll without the log-jacobian.
        const double mu = raw[0];
        const double s = positive(raw[1]);
        const double r = x - mu;
        d_raw[0] = -r / (s * s);
        d_raw[1] = (1.0 / s - r * r / (s * s * s)) * positive_derivative(raw[1]);
        return 0.5 * r * r / (s * s) + std::log(s) + kHalfLog2Pi;
    };

    return std::visit(
        overloaded{
            [&](const family::Normal &) { return gaussian_nll(value.as_double()); },
            [&](const auto & d) -> double
                requires std::is_same_v<std::decay_t<decltype(d)>, family::Uniform> ||
                         std::is_same_v<std::decay_t<decltype(d)>, family::ScaledBeta>
            {
                const double x = value.as_double();
                if (!(x >= d.lo && x <= d.hi)) throw InvalidParameter("value outside the proposal support");
                const double t = beta_unit(x, d.lo, d.hi);
                const double a = positive(raw[0]);
                const double b = positive(raw[1]);
                const double psi_ab = boost::math::digamma(a + b);
                d_raw[0] = (-std::log(t) + boost::math::digamma(a) - psi_ab) * positive_derivative(raw[0]);
                d_raw[1] = (-std::log1p(-t) + boost::math::digamma(b) - psi_ab) * positive_derivative(raw[1]);
                return -((a - 1.0) * std::log(t) + (b - 1.0) * std::log1p(-t) - log_beta_fn(a, b) -
                         std::log(d.hi - d.lo));
            },
            [&](const family::Categorical & d) {
                const auto idx = as_index(value);
                if (idx < 0 || idx >= static_cast<std::int64_t>(d.probs.size())) {
                    throw InvalidParameter("value outside the proposal support");
                }
                const auto i = static_cast<std::size_t>(idx);
                const auto s = softmax(raw);
                const double k = static_cast<double>(s.size());
                const double p = (1.0 - kCategoricalFloor) * s[i] + kCategoricalFloor / k;
                for (std::size_t j = 0; j < s.size(); ++j) {
                    const double dsi = s[i] * ((i == j ? 1.0 : 0.0) - s[j]);
                    d_raw[j] = -(1.0 - kCategoricalFloor) * dsi / p;
                }
                return -std::log(p);
            },
            [&](const auto & d) -> double
                requires std::is_same_v<std::decay_t<decltype(d)>, family::Exponential> ||
                         std::is_same_v<std::decay_t<decltype(d)>, family::LogNormal>
            {
                const double x = value.as_double();
                if (!(x > 0.0)) throw InvalidParameter("value outside the proposal support");
                const double lx = std::log(x);
                return gaussian_nll(lx) + lx;
            },
            [&](const family::Poisson &) {
                const auto k = as_index(value);
                if (k < 0) throw InvalidParameter("value outside the proposal support");
                const double kd = static_cast<double>(k);
                const double rate = positive(raw[0]);
                d_raw[0] = (1.0 - kd / rate) * positive_derivative(raw[0]);
                return rate - kd * std::log(rate) + std::lgamma(kd + 1.0);
            },
        },
        prior.variant());
}

std::vector<double> raw_params_for(const Distribution & prior, const Distribution & target)
{
    if (proposal_family(prior) != target.family()) {
        throw InvalidParameter("target family " + std::string(target.family()) + " is not the proposal family " +
                               std::string(proposal_family(prior)));
    }
    return std::visit(
        overloaded{
            [&](const family::Normal & t) { return std::vector<double>{t.mu, inverse_positive(t.sigma)}; },
            [&](const family::LogNormal & t) { return std::vector<double>{t.mu, inverse_positive(t.sigma)}; },
            [&](const family::Poisson & t) { return std::vector<double>{inverse_positive(t.rate)}; },
            [&](const family::ScaledBeta & t) {
                const auto p = prior.params();
                const double lo = p[p.size() - 2];
                const double hi = p[p.size() - 1];
                if (lo != t.lo || hi != t.hi) throw InvalidParameter("Beta proposal must span the prior support");
                return std::vector<double>{inverse_positive(t.alpha), inverse_positive(t.beta)};
            },
            [&](const family::Categorical & t) {
                const auto k = static_cast<double>(t.probs.size());
                if (t.probs.size() != proposal_dim(prior)) throw DimensionMismatch("category count differs from prior");
                std::vector<double> raw;
                raw.reserve(t.probs.size());
                for (double p : t.probs) {
                    const double s = (p - kCategoricalFloor / k) / (1.0 - kCategoricalFloor);
                    raw.push_back(s > 0.0 ? std::log(s) : -700.0);
                }
                return raw;
            },
            [&](const auto &) -> std::vector<double> {
                throw InvalidParameter("no raw parameterization for this proposal family");
            },
        },
        target.variant());
}

} // namespace simprob
