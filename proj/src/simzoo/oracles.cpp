#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "simprob/errors.hpp"
#include "simprob/simzoo.hpp"

namespace simprob::simzoo {

namespace {

constexpr double kPi = std::numbers::pi;

ReferencePosterior gaussian_oracle(const Observation & obs)
{
    // x ~ N(0, 1), y | x ~ N(x, 1)  =>  x | y ~ N(y / 2, 1 / 2)
    ReferencePosterior r;
    r.model = obs.model;
    r.real["mu"] = Moments{obs.values.at(0) / 2.0, 0.5};
    return r;
}

ReferencePosterior rejection_oracle(const Observation & obs, std::size_t n)
{
    // Accepted (u, v) is uniform on the unit disc; y | u ~ N(u, 0.1).
    const double y = obs.values.at(0);
    const double h = 2.0 / static_cast<double>(n);
    std::vector<double> log_w(n * n, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
        const double u = -1.0 + (static_cast<double>(i) + 0.5) * h;
        const double ll = -0.5 * (y - u) * (y - u) / 0.01;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = -1.0 + (static_cast<double>(j) + 0.5) * h;
            if (u * u + v * v <= 1.0) log_w[i * n + j] = ll;
        }
    }
    const double mx = *std::max_element(log_w.begin(), log_w.end());
    if (!std::isfinite(mx)) throw PreconditionError("rejection_demo oracle: empty support");
    GridMarginal mu{-1.0, 1.0, std::vector<double>(n, 0.0)};
    double total = 0.0, su = 0.0, suu = 0.0, sv = 0.0, svv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = -1.0 + (static_cast<double>(i) + 0.5) * h;
        for (std::size_t j = 0; j < n; ++j) {
            const double w = std::exp(log_w[i * n + j] - mx);
            if (w == 0.0) continue;
            const double v = -1.0 + (static_cast<double>(j) + 0.5) * h;
            mu.mass[i] += w;
            total += w;
            su += w * u;
            suu += w * u * u;
            sv += w * v;
            svv += w * v * v;
        }
    }
    for (auto & m : mu.mass) m /= total;
    ReferencePosterior r;
    r.model = obs.model;
    r.real["u"] = Moments{su / total, suu / total - (su / total) * (su / total)};
    r.real["v"] = Moments{sv / total, svv / total - (sv / total) * (sv / total)};
    r.marginals["u"] = std::move(mu);
    return r;
}

struct Interval {
    double lo;
    double hi;
};

ReferencePosterior tau_oracle(const Observation & obs, std::size_t n)
{
    const TauToyConfig cfg = obs.config.value_or(TauToyConfig{});
    const auto modes = fit_channel_modes(cfg, obs.values);
    constexpr double kBox = 8.0;  // half-width of the integration box in posterior standard deviations

    std::vector<double> log_z(cfg.n_channels);
    std::vector<std::array<double, 3>> mean(cfg.n_channels), second(cfg.n_channels);
    std::vector<double> log_w(n * n * n);
    for (std::size_t c = 0; c < cfg.n_channels; ++c) {
        const auto & m = modes[c];
        Interval pr{std::max(0.0, m.pmag - kBox * m.sd_pmag), m.pmag + kBox * m.sd_pmag};
        Interval th{std::max(0.0, m.theta - kBox * m.sd_theta), std::min(cfg.theta_max, m.theta + kBox * m.sd_theta)};
        Interval ph{m.phi - kBox * m.sd_phi, m.phi + kBox * m.sd_phi};
        if (!m.well_conditioned) {
            pr = {0.0, 10.0 * cfg.momentum_scale};
            th = {0.0, cfg.theta_max};
        }
        // phi is periodic with a uniform prior: any window of length <= 2 pi works.
        if (!m.well_conditioned || ph.hi - ph.lo >= 2.0 * kPi) ph = {-kPi, kPi};

        const double dp = (pr.hi - pr.lo) / static_cast<double>(n);
        const double dt = (th.hi - th.lo) / static_cast<double>(n);
        const double df = (ph.hi - ph.lo) / static_cast<double>(n);
        auto node = [&](const Interval & iv, double step, std::size_t i) {
            return iv.lo + (static_cast<double>(i) + 0.5) * step;
        };

        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = 0; b < n; ++b) {
                for (std::size_t f = 0; f < n; ++f) {
                    double phi = node(ph, df, f);
                    if (phi < -kPi) phi += 2.0 * kPi;
                    if (phi > kPi) phi -= 2.0 * kPi;
                    const TauLatents z{static_cast<std::int64_t>(c), node(pr, dp, a), node(th, dt, b), phi};
                    double lw = tau_log_prior(cfg, z);
                    if (std::isfinite(lw)) lw += tau_log_likelihood(cfg, z, obs.values);
                    log_w[(a * n + b) * n + f] = lw;
                    mx = std::max(mx, lw);
                }
            }
        }
        double total = 0.0;
        std::array<double, 3> s1{}, s2{};
        for (std::size_t a = 0; a < n; ++a) {
            const double pmag = node(pr, dp, a);
            for (std::size_t b = 0; b < n; ++b) {
                const double theta = node(th, dt, b);
                for (std::size_t f = 0; f < n; ++f) {
                    const double w = std::exp(log_w[(a * n + b) * n + f] - mx);
                    if (w == 0.0) continue;
                    const double phi = node(ph, df, f);
                    const std::array<double, 3> p{pmag * std::sin(theta) * std::cos(phi),
                                                  pmag * std::sin(theta) * std::sin(phi), pmag * std::cos(theta)};
                    total += w;
                    for (int k = 0; k < 3; ++k) {
                        s1[k] += w * p[k];
                        s2[k] += w * p[k] * p[k];
                    }
                }
            }
        }
        log_z[c] = std::isfinite(mx) ? mx + std::log(total) + std::log(dp * dt * df)
                                     : -std::numeric_limits<double>::infinity();
        for (int k = 0; k < 3; ++k) {
            mean[c][k] = total > 0.0 ? s1[k] / total : 0.0;
            second[c][k] = total > 0.0 ? s2[k] / total : 0.0;
        }
    }

    const double mz = *std::max_element(log_z.begin(), log_z.end());
    if (!std::isfinite(mz)) throw AllWeightsZero("tau oracle: observation outside the model support");
    std::vector<double> prob(cfg.n_channels);
    double s = 0.0;
    for (std::size_t c = 0; c < cfg.n_channels; ++c) s += prob[c] = std::exp(log_z[c] - mz);
    ReferencePosterior r;
    r.model = obs.model;
    for (std::size_t c = 0; c < cfg.n_channels; ++c) r.discrete["channel"][static_cast<std::int64_t>(c)] = prob[c] / s;

    const char * names[3] = {"p_x", "p_y", "p_z"};
    for (int k = 0; k < 3; ++k) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t c = 0; c < cfg.n_channels; ++c) {
            m1 += prob[c] / s * mean[c][k];
            m2 += prob[c] / s * second[c][k];
        }
        r.real[names[k]] = Moments{m1, std::max(m2 - m1 * m1, 0.0)};
    }
    return r;
}

} // namespace

std::vector<double> GridMarginal::rebin(std::size_t bins) const
{
    if (bins == 0 || mass.size() % bins != 0) throw PreconditionError("rebin: bins must divide the grid size");
    std::vector<double> out(bins, 0.0);
    const std::size_t per = mass.size() / bins;
    for (std::size_t i = 0; i < mass.size(); ++i) out[i / per] += mass[i];
    return out;
}

ReferencePosterior oracle_posterior(const Observation & obs, std::size_t resolution)
{
    if (resolution < 2) throw PreconditionError("oracle resolution must be >= 2");
    if (obs.model == "gaussian_unknown_mean") return gaussian_oracle(obs);
    if (obs.model == "rejection_demo") return rejection_oracle(obs, resolution);
    if (obs.model == "tau_decay_toy") return tau_oracle(obs, resolution);
    throw UnsupportedModel("no oracle for model '" + obs.model + "'");
}

} // namespace simprob::simzoo
