#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <numbers>
#include <numeric>

#include <Eigen/Dense>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "simprob/errors.hpp"
#include "simprob/simzoo.hpp"

namespace simprob::simzoo {

namespace {

constexpr double kPi = std::numbers::pi;

double normal_cdf(double x)
{
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

// Fraction of a unit-normalized 1-D Gaussian spot falling in each of n unit
// cells, renormalized over the grid.
void spot_fractions(double center, double sigma, std::span<double> out)
{
    double total = 0.0;
    double lower = normal_cdf((0.0 - center) / sigma);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double upper = normal_cdf((static_cast<double>(i) + 1.0 - center) / sigma);
        out[i] = upper - lower;
        total += out[i];
        lower = upper;
    }
    if (total > 0.0) {
        for (auto & f : out) f /= total;
    } else {
        std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
    }
}

std::vector<double> normalized_row(const std::vector<double> & row)
{
    const double s = std::accumulate(row.begin(), row.end(), 0.0);
    std::vector<double> out(row);
    for (auto & v : out) v /= s;
    return out;
}

double wrap_angle(double phi)
{
    phi = std::fmod(phi + kPi, 2.0 * kPi);
    if (phi < 0.0) phi += 2.0 * kPi;
    return phi - kPi;
}

} // namespace

void TauToyConfig::validate() const
{
    auto fail = [](const std::string & what) { throw ConfigInvalid("tau toy config: " + what); };
    if (n_channels == 0) fail("n_channels must be >= 1");
    if (channel_prior.size() != n_channels) fail("channel_prior must have n_channels entries");
    if (depth_profiles.size() != n_channels) fail("depth_profiles must have n_channels rows");
    if (spot_sigma.size() != n_channels) fail("spot_sigma must have n_channels entries");
    if (electromagnetic.size() != n_channels) fail("electromagnetic must have n_channels entries");
    if (depth == 0 || nx == 0 || ny == 0) fail("grid dimensions must be >= 1");
    double total = 0.0;
    for (double p : channel_prior) {
        if (!(p >= 0.0) || !std::isfinite(p)) fail("channel_prior entries must be non-negative");
        total += p;
    }
    if (std::fabs(total - 1.0) > 1e-9) fail("channel_prior must sum to 1");
    for (const auto & row : depth_profiles) {
        if (row.size() != depth) fail("each depth profile must have `depth` entries");
        double s = 0.0;
        for (double f : row) {
            if (!(f >= 0.0) || !std::isfinite(f)) fail("depth profile entries must be non-negative");
            s += f;
        }
        if (std::fabs(s - 1.0) > 1e-9) fail("depth profiles must sum to 1");
    }
    for (double s : spot_sigma) {
        if (!(s > 0.0) || !std::isfinite(s)) fail("spot_sigma must be positive");
    }
    if (!(momentum_scale > 0.0) || !std::isfinite(momentum_scale)) fail("momentum_scale must be positive");
    if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma must be positive");
    if (!(theta_max > 0.0) || !(theta_max < kPi / 2.0)) fail("theta_max must lie in (0, pi/2)");
}

TauToyConfig TauToyConfig::full_scale()
{
    TauToyConfig cfg;
    cfg.n_channels = 38;
    cfg.depth = 20;
    cfg.nx = 35;
    cfg.ny = 35;
    cfg.channel_prior.clear();
    cfg.depth_profiles.clear();
    cfg.spot_sigma.clear();
    cfg.electromagnetic.clear();
    double total = 0.0;
    for (std::size_t c = 0; c < cfg.n_channels; ++c) {
        const double p = 1.0 / std::pow(static_cast<double>(c + 1), 1.5);
        cfg.channel_prior.push_back(p);
        total += p;
    }
    for (auto & p : cfg.channel_prior) p /= total;
    for (std::size_t c = 0; c < cfg.n_channels; ++c) {
        const bool em = (c % 3) == 1;
        cfg.electromagnetic.push_back(em);
        std::vector<double> row(cfg.depth);
        for (std::size_t d = 0; d < cfg.depth; ++d) {
            const double t = (static_cast<double>(d) + 0.5) / static_cast<double>(cfg.depth);
            // Early exponential shower versus a late, broad hadronic peak.
            row[d] = em ? std::exp(-t / 0.15) : std::pow(t, 3.0) * std::exp(-t / 0.3);
        }
        cfg.depth_profiles.push_back(normalized_row(row));
        cfg.spot_sigma.push_back((em ? 0.6 : 1.0) * static_cast<double>(cfg.nx) / 7.0);
    }
    return cfg;
}

void deposit_image(const TauToyConfig & cfg, const TauLatents & z, std::span<double> out)
{
    if (out.size() != cfg.cells()) throw DimensionMismatch("deposit image buffer has the wrong size");
    if (z.channel < 0 || static_cast<std::size_t>(z.channel) >= cfg.n_channels) {
        throw InvalidParameter("channel index out of range");
    }
    const auto c = static_cast<std::size_t>(z.channel);
    const auto profile = normalized_row(cfg.depth_profiles[c]);
    const double reach = std::tan(z.theta) / std::tan(cfg.theta_max);
    const double cx = 0.5 * static_cast<double>(cfg.nx) + 0.4 * static_cast<double>(cfg.nx) * reach * std::cos(z.phi);
    const double cy = 0.5 * static_cast<double>(cfg.ny) + 0.4 * static_cast<double>(cfg.ny) * reach * std::sin(z.phi);

    std::vector<double> fx(cfg.nx), fy(cfg.ny);
    for (std::size_t d = 0; d < cfg.depth; ++d) {
        // Showers broaden with depth.
        const double width = cfg.spot_sigma[c] * (1.0 + 0.3 * static_cast<double>(d) / static_cast<double>(cfg.depth));
        spot_fractions(cx, width, fx);
        spot_fractions(cy, width, fy);
        const double layer = z.pmag * profile[d];
        double * plane = out.data() + d * cfg.nx * cfg.ny;
        for (std::size_t i = 0; i < cfg.nx; ++i) {
            for (std::size_t j = 0; j < cfg.ny; ++j) plane[i * cfg.ny + j] = layer * fx[i] * fy[j];
        }
    }
}

std::vector<double> deposit_image(const TauToyConfig & cfg, const TauLatents & z)
{
    std::vector<double> out(cfg.cells());
    deposit_image(cfg, z, out);
    return out;
}

double tau_log_likelihood(const TauToyConfig & cfg, const TauLatents & z, std::span<const double> cells,
                          const kernels::KernelTable & k)
{
    if (cells.size() != cfg.cells()) throw DimensionMismatch("observation has the wrong number of cells");
    thread_local std::vector<double> expected;
    expected.resize(cfg.cells());
    deposit_image(cfg, z, expected);
    return kernels::relative_gaussian_loglik(k, cells, expected, cfg.noise_sigma, kCellSigmaFloor);
}

double tau_log_prior(const TauToyConfig & cfg, const TauLatents & z)
{
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    if (z.channel < 0 || static_cast<std::size_t>(z.channel) >= cfg.n_channels) return neg_inf;
    if (!(z.pmag > 0.0) || !(z.theta >= 0.0 && z.theta <= cfg.theta_max) || !(z.phi >= -kPi && z.phi <= kPi)) {
        return neg_inf;
    }
    const double rate = 1.0 / cfg.momentum_scale;
    return std::log(cfg.channel_prior[static_cast<std::size_t>(z.channel)]) + std::log(rate) - rate * z.pmag -
           std::log(cfg.theta_max) - std::log(2.0 * kPi);
}

void tau_decay_toy(ExecutionContext & ctx, const TauToyConfig & cfg)
{
    const auto channel = ctx.sample("channel", Distribution::categorical(cfg.channel_prior)).as_int();
    const double pmag = ctx.sample("pmag", Distribution::exponential(1.0 / cfg.momentum_scale)).as_double();
    const double theta = ctx.sample("theta", Distribution::uniform(0.0, cfg.theta_max)).as_double();
    const double phi = ctx.sample("phi", Distribution::uniform(-kPi, kPi)).as_double();

    const auto expected = deposit_image(cfg, TauLatents{channel, pmag, theta, phi});
    for (double e : expected) {
        ctx.observe("cell", Distribution::normal(e, cfg.noise_sigma * std::max(e, kCellSigmaFloor)));
    }

    ctx.predict("channel", Value(channel));
    ctx.predict("p_x", pmag * std::sin(theta) * std::cos(phi));
    ctx.predict("p_y", pmag * std::sin(theta) * std::sin(phi));
    ctx.predict("p_z", pmag * std::cos(theta));
}

Observation simulate_tau_observation(const TauToyConfig & cfg, const TauLatents & z, std::uint64_t seed)
{
    cfg.validate();
    Rng rng(seed);
    Observation obs;
    obs.model = "tau_decay_toy";
    obs.config = cfg;
    for (double e : deposit_image(cfg, z)) {
        obs.values.push_back(
            Distribution::normal(e, cfg.noise_sigma * std::max(e, kCellSigmaFloor)).sample(rng).as_double());
    }
    return obs;
}

// --- Laplace fits ----------------------------------------------------------

namespace {

struct FitProblem {
    const TauToyConfig * cfg;
    std::span<const double> cells;
    std::int64_t channel;

    double log_joint(double pmag, double theta, double phi) const
    {
        const TauLatents z{channel, pmag, theta, phi};
        const double lp = tau_log_prior(*cfg, z);
        if (!std::isfinite(lp)) return lp;
        return lp + tau_log_likelihood(*cfg, z, cells);
    }
};

// Nelder-Mead works on (log pmag, theta, phi); phi is periodic.
double nm_objective(const gsl_vector * x, void * params)
{
    const auto * p = static_cast<const FitProblem *>(params);
    const double pmag = std::exp(gsl_vector_get(x, 0));
    const double theta = gsl_vector_get(x, 1);
    const double phi = wrap_angle(gsl_vector_get(x, 2));
    if (theta < 0.0 || theta > p->cfg->theta_max) return 1e300;
    const double lj = p->log_joint(pmag, theta, phi);
    return std::isfinite(lj) ? -lj : 1e300;
}

std::array<double, 3> nelder_mead(FitProblem & problem, std::array<double, 3> start)
{
    gsl_multimin_function fn{nm_objective, 3, &problem};
    gsl_vector * x = gsl_vector_alloc(3);
    gsl_vector * step = gsl_vector_alloc(3);
    gsl_multimin_fminimizer * s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 3);
    for (int restart = 0; restart < 3; ++restart) {
        for (std::size_t i = 0; i < 3; ++i) gsl_vector_set(x, i, start[i]);
        gsl_vector_set(step, 0, 0.05);
        gsl_vector_set(step, 1, 0.02);
        gsl_vector_set(step, 2, 0.05);
        gsl_multimin_fminimizer_set(s, &fn, x, step);
        for (int iter = 0; iter < 4000; ++iter) {
            if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
            if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-10) == GSL_SUCCESS) break;
        }
        for (std::size_t i = 0; i < 3; ++i) start[i] = gsl_vector_get(s->x, i);
    }
    gsl_multimin_fminimizer_free(s);
    gsl_vector_free(step);
    gsl_vector_free(x);
    start[2] = wrap_angle(start[2]);
    return start;
}

} // namespace

std::vector<ChannelMode> fit_channel_modes(const TauToyConfig & cfg, std::span<const double> cells)
{
    cfg.validate();
    if (cells.size() != cfg.cells()) throw DimensionMismatch("observation has the wrong number of cells");
    gsl_set_error_handler_off();

    const double total = std::max(std::accumulate(cells.begin(), cells.end(), 0.0), 0.5);
    std::vector<ChannelMode> modes;
    for (std::size_t c = 0; c < cfg.n_channels; ++c) {
        FitProblem problem{&cfg, cells, static_cast<std::int64_t>(c)};

        // Coarse search seeds the simplex.
        std::array<double, 3> best{std::log(total), 0.5 * cfg.theta_max, 0.0};
        double best_val = -std::numeric_limits<double>::infinity();
        constexpr int kP = 15, kT = 20, kF = 36;
        for (int a = 0; a < kP; ++a) {
            const double lp = std::log(total) - 0.7 + 1.4 * a / (kP - 1);
            for (int b = 0; b < kT; ++b) {
                const double theta = cfg.theta_max * (b + 0.5) / kT;
                for (int f = 0; f < kF; ++f) {
                    const double phi = -kPi + 2.0 * kPi * (f + 0.5) / kF;
                    const double v = problem.log_joint(std::exp(lp), theta, phi);
                    if (v > best_val) {
                        best_val = v;
                        best = {lp, theta, phi};
                    }
                }
            }
        }
        const auto x = nelder_mead(problem, best);

        ChannelMode m;
        m.channel = static_cast<std::int64_t>(c);
        m.pmag = std::exp(x[0]);
        m.theta = x[1];
        m.phi = x[2];
        m.log_joint = problem.log_joint(m.pmag, m.theta, m.phi);

        // Curvature of the log joint in (pmag, theta, phi) by central differences.
        const std::array<double, 3> h{1e-4 * m.pmag, 1e-4, 1e-4};
        auto f = [&](std::array<double, 3> p) { return problem.log_joint(p[0], p[1], wrap_angle(p[2])); };
        const std::array<double, 3> x0{m.pmag, m.theta, m.phi};
        Eigen::Matrix3d hess;
        for (int i = 0; i < 3; ++i) {
            for (int j = i; j < 3; ++j) {
                auto at = [&](double si, double sj) {
                    auto p = x0;
                    p[i] += si * h[i];
                    p[j] += sj * h[j];
                    return f(p);
                };
                double v;
                if (i == j) {
                    v = (at(1, 0) - 2.0 * m.log_joint + at(-1, 0)) / (h[i] * h[i]);
                } else {
                    v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h[i] * h[j]);
                }
                hess(i, j) = hess(j, i) = v;
            }
        }
        const Eigen::Matrix3d precision = -hess;
        Eigen::LLT<Eigen::Matrix3d> llt(precision);
        m.well_conditioned = llt.info() == Eigen::Success && precision.allFinite();
        if (m.well_conditioned) {
            const Eigen::Matrix3d cov = llt.solve(Eigen::Matrix3d::Identity());
            m.sd_pmag = std::sqrt(cov(0, 0));
            m.sd_theta = std::sqrt(cov(1, 1));
            m.sd_phi = std::sqrt(cov(2, 2));
        } else {
            m.sd_pmag = 0.25 * m.pmag;
            m.sd_theta = cfg.theta_max / 4.0;
            m.sd_phi = kPi / 2.0;
        }
        modes.push_back(m);
    }
    return modes;
}

namespace {

// Laplace approximation of each channel's log evidence.
std::vector<double> laplace_channel_probs(const std::vector<ChannelMode> & modes)
{
    std::vector<double> logz;
    for (const auto & m : modes) {
        logz.push_back(m.log_joint + std::log(m.sd_pmag * m.sd_theta * m.sd_phi) + 1.5 * std::log(2.0 * kPi));
    }
    const double mx = *std::max_element(logz.begin(), logz.end());
    std::vector<double> p;
    double s = 0.0;
    for (double l : logz) {
        p.push_back(std::exp(l - mx));
        s += p.back();
    }
    for (auto & v : p) v /= s;
    return p;
}

std::optional<std::vector<double>> beta_raw(double lo, double hi, double mean, double sd)
{
    const double t = (mean - lo) / (hi - lo);
    const double v = (sd / (hi - lo)) * (sd / (hi - lo));
    if (!(t > 0.0 && t < 1.0)) return std::nullopt;
    const double common = t * (1.0 - t) / v - 1.0;
    if (!(common > 0.0) || !std::isfinite(common)) return std::nullopt;
    return std::vector<double>{inverse_positive(t * common), inverse_positive((1.0 - t) * common)};
}

} // namespace

TauLaplaceProposal::TauLaplaceProposal(const TauToyConfig & cfg, std::span<const double> cells, double widen)
    : cfg_(cfg), modes_(fit_channel_modes(cfg, cells)), widen_(widen)
{
    channel_probs_ = laplace_channel_probs(modes_);
    const auto best = static_cast<std::size_t>(
        std::max_element(channel_probs_.begin(), channel_probs_.end()) - channel_probs_.begin());
    theta_mean_ = modes_[best].theta;
    phi_mean_ = modes_[best].phi;
    double theta_spread = 0.0, phi_spread = 0.0;
    for (std::size_t c = 0; c < modes_.size(); ++c) {
        if (channel_probs_[c] < 1e-3) continue;
        theta_spread = std::max(theta_spread, std::fabs(modes_[c].theta - theta_mean_));
        phi_spread = std::max(phi_spread, std::fabs(wrap_angle(modes_[c].phi - phi_mean_)));
    }
    theta_sd_ = widen_ * std::hypot(modes_[best].sd_theta, theta_spread);
    phi_sd_ = widen_ * std::hypot(modes_[best].sd_phi, phi_spread);
}

std::optional<std::vector<double>> TauLaplaceProposal::propose(std::span<const double>, const Address & address,
                                                               const Distribution & prior, double prev_value) const
{
    const std::string & site = address.path.back();
    if (site == "channel") {
        // Keep a fifth of the mass uniform so unlikely channels stay reachable.
        std::vector<double> q;
        for (double p : channel_probs_) q.push_back(0.8 * p + 0.2 / static_cast<double>(channel_probs_.size()));
        return raw_params_for(prior, Distribution::categorical(q));
    }
    if (site == "pmag") {
        const auto c = static_cast<std::int64_t>(prev_value);
        if (c < 0 || static_cast<std::size_t>(c) >= modes_.size()) return std::nullopt;
        const auto & m = modes_[static_cast<std::size_t>(c)];
        const double sigma = std::max(widen_ * m.sd_pmag / m.pmag, 1e-3);
        return raw_params_for(prior, Distribution::log_normal(std::log(m.pmag), sigma));
    }
    if (site == "theta") return beta_raw(0.0, cfg_.theta_max, theta_mean_, theta_sd_);
    if (site == "phi") return beta_raw(-kPi, kPi, phi_mean_, phi_sd_);
    return std::nullopt;
}

} // namespace simprob::simzoo
