#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simprob/kernels.hpp"
#include "simprob/runtime.hpp"

namespace simprob::simzoo {

// Desk-scale analog of a tau-lepton decay observed in a segmented
// calorimeter. A decay channel and a momentum vector are drawn; the deposit
// image is a deterministic function of them; every cell is observed with
// deposit-proportional Gaussian noise.
struct TauToyConfig {
    std::size_t n_channels = 5;
    std::vector<double> channel_prior{0.5, 0.25, 0.15, 0.07, 0.03};
    std::size_t depth = 4;
    std::size_t nx = 7;
    std::size_t ny = 7;
    double momentum_scale = 20.0;  // GeV; mean of the Exponential prior on |p|
    double noise_sigma = 0.2;
    double theta_max = 0.6;        // polar angle range (radians) hitting the front face
    // Fraction of energy deposited per depth layer, one row per channel.
    std::vector<std::vector<double>> depth_profiles{
        {0.10, 0.20, 0.30, 0.40},
        {0.55, 0.30, 0.10, 0.05},
        {0.05, 0.15, 0.40, 0.40},
        {0.70, 0.20, 0.07, 0.03},
        {0.20, 0.25, 0.30, 0.25},
    };
    // Transverse spot width (cells) in the first layer; grows with depth.
    std::vector<double> spot_sigma{1.0, 0.6, 1.2, 0.5, 0.9};
    // Electron/pi0-like channels deposit early; the rest are hadronic.
    std::vector<bool> electromagnetic{false, true, false, true, false};

    std::size_t cells() const noexcept { return depth * nx * ny; }
    void validate() const;

    // 38 channels on a 20x35x35 calorimeter, for smoke tests only.
    static TauToyConfig full_scale();

    friend bool operator==(const TauToyConfig &, const TauToyConfig &) = default;
};

// Latent state of one decay.
struct TauLatents {
    std::int64_t channel;
    double pmag;
    double theta;
    double phi;
};

// Expected (noise-free) energy per cell, row-major (depth, x, y). Sums to pmag.
void deposit_image(const TauToyConfig & cfg, const TauLatents & z, std::span<double> out);
std::vector<double> deposit_image(const TauToyConfig & cfg, const TauLatents & z);

inline constexpr double kCellSigmaFloor = 0.1;

// Log-likelihood of an observed image given latents (sum over cells).
double tau_log_likelihood(const TauToyConfig & cfg, const TauLatents & z, std::span<const double> cells,
                          const kernels::KernelTable & k = kernels::active());
double tau_log_prior(const TauToyConfig & cfg, const TauLatents & z);

// Model procedures. Observations are consumed in order through
// ExecutionContext::observe, or generated when none is supplied.
void gaussian_unknown_mean(ExecutionContext & ctx);
void rejection_demo(ExecutionContext & ctx);
void tau_decay_toy(ExecutionContext & ctx, const TauToyConfig & cfg);

std::vector<std::string> model_names();
// Throws UnsupportedModel for unknown names and ConfigInvalid for a bad config.
Model make_model(const std::string & name, const TauToyConfig & cfg = {});

// Conditioning data for a registered model. Serialized as
// {model, y} or, for tau_decay_toy, {model, config, grid:[d,x,y], cells:[...]}.
struct Observation {
    std::string model;
    std::vector<double> values;
    std::optional<TauToyConfig> config;
};

std::string observation_to_json(const Observation & obs);
// Throws MalformedFile on malformed input and UnsupportedModel on unknown models.
Observation observation_from_json(const std::string & text);

// Noisy observation generated from fixed latents (tau_decay_toy) with a seed.
Observation simulate_tau_observation(const TauToyConfig & cfg, const TauLatents & z, std::uint64_t seed);

struct Moments {
    double mean = 0.0;
    double var = 0.0;
};

// Discretized marginal density of one variable on [lo, hi].
struct GridMarginal {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> mass;  // sums to 1

    // Mass re-binned onto `bins` equal bins of [lo, hi].
    std::vector<double> rebin(std::size_t bins) const;
};

struct ReferencePosterior {
    std::string model;
    std::map<std::string, Moments> real;
    std::map<std::string, std::map<std::int64_t, double>> discrete;
    std::map<std::string, GridMarginal> marginals;
};

// Independent reference posteriors: conjugate formula (gaussian_unknown_mean),
// resolution x resolution grid quadrature (rejection_demo), channel
// enumeration plus resolution^3 quadrature per channel (tau_decay_toy).
ReferencePosterior oracle_posterior(const Observation & obs, std::size_t resolution);

// Per-channel posterior mode and marginal widths over (pmag, theta, phi).
struct ChannelMode {
    std::int64_t channel;
    double log_joint;           // log prior + log likelihood at the mode
    double pmag, theta, phi;    // mode
    double sd_pmag, sd_theta, sd_phi;
    bool well_conditioned;      // curvature was negative definite
};

std::vector<ChannelMode> fit_channel_modes(const TauToyConfig & cfg, std::span<const double> cells);

// Likelihood-informed proposal for tau_decay_toy: per-channel Laplace fits of
// the posterior, widened and mapped onto each address's proposal family.
class TauLaplaceProposal final : public ProposalSource {
public:
    TauLaplaceProposal(const TauToyConfig & cfg, std::span<const double> cells, double widen = 1.5);

    std::optional<std::vector<double>> propose(std::span<const double> observation, const Address & address,
                                               const Distribution & prior, double prev_value) const override;

    const std::vector<ChannelMode> & modes() const noexcept { return modes_; }

private:
    TauToyConfig cfg_;
    std::vector<ChannelMode> modes_;
    std::vector<double> channel_probs_;
    double widen_;
    double theta_mean_ = 0.0, theta_sd_ = 0.0, phi_mean_ = 0.0, phi_sd_ = 0.0;
};

// Fixed proposal that replaces every Uniform prior by a rescaled Beta(alpha, beta)
// and leaves other sites on the prior.
class FixedBetaProposal final : public ProposalSource {
public:
    FixedBetaProposal(double alpha, double beta) : alpha_(alpha), beta_(beta) {}

    std::optional<std::vector<double>> propose(std::span<const double> observation, const Address & address,
                                               const Distribution & prior, double prev_value) const override;

private:
    double alpha_;
    double beta_;
};

} // namespace simprob::simzoo
