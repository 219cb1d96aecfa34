#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simprob/runtime.hpp"
#include "simprob/trace.hpp"

namespace simprob {

struct ParticleSet {
    std::vector<Trace> traces;
    std::vector<double> log_weights;
    std::vector<double> weights;  // filled by normalize()
    bool normalized = false;
    // Rendered address of the first -infinity observe in the lowest-index
    // zero-weight particle, if any.
    std::string zero_weight_site;
};

struct SisOptions {
    unsigned threads = 1;
    // Observe entries dominate trace memory for image-like observations and
    // are not needed once the weight is known.
    bool keep_observes = false;
};

// Runs n_particles independent guided executions. Particle i uses seed
// derive_seed(master_seed, i). A null source means prior proposals.
ParticleSet sis_infer(const Model & model, const std::vector<double> & observation, std::size_t n_particles,
                      const ProposalSource * source, std::uint64_t master_seed, const SisOptions & options = {});

// Self-normalizes with max-log-weight subtraction. Throws AllWeightsZero when
// every log-weight is -infinity.
void normalize(ParticleSet & ps);
std::vector<double> normalize_log_weights(std::span<const double> log_weights);

double effective_sample_size(const ParticleSet & ps);
double effective_sample_size(std::span<const double> normalized_weights);

// Left-inverse of the weighted empirical CDF, linearly interpolated between
// consecutive particle values. Zero-weight particles are ignored.
double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q);

struct PosteriorSummary {
    std::string predict;
    bool integer = false;
    double mean = 0.0;
    double variance = 0.0;
    std::map<double, double> quantiles;           // real predicts: q -> value at 0.05, 0.5, 0.95
    std::map<std::int64_t, double> histogram;     // integer predicts
    double ess = 0.0;
    std::size_t n_particles = 0;
};

PosteriorSummary posterior_summary(const ParticleSet & ps, const std::string & predict_name);

// {predict, kind, mean?, var?, quantiles?, histogram?, ess, n_particles}
std::string summary_to_json(const PosteriorSummary & s);

} // namespace simprob
