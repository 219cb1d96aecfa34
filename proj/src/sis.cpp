#include "simprob/sis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "simprob/errors.hpp"
#include "simprob/kernels.hpp"
#include "simprob/parallel.hpp"
#include "simprob/random.hpp"

namespace simprob {

ParticleSet sis_infer(const Model & model, const std::vector<double> & observation, std::size_t n_particles,
                      const ProposalSource * source, std::uint64_t master_seed, const SisOptions & options)
{
    if (n_particles == 0) throw PreconditionError("sis_infer needs at least one particle");
    ParticleSet ps;
    ps.traces.resize(n_particles);
    parallel_for(n_particles, options.threads, [&](std::size_t i) {
        Trace t = run_model(model, Mode::Guided, derive_seed(master_seed, i), observation, source);
        t.trace_id = i;
        t.observation.clear();
        t.observation.shrink_to_fit();
        ps.traces[i] = std::move(t);
    });
    ps.log_weights.reserve(n_particles);
    for (auto & t : ps.traces) {
        ps.log_weights.push_back(t.log_weight);
        if (std::isinf(t.log_weight) && t.log_weight < 0 && ps.zero_weight_site.empty()) {
            for (const auto & o : t.observes) {
                if (std::isinf(o.log_likelihood)) {
                    ps.zero_weight_site = o.address.render();
                    break;
                }
            }
        }
        if (!options.keep_observes) {
            t.observes.clear();
            t.observes.shrink_to_fit();
        }
    }
    normalize(ps);
    return ps;
}

std::vector<double> normalize_log_weights(std::span<const double> log_weights)
{
    const double m = kernels::active().max(log_weights.data(), log_weights.size());
    if (!std::isfinite(m)) {
        if (m > 0) throw PreconditionError("log-weight of +infinity");
        throw AllWeightsZero("every particle has zero weight");
    }
    std::vector<double> w(log_weights.size());
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(log_weights[i] - m);
        total += w[i];
    }
    for (auto & x : w) x /= total;
    return w;
}

void normalize(ParticleSet & ps)
{
    if (ps.log_weights.size() != ps.traces.size()) throw PreconditionError("particle set lengths differ");
    try {
        ps.weights = normalize_log_weights(ps.log_weights);
    } catch (const AllWeightsZero &) {
        std::string msg = "all " + std::to_string(ps.log_weights.size()) + " particles have zero weight";
        if (!ps.zero_weight_site.empty()) msg += "; first zero-likelihood observe at '" + ps.zero_weight_site + "'";
        throw AllWeightsZero(msg);
    }
    ps.normalized = true;
}

double effective_sample_size(std::span<const double> w)
{
    double s2 = 0.0;
    for (double x : w) s2 += x * x;
    return 1.0 / s2;
}

double effective_sample_size(const ParticleSet & ps)
{
    if (!ps.normalized) throw PreconditionError("particle set is not normalized");
    return effective_sample_size(ps.weights);
}

double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q)
{
    if (values.size() != weights.size()) throw DimensionMismatch("values and weights differ in length");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (weights[i] > 0.0) idx.push_back(i);
    }
    if (idx.empty()) throw PreconditionError("quantile of an empty weighted sample");
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    double total = 0.0;
    for (auto i : idx) total += weights[i];
    const double target = q * total;
    double prev_c = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const double c = prev_c + weights[idx[k]];
        if (c >= target) {
            if (k == 0) return values[idx[0]];
            const double frac = (target - prev_c) / (c - prev_c);
            return values[idx[k - 1]] + frac * (values[idx[k]] - values[idx[k - 1]]);
        }
        prev_c = c;
    }
    return values[idx.back()];
}

PosteriorSummary posterior_summary(const ParticleSet & ps, const std::string & name)
{
    if (!ps.normalized) throw PreconditionError("particle set is not normalized");
    PosteriorSummary s;
    s.predict = name;
    s.n_particles = ps.traces.size();
    s.ess = effective_sample_size(ps);

    std::vector<double> values;
    values.reserve(ps.traces.size());
    bool all_integer = true;
    for (const auto & t : ps.traces) {
        auto it = t.predicts.find(name);
        if (it == t.predicts.end()) {
            throw MissingPredict("trace " + std::to_string(t.trace_id) + " has no predict '" + name + "'");
        }
        all_integer = all_integer && it->second.is_integer();
        values.push_back(it->second.as_double());
    }
    s.integer = all_integer;

    if (s.integer) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (ps.weights[i] > 0.0) s.histogram[static_cast<std::int64_t>(values[i])] += ps.weights[i];
        }
        for (const auto & [k, w] : s.histogram) s.mean += static_cast<double>(k) * w;
        for (const auto & [k, w] : s.histogram) s.variance += w * (static_cast<double>(k) - s.mean) * (static_cast<double>(k) - s.mean);
        return s;
    }

    for (std::size_t i = 0; i < values.size(); ++i) s.mean += ps.weights[i] * values[i];
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = values[i] - s.mean;
        s.variance += ps.weights[i] * d * d;
    }
    for (double q : {0.05, 0.5, 0.95}) s.quantiles[q] = weighted_quantile(values, ps.weights, q);
    return s;
}

std::string summary_to_json(const PosteriorSummary & s)
{
    nlohmann::ordered_json j;
    j["predict"] = s.predict;
    j["kind"] = s.integer ? "int" : "real";
    if (s.integer) {
        nlohmann::ordered_json h = nlohmann::ordered_json::object();
        for (const auto & [k, w] : s.histogram) h[std::to_string(k)] = w;
        j["histogram"] = std::move(h);
    } else {
        j["mean"] = s.mean;
        j["var"] = s.variance;
        nlohmann::ordered_json q = nlohmann::ordered_json::object();
        q["0.05"] = s.quantiles.at(0.05);
        q["0.5"] = s.quantiles.at(0.5);
        q["0.95"] = s.quantiles.at(0.95);
        j["quantiles"] = std::move(q);
    }
    j["ess"] = s.ess;
    j["n_particles"] = s.n_particles;
    return j.dump();
}

} // namespace simprob
