#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "simprob/distributions.hpp"
#include "simprob/random.hpp"
#include "simprob/trace.hpp"

namespace simprob {

enum class Mode {
    Prior,   // draw every latent from its prior
    Record,  // prior draws; rejection scopes keep only the accepted iteration
    Guided,  // draw from proposals supplied by a ProposalSource
};

const char * to_string(Mode mode) noexcept;

// Answers "which proposal should be used at this address?" during guided
// execution. Returning nullopt makes the runtime fall back to the prior and
// count the event.
class ProposalSource {
public:
    virtual ~ProposalSource() = default;

    virtual std::optional<std::vector<double>> propose(std::span<const double> observation, const Address & address,
                                                       const Distribution & prior, double prev_value) const = 0;
};

// State of one model execution. Strictly single-threaded; one per run.
class ExecutionContext {
public:
    ExecutionContext(Mode mode, std::uint64_t seed, std::optional<std::vector<double>> observation,
                     const ProposalSource * source);

    ExecutionContext(const ExecutionContext &) = delete;
    ExecutionContext & operator=(const ExecutionContext &) = delete;

    Mode mode() const noexcept { return mode_; }
    Rng & rng() noexcept { return rng_; }
    bool has_observation() const noexcept { return observation_given_; }

    Value sample(const std::string & site_id, const Distribution & prior);

    // Conditions on an explicit value.
    void observe(const std::string & site_id, const Distribution & dist, const Value & observed);
    // Conditions on the next element of the observation vector. Without an
    // observation the value is drawn from `dist` and appended to the
    // generated observation, which is how training data is produced.
    Value observe(const std::string & site_id, const Distribution & dist);

    void predict(const std::string & name, const Value & value);

    void scope_begin(const std::string & scope_id);
    void scope_retry();
    void scope_end();

    // Hierarchical path prefix for subsequent addresses.
    void push_frame(const std::string & name);
    void pop_frame();

    const std::string & last_address() const noexcept { return last_address_; }

    // Closes the execution and returns the trace with its cached log-weight.
    Trace finish();

private:
    struct CachedProposal {
        std::optional<Distribution> proposal;  // empty: prior fallback
        std::vector<double> raw;
    };

    struct ScopeState {
        std::string id;
        std::uint32_t iteration = 0;
        std::size_t entry_mark = 0;
        CounterTable counters_at_begin;
        std::vector<std::string> iteration_predicts;
        std::map<std::pair<std::string, std::uint32_t>, CachedProposal> cached_proposals;
        std::map<std::string, std::uint32_t> iteration_occurrences;
    };

    Address extend(const std::string & site_id, std::string_view family);
    ScopeState & current_scope(const char * op);

    Mode mode_;
    Rng rng_;
    const ProposalSource * source_;
    bool observation_given_ = false;
    std::size_t observation_cursor_ = 0;
    CounterTable counters_;
    std::vector<std::string> frames_;
    std::vector<ScopeState> scopes_;
    std::string last_address_;
    Trace trace_;
    bool finished_ = false;
};

// Free-function spelling of the three statements, for model code.
inline Value sample(ExecutionContext & ctx, const std::string & site_id, const Distribution & prior)
{
    return ctx.sample(site_id, prior);
}
inline void observe(ExecutionContext & ctx, const std::string & site_id, const Distribution & dist,
                    const Value & observed)
{
    ctx.observe(site_id, dist, observed);
}
inline void predict(ExecutionContext & ctx, const std::string & name, const Value & value)
{
    ctx.predict(name, value);
}

using Model = std::function<void(ExecutionContext &)>;

// Runs one execution. Guided mode requires an observation. Exceptions that
// are not simprob errors are rethrown as ModelError carrying the last
// address that executed.
Trace run_model(const Model & model, Mode mode, std::uint64_t seed,
                std::optional<std::vector<double>> observation = std::nullopt,
                const ProposalSource * source = nullptr);

} // namespace simprob
