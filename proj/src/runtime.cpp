#include "simprob/runtime.hpp"

#include <algorithm>
#include <exception>

#include "simprob/errors.hpp"

namespace simprob {

const char * to_string(Mode mode) noexcept
{
    switch (mode) {
    case Mode::Prior: return "prior";
    case Mode::Record: return "record";
    case Mode::Guided: return "guided";
    }
    return "unknown";
}

ExecutionContext::ExecutionContext(Mode mode, std::uint64_t seed, std::optional<std::vector<double>> observation,
                                   const ProposalSource * source)
    : mode_(mode), rng_(seed), source_(source)
{
    if (mode == Mode::Guided && !observation) {
        throw PreconditionError("guided execution requires an observation");
    }
    if (observation) {
        observation_given_ = true;
        trace_.observation = std::move(*observation);
    }
}

Address ExecutionContext::extend(const std::string & site_id, std::string_view family)
{
    return counters_.extend(frames_, site_id, std::string(family));
}

ExecutionContext::ScopeState & ExecutionContext::current_scope(const char * op)
{
    if (scopes_.empty()) throw ScopeUnderflow(std::string(op) + " called outside any rejection scope");
    return scopes_.back();
}

Value ExecutionContext::sample(const std::string & site_id, const Distribution & prior)
{
    if (finished_) throw PreconditionError("execution already finished");
    Address address = extend(site_id, prior.family());

    const double prev_value = trace_.entries.empty() ? 0.0 : trace_.entries.back().value.as_double();

    std::optional<Distribution> proposal;
    std::vector<double> raw;
    if (mode_ == Mode::Guided && source_ != nullptr) {
        CachedProposal * cached = nullptr;
        ScopeState * scope = scopes_.empty() ? nullptr : &scopes_.back();
        std::pair<std::string, std::uint32_t> key;
        if (scope != nullptr) {
            const std::string stripped = address.stripped();
            key = {stripped, scope->iteration_occurrences[stripped]++};
            if (auto it = scope->cached_proposals.find(key); it != scope->cached_proposals.end()) {
                cached = &it->second;
            }
        }
        if (cached != nullptr) {
            proposal = cached->proposal;
            raw = cached->raw;
        } else {
            if (auto answer = source_->propose(trace_.observation, address, prior, prev_value)) {
                raw = std::move(*answer);
                proposal = proposal_from_params(prior, raw);
            }
            if (scope != nullptr && scope->iteration == 0) scope->cached_proposals.emplace(key, CachedProposal{proposal, raw});
        }
        if (!proposal) ++trace_.proposal_fallbacks;
    }

    TraceEntry entry;
    entry.family = std::string(prior.family());
    entry.dist_params = prior.params();
    if (proposal) {
        entry.value = proposal->sample(rng_);
        entry.log_p = prior.log_prob(entry.value);
        entry.log_q = proposal->log_prob(entry.value);
        entry.proposal_family = std::string(proposal->family());
        entry.proposal_params = proposal->params();
    } else {
        entry.value = prior.sample(rng_);
        entry.log_p = prior.log_prob(entry.value);
        entry.log_q = entry.log_p;
    }
    if (!scopes_.empty()) {
        entry.scope_id = scopes_.back().id;
        entry.iteration = scopes_.back().iteration;
    }
    last_address_ = address.render();
    entry.address = std::move(address);
    const Value out = entry.value;
    trace_.entries.push_back(std::move(entry));
    return out;
}

void ExecutionContext::observe(const std::string & site_id, const Distribution & dist, const Value & observed)
{
    if (finished_) throw PreconditionError("execution already finished");
    if (!scopes_.empty()) {
        throw PreconditionError("observe inside rejection scope '" + scopes_.back().id + "' is not supported");
    }
    Address address = extend(site_id, dist.family());
    last_address_ = address.render();
    trace_.observes.push_back(ObserveEntry{std::move(address), dist.log_prob(observed)});
}

Value ExecutionContext::observe(const std::string & site_id, const Distribution & dist)
{
    Value value;
    if (observation_given_) {
        if (observation_cursor_ >= trace_.observation.size()) {
            throw PreconditionError("observation exhausted at site '" + site_id + "' (length " +
                                    std::to_string(trace_.observation.size()) + ")");
        }
        const double x = trace_.observation[observation_cursor_++];
        value = dist.integer_valued() ? Value(static_cast<std::int64_t>(x)) : Value(x);
    } else {
        value = dist.sample(rng_);
        trace_.observation.push_back(value.as_double());
    }
    observe(site_id, dist, value);
    return value;
}

void ExecutionContext::predict(const std::string & name, const Value & value)
{
    if (finished_) throw PreconditionError("execution already finished");
    if (!trace_.predicts.emplace(name, value).second) {
        throw DuplicatePredictName("predict name '" + name + "' used twice in one execution");
    }
    if (!scopes_.empty()) scopes_.back().iteration_predicts.push_back(name);
}

void ExecutionContext::scope_begin(const std::string & scope_id)
{
    if (finished_) throw PreconditionError("execution already finished");
    for (const auto & s : scopes_) {
        if (s.id == scope_id) throw NestedScopeReuse("rejection scope '" + scope_id + "' opened inside itself");
    }
    ScopeState s;
    s.id = scope_id;
    s.entry_mark = trace_.entries.size();
    if (mode_ == Mode::Record) s.counters_at_begin = counters_;
    scopes_.push_back(std::move(s));
}

void ExecutionContext::scope_retry()
{
    auto & scope = current_scope("scope_retry");
    for (const auto & name : scope.iteration_predicts) trace_.predicts.erase(name);
    scope.iteration_predicts.clear();
    scope.iteration_occurrences.clear();

    if (mode_ == Mode::Record) {
        // Rejected draws never reach the training trace, and the accepted
        // iteration is addressed as if it had run first.
        trace_.entries.resize(scope.entry_mark);
        counters_ = scope.counters_at_begin;
    } else {
        for (std::size_t i = scope.entry_mark; i < trace_.entries.size(); ++i) trace_.entries[i].accepted = false;
        scope.entry_mark = trace_.entries.size();
    }
    ++scope.iteration;
}

void ExecutionContext::scope_end()
{
    current_scope("scope_end");
    scopes_.pop_back();
}

void ExecutionContext::push_frame(const std::string & name)
{
    if (name.empty() || name.find_first_of("/:#") != std::string::npos) {
        throw InvalidParameter("frame name '" + name + "' is empty or contains a reserved character");
    }
    frames_.push_back(name);
}

void ExecutionContext::pop_frame()
{
    if (frames_.empty()) throw PreconditionError("pop_frame without push_frame");
    frames_.pop_back();
}

Trace ExecutionContext::finish()
{
    if (finished_) throw PreconditionError("execution already finished");
    if (!scopes_.empty()) throw PreconditionError("rejection scope '" + scopes_.back().id + "' not closed");
    if (!frames_.empty()) throw PreconditionError("address frame '" + frames_.back() + "' not popped");
    if (observation_given_ && observation_cursor_ != 0 && observation_cursor_ != trace_.observation.size()) {
        throw PreconditionError("model consumed " + std::to_string(observation_cursor_) + " of " +
                                std::to_string(trace_.observation.size()) + " observed values");
    }
    finished_ = true;
    trace_.log_weight = trace_log_weight(trace_);
    return std::move(trace_);
}

Trace run_model(const Model & model, Mode mode, std::uint64_t seed, std::optional<std::vector<double>> observation,
                const ProposalSource * source)
{
    ExecutionContext ctx(mode, seed, std::move(observation), source);
    try {
        model(ctx);
    } catch (const Error &) {
        throw;
    } catch (const std::exception & e) {
        throw ModelError(ctx.last_address(), e.what());
    }
    return ctx.finish();
}

} // namespace simprob
