#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace simprob {

// Scalar drawn or observed at a site: either a real or an integer.
class Value {
public:
    enum class Kind : std::uint8_t { Real, Integer };

    constexpr Value() = default;
    constexpr Value(double x) : kind_(Kind::Real), real_(x) {}
    constexpr Value(std::int64_t n) : kind_(Kind::Integer), int_(n) {}
    constexpr Value(int n) : Value(static_cast<std::int64_t>(n)) {}

    constexpr Kind kind() const noexcept { return kind_; }
    constexpr bool is_integer() const noexcept { return kind_ == Kind::Integer; }

    constexpr double as_double() const noexcept
    {
        return kind_ == Kind::Integer ? static_cast<double>(int_) : real_;
    }
    constexpr std::int64_t as_int() const noexcept
    {
        return kind_ == Kind::Integer ? int_ : static_cast<std::int64_t>(real_);
    }

    friend constexpr bool operator==(const Value & a, const Value & b) noexcept
    {
        if (a.kind_ != b.kind_) return false;
        return a.kind_ == Kind::Integer ? a.int_ == b.int_ : a.real_ == b.real_;
    }

private:
    Kind kind_ = Kind::Real;
    double real_ = 0.0;
    std::int64_t int_ = 0;
};

// Structural identifier of a random choice. Rendered as
// "<path joined by '/'>:<family>#<instance>".
struct Address {
    std::vector<std::string> path;
    std::string family_tag;
    std::uint32_t instance = 0;

    std::string path_string() const;
    // Address without the instance counter; repeated loop sites share it.
    std::string stripped() const;
    std::string render() const;

    friend bool operator==(const Address &, const Address &) = default;
};

// Inverse of Address::render.
Address parse_address(const std::string & rendered);
// "a/b:Normal#3" -> "a/b:Normal". Strings without '#' are returned unchanged.
std::string strip_instance(const std::string & rendered);

// Per-execution occurrence counters. Not shared between executions.
class CounterTable {
public:
    // Issues the next instance for (path, family). Throws
    // AddressFamilyMismatch if the same (path, instance) slot was already
    // issued with another family.
    Address extend(const std::vector<std::string> & parent, const std::string & site_id,
                   const std::string & family_tag);

    void clear();

private:
    std::map<std::pair<std::string, std::string>, std::uint32_t> counts_;
    std::map<std::pair<std::string, std::uint32_t>, std::string> slots_;
};

struct TraceEntry {
    Address address;
    std::string family;  // family of the prior at this site
    std::vector<double> dist_params;
    Value value;
    double log_p = 0.0;
    double log_q = 0.0;
    std::optional<std::string> scope_id;
    std::uint32_t iteration = 0;
    bool accepted = true;
    // In-memory only: family and parameters of the proposal actually sampled
    // from; empty when the prior was used.
    std::string proposal_family;
    std::vector<double> proposal_params;
};

struct ObserveEntry {
    Address address;
    double log_likelihood = 0.0;
};

struct Trace {
    std::uint64_t trace_id = 0;
    std::vector<TraceEntry> entries;
    std::vector<ObserveEntry> observes;
    std::map<std::string, Value> predicts;
    double log_weight = 0.0;

    // In-memory only: the conditioning data (generated when executed
    // without an observation) and the count of prior fallbacks caused by a
    // proposal source that had no answer for an address.
    std::vector<double> observation;
    std::uint32_t proposal_fallbacks = 0;

    std::size_t length() const noexcept { return entries.size(); }
};

// log w = sum of observe log-likelihoods + sum over all entries of (log_p - log_q).
double trace_log_weight(const Trace & trace);

} // namespace simprob
