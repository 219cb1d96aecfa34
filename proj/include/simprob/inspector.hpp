#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "simprob/trace.hpp"

namespace simprob {

inline constexpr const char * kStartNode = "START";
inline constexpr const char * kEndNode = "END";

// Directed multigraph of address successions. Nodes are addresses with the
// instance counter stripped, so loop sites show up as cycles.
struct SuccessionGraph {
    std::set<std::string> nodes{kStartNode, kEndNode};
    std::map<std::pair<std::string, std::string>, std::uint64_t> edges;

    void add_trace(const Trace & trace);
    void merge(const SuccessionGraph & other);

    std::uint64_t in_count(const std::string & node) const;
    std::uint64_t out_count(const std::string & node) const;

    friend bool operator==(const SuccessionGraph &, const SuccessionGraph &) = default;
};

struct TraceStats {
    std::uint64_t n_traces = 0;
    std::uint64_t min_length = 0;
    std::uint64_t max_length = 0;
    std::uint64_t total_length = 0;
    std::map<std::uint64_t, std::uint64_t> length_hist;
    // Keyed by the full, instance-qualified address.
    std::map<std::string, std::uint64_t> addresses;
    // scope_id -> (retries per scope execution -> count).
    std::map<std::string, std::map<std::uint32_t, std::uint64_t>> scope_retries;

    double mean_length() const noexcept
    {
        return n_traces == 0 ? 0.0 : static_cast<double>(total_length) / static_cast<double>(n_traces);
    }

    void add_trace(const Trace & trace);
    void merge(const TraceStats & other);

    friend bool operator==(const TraceStats &, const TraceStats &) = default;
};

// Builds from a JSONL stream in one pass; memory grows with the number of
// distinct addresses, not with the number of traces.
SuccessionGraph build_graph(std::istream & jsonl);
SuccessionGraph build_graph(std::span<const Trace> traces);
TraceStats compute_stats(std::istream & jsonl);
TraceStats compute_stats(std::span<const Trace> traces);

// Graph and statistics from a single pass over the stream.
std::pair<SuccessionGraph, TraceStats> inspect_stream(std::istream & jsonl);

// DOT digraph; edges ordered lexicographically by (from, to).
std::string graph_to_dot(const SuccessionGraph & graph);

// {n_traces, length:{min,max,mean,hist}, addresses:{addr:count}, scopes:{scope_id: retry_hist}}
std::string stats_to_json(const TraceStats & stats);

struct Cycle {
    std::vector<std::string> nodes;  // starts at the lexicographically smallest node
    std::uint64_t traversals;        // smallest edge count along the cycle
};

// Elementary cycles (self-loops included), ranked by traversal count.
std::vector<Cycle> find_cycles(const SuccessionGraph & graph, std::size_t limit = 10000);

struct HotspotReport {
    double threshold = 0.0;
    // Stripped addresses whose mean occurrences per trace exceed the threshold.
    std::vector<std::pair<std::string, double>> addresses;
    std::vector<Cycle> cycles;

    bool empty() const noexcept { return addresses.empty() && cycles.empty(); }
};

// Throws PreconditionError unless threshold > 1.
HotspotReport hotspot_report(const TraceStats & stats, const SuccessionGraph & graph, double threshold);
std::string report_to_json(const HotspotReport & report);
std::string report_to_text(const HotspotReport & report);

} // namespace simprob
