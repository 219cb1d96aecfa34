#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "simprob/errors.hpp"
#include "simprob/inspector.hpp"
#include "simprob/runtime.hpp"
#include "simprob/simzoo.hpp"
#include "simprob/trace_io.hpp"

using namespace simprob;

namespace {

void chain_model(ExecutionContext & ctx)
{
    for (const char * site : {"A", "B", "C"}) ctx.sample(site, Distribution::normal(0, 1));
}

std::vector<Trace> traces_of(const Model & m, std::size_t n, Mode mode = Mode::Prior, std::uint64_t base = 0)
{
    std::vector<Trace> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(run_model(m, mode, base + i));
    return out;
}

std::string to_jsonl(std::span<const Trace> traces)
{
    std::ostringstream out;
    for (const auto & t : traces) write_trace(out, t);
    return out.str();
}

void check_flow(const SuccessionGraph & g, std::uint64_t n_traces)
{
    for (const auto & node : g.nodes) {
        if (node == kStartNode || node == kEndNode) continue;
        CHECK(g.in_count(node) == g.out_count(node));
    }
    CHECK(g.out_count(kStartNode) == n_traces);
    CHECK(g.in_count(kEndNode) == n_traces);
}

} // namespace

TEST_CASE("chain model graph")
{
    const auto traces = traces_of(chain_model, 10);
    const auto g = build_graph(traces);
    CHECK(g.nodes == std::set<std::string>{"START", "A:Normal", "B:Normal", "C:Normal", "END"});
    CHECK(g.edges.size() == 4);
    for (const auto & [edge, count] : g.edges) CHECK(count == 10);
    const auto dot = graph_to_dot(g);
    CHECK(dot.find("\"A:Normal\" -> \"B:Normal\" [label=\"10\"]") != std::string::npos);
    CHECK(dot == graph_to_dot(build_graph(traces)));
    check_flow(g, 10);
}

TEST_CASE("empty stream")
{
    std::istringstream empty("");
    const auto [g, stats] = inspect_stream(empty);
    CHECK(g.nodes == std::set<std::string>{"START", "END"});
    CHECK(g.edges.empty());
    CHECK(stats.n_traces == 0);
    const auto j = nlohmann::json::parse(stats_to_json(stats));
    CHECK(j["n_traces"] == 0);
}

TEST_CASE("self-loops are preserved")
{
    const Model m = [](ExecutionContext & ctx) {
        ctx.sample("A1", Distribution::normal(0, 1));
        ctx.sample("A1", Distribution::normal(0, 1));
    };
    const auto traces = traces_of(m, 3);
    const auto g = build_graph(traces);
    CHECK(graph_to_dot(g).find("\"A1:Normal\" -> \"A1:Normal\"") != std::string::npos);
    const auto cycles = find_cycles(g);
    REQUIRE(cycles.size() == 1);
    CHECK(cycles[0].nodes == std::vector<std::string>{"A1:Normal"});
    CHECK(cycles[0].traversals == 3);
}

TEST_CASE("rejection loop appears as one cycle")
{
    const auto traces = traces_of(simzoo::rejection_demo, 500);
    const auto g = build_graph(traces);
    check_flow(g, 500);
    const auto cycles = find_cycles(g);
    REQUIRE(cycles.size() == 1);
    CHECK(cycles[0].nodes == std::vector<std::string>{"u:Uniform", "v:Uniform"});

    const auto stats = compute_stats(traces);
    const auto report = hotspot_report(stats, g, 1.1);
    REQUIRE(report.addresses.size() == 2);
    CHECK(report.addresses[0].first == "u:Uniform");
    CHECK(report.addresses[0].second > 1.1);
    REQUIRE(report.cycles.size() == 1);
    CHECK(report_to_text(report).find("u:Uniform") != std::string::npos);
    const auto j = nlohmann::json::parse(report_to_json(report));
    CHECK(j["cycles"].size() == 1);
}

TEST_CASE("two disjoint cycles are both listed")
{
    SuccessionGraph g;
    for (const char * n : {"a", "b", "c"}) g.nodes.insert(n);
    g.edges[{"START", "a"}] = 2;
    g.edges[{"a", "b"}] = 5;
    g.edges[{"b", "a"}] = 3;
    g.edges[{"b", "c"}] = 2;
    g.edges[{"c", "c"}] = 7;
    g.edges[{"c", "END"}] = 2;
    const auto cycles = find_cycles(g);
    REQUIRE(cycles.size() == 2);
    CHECK(cycles[0].nodes == std::vector<std::string>{"c"});
    CHECK(cycles[0].traversals == 7);
    CHECK(cycles[1].nodes == std::vector<std::string>{"a", "b"});
    CHECK(cycles[1].traversals == 3);
}

TEST_CASE("chain model has an empty hotspot report")
{
    const auto traces = traces_of(chain_model, 20);
    CHECK(hotspot_report(compute_stats(traces), build_graph(traces), 1.01).empty());
    CHECK_THROWS_AS(hotspot_report(compute_stats(traces), build_graph(traces), 1.0), PreconditionError);
}

TEST_CASE("trace statistics")
{
    const auto traces = traces_of(chain_model, 3);
    const auto s = compute_stats(traces);
    CHECK(s.mean_length() == 3.0);
    CHECK(s.max_length == 3);
    CHECK(s.min_length == 3);
    CHECK(s.addresses.at("B:Normal#0") == 3);

    const auto prior = traces_of(simzoo::rejection_demo, 20000, Mode::Prior, 1);
    const auto ps = compute_stats(prior);
    // Expected 4/pi iterations of two draws each; sd of one length is 2 sqrt(1-p)/p.
    const double p = M_PI / 4;
    const double se = 2 * std::sqrt(1 - p) / p / std::sqrt(20000.0);
    CHECK(std::abs(ps.mean_length() - 8 / M_PI) < 5 * se);
    std::uint64_t executions = 0;
    for (const auto & [retries, count] : ps.scope_retries.at("disc")) executions += count;
    CHECK(executions == 20000);
    CHECK(ps.scope_retries.at("disc").at(0) > 15000 * 0.95);

    const auto rec = compute_stats(traces_of(simzoo::rejection_demo, 1000, Mode::Record));
    CHECK(rec.min_length == 2);
    CHECK(rec.max_length == 2);
}

TEST_CASE("streaming merge equals a single pass")
{
    const auto traces = traces_of(simzoo::rejection_demo, 300, Mode::Prior, 50);
    std::istringstream whole(to_jsonl(traces));
    const auto [g_all, s_all] = inspect_stream(whole);

    SuccessionGraph g_merged;
    TraceStats s_merged;
    for (std::size_t start : {0u, 70u, 71u, 200u}) {
        const std::size_t stop = start == 0 ? 70 : start == 70 ? 71 : start == 71 ? 200 : 300;
        const std::span<const Trace> part(traces.data() + start, stop - start);
        std::istringstream in(to_jsonl(part));
        const auto [g, s] = inspect_stream(in);
        g_merged.merge(g);
        s_merged.merge(s);
    }
    CHECK(g_merged == g_all);
    CHECK(s_merged == s_all);
    CHECK(g_all == build_graph(traces));
    CHECK(s_all == compute_stats(traces));
}

TEST_CASE("stats JSON layout")
{
    const auto j = nlohmann::json::parse(stats_to_json(compute_stats(traces_of(simzoo::rejection_demo, 50))));
    CHECK(j["n_traces"] == 50);
    for (auto key : {"min", "max", "mean", "hist"}) CHECK(j["length"].contains(key));
    CHECK(j["addresses"].contains("u:Uniform#0"));
    CHECK(j["scopes"].contains("disc"));
}
