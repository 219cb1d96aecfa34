#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "simprob/errors.hpp"
#include "simprob/random.hpp"
#include "simprob/trace.hpp"
#include "simprob/trace_io.hpp"

using namespace simprob;

TEST_CASE("address_extend issues instance counters per (path, family)")
{
    CounterTable table;
    CHECK(table.extend({}, "A1", "Normal").render() == "A1:Normal#0");
    CHECK(table.extend({}, "A1", "Normal").render() == "A1:Normal#1");
    CHECK(table.extend({"outer"}, "A1", "Normal").render() == "outer/A1:Normal#0");
    CHECK(table.extend({}, "A2", "Normal").render() == "A2:Normal#0");
}

TEST_CASE("address_extend rejects a family change at the same structural slot")
{
    CounterTable table;
    table.extend({}, "A1", "Normal");
    CHECK_THROWS_AS(table.extend({}, "A1", "Categorical"), AddressFamilyMismatch);
}

TEST_CASE("address_extend validates site ids")
{
    CounterTable table;
    CHECK_THROWS_AS(table.extend({}, "", "Normal"), InvalidParameter);
    CHECK_THROWS_AS(table.extend({}, "a#b", "Normal"), InvalidParameter);
}

TEST_CASE("rendered addresses parse back and strip")
{
    CounterTable table;
    table.extend({"x", "y"}, "site", "Uniform");
    const Address a = table.extend({"x", "y"}, "site", "Uniform");
    CHECK(parse_address(a.render()) == a);
    CHECK(a.stripped() == "x/y/site:Uniform");
    CHECK(strip_instance(a.render()) == a.stripped());
    CHECK_THROWS_AS(parse_address("nonsense"), InvalidParameter);
}

namespace {

TraceEntry entry(double log_p, double log_q)
{
    TraceEntry e;
    e.address = parse_address("s:Normal#0");
    e.family = "Normal";
    e.dist_params = {0.0, 1.0};
    e.value = Value(0.25);
    e.log_p = log_p;
    e.log_q = log_q;
    return e;
}

} // namespace

TEST_CASE("trace_log_weight examples")
{
    Trace empty;
    CHECK(trace_log_weight(empty) == 0.0);

    Trace t;
    t.entries.push_back(entry(-1.3, -1.3));
    t.observes.push_back(ObserveEntry{parse_address("y:Normal#0"), -0.5 * std::log(2.0 * M_PI)});
    CHECK(trace_log_weight(t) == doctest::Approx(-0.9189385).epsilon(1e-7));

    Trace u;
    u.entries.push_back(entry(-1.0, -2.0));
    u.observes.push_back(ObserveEntry{parse_address("y:Normal#0"), -0.5});
    CHECK(trace_log_weight(u) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("trace_log_weight counts rejected entries")
{
    Trace t;
    t.entries.push_back(entry(-1.0, -2.0));
    t.entries.back().accepted = false;
    t.entries.push_back(entry(-1.0, -1.5));
    CHECK(trace_log_weight(t) == doctest::Approx(1.5));
}

TEST_CASE("JSONL serialization round-trips random traces")
{
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        Trace t;
        t.trace_id = rng() % 1000;
        const int n = static_cast<int>(rng() % 6);
        CounterTable table;
        for (int i = 0; i < n; ++i) {
            TraceEntry e;
            const bool integer = rng() % 2 == 0;
            e.address = table.extend({}, (integer ? "k" : "s") + std::to_string(rng() % 3), integer ? "Categorical" : "Normal");
            e.family = e.address.family_tag;
            e.dist_params = integer ? std::vector<double>{0.25, 0.75} : std::vector<double>{uniform_open01(rng), 1.5};
            e.value = integer ? Value(static_cast<std::int64_t>(rng() % 2)) : Value(uniform_open01(rng) * 10 - 5);
            e.log_p = -uniform_open01(rng) * 3;
            e.log_q = -uniform_open01(rng) * 3;
            if (rng() % 2) {
                e.scope_id = "loop";
                e.iteration = static_cast<std::uint32_t>(rng() % 4);
                e.accepted = rng() % 2;
            }
            t.entries.push_back(e);
        }
        t.observes.push_back(ObserveEntry{table.extend({}, "y", "Normal"),
                                          rep % 5 == 0 ? -std::numeric_limits<double>::infinity() : -0.7});
        if (rep % 2) t.predicts.emplace("p", Value(uniform_open01(rng)));
        t.predicts.emplace("k", Value(static_cast<std::int64_t>(rep)));
        t.log_weight = trace_log_weight(t);

        const std::string line = trace_to_jsonl(t);
        CHECK(line.find('\n') == std::string::npos);
        const Trace back = trace_from_jsonl(line);
        CHECK(trace_to_jsonl(back) == line);
        REQUIRE(back.entries.size() == t.entries.size());
        for (std::size_t i = 0; i < t.entries.size(); ++i) {
            CHECK(back.entries[i].value == t.entries[i].value);
            CHECK(back.entries[i].address == t.entries[i].address);
        }
        CHECK(back.predicts == t.predicts);
        if (rep % 5 == 0) CHECK(std::isinf(back.log_weight));
    }
}

TEST_CASE("serialized field names")
{
    Trace t;
    t.entries.push_back(entry(-1.0, -1.0));
    const std::string line = trace_to_jsonl(t);
    for (const char * field : {"\"trace_id\"", "\"entries\"", "\"addr\"", "\"family\"", "\"params\"", "\"value\"",
                               "\"log_p\"", "\"log_q\"", "\"scope_id\"", "\"iteration\"", "\"accepted\"",
                               "\"observes\"", "\"predicts\"", "\"log_weight\""}) {
        CHECK(line.find(field) != std::string::npos);
    }
}

TEST_CASE("TraceReader reports the line of a malformed record")
{
    std::istringstream in(trace_to_jsonl(Trace{}) + "\n\n{\"trace_id\": 1}\n");
    TraceReader reader(in);
    CHECK(reader.next().has_value());
    try {
        reader.next();
        FAIL("expected MalformedTrace");
    } catch (const MalformedTrace & e) {
        CHECK(e.line() == 3);
    }
}
