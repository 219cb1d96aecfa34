#include "simprob/trace_io.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

#include "simprob/errors.hpp"

namespace simprob {

namespace {

using json = nlohmann::ordered_json;

json real_to_json(double x)
{
    return std::isfinite(x) ? json(x) : json(nullptr);
}

double real_from_json(const json & j)
{
    if (j.is_null()) return -std::numeric_limits<double>::infinity();
    return j.get<double>();
}

json value_to_json(const Value & v)
{
    if (v.is_integer()) return json(v.as_int());
    return real_to_json(v.as_double());
}

Value value_from_json(const json & j)
{
    if (j.is_number_integer()) return Value(j.get<std::int64_t>());
    if (j.is_number()) return Value(j.get<double>());
    throw MalformedFile("value is not a number");
}

} // namespace

std::string trace_to_jsonl(const Trace & trace)
{
    json j;
    j["trace_id"] = trace.trace_id;
    json entries = json::array();
    for (const auto & e : trace.entries) {
        json je;
        je["addr"] = e.address.render();
        je["family"] = e.family;
        json params = json::array();
        for (double p : e.dist_params) params.push_back(real_to_json(p));
        je["params"] = std::move(params);
        je["value"] = value_to_json(e.value);
        je["log_p"] = real_to_json(e.log_p);
        je["log_q"] = real_to_json(e.log_q);
        je["scope_id"] = e.scope_id ? json(*e.scope_id) : json(nullptr);
        je["iteration"] = e.iteration;
        je["accepted"] = e.accepted;
        entries.push_back(std::move(je));
    }
    j["entries"] = std::move(entries);
    json observes = json::array();
    for (const auto & o : trace.observes) {
        observes.push_back(json{{"addr", o.address.render()}, {"log_likelihood", real_to_json(o.log_likelihood)}});
    }
    j["observes"] = std::move(observes);
    json predicts = json::object();
    for (const auto & [name, v] : trace.predicts) predicts[name] = value_to_json(v);
    j["predicts"] = std::move(predicts);
    j["log_weight"] = real_to_json(trace.log_weight);
    return j.dump();
}

Trace trace_from_jsonl(const std::string & line)
{
    Trace t;
    try {
        const json j = json::parse(line);
        t.trace_id = j.at("trace_id").get<std::uint64_t>();
        for (const auto & je : j.at("entries")) {
            TraceEntry e;
            e.address = parse_address(je.at("addr").get<std::string>());
            e.family = je.at("family").get<std::string>();
            for (const auto & p : je.at("params")) e.dist_params.push_back(real_from_json(p));
            e.value = value_from_json(je.at("value"));
            e.log_p = real_from_json(je.at("log_p"));
            e.log_q = real_from_json(je.at("log_q"));
            if (!je.at("scope_id").is_null()) e.scope_id = je.at("scope_id").get<std::string>();
            e.iteration = je.at("iteration").get<std::uint32_t>();
            e.accepted = je.at("accepted").get<bool>();
            t.entries.push_back(std::move(e));
        }
        for (const auto & jo : j.at("observes")) {
            t.observes.push_back(
                ObserveEntry{parse_address(jo.at("addr").get<std::string>()), real_from_json(jo.at("log_likelihood"))});
        }
        for (const auto & [name, v] : j.at("predicts").items()) t.predicts.emplace(name, value_from_json(v));
        t.log_weight = real_from_json(j.at("log_weight"));
    } catch (const json::exception & e) {
        throw MalformedFile(e.what());
    } catch (const InvalidParameter & e) {
        throw MalformedFile(e.what());
    }
    return t;
}

void write_trace(std::ostream & out, const Trace & trace)
{
    out << trace_to_jsonl(trace) << '\n';
}

std::optional<Trace> TraceReader::next()
{
    std::string text;
    while (std::getline(in_, text)) {
        ++line_;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            return trace_from_jsonl(text);
        } catch (const MalformedFile & e) {
            throw MalformedTrace(line_, e.what());
        }
    }
    return std::nullopt;
}

} // namespace simprob
