#include "simprob/inspector.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "simprob/errors.hpp"
#include "simprob/trace_io.hpp"

namespace simprob {

void SuccessionGraph::add_trace(const Trace & trace)
{
    std::string prev = kStartNode;
    for (const auto & e : trace.entries) {
        std::string node = e.address.stripped();
        nodes.insert(node);
        ++edges[{prev, node}];
        prev = std::move(node);
    }
    ++edges[{prev, kEndNode}];
}

void SuccessionGraph::merge(const SuccessionGraph & other)
{
    nodes.insert(other.nodes.begin(), other.nodes.end());
    for (const auto & [edge, count] : other.edges) edges[edge] += count;
}

std::uint64_t SuccessionGraph::in_count(const std::string & node) const
{
    std::uint64_t n = 0;
    for (const auto & [edge, count] : edges) {
        if (edge.second == node) n += count;
    }
    return n;
}

std::uint64_t SuccessionGraph::out_count(const std::string & node) const
{
    std::uint64_t n = 0;
    for (const auto & [edge, count] : edges) {
        if (edge.first == node) n += count;
    }
    return n;
}

void TraceStats::add_trace(const Trace & trace)
{
    const auto len = static_cast<std::uint64_t>(trace.entries.size());
    if (n_traces == 0) {
        min_length = max_length = len;
    } else {
        min_length = std::min(min_length, len);
        max_length = std::max(max_length, len);
    }
    ++n_traces;
    total_length += len;
    ++length_hist[len];

    // A scope execution ends when its iteration index drops. Consecutive
    // executions that both accept on the first iteration are indistinguishable
    // in the serialized form and count as one.
    std::map<std::string, std::uint32_t> open;
    for (const auto & e : trace.entries) {
        ++addresses[e.address.render()];
        if (!e.scope_id) continue;
        auto it = open.find(*e.scope_id);
        if (it == open.end()) {
            open.emplace(*e.scope_id, e.iteration);
        } else if (e.iteration < it->second) {
            ++scope_retries[it->first][it->second];
            it->second = e.iteration;
        } else {
            it->second = e.iteration;
        }
    }
    for (const auto & [scope, retries] : open) ++scope_retries[scope][retries];
}

void TraceStats::merge(const TraceStats & other)
{
    if (other.n_traces == 0) return;
    if (n_traces == 0) {
        min_length = other.min_length;
        max_length = other.max_length;
    } else {
        min_length = std::min(min_length, other.min_length);
        max_length = std::max(max_length, other.max_length);
    }
    n_traces += other.n_traces;
    total_length += other.total_length;
    for (const auto & [k, v] : other.length_hist) length_hist[k] += v;
    for (const auto & [k, v] : other.addresses) addresses[k] += v;
    for (const auto & [scope, hist] : other.scope_retries) {
        for (const auto & [k, v] : hist) scope_retries[scope][k] += v;
    }
}

std::pair<SuccessionGraph, TraceStats> inspect_stream(std::istream & jsonl)
{
    std::pair<SuccessionGraph, TraceStats> out;
    TraceReader reader(jsonl);
    while (auto t = reader.next()) {
        out.first.add_trace(*t);
        out.second.add_trace(*t);
    }
    return out;
}

SuccessionGraph build_graph(std::istream & jsonl)
{
    SuccessionGraph g;
    TraceReader reader(jsonl);
    while (auto t = reader.next()) g.add_trace(*t);
    return g;
}

SuccessionGraph build_graph(std::span<const Trace> traces)
{
    SuccessionGraph g;
    for (const auto & t : traces) g.add_trace(t);
    return g;
}

TraceStats compute_stats(std::istream & jsonl)
{
    TraceStats s;
    TraceReader reader(jsonl);
    while (auto t = reader.next()) s.add_trace(*t);
    return s;
}

TraceStats compute_stats(std::span<const Trace> traces)
{
    TraceStats s;
    for (const auto & t : traces) s.add_trace(t);
    return s;
}

namespace {

std::string dot_quote(const std::string & s)
{
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + '"';
}

} // namespace

std::string graph_to_dot(const SuccessionGraph & graph)
{
    std::ostringstream out;
    out << "digraph succession {\n";
    for (const auto & n : graph.nodes) {
        out << "  " << dot_quote(n);
        if (n == kStartNode || n == kEndNode) out << " [shape=box]";
        out << ";\n";
    }
    for (const auto & [edge, count] : graph.edges) {
        out << "  " << dot_quote(edge.first) << " -> " << dot_quote(edge.second) << " [label=\"" << count
            << "\"];\n";
    }
    out << "}\n";
    return out.str();
}

std::string stats_to_json(const TraceStats & s)
{
    using json = nlohmann::ordered_json;
    json hist = json::object();
    for (const auto & [len, count] : s.length_hist) hist[std::to_string(len)] = count;
    json addresses = json::object();
    for (const auto & [addr, count] : s.addresses) addresses[addr] = count;
    json scopes = json::object();
    for (const auto & [scope, h] : s.scope_retries) {
        json jh = json::object();
        for (const auto & [retries, count] : h) jh[std::to_string(retries)] = count;
        scopes[scope] = std::move(jh);
    }
    json j;
    j["n_traces"] = s.n_traces;
    j["length"] = json{{"min", s.min_length}, {"max", s.max_length}, {"mean", s.mean_length()}, {"hist", hist}};
    j["addresses"] = std::move(addresses);
    j["scopes"] = std::move(scopes);
    return j.dump();
}

std::vector<Cycle> find_cycles(const SuccessionGraph & graph, std::size_t limit)
{
    const std::vector<std::string> names(graph.nodes.begin(), graph.nodes.end());
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < names.size(); ++i) index[names[i]] = i;
    std::vector<std::vector<std::pair<std::size_t, std::uint64_t>>> adj(names.size());
    for (const auto & [edge, count] : graph.edges) {
        adj[index.at(edge.first)].emplace_back(index.at(edge.second), count);
    }

    std::vector<Cycle> cycles;
    std::vector<std::size_t> path;
    std::vector<std::uint64_t> path_counts;
    std::vector<bool> on_path(names.size(), false);

    // Each elementary cycle is reported once, rooted at its smallest node.
    std::function<void(std::size_t, std::size_t)> dfs = [&](std::size_t root, std::size_t v) {
        for (const auto & [w, count] : adj[v]) {
            if (cycles.size() >= limit) return;
            if (w == root) {
                Cycle c;
                for (auto i : path) c.nodes.push_back(names[i]);
                c.traversals = count;
                for (auto pc : path_counts) c.traversals = std::min(c.traversals, pc);
                cycles.push_back(std::move(c));
            } else if (w > root && !on_path[w]) {
                on_path[w] = true;
                path.push_back(w);
                path_counts.push_back(count);
                dfs(root, w);
                path.pop_back();
                path_counts.pop_back();
                on_path[w] = false;
            }
        }
    };
    for (std::size_t root = 0; root < names.size() && cycles.size() < limit; ++root) {
        path.assign(1, root);
        path_counts.clear();
        on_path[root] = true;
        dfs(root, root);
        on_path[root] = false;
    }
    std::stable_sort(cycles.begin(), cycles.end(),
                     [](const Cycle & a, const Cycle & b) { return a.traversals > b.traversals; });
    return cycles;
}

HotspotReport hotspot_report(const TraceStats & stats, const SuccessionGraph & graph, double threshold)
{
    if (!(threshold > 1.0)) throw PreconditionError("hotspot threshold must be > 1");
    HotspotReport r;
    r.threshold = threshold;
    if (stats.n_traces > 0) {
        std::map<std::string, std::uint64_t> per_site;
        for (const auto & [addr, count] : stats.addresses) per_site[strip_instance(addr)] += count;
        for (const auto & [site, count] : per_site) {
            const double mean = static_cast<double>(count) / static_cast<double>(stats.n_traces);
            if (mean > threshold) r.addresses.emplace_back(site, mean);
        }
        std::stable_sort(r.addresses.begin(), r.addresses.end(),
                         [](const auto & a, const auto & b) { return a.second > b.second; });
    }
    r.cycles = find_cycles(graph);
    return r;
}

std::string report_to_json(const HotspotReport & r)
{
    using json = nlohmann::ordered_json;
    json addresses = json::array();
    for (const auto & [addr, mean] : r.addresses) addresses.push_back(json{{"addr", addr}, {"mean_per_trace", mean}});
    json cycles = json::array();
    for (const auto & c : r.cycles) cycles.push_back(json{{"nodes", c.nodes}, {"traversals", c.traversals}});
    json j;
    j["threshold"] = r.threshold;
    j["addresses"] = std::move(addresses);
    j["cycles"] = std::move(cycles);
    return j.dump();
}

std::string report_to_text(const HotspotReport & r)
{
    std::ostringstream out;
    if (r.empty()) {
        out << "no hotspots above " << r.threshold << " occurrences per trace and no cycles\n";
        return out.str();
    }
    for (const auto & [addr, mean] : r.addresses) {
        out << "hotspot " << addr << ": " << mean << " occurrences per trace\n";
    }
    for (const auto & c : r.cycles) {
        out << "cycle (" << c.traversals << " traversals):";
        for (const auto & n : c.nodes) out << ' ' << n << " ->";
        out << ' ' << c.nodes.front() << '\n';
    }
    return out.str();
}

} // namespace simprob
