// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "run_command.hpp"
#include "simprob/inspector.hpp"
#include "simprob/proposal_net.hpp"
#include "simprob/simzoo.hpp"
#include "simprob/sis.hpp"

using namespace simprob;
using namespace simprob::simzoo;
using testing::read_text;
using testing::run_command;
using testing::write_text;

namespace {

const std::string kCli = SIMPROB_CLI_PATH;

struct Outcome {
    bool pass;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char * f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double total_variation(const std::vector<double> & p, const std::vector<double> & q)
{
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

Outcome conjugate_correctness()
{
    write_text("acc_gauss_obs.json", R"({"model": "gaussian_unknown_mean", "y": 1.0})");
    const auto t0 = Clock::now();
    const auto r = run_command(kCli + " infer --model gaussian_unknown_mean --observation acc_gauss_obs.json"
                                      " --particles 10000 --seed 1 --threads 1 --out acc_gauss_post.json");
    const double elapsed = seconds_since(t0);
    if (r.exit_code != 0) return {false, fmt("infer exited with %d", r.exit_code)};
    const auto j = nlohmann::json::parse(read_text("acc_gauss_post.json"));
    const auto & s = j["summaries"][0];
    const double mean = s["mean"].get<double>(), var = s["var"].get<double>(), ess = j["ess"].get<double>();
    // Oracle posterior N(0.5, 0.5); the standard error of a self-normalized
    // estimate uses the effective sample size.
    const double se = std::sqrt(0.5 / ess);
    const double mean_z = std::abs(mean - 0.5) / se;
    const double var_rel = std::abs(var - 0.5) / 0.5;
    const bool pass = mean_z < 3.0 && var_rel < 0.2 && elapsed < 10.0;
    return {pass, fmt("mean %.4f (%.2f SE from 0.5), var %.4f (%.1f%% off 0.5), ESS %.0f, %.2f s", mean, mean_z, var,
                      100 * var_rel, ess, elapsed)};
}

Outcome rejection_trace_lengths()
{
    std::size_t not_two = 0;
    for (std::uint64_t s = 0; s < 10000; ++s) {
        if (run_model(rejection_demo, Mode::Record, derive_seed(11, s)).entries.size() != 2) ++not_two;
    }
    std::uint64_t total = 0;
    const std::size_t n = 100000;
    for (std::uint64_t s = 0; s < n; ++s) total += run_model(rejection_demo, Mode::Prior, derive_seed(12, s)).entries.size();
    const double mean = static_cast<double>(total) / n;
    const double expected = 2.0 * 4.0 / M_PI;
    const double rel = std::abs(mean - expected) / expected;
    return {not_two == 0 && rel < 0.05,
            fmt("Record: %zu of 10000 traces not of length 2; Prior mean length %.4f vs %.4f (%.2f%% off)", not_two, mean,
                expected, 100 * rel)};
}

Outcome guided_rejection_unbiasedness()
{
    const double y = 0.5;
    const FixedBetaProposal beta22(2.0, 2.0);
    const auto ps = sis_infer(rejection_demo, {y}, 10000, &beta22, 2024);
    const auto oracle = oracle_posterior(Observation{"rejection_demo", {y}, std::nullopt}, 512);

    // Histogram comparison on 32 equal bins of [-1, 1].
    constexpr std::size_t kBins = 32;
    std::vector<double> hist(kBins, 0.0);
    for (std::size_t i = 0; i < ps.traces.size(); ++i) {
        const double u = ps.traces[i].predicts.at("u").as_double();
        const auto b = std::min<std::size_t>(kBins - 1, static_cast<std::size_t>((u + 1.0) / 2.0 * kBins));
        hist[b] += ps.weights[i];
    }
    const double tv = total_variation(hist, oracle.marginals.at("u").rebin(kBins));
    const auto s = posterior_summary(ps, "u");
    const auto & ref = oracle.real.at("u");
    return {tv <= 0.05, fmt("TV %.4f over %zu bins; mean u %.4f vs oracle %.4f; ESS %.0f", tv, kBins, s.mean, ref.mean,
                            s.ess)};
}

Outcome gradient_check()
{
    const auto t0 = Clock::now();
    const auto r = testing::gradient_check(31337, 200, 1e-5);
    const double elapsed = seconds_since(t0);
    std::vector<std::string> fams = r.families_covered;
    std::sort(fams.begin(), fams.end());
    std::string joined;
    for (const auto & f : fams) joined += (joined.empty() ? "" : ",") + f;
    const bool all_families = fams == std::vector<std::string>{"Categorical", "Exponential", "Normal", "Poisson", "Uniform"};
    return {r.max_rel_error < 1e-4 && r.coordinates == 200 && all_families && elapsed < 30.0,
            fmt("max relative error %.3g over %zu coordinates, heads {%s}, %.2f s", r.max_rel_error, r.coordinates,
                joined.c_str(), elapsed)};
}

Outcome amortization_benefit()
{
    const auto r = run_command(kCli + " train --model gaussian_unknown_mean --steps 2000 --seed 7 --net-out acc_net.json");
    if (r.exit_code != 0) return {false, fmt("train exited with %d", r.exit_code)};
    const auto net = load_net("acc_net.json");
    const NetProposalSource source(net);
    std::vector<double> ess_net, ess_prior;
    for (std::uint64_t k = 0; k < 20; ++k) {
        // Observation from the prior predictive.
        const auto y = run_model(gaussian_unknown_mean, Mode::Prior, derive_seed(808, k)).observation;
        ess_net.push_back(effective_sample_size(sis_infer(gaussian_unknown_mean, y, 1000, &source, derive_seed(909, k))));
        ess_prior.push_back(effective_sample_size(sis_infer(gaussian_unknown_mean, y, 1000, nullptr, derive_seed(909, k))));
    }
    const double mn = median(ess_net), mp = median(ess_prior);
    return {mn > mp, fmt("median ESS at 1000 particles: trained net %.1f, prior %.1f", mn, mp)};
}

Outcome tau_posterior()
{
    const TauToyConfig cfg;
    const Model model = make_model("tau_decay_toy", cfg);
    // Two energetic decays with a sharp channel posterior and three soft ones
    // whose channel stays ambiguous under the cell noise floor.
    const std::vector<TauLatents> truths{
        {0, 20.0, 0.20, 0.5}, {1, 35.0, 0.40, -1.2}, {2, 1.0, 0.25, 1.0}, {3, 1.0, 0.50, -2.8}, {4, 0.6, 0.10, 2.5},
    };
    const auto t0 = Clock::now();
    bool pass = true;
    std::string detail;
    for (std::size_t k = 0; k < truths.size(); ++k) {
        const auto obs = simulate_tau_observation(cfg, truths[k], 100 + k);
        const auto oracle = oracle_posterior(obs, 48);
        const TauLaplaceProposal proposal(cfg, obs.values);
        const auto ps = sis_infer(model, obs.values, 10000, &proposal, 500 + k);

        const auto channel = posterior_summary(ps, "channel");
        std::vector<double> p(cfg.n_channels, 0.0), q(cfg.n_channels, 0.0);
        for (const auto & [c, w] : channel.histogram) p[static_cast<std::size_t>(c)] = w;
        for (const auto & [c, w] : oracle.discrete.at("channel")) q[static_cast<std::size_t>(c)] = w;
        const double tv = total_variation(p, q);
        double worst_z = 0.0;
        for (const char * name : {"p_x", "p_y", "p_z"}) {
            const auto & ref = oracle.real.at(name);
            const double z = std::abs(posterior_summary(ps, name).mean - ref.mean) / std::sqrt(ref.var);
            worst_z = std::max(worst_z, z);
        }
        const bool ok = tv <= 0.05 && worst_z < 3.0;
        pass = pass && ok;
        detail += fmt("%sobs%zu TV %.4f (oracle max channel prob %.3f), max momentum dev %.2f sd, ESS %.0f",
                      k ? "; " : "", k, tv, *std::max_element(q.begin(), q.end()), worst_z, channel.ess);
    }
    const double elapsed = seconds_since(t0);
    pass = pass && elapsed < 300.0;
    return {pass, detail + fmt("; %.1f s", elapsed)};
}

Outcome inspector_structure()
{
    const Model tau = make_model("tau_decay_toy", {});
    SuccessionGraph tau_graph;
    for (std::uint64_t s = 0; s < 988; ++s) tau_graph.add_trace(run_model(tau, Mode::Prior, derive_seed(21, s)));
    bool flow = true;
    for (const auto & node : tau_graph.nodes) {
        if (node != kStartNode && node != kEndNode) flow = flow && tau_graph.in_count(node) == tau_graph.out_count(node);
    }
    const auto start_out = tau_graph.out_count(kStartNode);
    const auto tau_cycles = find_cycles(tau_graph).size();

    std::vector<Trace> rej;
    for (std::uint64_t s = 0; s < 988; ++s) rej.push_back(run_model(rejection_demo, Mode::Prior, derive_seed(22, s)));
    const auto rej_graph = build_graph(rej);
    const auto cycles = find_cycles(rej_graph);
    std::set<std::string> disc_addresses;
    for (const auto & t : rej) {
        for (const auto & e : t.entries) {
            if (e.scope_id == "disc") disc_addresses.insert(e.address.stripped());
        }
    }
    bool cycle_in_disc = cycles.size() == 1;
    if (cycle_in_disc) {
        for (const auto & n : cycles[0].nodes) cycle_in_disc = cycle_in_disc && disc_addresses.count(n);
    }
    const auto report = hotspot_report(compute_stats(rej), rej_graph, 1.1);
    const bool named = report.cycles.size() == 1 && cycles.size() == 1 && report.cycles[0].nodes == cycles[0].nodes;

    const bool pass = flow && start_out == 988 && tau_cycles == 0 && cycle_in_disc && named;
    std::string cycle_text;
    if (!cycles.empty()) {
        for (const auto & n : cycles[0].nodes) cycle_text += n + " -> ";
        cycle_text += cycles[0].nodes.front();
    }
    return {pass, fmt("tau: flow %s, START outflow %llu, %zu cycles; rejection_demo: %zu cycle(s) [%s], hotspot report %s",
                      flow ? "conserved" : "VIOLATED", static_cast<unsigned long long>(start_out), tau_cycles,
                      cycles.size(), cycle_text.c_str(), named ? "names it" : "does not name it")};
}

Outcome cli_determinism()
{
    write_text("acc_det_obs.json", R"({"model": "rejection_demo", "y": 0.3})");
    struct Command {
        std::string name;
        std::function<std::string(const std::string & tag, unsigned threads)> args;
        std::vector<std::string> outputs;  // suffixes of files produced
    };
    const std::vector<Command> commands{
        {"generate",
         [](const std::string & tag, unsigned th) {
             return "generate --model tau_decay_toy --n 300 --seed 5 --threads " + std::to_string(th) + " --out acc_det_" +
                    tag + ".jsonl";
         },
         {".jsonl"}},
        {"generate-record",
         [](const std::string & tag, unsigned th) {
             return "generate --model rejection_demo --mode record --n 500 --seed 5 --threads " + std::to_string(th) +
                    " --out acc_det_" + tag + ".jsonl";
         },
         {".jsonl"}},
        {"train",
         [](const std::string & tag, unsigned th) {
             return "train --model rejection_demo --steps 40 --seed 6 --calibration 300 --threads " + std::to_string(th) +
                    " --net-out acc_det_" + tag + ".net.json";
         },
         {".net.json"}},
        {"infer",
         [](const std::string & tag, unsigned th) {
             return "infer --model rejection_demo --observation acc_det_obs.json --net acc_det_base.net.json"
                    " --particles 2000 --seed 8 --threads " +
                    std::to_string(th) + " --out acc_det_" + tag + ".post.json";
         },
         {".post.json"}},
        {"inspect",
         [](const std::string & tag, unsigned) {
             return "inspect --traces acc_det_base.jsonl --dot-out acc_det_" + tag + ".dot --stats-out acc_det_" + tag +
                    ".stats.json";
         },
         {".dot", ".stats.json"}},
    };
    // Inputs for infer and inspect.
    if (run_command(kCli + " train --model rejection_demo --steps 40 --seed 6 --calibration 300 --net-out "
                           "acc_det_base.net.json")
            .exit_code != 0 ||
        run_command(kCli + " generate --model rejection_demo --n 400 --seed 3 --out acc_det_base.jsonl").exit_code != 0) {
        return {false, "could not prepare inputs"};
    }
    bool pass = true;
    std::string detail;
    for (const auto & c : commands) {
        std::vector<std::string> outs;
        std::vector<std::string> stdouts;
        bool ran = true;
        for (unsigned threads : {1u, 4u}) {
            for (int rep = 0; rep < 2; ++rep) {
                const std::string tag = c.name + "_t" + std::to_string(threads) + "_r" + std::to_string(rep);
                const auto r = run_command(kCli + " " + c.args(tag, threads));
                ran = ran && r.exit_code == 0;
                std::string files;
                for (const auto & suffix : c.outputs) files += read_text("acc_det_" + tag + suffix) + '\x1f';
                outs.push_back(files);
                // Output paths appear in stdout; compare with the tag masked.
                std::string masked = r.out;
                for (std::size_t pos; (pos = masked.find(tag)) != std::string::npos;) masked.replace(pos, tag.size(), "TAG");
                stdouts.push_back(masked);
            }
        }
        const bool same = ran && std::all_of(outs.begin(), outs.end(), [&](const auto & o) { return o == outs[0]; }) &&
                          std::all_of(stdouts.begin(), stdouts.end(), [&](const auto & o) { return o == stdouts[0]; }) &&
                          outs[0].size() > c.outputs.size();
        pass = pass && same;
        detail += (detail.empty() ? "" : ", ") + c.name + (same ? " identical" : ran ? " DIFFERS" : " FAILED");
    }
    return {pass, detail + " (threads 1 and 4, two runs each)"};
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"conjugate-gaussian-posterior", conjugate_correctness},
        {"rejection-trace-lengths", rejection_trace_lengths},
        {"guided-rejection-unbiasedness", guided_rejection_unbiasedness},
        {"ic-gradient-check", gradient_check},
        {"amortization-benefit", amortization_benefit},
        {"tau-posterior-equivalence", tau_posterior},
        {"inspector-structure", inspector_structure},
        {"cli-determinism", cli_determinism},
    };
    int failures = 0;
    for (const auto & [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception & e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
