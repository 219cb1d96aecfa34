#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "simprob/errors.hpp"
#include "simprob/inspector.hpp"
#include "simprob/parallel.hpp"
#include "simprob/proposal_net.hpp"
#include "simprob/random.hpp"
#include "simprob/simzoo.hpp"
#include "simprob/sis.hpp"
#include "simprob/trace_io.hpp"

namespace {

using namespace simprob;
using json = nlohmann::ordered_json;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Bad inputs and configurations; everything else is a runtime failure.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::ofstream open_output(const std::string & path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path + "'");
    return out;
}

std::string read_file(const std::string & path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void emit(const json & j)
{
    std::cout << j.dump() << '\n';
}

struct GenerateArgs {
    std::string model;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string out;
    std::string mode = "prior";
    unsigned threads = 1;
};

int cmd_generate(const GenerateArgs & a)
{
    const Model model = simzoo::make_model(a.model);
    const Mode mode = a.mode == "record" ? Mode::Record : Mode::Prior;
    auto out = open_output(a.out);

    // Bounded memory: traces are produced and written in fixed-size chunks.
    constexpr std::size_t kChunk = 4096;
    std::vector<Trace> chunk;
    for (std::size_t begin = 0; begin < a.n; begin += kChunk) {
        const std::size_t count = std::min(kChunk, a.n - begin);
        chunk.assign(count, Trace{});
        parallel_for(count, a.threads, [&](std::size_t i) {
            chunk[i] = run_model(model, mode, derive_seed(a.seed, begin + i));
            chunk[i].trace_id = begin + i;
        });
        for (const auto & t : chunk) write_trace(out, t);
    }
    out.close();
    if (!out) throw Error("failed writing '" + a.out + "'");
    emit(json{{"command", "generate"}, {"model", a.model}, {"mode", to_string(mode)}, {"n", a.n}, {"out", a.out}});
    return 0;
}

struct TrainArgs {
    std::string model;
    std::size_t steps = 0;
    std::uint64_t seed = 0;
    std::string net_out;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    double clip = 10.0;
    std::size_t calibration = 1000;
    std::size_t report_every = 100;
    unsigned threads = 1;
};

int cmd_train(const TrainArgs & a)
{
    const Model model = simzoo::make_model(a.model);
    TrainingConfig cfg;
    cfg.steps = a.steps;
    cfg.master_seed = a.seed;
    cfg.batch_size = a.batch_size;
    cfg.learning_rate = a.learning_rate;
    cfg.grad_clip_norm = a.clip;
    cfg.calibration_traces = a.calibration;
    cfg.threads = a.threads;
    cfg.validate();
    // Fail before training if the destination cannot be written.
    open_output(a.net_out);

    double window = 0.0;
    std::size_t in_window = 0;
    const auto net = train(model, {}, cfg, [&](const TrainStep & s) {
        window += s.loss;
        if (++in_window == a.report_every || s.step + 1 == a.steps) {
            emit(json{{"step", s.step + 1}, {"mean_loss", window / static_cast<double>(in_window)},
                      {"grad_norm", s.grad_norm}});
            window = 0.0;
            in_window = 0;
        }
    });
    save_net(net, a.net_out);
    emit(json{{"command", "train"}, {"model", a.model}, {"steps", a.steps}, {"n_params", net.params().size()},
              {"heads", net.arch().heads.size()}, {"net", a.net_out}});
    return 0;
}

struct InferArgs {
    std::string model;
    std::string observation;
    std::string net;
    std::size_t particles = 0;
    std::uint64_t seed = 0;
    std::string out;
    unsigned threads = 1;
};

int cmd_infer(const InferArgs & a)
{
    simzoo::Observation obs;
    try {
        obs = simzoo::observation_from_json(read_file(a.observation));
    } catch (const Error & e) {
        throw UsageError(e.what());
    }
    if (obs.model != a.model) {
        throw UsageError("observation is for model '" + obs.model + "', not '" + a.model + "'");
    }
    const Model model = simzoo::make_model(a.model, obs.config.value_or(simzoo::TauToyConfig{}));

    std::optional<ProposalNet> net;
    std::optional<NetProposalSource> source;
    if (!a.net.empty()) {
        try {
            net = load_net(a.net);
        } catch (const Error & e) {
            throw UsageError(std::string("net: ") + e.what());
        }
        if (net->arch().obs_dim != obs.values.size()) {
            throw UsageError("net expects observations of length " + std::to_string(net->arch().obs_dim) + ", got " +
                             std::to_string(obs.values.size()));
        }
        source.emplace(*net);
    }

    const auto ps = sis_infer(model, obs.values, a.particles, source ? &*source : nullptr, a.seed,
                              SisOptions{.threads = a.threads});
    std::uint64_t fallbacks = 0;
    for (const auto & t : ps.traces) fallbacks += t.proposal_fallbacks;

    json summaries = json::array();
    for (const auto & [name, value] : ps.traces.front().predicts) {
        summaries.push_back(json::parse(summary_to_json(posterior_summary(ps, name))));
    }
    json result{{"command", "infer"},
                {"model", a.model},
                {"proposal", net ? "network" : "prior"},
                {"n_particles", a.particles},
                {"ess", effective_sample_size(ps)},
                {"proposal_fallbacks", fallbacks},
                {"summaries", std::move(summaries)}};
    auto out = open_output(a.out);
    out << result.dump(2) << '\n';
    out.close();
    if (!out) throw Error("failed writing '" + a.out + "'");
    emit(result);
    return 0;
}

struct InspectArgs {
    std::string traces;
    std::string dot_out;
    std::string stats_out;
    double threshold = 1.1;
};

int cmd_inspect(const InspectArgs & a)
{
    std::ifstream in(a.traces, std::ios::binary);
    if (!in) throw UsageError("cannot read '" + a.traces + "'");
    SuccessionGraph graph;
    TraceStats stats;
    try {
        std::tie(graph, stats) = inspect_stream(in);
    } catch (const MalformedTrace & e) {
        throw UsageError(std::string("traces: ") + e.what());
    }
    const auto report = hotspot_report(stats, graph, a.threshold);
    {
        auto dot = open_output(a.dot_out);
        dot << graph_to_dot(graph);
        auto st = open_output(a.stats_out);
        st << stats_to_json(stats) << '\n';
    }
    std::cerr << report_to_text(report);
    json result{{"command", "inspect"},
                {"n_traces", stats.n_traces},
                {"nodes", graph.nodes.size()},
                {"edges", graph.edges.size()},
                {"hotspots", json::parse(report_to_json(report))}};
    emit(result);
    return 0;
}

} // namespace

int main(int argc, char ** argv)
{
    CLI::App app{"Trace-based probabilistic programming: generate, train, infer, inspect"};
    app.require_subcommand(1);
    const auto models = simzoo::model_names();

    GenerateArgs gen;
    auto * g = app.add_subcommand("generate", "Run a model without conditioning and write traces as JSONL");
    g->add_option("--model", gen.model)->required()->check(CLI::IsMember(models));
    g->add_option("--n", gen.n, "Number of traces")->required();
    g->add_option("--seed", gen.seed)->required();
    g->add_option("--out", gen.out)->required();
    g->add_option("--mode", gen.mode)->check(CLI::IsMember({"prior", "record"}));
    g->add_option("--threads", gen.threads)->check(CLI::Range(1u, 1024u));

    TrainArgs tr;
    auto * t = app.add_subcommand("train", "Train a proposal network on Record-mode traces");
    t->add_option("--model", tr.model)->required()->check(CLI::IsMember(models));
    t->add_option("--steps", tr.steps)->required();
    t->add_option("--seed", tr.seed)->required();
    t->add_option("--net-out", tr.net_out)->required();
    t->add_option("--batch-size", tr.batch_size);
    t->add_option("--lr", tr.learning_rate);
    t->add_option("--clip", tr.clip);
    t->add_option("--calibration", tr.calibration, "Simulations used for standardization");
    t->add_option("--report-every", tr.report_every)->check(CLI::PositiveNumber);
    t->add_option("--threads", tr.threads)->check(CLI::Range(1u, 1024u));

    InferArgs inf;
    auto * i = app.add_subcommand("infer", "Importance sampling posterior for one observation");
    i->add_option("--model", inf.model)->required()->check(CLI::IsMember(models));
    i->add_option("--observation", inf.observation)->required()->check(CLI::ExistingFile);
    i->add_option("--net", inf.net)->check(CLI::ExistingFile);
    i->add_option("--particles", inf.particles)->required()->check(CLI::PositiveNumber);
    i->add_option("--seed", inf.seed)->required();
    i->add_option("--out", inf.out)->required();
    i->add_option("--threads", inf.threads)->check(CLI::Range(1u, 1024u));

    InspectArgs ins;
    auto * s = app.add_subcommand("inspect", "Succession graph, statistics and hotspots of a trace file");
    s->add_option("--traces", ins.traces)->required()->check(CLI::ExistingFile);
    s->add_option("--dot-out", ins.dot_out)->required();
    s->add_option("--stats-out", ins.stats_out)->required();
    s->add_option("--threshold", ins.threshold, "Mean occurrences per trace that mark a hotspot (> 1)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &) {
        // Help text is prose: keep stdout machine-readable.
        std::cerr << app.help();
        return 0;
    } catch (const CLI::ParseError & e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (g->parsed()) return cmd_generate(gen);
        if (t->parsed()) return cmd_train(tr);
        if (i->parsed()) return cmd_infer(inf);
        if (s->parsed()) {
            if (!(ins.threshold > 1.0)) throw UsageError("--threshold must be > 1");
            return cmd_inspect(ins);
        }
    } catch (const UsageError & e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigInvalid & e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const UnsupportedModel & e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception & e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
