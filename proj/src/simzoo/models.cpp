#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "simprob/errors.hpp"
#include "simprob/simzoo.hpp"

namespace simprob::simzoo {

void gaussian_unknown_mean(ExecutionContext & ctx)
{
    const double mu = ctx.sample("mu", Distribution::normal(0.0, 1.0)).as_double();
    ctx.observe("y", Distribution::normal(mu, 1.0));
    ctx.predict("mu", mu);
}

void rejection_demo(ExecutionContext & ctx)
{
    const auto prior = Distribution::uniform(-1.0, 1.0);
    double u = 0.0, v = 0.0;
    ctx.scope_begin("disc");
    while (true) {
        u = ctx.sample("u", prior).as_double();
        v = ctx.sample("v", prior).as_double();
        if (u * u + v * v <= 1.0) break;
        ctx.scope_retry();
    }
    ctx.scope_end();
    ctx.observe("y", Distribution::normal(u, 0.1));
    ctx.predict("u", u);
    ctx.predict("v", v);
}

std::vector<std::string> model_names()
{
    return {"gaussian_unknown_mean", "rejection_demo", "tau_decay_toy"};
}

Model make_model(const std::string & name, const TauToyConfig & cfg)
{
    if (name == "gaussian_unknown_mean") return gaussian_unknown_mean;
    if (name == "rejection_demo") return rejection_demo;
    if (name == "tau_decay_toy") {
        cfg.validate();
        return [cfg](ExecutionContext & ctx) { tau_decay_toy(ctx, cfg); };
    }
    throw UnsupportedModel("unknown model '" + name + "'");
}

std::optional<std::vector<double>> FixedBetaProposal::propose(std::span<const double>, const Address &,
                                                              const Distribution & prior, double) const
{
    if (prior.family() != "Uniform") return std::nullopt;
    return std::vector<double>{inverse_positive(alpha_), inverse_positive(beta_)};
}

// --- observation files -----------------------------------------------------

namespace {

using json = nlohmann::ordered_json;

json config_to_json(const TauToyConfig & c)
{
    json profiles = json::array();
    for (const auto & row : c.depth_profiles) profiles.push_back(row);
    json em = json::array();
    for (bool b : c.electromagnetic) em.push_back(b);
    return json{{"n_channels", c.n_channels},
                {"channel_prior", c.channel_prior},
                {"grid", {c.depth, c.nx, c.ny}},
                {"momentum_scale", c.momentum_scale},
                {"noise_sigma", c.noise_sigma},
                {"theta_max", c.theta_max},
                {"depth_profiles", std::move(profiles)},
                {"spot_sigma", c.spot_sigma},
                {"electromagnetic", std::move(em)}};
}

TauToyConfig config_from_json(const json & j)
{
    TauToyConfig c;
    c.n_channels = j.at("n_channels").get<std::size_t>();
    c.channel_prior = j.at("channel_prior").get<std::vector<double>>();
    const auto grid = j.at("grid").get<std::vector<std::size_t>>();
    if (grid.size() != 3) throw MalformedFile("config grid must have three dimensions");
    c.depth = grid[0];
    c.nx = grid[1];
    c.ny = grid[2];
    c.momentum_scale = j.at("momentum_scale").get<double>();
    c.noise_sigma = j.at("noise_sigma").get<double>();
    c.theta_max = j.at("theta_max").get<double>();
    c.depth_profiles = j.at("depth_profiles").get<std::vector<std::vector<double>>>();
    c.spot_sigma = j.at("spot_sigma").get<std::vector<double>>();
    c.electromagnetic = j.at("electromagnetic").get<std::vector<bool>>();
    return c;
}

} // namespace

std::string observation_to_json(const Observation & obs)
{
    json j;
    j["model"] = obs.model;
    if (obs.model == "tau_decay_toy") {
        const TauToyConfig cfg = obs.config.value_or(TauToyConfig{});
        j["config"] = config_to_json(cfg);
        j["grid"] = {cfg.depth, cfg.nx, cfg.ny};
        j["cells"] = obs.values;
    } else {
        if (obs.values.size() != 1) throw PreconditionError("scalar observation must hold one value");
        j["y"] = obs.values.front();
    }
    return j.dump();
}

Observation observation_from_json(const std::string & text)
{
    Observation obs;
    try {
        const json j = json::parse(text);
        obs.model = j.at("model").get<std::string>();
        if (obs.model == "tau_decay_toy") {
            obs.config = j.contains("config") ? config_from_json(j.at("config")) : TauToyConfig{};
            try {
                obs.config->validate();
            } catch (const ConfigInvalid & e) {
                throw MalformedFile(e.what());
            }
            const auto grid = j.at("grid").get<std::vector<std::size_t>>();
            if (grid != std::vector<std::size_t>{obs.config->depth, obs.config->nx, obs.config->ny}) {
                throw MalformedFile("observation grid does not match its config");
            }
            obs.values = j.at("cells").get<std::vector<double>>();
            if (obs.values.size() != obs.config->cells()) throw MalformedFile("cells length does not match grid");
        } else {
            const auto names = model_names();
            if (std::find(names.begin(), names.end(), obs.model) == names.end()) {
                throw UnsupportedModel("unknown model '" + obs.model + "'");
            }
            obs.values = {j.at("y").get<double>()};
        }
    } catch (const json::exception & e) {
        throw MalformedFile(std::string("observation: ") + e.what());
    }
    return obs;
}

} // namespace simprob::simzoo
