#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simprob/runtime.hpp"
#include "simprob/trace.hpp"

namespace simprob {

struct HeadSpec {
    std::string family;   // prior family at the address
    std::size_t out_dim;  // raw proposal parameters emitted

    friend bool operator==(const HeadSpec &, const HeadSpec &) = default;
};

struct NetArchitecture {
    std::size_t obs_dim = 1;
    std::size_t obs_embed_dim = 32;
    std::size_t addr_embed_dim = 16;
    std::size_t hidden_dim = 64;
    // Keyed by address with the instance counter stripped.
    std::map<std::string, HeadSpec> heads;

    void validate() const;
    friend bool operator==(const NetArchitecture &, const NetArchitecture &) = default;
};

struct Standardization {
    std::vector<double> mean;
    std::vector<double> std;

    friend bool operator==(const Standardization &, const Standardization &) = default;
};

// A named contiguous block of the flat parameter vector.
struct ParamBlock {
    std::string name;
    std::size_t offset;
    std::size_t rows;
    std::size_t cols;  // 0 for vectors

    std::size_t size() const noexcept { return cols == 0 ? rows : rows * cols; }
    friend bool operator==(const ParamBlock &, const ParamBlock &) = default;
};

// The inference network. Observation encoder (dense + tanh), address
// embedding table, shared trunk over [encoding, embedding, squashed previous
// value] (dense + tanh) and one linear output head per address.
class ProposalNet {
public:
    // All parameters zero; standardization is the identity.
    explicit ProposalNet(NetArchitecture arch);

    // Encoder and trunk weights uniform in +-sqrt(6 / (fan_in + fan_out)),
    // embeddings uniform in +-sqrt(6 / (n_heads + addr_embed_dim)), biases and
    // output heads zero.
    static ProposalNet initialized(NetArchitecture arch, std::uint64_t seed);

    const NetArchitecture & arch() const noexcept { return arch_; }
    const std::vector<ParamBlock> & layout() const noexcept { return layout_; }
    const ParamBlock & block(const std::string & name) const;

    std::vector<double> & params() noexcept { return params_; }
    const std::vector<double> & params() const noexcept { return params_; }
    std::span<double> view(const std::string & block_name);
    std::span<const double> view(const std::string & block_name) const;

    const Standardization & standardization() const noexcept { return standardization_; }
    void set_standardization(Standardization s);

    bool has_head(const std::string & key) const { return arch_.heads.count(key) != 0; }

    // Raw proposal parameters for the head `head_key`. Throws
    // DimensionMismatch for a wrong observation length and UnknownHead for an
    // address without a head.
    std::vector<double> forward(std::span<const double> observation, const std::string & head_key,
                                double prev_value) const;

    friend bool operator==(const ProposalNet &, const ProposalNet &) = default;

private:
    NetArchitecture arch_;
    std::vector<ParamBlock> layout_;
    std::map<std::string, std::size_t> block_index_;
    std::map<std::string, std::size_t> head_index_;
    Standardization standardization_;
    std::vector<double> params_;
};

// Head key of an entry: the stripped address.
std::string head_key(const Address & address);

// Inference-compilation loss: mean over traces of the summed negative
// proposal log-density of every recorded value. Each trace must carry its
// observation. Throws PreconditionError on an empty batch and UnknownHead on
// an entry without a head.
double ic_loss(const ProposalNet & net, std::span<const Trace> batch);

// Loss and its exact gradient (same shape as net.params()).
double ic_loss_and_grad(const ProposalNet & net, std::span<const Trace> batch, std::vector<double> & grad);

std::vector<double> ic_grad(const ProposalNet & net, std::span<const Trace> batch);

// One head per distinct stripped address in the traces.
std::map<std::string, HeadSpec> discover_heads(std::span<const Trace> traces);

struct TrainingConfig {
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    double grad_clip_norm = 10.0;
    std::size_t steps = 0;
    std::uint64_t master_seed = 0;
    unsigned threads = 1;
    // Prior-predictive simulations used for standardization and head discovery.
    std::size_t calibration_traces = 1000;

    void validate() const;
};

struct TrainStep {
    std::size_t step;
    double loss;
    double grad_norm;
};

// Plain SGD with global-norm clipping on fresh Record-mode batches.
// `arch.heads` and `arch.obs_dim` are filled from calibration traces. Throws
// NonFiniteLoss with the offending step.
ProposalNet train(const Model & model, NetArchitecture arch, const TrainingConfig & config,
                  const std::function<void(const TrainStep &)> & telemetry = {});

// Serves proposals from a trained network. Addresses without a head (or
// whose prior has a different parameter count) get no answer, so the runtime
// falls back to the prior.
class NetProposalSource final : public ProposalSource {
public:
    explicit NetProposalSource(const ProposalNet & net) : net_(net) {}

    std::optional<std::vector<double>> propose(std::span<const double> observation, const Address & address,
                                               const Distribution & prior, double prev_value) const override;

private:
    const ProposalNet & net_;
};

inline constexpr int kNetFormatVersion = 1;

void save_net(const ProposalNet & net, const std::string & path);
ProposalNet load_net(const std::string & path);
std::string net_to_json(const ProposalNet & net);
ProposalNet net_from_json(const std::string & text);

} // namespace simprob
