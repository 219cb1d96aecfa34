#include "simprob/proposal_net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "simprob/distributions.hpp"
#include "simprob/errors.hpp"
#include "simprob/kernels.hpp"
#include "simprob/parallel.hpp"
#include "simprob/random.hpp"

namespace simprob {

namespace {

std::string head_block(const std::string & key, const char * part)
{
    return "head[" + key + "]." + part;
}

// Previous values enter the trunk through asinh: linear near zero,
// logarithmic for momenta and counts.
double squash(double x)
{
    return std::asinh(x);
}

void require_positive(std::size_t v, const char * what)
{
    if (v == 0) throw ConfigInvalid(std::string(what) + " must be >= 1");
}

struct Encoded {
    std::vector<double> x;  // standardized observation
    std::vector<double> e;  // encoder activation
};

struct Step {
    std::vector<double> z;    // trunk input
    std::vector<double> t;    // trunk activation
    std::vector<double> out;  // raw proposal parameters
};

} // namespace

void NetArchitecture::validate() const
{
    require_positive(obs_dim, "obs_dim");
    require_positive(obs_embed_dim, "obs_embed_dim");
    require_positive(addr_embed_dim, "addr_embed_dim");
    require_positive(hidden_dim, "hidden_dim");
    for (const auto & [key, h] : heads) require_positive(h.out_dim, "head output dimension");
}

ProposalNet::ProposalNet(NetArchitecture arch) : arch_(std::move(arch))
{
    arch_.validate();
    const std::size_t E = arch_.obs_embed_dim;
    const std::size_t A = arch_.addr_embed_dim;
    const std::size_t H = arch_.hidden_dim;
    std::size_t offset = 0;
    auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
        block_index_[name] = layout_.size();
        layout_.push_back(ParamBlock{std::move(name), offset, rows, cols});
        offset += layout_.back().size();
    };
    add("encoder.weight", E, arch_.obs_dim);
    add("encoder.bias", E, 0);
    add("address_embedding", std::max<std::size_t>(arch_.heads.size(), 1), A);
    add("trunk.weight", H, E + A + 1);
    add("trunk.bias", H, 0);
    std::size_t h = 0;
    for (const auto & [key, spec] : arch_.heads) {
        head_index_[key] = h++;
        add(head_block(key, "weight"), spec.out_dim, H);
        add(head_block(key, "bias"), spec.out_dim, 0);
    }
    params_.assign(offset, 0.0);
    standardization_.mean.assign(arch_.obs_dim, 0.0);
    standardization_.std.assign(arch_.obs_dim, 1.0);
}

ProposalNet ProposalNet::initialized(NetArchitecture arch, std::uint64_t seed)
{
    ProposalNet net(std::move(arch));
    Rng rng(seed);
    auto fill = [&](const std::string & name, double limit) {
        for (double & w : net.view(name)) w = limit * (2.0 * uniform_open01(rng) - 1.0);
    };
    const auto & a = net.arch();
    fill("encoder.weight", std::sqrt(6.0 / static_cast<double>(a.obs_dim + a.obs_embed_dim)));
    fill("address_embedding",
         std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(a.heads.size(), 1) + a.addr_embed_dim)));
    fill("trunk.weight",
         std::sqrt(6.0 / static_cast<double>(a.obs_embed_dim + a.addr_embed_dim + 1 + a.hidden_dim)));
    return net;
}

const ParamBlock & ProposalNet::block(const std::string & name) const
{
    auto it = block_index_.find(name);
    if (it == block_index_.end()) throw InvalidParameter("no parameter block named '" + name + "'");
    return layout_[it->second];
}

std::span<double> ProposalNet::view(const std::string & name)
{
    const auto & b = block(name);
    return {params_.data() + b.offset, b.size()};
}

std::span<const double> ProposalNet::view(const std::string & name) const
{
    const auto & b = block(name);
    return {params_.data() + b.offset, b.size()};
}

void ProposalNet::set_standardization(Standardization s)
{
    if (s.mean.size() != arch_.obs_dim || s.std.size() != arch_.obs_dim) {
        throw DimensionMismatch("standardization length differs from obs_dim");
    }
    for (double v : s.std) {
        if (!(v > 0.0) || !std::isfinite(v)) throw InvalidParameter("standardization std must be positive");
    }
    standardization_ = std::move(s);
}

std::string head_key(const Address & address)
{
    return address.stripped();
}

namespace {

// Forward/backward machinery shared by inference and training.
class Evaluator {
public:
    explicit Evaluator(const ProposalNet & net)
        : net_(net), k_(kernels::active()), E_(net.arch().obs_embed_dim), A_(net.arch().addr_embed_dim),
          H_(net.arch().hidden_dim)
    {
        enc_w_ = net.block("encoder.weight").offset;
        enc_b_ = net.block("encoder.bias").offset;
        embed_ = net.block("address_embedding").offset;
        trunk_w_ = net.block("trunk.weight").offset;
        trunk_b_ = net.block("trunk.bias").offset;
        std::size_t h = 0;
        for (const auto & [key, spec] : net.arch().heads) {
            heads_[key] = HeadRef{h++, net.block(head_block(key, "weight")).offset,
                                  net.block(head_block(key, "bias")).offset, spec.out_dim};
        }
    }

    struct HeadRef {
        std::size_t index;
        std::size_t weight;
        std::size_t bias;
        std::size_t out_dim;
    };

    const HeadRef * find_head(const std::string & key) const
    {
        auto it = heads_.find(key);
        return it == heads_.end() ? nullptr : &it->second;
    }

    Encoded encode(std::span<const double> obs) const
    {
        const auto & a = net_.arch();
        if (obs.size() != a.obs_dim) {
            throw DimensionMismatch("observation length " + std::to_string(obs.size()) + " != obs_dim " +
                                    std::to_string(a.obs_dim));
        }
        const auto & st = net_.standardization();
        Encoded enc;
        enc.x.resize(a.obs_dim);
        for (std::size_t i = 0; i < a.obs_dim; ++i) enc.x[i] = (obs[i] - st.mean[i]) / st.std[i];
        enc.e.resize(E_);
        const double * p = net_.params().data();
        k_.gemv(p + enc_w_, enc.x.data(), p + enc_b_, enc.e.data(), E_, a.obs_dim);
        for (auto & v : enc.e) v = std::tanh(v);
        return enc;
    }

    Step step(const Encoded & enc, const HeadRef & head, double prev_value) const
    {
        const double * p = net_.params().data();
        Step s;
        s.z.resize(E_ + A_ + 1);
        std::copy(enc.e.begin(), enc.e.end(), s.z.begin());
        std::copy_n(p + embed_ + head.index * A_, A_, s.z.begin() + static_cast<std::ptrdiff_t>(E_));
        s.z[E_ + A_] = squash(prev_value);
        s.t.resize(H_);
        k_.gemv(p + trunk_w_, s.z.data(), p + trunk_b_, s.t.data(), H_, s.z.size());
        for (auto & v : s.t) v = std::tanh(v);
        s.out.resize(head.out_dim);
        k_.gemv(p + head.weight, s.t.data(), p + head.bias, s.out.data(), head.out_dim, H_);
        return s;
    }

    // Accumulates the gradient of the loss through one step given d_out, and
    // adds the encoder-activation gradient into d_e.
    void backward_step(const Step & s, const HeadRef & head, std::span<const double> d_out, double * grad,
                       std::vector<double> & d_e) const
    {
        const double * p = net_.params().data();
        k_.outer_acc(grad + head.weight, d_out.data(), s.t.data(), head.out_dim, H_);
        k_.axpy(1.0, d_out.data(), grad + head.bias, head.out_dim);

        std::vector<double> da(H_, 0.0);
        k_.gemv_t_acc(p + head.weight, d_out.data(), da.data(), head.out_dim, H_);
        for (std::size_t i = 0; i < H_; ++i) da[i] *= 1.0 - s.t[i] * s.t[i];

        k_.outer_acc(grad + trunk_w_, da.data(), s.z.data(), H_, s.z.size());
        k_.axpy(1.0, da.data(), grad + trunk_b_, H_);

        std::vector<double> dz(s.z.size(), 0.0);
        k_.gemv_t_acc(p + trunk_w_, da.data(), dz.data(), H_, s.z.size());
        k_.axpy(1.0, dz.data() + E_, grad + embed_ + head.index * A_, A_);
        k_.axpy(1.0, dz.data(), d_e.data(), E_);
    }

    void backward_encoder(const Encoded & enc, std::vector<double> & d_e, double * grad) const
    {
        for (std::size_t i = 0; i < E_; ++i) d_e[i] *= 1.0 - enc.e[i] * enc.e[i];
        k_.outer_acc(grad + enc_w_, d_e.data(), enc.x.data(), E_, enc.x.size());
        k_.axpy(1.0, d_e.data(), grad + enc_b_, E_);
    }

private:
    const ProposalNet & net_;
    const kernels::KernelTable & k_;
    std::size_t E_, A_, H_;
    std::size_t enc_w_, enc_b_, embed_, trunk_w_, trunk_b_;
    std::map<std::string, HeadRef> heads_;
};

double loss_impl(const ProposalNet & net, std::span<const Trace> batch, std::vector<double> * grad,
                 bool skip_unknown)
{
    if (batch.empty()) throw PreconditionError("ic_loss needs a non-empty batch");
    const Evaluator ev(net);
    if (grad) grad->assign(net.params().size(), 0.0);

    double total = 0.0;
    std::vector<double> d_out;
    std::vector<double> d_e;
    for (const auto & trace : batch) {
        const Encoded enc = ev.encode(trace.observation);
        d_e.assign(net.arch().obs_embed_dim, 0.0);
        double prev = 0.0;
        for (const auto & entry : trace.entries) {
            const auto key = head_key(entry.address);
            const auto * head = ev.find_head(key);
            if (head == nullptr) {
                if (!skip_unknown) throw UnknownHead("no network head for address '" + key + "'");
                prev = entry.value.as_double();
                continue;
            }
            const auto prior = Distribution::from_params(entry.family, entry.dist_params);
            if (proposal_dim(prior) != head->out_dim) {
                throw DimensionMismatch("head '" + key + "' emits " + std::to_string(head->out_dim) +
                                        " parameters, prior needs " + std::to_string(proposal_dim(prior)));
            }
            const Step s = ev.step(enc, *head, prev);
            d_out.assign(head->out_dim, 0.0);
            total += proposal_nll(prior, s.out, entry.value, d_out);
            if (grad) ev.backward_step(s, *head, d_out, grad->data(), d_e);
            prev = entry.value.as_double();
        }
        if (grad) ev.backward_encoder(enc, d_e, grad->data());
    }
    const double scale = 1.0 / static_cast<double>(batch.size());
    if (grad) {
        for (auto & g : *grad) g *= scale;
    }
    return total * scale;
}

} // namespace

std::vector<double> ProposalNet::forward(std::span<const double> observation, const std::string & key,
                                         double prev_value) const
{
    const Evaluator ev(*this);
    const auto * head = ev.find_head(key);
    if (head == nullptr) throw UnknownHead("no network head for address '" + key + "'");
    const Encoded enc = ev.encode(observation);
    return ev.step(enc, *head, prev_value).out;
}

double ic_loss(const ProposalNet & net, std::span<const Trace> batch)
{
    return loss_impl(net, batch, nullptr, false);
}

double ic_loss_and_grad(const ProposalNet & net, std::span<const Trace> batch, std::vector<double> & grad)
{
    return loss_impl(net, batch, &grad, false);
}

std::vector<double> ic_grad(const ProposalNet & net, std::span<const Trace> batch)
{
    std::vector<double> grad;
    loss_impl(net, batch, &grad, false);
    return grad;
}

std::map<std::string, HeadSpec> discover_heads(std::span<const Trace> traces)
{
    std::map<std::string, HeadSpec> heads;
    for (const auto & t : traces) {
        for (const auto & e : t.entries) {
            const auto prior = Distribution::from_params(e.family, e.dist_params);
            HeadSpec spec{e.family, proposal_dim(prior)};
            auto [it, inserted] = heads.try_emplace(head_key(e.address), spec);
            if (!inserted && it->second != spec) {
                throw ConfigInvalid("address '" + it->first + "' changes its parameter count across traces");
            }
        }
    }
    return heads;
}

void TrainingConfig::validate() const
{
    if (batch_size == 0) throw ConfigInvalid("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigInvalid("learning_rate must be > 0");
    if (!(grad_clip_norm > 0.0)) throw ConfigInvalid("grad_clip_norm must be > 0");
    if (calibration_traces < 2) throw ConfigInvalid("calibration_traces must be >= 2");
}

namespace {

std::vector<Trace> record_batch(const Model & model, std::size_t n, std::uint64_t seed, unsigned threads)
{
    std::vector<Trace> batch(n);
    parallel_for(n, threads, [&](std::size_t i) {
        batch[i] = run_model(model, Mode::Record, derive_seed(seed, i));
        batch[i].trace_id = i;
    });
    return batch;
}

} // namespace

ProposalNet train(const Model & model, NetArchitecture arch, const TrainingConfig & config,
                  const std::function<void(const TrainStep &)> & telemetry)
{
    config.validate();

    const auto calibration = record_batch(model, config.calibration_traces, derive_seed(config.master_seed, 0),
                                          config.threads);
    const std::size_t obs_dim = calibration.front().observation.size();
    if (obs_dim == 0) throw ConfigInvalid("model produced an empty observation");
    Standardization st;
    st.mean.assign(obs_dim, 0.0);
    st.std.assign(obs_dim, 0.0);
    for (const auto & t : calibration) {
        if (t.observation.size() != obs_dim) throw ConfigInvalid("model observation length varies across runs");
        for (std::size_t i = 0; i < obs_dim; ++i) st.mean[i] += t.observation[i];
    }
    const auto n = static_cast<double>(calibration.size());
    for (auto & m : st.mean) m /= n;
    for (const auto & t : calibration) {
        for (std::size_t i = 0; i < obs_dim; ++i) {
            const double d = t.observation[i] - st.mean[i];
            st.std[i] += d * d;
        }
    }
    for (auto & s : st.std) {
        s = std::sqrt(s / n);
        if (!(s > 1e-8)) s = 1.0;
    }

    arch.obs_dim = obs_dim;
    arch.heads = discover_heads(calibration);
    ProposalNet net = ProposalNet::initialized(std::move(arch), derive_seed(config.master_seed, 1));
    net.set_standardization(std::move(st));

    std::vector<double> grad;
    for (std::size_t step = 0; step < config.steps; ++step) {
        const auto batch =
            record_batch(model, config.batch_size, derive_seed(config.master_seed, 2, step), config.threads);
        const double loss = loss_impl(net, batch, &grad, true);
        if (!std::isfinite(loss)) throw NonFiniteLoss(step, loss);
        double norm2 = 0.0;
        for (double g : grad) norm2 += g * g;
        const double norm = std::sqrt(norm2);
        if (!std::isfinite(norm)) throw NonFiniteLoss(step, loss);
        const double scale = norm > config.grad_clip_norm ? config.grad_clip_norm / norm : 1.0;
        auto & p = net.params();
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= config.learning_rate * scale * grad[i];
        for (double v : p) {
            if (!std::isfinite(v)) throw NonFiniteLoss(step, loss);
        }
        if (telemetry) telemetry(TrainStep{step, loss, norm});
    }
    return net;
}

std::optional<std::vector<double>> NetProposalSource::propose(std::span<const double> observation,
                                                              const Address & address, const Distribution & prior,
                                                              double prev_value) const
{
    const auto key = head_key(address);
    auto it = net_.arch().heads.find(key);
    if (it == net_.arch().heads.end() || it->second.out_dim != proposal_dim(prior)) return std::nullopt;
    return net_.forward(observation, key, prev_value);
}

// --- serialization -------------------------------------------------------

namespace {

using json = nlohmann::ordered_json;

json block_to_json(const ParamBlock & b, const std::vector<double> & p)
{
    if (b.cols == 0) return json(std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                                     p.begin() + static_cast<std::ptrdiff_t>(b.offset + b.rows)));
    json m = json::array();
    for (std::size_t r = 0; r < b.rows; ++r) {
        const auto first = p.begin() + static_cast<std::ptrdiff_t>(b.offset + r * b.cols);
        m.push_back(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(b.cols)));
    }
    return m;
}

void block_from_json(const json & j, const ParamBlock & b, std::vector<double> & p)
{
    auto bad = [&] { return MalformedFile("parameter block '" + b.name + "' has the wrong shape"); };
    if (b.cols == 0) {
        if (!j.is_array() || j.size() != b.rows) throw bad();
        for (std::size_t i = 0; i < b.rows; ++i) p[b.offset + i] = j[i].get<double>();
        return;
    }
    if (!j.is_array() || j.size() != b.rows) throw bad();
    for (std::size_t r = 0; r < b.rows; ++r) {
        const auto & row = j[r];
        if (!row.is_array() || row.size() != b.cols) throw bad();
        for (std::size_t c = 0; c < b.cols; ++c) p[b.offset + r * b.cols + c] = row[c].get<double>();
    }
}

} // namespace

std::string net_to_json(const ProposalNet & net)
{
    const auto & a = net.arch();
    json j;
    j["version"] = kNetFormatVersion;
    json heads = json::object();
    for (const auto & [key, h] : a.heads) heads[key] = json{{"family", h.family}, {"out_dim", h.out_dim}};
    j["arch"] = json{{"obs_dim", a.obs_dim},
                     {"obs_embed_dim", a.obs_embed_dim},
                     {"addr_embed_dim", a.addr_embed_dim},
                     {"hidden_dim", a.hidden_dim},
                     {"heads", std::move(heads)}};
    j["standardization"] = json{{"mean", net.standardization().mean}, {"std", net.standardization().std}};
    json params = json::object();
    for (const auto & b : net.layout()) params[b.name] = block_to_json(b, net.params());
    j["params"] = std::move(params);
    return j.dump();
}

ProposalNet net_from_json(const std::string & text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception & e) {
        throw MalformedFile(std::string("net file is not valid JSON: ") + e.what());
    }
    try {
        if (!j.is_object() || !j.contains("version")) throw MalformedFile("net file has no version");
        const int version = j.at("version").get<int>();
        if (version != kNetFormatVersion) {
            throw VersionMismatch("net file version " + std::to_string(version) + ", expected " +
                                  std::to_string(kNetFormatVersion));
        }
        const auto & ja = j.at("arch");
        NetArchitecture a;
        a.obs_dim = ja.at("obs_dim").get<std::size_t>();
        a.obs_embed_dim = ja.at("obs_embed_dim").get<std::size_t>();
        a.addr_embed_dim = ja.at("addr_embed_dim").get<std::size_t>();
        a.hidden_dim = ja.at("hidden_dim").get<std::size_t>();
        for (const auto & [key, h] : ja.at("heads").items()) {
            a.heads.emplace(key, HeadSpec{h.at("family").get<std::string>(), h.at("out_dim").get<std::size_t>()});
        }
        ProposalNet net(std::move(a));
        Standardization st;
        st.mean = j.at("standardization").at("mean").get<std::vector<double>>();
        st.std = j.at("standardization").at("std").get<std::vector<double>>();
        net.set_standardization(std::move(st));
        const auto & jp = j.at("params");
        for (const auto & b : net.layout()) block_from_json(jp.at(b.name), b, net.params());
        return net;
    } catch (const json::exception & e) {
        throw MalformedFile(std::string("net file: ") + e.what());
    } catch (const ConfigInvalid & e) {
        throw MalformedFile(std::string("net file: ") + e.what());
    } catch (const DimensionMismatch & e) {
        throw MalformedFile(std::string("net file: ") + e.what());
    } catch (const InvalidParameter & e) {
        throw MalformedFile(std::string("net file: ") + e.what());
    }
}

void save_net(const ProposalNet & net, const std::string & path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw PreconditionError("cannot open '" + path + "' for writing");
    out << net_to_json(net) << '\n';
    if (!out) throw PreconditionError("failed writing '" + path + "'");
}

ProposalNet load_net(const std::string & path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MalformedFile("cannot open net file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return net_from_json(ss.str());
}

} // namespace simprob
