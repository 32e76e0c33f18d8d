#include "agg/embeddings.hpp"

#include "agg/error.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace agg {

Tensor init_projection(std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
    Tensor w({fan_in, fan_out});
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& x : w.values()) x = rng.uniform(-bound, bound);
    return w;
}

std::int64_t ChannelSchema::category_id(std::int64_t feature, const std::string& label, bool grow) {
    auto& vocab = vocabularies.at(static_cast<std::size_t>(feature));
    for (std::size_t i = 0; i < vocab.size(); ++i)
        if (vocab[i] == label) return static_cast<std::int64_t>(i);
    if (!grow)
        raise(ErrorKind::Data, "unseen category '" + label + "' for feature '" +
                                   discrete_names.at(static_cast<std::size_t>(feature)) + "'");
    vocab.push_back(label);
    return static_cast<std::int64_t>(vocab.size()) - 1;
}

EmbeddingLayer::EmbeddingLayer(const EmbeddingDims& dims, const ChannelSchema& schema, ParameterStore& store,
                               Rng& init_rng)
    : dims_(dims) {
    if (dims_.feature_width < 2) raise(ErrorKind::Config, "feature width must be at least 2 (time2vec needs a linear and a periodic term)");
    if (dims_.d_y < 1) raise(ErrorKind::Config, "d_y must be at least 1");
    if (schema.n_discrete() != dims_.n_discrete || schema.n_continuous() != dims_.d_c_cont)
        raise(ErrorKind::Config, "embedding dims do not match schema feature counts");

    const std::int64_t w = dims_.feature_width;
    value_w_ = store.add("embed.value.W", init_projection(dims_.d_y, w, init_rng));

    Tensor omega({w}), phi({w});
    for (auto& x : omega.values()) x = init_rng.uniform();
    for (auto& x : phi.values()) x = init_rng.uniform(0.0, 2.0 * std::numbers::pi);
    omega_ = store.add("embed.time.omega", std::move(omega));
    phi_ = store.add("embed.time.phi", std::move(phi));

    for (std::int64_t f = 0; f < dims_.n_discrete; ++f) {
        const std::int64_t vocab = schema.vocab_size(f);
        if (vocab < 1) raise(ErrorKind::Config, "empty vocabulary for feature '" + schema.discrete_names[static_cast<std::size_t>(f)] + "'");
        vocab_sizes_.push_back(vocab);
        tables_.push_back(store.add("embed.disc." + schema.discrete_names[static_cast<std::size_t>(f)] + ".table",
                                    init_projection(vocab, w, init_rng)));
    }
    if (dims_.d_c_cont > 0)
        cont_w_ = store.add("embed.cont.W", init_projection(dims_.d_c_cont, w * dims_.d_c_cont, init_rng));
}

Value EmbeddingLayer::time2vec(Tape& tape, Value tau) const {
    Value omega = tape.parameter(omega_);
    Value phi = tape.parameter(phi_);
    Value arg = tape.add(tape.mul(omega, tau), phi);
    Value linear = tape.slice_last(arg, 0, 1);
    Value periodic = tape.sin(tape.slice_last(arg, 1, dims_.feature_width - 1));
    std::array<Value, 2> parts{linear, periodic};
    return tape.concat_last(parts);
}

Value EmbeddingLayer::time2vec(Tape& tape, double tau) const {
    if (!std::isfinite(tau)) raise(ErrorKind::Data, "time2vec: non-finite tau");
    return time2vec(tape, tape.constant(Tensor::scalar(tau)));
}

Value EmbeddingLayer::embed_value(Tape& tape, const std::vector<double>& y) const {
    if (static_cast<std::int64_t>(y.size()) != dims_.d_y)
        raise(ErrorKind::Config, "embed_value: measurement length " + std::to_string(y.size()) + " does not match d_y " +
                                     std::to_string(dims_.d_y));
    Value yv = tape.constant(Tensor::vector(y));
    return tape.matmul(yv, tape.parameter(value_w_));
}

Value EmbeddingLayer::embed_discrete(Tape& tape, std::int64_t feature, std::int64_t category) const {
    if (feature < 0 || feature >= dims_.n_discrete)
        raise(ErrorKind::Config, "embed_discrete: feature index out of range");
    const std::int64_t vocab = vocab_sizes_[static_cast<std::size_t>(feature)];
    if (category < 0 || category >= vocab)
        raise(ErrorKind::Data, "embed_discrete: category " + std::to_string(category) + " out of range for feature " +
                                   std::to_string(feature) + " (vocabulary size " + std::to_string(vocab) + ")");
    return tape.gather_row(tape.parameter(tables_[static_cast<std::size_t>(feature)]), category);
}

Value EmbeddingLayer::embed_continuous(Tape& tape, const std::vector<double>& c_cont) const {
    if (static_cast<std::int64_t>(c_cont.size()) != dims_.d_c_cont)
        raise(ErrorKind::Config, "embed_continuous: feature length " + std::to_string(c_cont.size()) +
                                     " does not match d_c_cont " + std::to_string(dims_.d_c_cont));
    Value cv = tape.constant(Tensor::vector(c_cont));
    return tape.matmul(cv, tape.parameter(cont_w_));
}

Value EmbeddingLayer::channel_embedding(Tape& tape, const std::vector<std::int64_t>& c_disc,
                                        const std::vector<double>& c_cont) const {
    if (static_cast<std::int64_t>(c_disc.size()) != dims_.n_discrete)
        raise(ErrorKind::Data, "channel spec has " + std::to_string(c_disc.size()) + " discrete features, expected " +
                                   std::to_string(dims_.n_discrete));
    std::vector<Value> parts;
    parts.reserve(static_cast<std::size_t>(dims_.n_discrete) + 1);
    for (std::int64_t f = 0; f < dims_.n_discrete; ++f)
        parts.push_back(embed_discrete(tape, f, c_disc[static_cast<std::size_t>(f)]));
    if (dims_.d_c_cont > 0) parts.push_back(embed_continuous(tape, c_cont));
    if (parts.empty()) raise(ErrorKind::Config, "model requires at least one channel feature");
    if (parts.size() == 1) return parts[0];
    return tape.concat_last(parts);
}

Value EmbeddingLayer::assemble_node(Tape& tape, const Observation& obs, double t_ref) const {
    if (obs.t > t_ref)
        raise(ErrorKind::PipelineOrder, "observation at t=" + std::to_string(obs.t) +
                                            " lies after the block reference time t_ref=" + std::to_string(t_ref));
    std::array<Value, 3> parts{
        embed_value(tape, obs.y),
        time2vec(tape, t_ref - obs.t),
        channel_embedding(tape, obs.c_disc, obs.c_cont),
    };
    return tape.concat_last(parts);
}

Value EmbeddingLayer::assemble_condition(Tape& tape, double tau_g, const ChannelSpec& spec) const {
    std::array<Value, 2> parts{
        time2vec(tape, tau_g),
        channel_embedding(tape, spec.c_disc, spec.c_cont),
    };
    return tape.concat_last(parts);
}

} // namespace agg
