#include "agg/model.hpp"

#include "agg/error.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace agg {

EmbeddingDims ModelConfig::embedding_dims(const ChannelSchema& schema) const {
    EmbeddingDims dims;
    dims.feature_width = feature_width;
    dims.d_y = schema.d_y();
    dims.n_discrete = schema.n_discrete();
    dims.d_c_cont = schema.n_continuous();
    return dims;
}

void ModelConfig::validate(const ChannelSchema& schema) const {
    if (heads < 1) raise(ErrorKind::Config, "heads must be at least 1");
    if (encoder_layers < 1) raise(ErrorKind::Config, "encoder_layers must be at least 1");
    if (context_length < 1) raise(ErrorKind::Config, "context_length must be at least 1");
    if (dropout < 0.0 || dropout >= 1.0) raise(ErrorKind::Config, "dropout must lie in [0, 1)");
    if (schema.d_y() < 1) raise(ErrorKind::Config, "schema must declare at least one measurement column");
    if (schema.n_channel_features() < 1) raise(ErrorKind::Config, "schema must declare at least one channel feature");
    const std::int64_t d = d_encoder(schema);
    if (d % heads != 0)
        raise(ErrorKind::Config, "d_encoder " + std::to_string(d) + " is not divisible by heads " + std::to_string(heads));
}

AggModel::AggModel(const ModelConfig& config, const ChannelSchema& schema, std::uint64_t init_seed)
    : cfg_(config), schema_(schema) {
    cfg_.validate(schema_);
    Rng rng = Rng::derive(init_seed, 0x6d6f64656c);

    embed_ = std::make_unique<EmbeddingLayer>(cfg_.embedding_dims(schema_), schema_, store_, rng);

    const std::int64_t d = cfg_.d_encoder(schema_);
    const std::int64_t dk = cfg_.head_dim(schema_);
    const std::int64_t dg = cfg_.d_g(schema_);
    const std::int64_t hidden = cfg_.heads * d;

    auto add_ln = [&](const std::string& prefix, std::int64_t width, int& gamma, int& beta) {
        Tensor g({width});
        for (auto& x : g.values()) x = 1.0;
        gamma = store_.add(prefix + ".gamma", std::move(g));
        beta = store_.add(prefix + ".beta", Tensor({width}));
    };

    for (std::int64_t layer = 0; layer < cfg_.encoder_layers; ++layer) {
        const std::string p = "encoder." + std::to_string(layer);
        BlockIds block;
        for (std::int64_t h = 0; h < cfg_.heads; ++h) {
            const std::string hp = p + ".head." + std::to_string(h);
            block.heads.push_back(HeadIds{
                store_.add(hp + ".WQ", init_projection(d, dk, rng)),
                store_.add(hp + ".WK", init_projection(d, dk, rng)),
                store_.add(hp + ".WV", init_projection(d, dk, rng)),
            });
        }
        block.wo = store_.add(p + ".WO", init_projection(cfg_.heads * dk, d, rng));
        add_ln(p + ".ln1", d, block.ln1_gamma, block.ln1_beta);
        block.mlp_w1 = store_.add(p + ".mlp.W1", init_projection(d, hidden, rng));
        block.mlp_b1 = store_.add(p + ".mlp.b1", Tensor({hidden}));
        block.mlp_w2 = store_.add(p + ".mlp.W2", init_projection(hidden, d, rng));
        block.mlp_b2 = store_.add(p + ".mlp.b2", Tensor({d}));
        add_ln(p + ".ln2", d, block.ln2_gamma, block.ln2_beta);
        encoder_.push_back(std::move(block));
    }

    const std::int64_t dgen = cfg_.resolved_generator_width(schema_);
    const std::int64_t dout = cfg_.resolved_output_dim(schema_);
    const std::int64_t gen_hidden = cfg_.heads * dgen;
    add_ln("generator.ln_g", dg, generator_.ln_g_gamma, generator_.ln_g_beta);
    add_ln("generator.ln_h", d, generator_.ln_h_gamma, generator_.ln_h_beta);
    for (std::int64_t h = 0; h < cfg_.heads; ++h) {
        const std::string hp = "generator.attn." + std::to_string(h);
        generator_.heads.push_back(HeadIds{
            store_.add(hp + ".WG", init_projection(dg, dk, rng)),
            store_.add(hp + ".WK", init_projection(d, dk, rng)),
            store_.add(hp + ".WV", init_projection(d, dk, rng)),
        });
    }
    generator_.wo = store_.add("generator.WO", init_projection(cfg_.heads * dk, dgen, rng));
    add_ln("generator.ln1", dgen, generator_.ln1_gamma, generator_.ln1_beta);
    generator_.mlp_w1 = store_.add("generator.mlp.W1", init_projection(dgen, gen_hidden, rng));
    generator_.mlp_b1 = store_.add("generator.mlp.b1", Tensor({gen_hidden}));
    generator_.mlp_w2 = store_.add("generator.mlp.W2", init_projection(gen_hidden, dgen, rng));
    generator_.mlp_b2 = store_.add("generator.mlp.b2", Tensor({dgen}));
    add_ln("generator.ln2", dgen, generator_.ln2_gamma, generator_.ln2_beta);
    generator_.head_w = store_.add("task.W", init_projection(dgen, dout, rng));
    generator_.head_b = store_.add("task.b", Tensor({dout}));
}

std::string AggModel::parameter_breakdown() const {
    std::ostringstream os;
    for (int id = 0; id < store_.size(); ++id) {
        const auto& p = store_.param(id);
        os << p.name << ' ' << p.value.shape_str() << ' ' << p.value.numel() << '\n';
    }
    os << "total " << parameter_count() << '\n';
    return os.str();
}

AttentionHeadResult attention_head(Tape& tape, Value queries, Value keys_values, Value wq, Value wk, Value wv,
                                   const std::vector<std::uint8_t>& valid, double dropout_p, Rng* rng,
                                   bool training) {
    const std::int64_t dk = tape.value(wq).dim(1);
    Value q = tape.matmul(queries, wq);
    Value k = tape.matmul(keys_values, wk);
    Value v = tape.matmul(keys_values, wv);
    Value logits = tape.scale(tape.matmul(q, k, false, true), 1.0 / std::sqrt(static_cast<double>(dk)));
    Value weights = tape.softmax_rows(tape.mask_cols(logits, valid));
    Value dropped = tape.dropout(weights, dropout_p, rng, training);
    return AttentionHeadResult{tape.matmul(dropped, v), weights};
}

Value AggModel::multi_head_self_attention(Tape& tape, Value block, const std::vector<std::uint8_t>& valid,
                                          std::int64_t layer, Rng* rng, bool training) const {
    const BlockIds& ids = encoder_[static_cast<std::size_t>(layer)];
    std::vector<Value> heads;
    heads.reserve(ids.heads.size());
    for (const HeadIds& h : ids.heads)
        heads.push_back(attention_head(tape, block, block, tape.parameter(h.wq), tape.parameter(h.wk),
                                       tape.parameter(h.wv), valid, cfg_.dropout, rng, training)
                            .output);
    return tape.matmul(tape.concat_last(heads), tape.parameter(ids.wo));
}

Value AggModel::mlp(Tape& tape, Value x, int w1, int b1, int w2, int b2, Rng* rng, bool training) const {
    Value hidden = tape.leaky_relu(tape.add(tape.matmul(x, tape.parameter(w1)), tape.parameter(b1)), cfg_.leaky_slope);
    hidden = tape.dropout(hidden, cfg_.dropout, rng, training);
    return tape.add(tape.matmul(hidden, tape.parameter(w2)), tape.parameter(b2));
}

Value AggModel::encoder_block(Tape& tape, Value block, const std::vector<std::uint8_t>& valid, std::int64_t layer,
                              Rng* rng, bool training) const {
    const BlockIds& ids = encoder_[static_cast<std::size_t>(layer)];
    Value u = tape.add(block, multi_head_self_attention(tape, block, valid, layer, rng, training));
    Value normed = tape.layer_norm(u, tape.parameter(ids.ln1_gamma), tape.parameter(ids.ln1_beta), cfg_.layer_norm_eps);
    Value m = mlp(tape, normed, ids.mlp_w1, ids.mlp_b1, ids.mlp_w2, ids.mlp_b2, rng, training);
    return tape.layer_norm(tape.add(u, m), tape.parameter(ids.ln2_gamma), tape.parameter(ids.ln2_beta),
                           cfg_.layer_norm_eps);
}

Value AggModel::conditional_attention(Tape& tape, Value condition, Value encoded,
                                      const std::vector<std::uint8_t>& valid, Rng* rng, bool training) const {
    Value gbar = tape.layer_norm(condition, tape.parameter(generator_.ln_g_gamma), tape.parameter(generator_.ln_g_beta),
                                 cfg_.layer_norm_eps);
    Value hbar = tape.layer_norm(encoded, tape.parameter(generator_.ln_h_gamma), tape.parameter(generator_.ln_h_beta),
                                 cfg_.layer_norm_eps);
    std::vector<Value> heads;
    heads.reserve(generator_.heads.size());
    for (const HeadIds& h : generator_.heads)
        heads.push_back(attention_head(tape, gbar, hbar, tape.parameter(h.wq), tape.parameter(h.wk),
                                       tape.parameter(h.wv), valid, cfg_.dropout, rng, training)
                            .output);
    return tape.concat_last(heads);
}

Value AggModel::generator_block(Tape& tape, Value condition, Value encoded, const std::vector<std::uint8_t>& valid,
                                Rng* rng, bool training) const {
    Value context = conditional_attention(tape, condition, encoded, valid, rng, training);
    Value u = tape.matmul(context, tape.parameter(generator_.wo));
    Value normed = tape.layer_norm(u, tape.parameter(generator_.ln1_gamma), tape.parameter(generator_.ln1_beta),
                                   cfg_.layer_norm_eps);
    Value m = mlp(tape, normed, generator_.mlp_w1, generator_.mlp_b1, generator_.mlp_w2, generator_.mlp_b2, rng,
                  training);
    Value z = tape.layer_norm(tape.add(u, m), tape.parameter(generator_.ln2_gamma),
                              tape.parameter(generator_.ln2_beta), cfg_.layer_norm_eps);
    return tape.add(tape.matmul(z, tape.parameter(generator_.head_w)), tape.parameter(generator_.head_b));
}

std::vector<std::uint8_t> AggModel::sample_mask(const Sample& sample) const {
    const std::int64_t real = static_cast<std::int64_t>(sample.inputs.size());
    if (real < 1) raise(ErrorKind::Data, "sample has no input nodes");
    if (real > cfg_.context_length)
        raise(ErrorKind::Data, "sample holds " + std::to_string(real) + " nodes, more than the context length " +
                                   std::to_string(cfg_.context_length));
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(cfg_.context_length), 0);
    for (std::int64_t i = 0; i < real; ++i) mask[static_cast<std::size_t>(i)] = 1;
    return mask;
}

Value AggModel::forward_nodes(Tape& tape, const Sample& sample, Rng* rng, bool training) const {
    const std::vector<std::uint8_t> mask = sample_mask(sample);
    const double t_ref = sample.t_ref();
    const std::int64_t d = cfg_.d_encoder(schema_);

    std::vector<Value> rows;
    rows.reserve(static_cast<std::size_t>(cfg_.context_length));
    for (const Observation& obs : sample.inputs) rows.push_back(embed_->assemble_node(tape, obs, t_ref));
    if (static_cast<std::int64_t>(rows.size()) < cfg_.context_length) {
        Value pad = tape.constant(Tensor({d}));
        while (static_cast<std::int64_t>(rows.size()) < cfg_.context_length) rows.push_back(pad);
    }

    Value block = tape.stack_rows(rows);
    for (std::int64_t layer = 0; layer < cfg_.encoder_layers; ++layer)
        block = encoder_block(tape, block, mask, layer, rng, training);

    Value condition = embed_->assemble_condition(tape, sample.tau_g, sample.target_channel);
    return generator_block(tape, condition, block, mask, rng, training);
}

Tensor AggModel::forward_impute(const Sample& sample, Rng* rng, bool training) const {
    Tape tape(&store_);
    Value out = forward_nodes(tape, sample, rng, training);
    return tape.value(out);
}

double AggModel::classify(const Sample& sample, Rng* rng, bool training) const {
    if (cfg_.task != Task::Classification)
        raise(ErrorKind::Config, "classify called on a regression-configured model");
    Tape tape(&store_);
    Value logit = forward_nodes(tape, sample, rng, training);
    Value prob = tape.sigmoid(logit);
    return tape.value(prob)[0];
}

std::int64_t count_parameters(const ModelConfig& config, const ChannelSchema& schema) {
    AggModel model(config, schema, 0);
    return model.parameter_count();
}

} // namespace agg
