#pragma once

#include "agg/embeddings.hpp"
#include "agg/observation.hpp"
#include "agg/params.hpp"
#include "agg/rng.hpp"
#include "agg/sample.hpp"
#include "agg/tape.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace agg {

enum class Task { Regression, Classification };

/// All architecture hyperparameters. Embedded widths are uniform per
/// feature; d_encoder and d_g follow from the schema feature counts.
struct ModelConfig {
    std::int64_t feature_width = 16;
    std::int64_t heads = 8;
    std::int64_t encoder_layers = 2;
    double dropout = 0.2;
    std::int64_t context_length = 100;
    /// Width of the generator block; 0 selects d_encoder. The generator's
    /// cross-attention output, MLP and layer norms all live at this width,
    /// and a final linear head maps it to the task output.
    std::int64_t generator_width = 0;
    /// Task output dimension; 0 selects d_y for regression and 1
    /// (a single logit) for classification.
    std::int64_t output_dim = 0;
    Task task = Task::Regression;
    double leaky_slope = 0.01;
    double layer_norm_eps = 1e-5;

    EmbeddingDims embedding_dims(const ChannelSchema& schema) const;
    std::int64_t d_encoder(const ChannelSchema& schema) const { return embedding_dims(schema).node_width(); }
    std::int64_t d_g(const ChannelSchema& schema) const { return embedding_dims(schema).condition_width(); }
    std::int64_t head_dim(const ChannelSchema& schema) const { return d_encoder(schema) / heads; }
    std::int64_t resolved_generator_width(const ChannelSchema& schema) const {
        return generator_width > 0 ? generator_width : d_encoder(schema);
    }
    std::int64_t resolved_output_dim(const ChannelSchema& schema) const {
        if (output_dim > 0) return output_dim;
        return task == Task::Classification ? 1 : schema.d_y();
    }

    void validate(const ChannelSchema& schema) const;
};

/// Result of a single attention head: the projected context rows and the
/// softmaxed weights (one row per query; padded keys carry exact zeros).
struct AttentionHeadResult {
    Value output;
    Value weights;
};

/// Scaled dot-product attention head. `queries` supplies the query rows,
/// `keys_values` the key/value rows; `valid` masks key rows. Logits are
/// scaled by 1/sqrt(d_k). In training mode the softmaxed weights are
/// dropped out before the context product; `weights` always reports the
/// pre-dropout matrix (rows sum to 1, padded keys exactly 0).
AttentionHeadResult attention_head(Tape& tape, Value queries, Value keys_values, Value wq, Value wk, Value wv,
                                   const std::vector<std::uint8_t>& valid, double dropout_p = 0.0,
                                   Rng* rng = nullptr, bool training = false);

/// The AGG network: learnable embeddings, a stack of self-attention encoder
/// blocks over L nodes, and a conditional-attention generator that produces
/// a measurement estimate (or classification logit) for a (tau_g, c_g)
/// query.
class AggModel {
public:
    AggModel(const ModelConfig& config, const ChannelSchema& schema, std::uint64_t init_seed);

    const ModelConfig& config() const { return cfg_; }
    const ChannelSchema& schema() const { return schema_; }
    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }
    const EmbeddingLayer& embeddings() const { return *embed_; }

    std::int64_t parameter_count() const { return store_.scalar_count(); }
    /// Itemized parameter listing: (name, shape, count) lines.
    std::string parameter_breakdown() const;

    /// Multi-head self-attention with output projection (no residual).
    Value multi_head_self_attention(Tape& tape, Value block, const std::vector<std::uint8_t>& valid,
                                    std::int64_t layer, Rng* rng, bool training) const;

    /// Full encoder block: residual attention, then LayerNorm/MLP/LayerNorm.
    Value encoder_block(Tape& tape, Value block, const std::vector<std::uint8_t>& valid, std::int64_t layer,
                        Rng* rng, bool training) const;

    /// Conditional attention of a single query vector against encoded rows;
    /// returns the concatenated multi-head context (pre output-projection
    /// width l*d_v).
    Value conditional_attention(Tape& tape, Value condition, Value encoded, const std::vector<std::uint8_t>& valid,
                                Rng* rng, bool training) const;

    /// Generator block: conditional attention, output projection to the
    /// generator width, LayerNorm/MLP/LayerNorm, then the linear task head.
    /// Returns a vector of resolved_output_dim entries.
    Value generator_block(Tape& tape, Value condition, Value encoded, const std::vector<std::uint8_t>& valid,
                          Rng* rng, bool training) const;

    /// Assembles embeddings for the sample's inputs (zero rows for padding),
    /// runs the encoder stack and the generator. Returns the output node on
    /// the tape.
    Value forward_nodes(Tape& tape, const Sample& sample, Rng* rng, bool training) const;

    /// Measurement estimate in standardized space.
    Tensor forward_impute(const Sample& sample, Rng* rng, bool training) const;

    /// Probability of the positive class (logit head + logistic squash).
    double classify(const Sample& sample, Rng* rng, bool training) const;

private:
    struct HeadIds {
        int wq, wk, wv;
    };
    struct BlockIds {
        std::vector<HeadIds> heads;
        int wo;
        int ln1_gamma, ln1_beta;
        int mlp_w1, mlp_b1, mlp_w2, mlp_b2;
        int ln2_gamma, ln2_beta;
    };
    struct GeneratorIds {
        int ln_g_gamma, ln_g_beta;
        int ln_h_gamma, ln_h_beta;
        std::vector<HeadIds> heads; // wq here projects the condition (W^G)
        int wo;
        int ln1_gamma, ln1_beta;
        int mlp_w1, mlp_b1, mlp_w2, mlp_b2;
        int ln2_gamma, ln2_beta;
        int head_w, head_b;
    };

    Value mlp(Tape& tape, Value x, int w1, int b1, int w2, int b2, Rng* rng, bool training) const;
    std::vector<std::uint8_t> sample_mask(const Sample& sample) const;

    ModelConfig cfg_;
    ChannelSchema schema_;
    ParameterStore store_;
    std::unique_ptr<EmbeddingLayer> embed_;
    std::vector<BlockIds> encoder_;
    GeneratorIds generator_;
};

/// Scalar learnable count for a configuration without keeping the model.
std::int64_t count_parameters(const ModelConfig& config, const ChannelSchema& schema);

} // namespace agg
