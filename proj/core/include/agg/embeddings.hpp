#pragma once

#include "agg/observation.hpp"
#include "agg/params.hpp"
#include "agg/rng.hpp"
#include "agg/tape.hpp"

#include <cstdint>

namespace agg {

/// Shape of the embedded node space: one width-`feature_width` slot per
/// feature (measurement, time, and each channel feature).
struct EmbeddingDims {
    std::int64_t feature_width = 16;
    std::int64_t d_y = 1;
    std::int64_t n_discrete = 0;
    std::int64_t d_c_cont = 0;

    std::int64_t value_width() const { return feature_width; }            // D_y
    std::int64_t time_width() const { return feature_width; }             // D_t
    std::int64_t channel_width() const {                                  // D_c
        return feature_width * (n_discrete + d_c_cont);
    }
    std::int64_t node_width() const { return value_width() + time_width() + channel_width(); }  // d_encoder
    std::int64_t condition_width() const { return time_width() + channel_width(); }             // d_g
};

/// Learnable embeddings shared between input nodes and generation
/// conditions: a value projection, the time2vec frequencies/phases, one
/// lookup table per discrete channel feature, and a projection for the
/// continuous channel features.
class EmbeddingLayer {
public:
    EmbeddingLayer(const EmbeddingDims& dims, const ChannelSchema& schema, ParameterStore& store, Rng& init_rng);

    /// Temporal embedding: element 0 is the linear term omega_0*tau + phi_0,
    /// the remaining D_t-1 elements are sin(omega_k*tau + phi_k).
    Value time2vec(Tape& tape, Value tau) const;
    Value time2vec(Tape& tape, double tau) const;

    Value embed_value(Tape& tape, const std::vector<double>& y) const;
    Value embed_discrete(Tape& tape, std::int64_t feature, std::int64_t category) const;
    Value embed_continuous(Tape& tape, const std::vector<double>& c_cont) const;

    /// Full node embedding h0 = concat[value, time, channel] where the time
    /// slot encodes tau = t_ref - t. t_ref must be the largest timestamp in
    /// the input block; an observation after t_ref is a pipeline-order error.
    Value assemble_node(Tape& tape, const Observation& obs, double t_ref) const;

    /// Condition vector g = concat[time2vec(tau_g), channel] sharing every
    /// parameter with assemble_node. tau_g may be negative (future query).
    Value assemble_condition(Tape& tape, double tau_g, const ChannelSpec& spec) const;

    const EmbeddingDims& dims() const { return dims_; }

private:
    Value channel_embedding(Tape& tape, const std::vector<std::int64_t>& c_disc,
                            const std::vector<double>& c_cont) const;

    EmbeddingDims dims_;
    int value_w_ = -1;
    int omega_ = -1;
    int phi_ = -1;
    std::vector<int> tables_;
    int cont_w_ = -1;
    std::vector<std::int64_t> vocab_sizes_;
};

/// Xavier-uniform initialization used for every projection matrix.
Tensor init_projection(std::int64_t fan_in, std::int64_t fan_out, Rng& rng);

} // namespace agg
