#pragma once

#include "agg/model.hpp"
#include "agg/optim.hpp"
#include "agg/pipeline.hpp"

#include <string>

namespace agg {

/// Everything required to reload a trained model: architecture config,
/// schema with vocabularies, standardization statistics, named parameter
/// tensors, optimizer state, and a free-form metadata blob (the CLI stores
/// the resolved run config there). Serialized little-endian behind the
/// magic string "AGGCKPT1".
struct Checkpoint {
    ModelConfig model;
    ChannelSchema schema;
    StandardizationStats stats;
    std::vector<Parameter> params;
    AdamState adam;
    std::string meta;

    static Checkpoint capture(const AggModel& model, const StandardizationStats& stats, const AdamState& adam,
                              std::string meta = {});
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Rebuilds the model and overwrites its parameters from the checkpoint.
AggModel restore_model(const Checkpoint& ckpt);

} // namespace agg
