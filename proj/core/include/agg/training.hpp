#pragma once

#include "agg/checkpoint.hpp"
#include "agg/model.hpp"
#include "agg/pipeline.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace agg {

struct TrainConfig {
    std::int64_t epochs = 200;
    double lr_start = 0.005;
    double lr_end = 0.001;
    double clip = 1.0;
    std::int64_t batch_size = 128;
    double dropout = 0.2;
    std::uint64_t seed = 0;
    Task task = Task::Regression;

    void validate() const;
};

struct EpochRecord {
    std::int64_t epoch = 0;
    double train_loss = 0.0;
    double val_metric = 0.0; // RMSE (regression) or AUC (classification); NaN when no validation samples
    double lr = 0.0;
    std::int64_t sample_count = 0;
    double wall_seconds = 0.0; // informational; not part of the canonical metric stream
};

struct RunMetrics {
    std::vector<EpochRecord> epochs;
    std::int64_t best_epoch = -1;
    double best_val = 0.0;
};

double mse_loss(const std::vector<double>& pred, const std::vector<double>& target);
double bce_loss(double prob, double label);

/// Linear annealing from lr_start to lr_end over `epochs` epochs.
double lr_schedule(std::int64_t epoch, const TrainConfig& cfg);

struct TrainResult {
    Checkpoint best;
    RunMetrics metrics;
};

/// Core loop over prebuilt samples. Per epoch: seeded shuffle, batches,
/// forward/loss/backward per sample (accumulated in sample order),
/// clip_global_norm, adam_step at the scheduled rate, then validation.
/// The best-validation checkpoint is retained (lowest RMSE / highest AUC).
/// Fully deterministic given (configs, samples, seed).
TrainResult train_on_samples(const std::vector<Sample>& train_samples, const std::vector<Sample>& val_samples,
                             const ModelConfig& model_cfg, const TrainConfig& train_cfg, const ChannelSchema& schema,
                             const StandardizationStats& stats, std::ostream* log = nullptr);

/// Full pipeline: mask_remove -> split_targets -> standardize on the input
/// portion -> build samples (training at cfg.stride, validation at stride L)
/// -> train_on_samples.
TrainResult train(const Dataset& raw, const PipelineConfig& pipeline_cfg, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg, std::ostream* log = nullptr);

/// Canonical metric stream: header plus one `epoch,train_loss,val,lr` line
/// per epoch.
std::string format_metrics(const RunMetrics& metrics);

} // namespace agg
