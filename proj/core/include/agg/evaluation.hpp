#pragma once

#include "agg/model.hpp"
#include "agg/pipeline.hpp"
#include "agg/training.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace agg {

// ---- metrics ----

double rmse(const std::vector<double>& pred, const std::vector<double>& truth);
double mae(const std::vector<double>& pred, const std::vector<double>& truth);

/// Rank-based (Mann-Whitney) AUC; ties contribute 1/2. Labels are 0/1 and
/// both classes must be present.
double auc(const std::vector<double>& scores, const std::vector<double>& labels);

/// Mean of same-channel measurements among the sample's inputs; falls back
/// to the all-node mean, then to `global_mean`.
std::vector<double> mean_baseline(const Sample& sample, double global_mean = 0.0);

// ---- reports ----

struct EvalReport {
    struct Row {
        std::string dataset;
        double r = 0.0; // removal rate, or horizon for prediction rows
        std::string metric;
        double value = 0.0;
    };
    std::vector<Row> rows;

    std::string to_csv() const;
    std::string to_table() const;
};

// ---- imputation study ----

struct ImputationStudyConfig {
    std::string dataset_name = "dataset";
    std::vector<double> r_grid{0.1, 0.3, 0.5, 0.7, 0.9};
    std::vector<std::uint64_t> seeds{0};
    bool native_units = false; // de-standardize before computing MAE/RMSE
};

/// Trains one model per (r, seed), evaluates on that run's validation
/// samples, and reports AGG and mean-baseline RMSE/MAE per r (mean over
/// seeds, plus stddev rows when more than one seed is given).
EvalReport evaluate_imputation(const Dataset& raw, const PipelineConfig& pipeline_cfg, const ModelConfig& model_cfg,
                               const TrainConfig& train_cfg, const ImputationStudyConfig& study,
                               std::ostream* log = nullptr);

// ---- prediction ----

/// Ground-truth oracle in native units; nullopt when no truth exists.
using TruthFn = std::function<std::optional<std::vector<double>>(const ChannelSpec&, double t_native)>;

struct PredictionProtocol {
    std::vector<double> horizons{1, 2, 3, 4}; // native time units beyond each window end
    double truth_tolerance = 0.5;             // native units, for observation matching
    std::string dataset_name = "dataset";
};

/// Slides non-overlapping windows over the inputs; for every horizon h each
/// distinct channel in a window is queried at tau_g = -(h in scaled units).
/// Truth comes from `truth` when given, otherwise from the nearest
/// same-channel observation within the tolerance. Horizons with no resolved
/// truth are skipped with a warning. Reports standardized RMSE (and the
/// mean-baseline RMSE) per horizon, with the horizon in the report's r slot.
EvalReport evaluate_prediction(const AggModel& model, const StandardizationStats& stats,
                               const std::vector<Observation>& native_inputs, const PredictionProtocol& proto,
                               const TruthFn& truth = nullptr, std::ostream* log = nullptr);

// ---- augmentation sweep ----

struct SweepPoint {
    std::int64_t stride = 0;
    double factor = 0.0;
    double val_rmse = 0.0;
};

/// Trains one model per stride under identical seeds and epochs against a
/// shared validation set (built once at stride L); returns
/// (augmentation factor, validation RMSE) sorted by factor.
std::vector<SweepPoint> sweep_augmentation(const Dataset& raw, const PipelineConfig& pipeline_cfg,
                                           const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                           const std::vector<std::int64_t>& strides, std::ostream* log = nullptr);

std::string sweep_to_csv(const std::vector<SweepPoint>& curve);

// ---- synthetic data ----

/// All channels observe one latent sinusoid mixture, each through its own
/// time shift and gain; arrivals are independent exponential-gap streams.
struct SyntheticConfig {
    std::int64_t channels = 4;
    std::vector<double> latent_freq{0.01, 0.025};
    std::vector<double> latent_amp{1.0, 0.5};
    std::vector<double> latent_phase{0.3, 1.7};
    double channel_shift_step = 3.0;    // shift of channel k = k * step
    std::vector<double> channel_gain;   // empty = all 1.0
    double noise_std = 0.0;
    double mean_gap = 4.0;              // mean arrival gap per channel
    double horizon = 5000.0;
    std::uint64_t seed = 0;

    double shift_of(std::int64_t channel) const {
        return channel_shift_step * static_cast<double>(channel);
    }
    double gain_of(std::int64_t channel) const {
        return channel_gain.empty() ? 1.0 : channel_gain.at(static_cast<std::size_t>(channel));
    }
};

/// Noise-free latent value observed by `channel` at native time t.
double synthetic_truth(const SyntheticConfig& cfg, std::int64_t channel, double t);

Dataset generate_synthetic(const SyntheticConfig& cfg);

/// Truth oracle backed by the generator's analytic signal.
TruthFn synthetic_truth_fn(const SyntheticConfig& cfg);

} // namespace agg
