#pragma once

#include "agg/observation.hpp"
#include "agg/sample.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace agg {

/// Per-channel standardization statistics plus the time rescaling. A
/// channel is identified by its tuple of discrete feature ids; statistics
/// are computed from the training portion only.
struct StandardizationStats {
    struct ChannelStats {
        std::vector<double> mean;
        std::vector<double> stddev;       // population std; 0 marks a constant channel
        std::vector<std::uint8_t> constant;
    };
    std::map<std::vector<std::int64_t>, ChannelStats> per_channel;
    double time_offset = 0.0;
    double time_scale = 1.0;

    std::vector<double> standardize_measurement(const std::vector<std::int64_t>& channel,
                                                const std::vector<double>& y) const;
    std::vector<double> destandardize_measurement(const std::vector<std::int64_t>& channel,
                                                  const std::vector<double>& y) const;
    double standardize_time(double t) const { return (t - time_offset) / time_scale; }
    double destandardize_time(double t) const { return t * time_scale + time_offset; }
};

struct Dataset {
    ChannelSchema schema;
    std::vector<Observation> observations;
    /// Rows whose measurement cells were all empty: generation queries
    /// without ground truth.
    std::vector<Observation> unlabeled;
    bool standardized = false;
};

enum class SplitMode { Transductive, Inductive };

struct PipelineConfig {
    std::int64_t context_length = 100; // L
    std::int64_t stride = 100;         // node-index shift between windows
    double removal_rate = 0.1;         // r
    double validation_fraction = 0.2;
    SplitMode split_mode = SplitMode::Transductive;
    double val_range_start = 0.0;      // inductive mode, native time units
    double val_range_end = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// ---- ingestion ----

/// Parses the schema sidecar (plain-text key=value with keys `time`,
/// `discrete`, `continuous`, `measurement`; lists comma-separated).
ChannelSchema load_schema(const std::string& path);

/// Reads the observation CSV (header `t,<disc...>,<cont...>,<y...>`).
/// Unseen discrete categories grow the vocabulary when `grow_vocab` is set
/// (training ingestion) and raise a data error otherwise.
Dataset load_csv(const std::string& path, ChannelSchema schema, bool grow_vocab = true);

void write_csv(const std::string& path, const Dataset& ds);
void write_schema(const std::string& path, const ChannelSchema& schema);

// ---- standardization ----

/// Statistics of `observations` only: per-channel measurement mean/std
/// (population) and the time offset/scale making the median positive gap 1.
StandardizationStats compute_stats(const std::vector<Observation>& observations,
                                   std::vector<std::string>* warnings = nullptr);

std::vector<Observation> apply_standardization(const std::vector<Observation>& observations,
                                               const StandardizationStats& stats);

/// Computes stats over the dataset and applies them to it.
std::pair<Dataset, StandardizationStats> standardize(const Dataset& ds, std::vector<std::string>* warnings = nullptr);

// ---- target construction ----

/// Seed-deterministic uniform partition into inputs and removal targets;
/// |targets| = round(r * N) with half-up rounding.
std::pair<std::vector<Observation>, std::vector<Observation>> mask_remove(const std::vector<Observation>& observations,
                                                                          double removal_rate, std::uint64_t seed);

/// Transductive: seed-deterministic split of the targets by fraction.
/// Inductive: validation targets are exactly those with native timestamp in
/// [val_range_start, val_range_end].
std::pair<std::vector<Observation>, std::vector<Observation>> split_targets(const std::vector<Observation>& targets,
                                                                            const PipelineConfig& cfg);

/// Sorts observations by (t, discrete ids, source index).
void sort_observations(std::vector<Observation>& observations);

/// Slides a window of L consecutive input nodes with the configured stride;
/// every target whose timestamp lies within a window's time range yields
/// one sample with tau_g = (max window t) - (target t). Output is ordered
/// by (window start, target timestamp, channel ids, source index).
std::vector<Sample> build_samples(std::vector<Observation> inputs, std::vector<Observation> targets,
                                  const PipelineConfig& cfg);

/// |samples(stride)| / |samples(stride = L)|.
double augmentation_factor(const std::vector<Observation>& inputs, const std::vector<Observation>& targets,
                           const PipelineConfig& cfg);

/// Reads a generation-query CSV (`t,<disc...>,<cont...>`, no measurement
/// columns). Categories must already exist in the schema.
std::vector<Observation> load_query_csv(const std::string& path, const ChannelSchema& schema);

/// Builds the inference block for one query: the L observations nearest to
/// the query time (ties toward earlier data), sorted by timestamp, with
/// tau_g relative to the block's last node. Queries after the final
/// observation yield tau_g < 0 (prediction).
Sample build_query_sample(const std::vector<Observation>& inputs, const Observation& query, std::int64_t context_length);

} // namespace agg
