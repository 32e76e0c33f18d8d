#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace agg {

/// One sensor reading: measurement vector, timestamp, and the channel
/// features describing its source. Discrete features carry indices into the
/// schema vocabularies; continuous features are raw values.
struct Observation {
    std::vector<double> y;
    double t = 0.0;
    std::vector<std::int64_t> c_disc;
    std::vector<double> c_cont;
    /// Position in the source file; breaks ordering ties deterministically.
    std::int64_t source_index = 0;
};

/// Channel specification for a generation query: the (c_g) part of a
/// condition, without a measurement.
struct ChannelSpec {
    std::vector<std::int64_t> c_disc;
    std::vector<double> c_cont;
};

/// Names and vocabularies for the feature columns of a dataset.
struct ChannelSchema {
    std::string time_name = "t";
    std::vector<std::string> discrete_names;
    std::vector<std::vector<std::string>> vocabularies; // one per discrete feature
    std::vector<std::string> continuous_names;
    std::vector<std::string> measurement_names;

    std::int64_t n_discrete() const { return static_cast<std::int64_t>(discrete_names.size()); }
    std::int64_t n_continuous() const { return static_cast<std::int64_t>(continuous_names.size()); }
    std::int64_t d_y() const { return static_cast<std::int64_t>(measurement_names.size()); }
    /// Channel features = discrete + continuous (measurement and time are
    /// accounted separately).
    std::int64_t n_channel_features() const { return n_discrete() + n_continuous(); }
    std::int64_t vocab_size(std::int64_t feature) const {
        return static_cast<std::int64_t>(vocabularies[static_cast<std::size_t>(feature)].size());
    }

    /// Index of `label` in feature vocabulary `feature`, growing the
    /// vocabulary when `grow` is set; raises a data error otherwise.
    std::int64_t category_id(std::int64_t feature, const std::string& label, bool grow);
};

} // namespace agg
