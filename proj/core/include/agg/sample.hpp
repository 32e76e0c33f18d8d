#pragma once

#include "agg/observation.hpp"
#include "agg/tensor.hpp"

#include <cstdint>
#include <vector>

namespace agg {

/// One training/evaluation unit: up to L input observations (sorted by
/// timestamp) and a single generation target. tau_g is relative to the
/// largest input timestamp; it is negative for queries beyond the block
/// (prediction) and non-negative for imputation.
struct Sample {
    std::vector<Observation> inputs;
    double tau_g = 0.0;
    ChannelSpec target_channel;
    std::vector<double> y_true;

    double t_ref() const {
        double m = inputs.front().t;
        for (const auto& o : inputs)
            if (o.t > m) m = o.t;
        return m;
    }
};

/// A padded block: L embedding rows plus the mask telling real rows from
/// zero padding.
struct BlockInput {
    Tensor rows;                      // L x d
    std::vector<std::uint8_t> mask;   // 1 = real node, 0 = padding
    std::int64_t real_count() const {
        std::int64_t n = 0;
        for (auto m : mask) n += m ? 1 : 0;
        return n;
    }
};

/// Zero-pads `rows` (n x d, n >= 1) to `target_rows` rows and builds the
/// corresponding mask.
BlockInput pad_block(const Tensor& rows, std::int64_t target_rows);

} // namespace agg
