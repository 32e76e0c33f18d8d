#pragma once

#include "agg/params.hpp"

#include <cstdint>
#include <vector>

namespace agg {

/// Bias-corrected ADAM state. Moment tensors mirror the parameter shapes.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t t = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    static AdamState init(const ParameterStore& store);
};

/// One bias-corrected ADAM update; increments the step counter by exactly 1.
/// Non-finite gradients raise a divergence error.
void adam_step(ParameterStore& params, const GradientBuffer& grads, AdamState& state, double lr);

/// Scales all gradients by max_norm/norm when the global L2 norm exceeds
/// max_norm; otherwise leaves them untouched. Returns the pre-clip norm.
double clip_global_norm(GradientBuffer& grads, double max_norm);

} // namespace agg
