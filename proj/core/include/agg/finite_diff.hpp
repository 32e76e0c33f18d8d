#pragma once

#include "agg/params.hpp"
#include "agg/tape.hpp"

#include <functional>
#include <string>

namespace agg {

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::int64_t worst_coord = -1;
};

/// Compares the analytic gradient of a scalar function against central
/// finite differences over every parameter coordinate. `build` must
/// deterministically reconstruct the computation on the given tape (dropout
/// disabled or driven by a fixed rng) and return the scalar loss node.
/// The reported error is max over coordinates of
///   |g_analytic - g_numeric| / max(1, |g_numeric|).
FiniteDiffReport finite_diff_check(ParameterStore& params,
                                   const std::function<Value(Tape&)>& build,
                                   double eps = 1e-5);

} // namespace agg
