#include "agg/finite_diff.hpp"

#include <cmath>

namespace agg {

namespace {

double eval(ParameterStore& params, const std::function<Value(Tape&)>& build) {
    Tape tape(&params);
    Value loss = build(tape);
    return tape.value(loss)[0];
}

} // namespace

FiniteDiffReport finite_diff_check(ParameterStore& params, const std::function<Value(Tape&)>& build, double eps) {
    GradientBuffer analytic(params);
    {
        Tape tape(&params);
        Value loss = build(tape);
        tape.backward(loss, analytic);
    }

    FiniteDiffReport report;
    for (int id = 0; id < params.size(); ++id) {
        Tensor& theta = params.value(id);
        for (std::int64_t i = 0; i < theta.numel(); ++i) {
            const double saved = theta[i];
            theta[i] = saved + eps;
            const double fp = eval(params, build);
            theta[i] = saved - eps;
            const double fm = eval(params, build);
            theta[i] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double ga = analytic.grad(id)[i];
            const double rel = std::abs(ga - numeric) / std::max(1.0, std::abs(numeric));
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = params.name(id);
                report.worst_coord = i;
            }
        }
    }
    return report;
}

} // namespace agg
