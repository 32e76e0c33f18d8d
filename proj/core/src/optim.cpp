#include "agg/optim.hpp"

#include "agg/error.hpp"

#include <cmath>

namespace agg {

AdamState AdamState::init(const ParameterStore& store) {
    AdamState s;
    s.m.reserve(static_cast<std::size_t>(store.size()));
    s.v.reserve(static_cast<std::size_t>(store.size()));
    for (int id = 0; id < store.size(); ++id) {
        s.m.push_back(Tensor::zeros_like(store.value(id)));
        s.v.push_back(Tensor::zeros_like(store.value(id)));
    }
    return s;
}

void adam_step(ParameterStore& params, const GradientBuffer& grads, AdamState& state, double lr) {
    if (lr <= 0.0) raise(ErrorKind::Config, "adam_step: learning rate must be positive");
    if (static_cast<std::int64_t>(state.m.size()) != params.size())
        raise(ErrorKind::Config, "adam_step: state does not match parameter store");
    if (!grads.all_finite()) raise(ErrorKind::Divergence, "adam_step: non-finite gradient");

    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));

    for (int id = 0; id < params.size(); ++id) {
        Tensor& theta = params.value(id);
        Tensor& m = state.m[static_cast<std::size_t>(id)];
        Tensor& v = state.v[static_cast<std::size_t>(id)];
        const Tensor& g = grads.grad(id);
        for (std::int64_t i = 0; i < theta.numel(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double clip_global_norm(GradientBuffer& grads, double max_norm) {
    if (max_norm <= 0.0) raise(ErrorKind::Config, "clip_global_norm: threshold must be positive");
    const double norm = grads.global_norm();
    if (norm > max_norm) grads.scale(max_norm / norm);
    return norm;
}

} // namespace agg
