#include "agg/params.hpp"

#include "agg/error.hpp"

#include <cmath>

namespace agg {

int ParameterStore::add(const std::string& name, Tensor value) {
    if (index_.count(name)) raise(ErrorKind::Config, "duplicate parameter name: " + name);
    int id = static_cast<int>(params_.size());
    params_.push_back(Parameter{name, std::move(value)});
    index_.emplace(name, id);
    return id;
}

int ParameterStore::id_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) raise(ErrorKind::Config, "unknown parameter name: " + name);
    return it->second;
}

std::int64_t ParameterStore::scalar_count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
}

GradientBuffer::GradientBuffer(const ParameterStore& store) {
    grads_.reserve(static_cast<std::size_t>(store.size()));
    for (int id = 0; id < store.size(); ++id) grads_.push_back(Tensor::zeros_like(store.value(id)));
}

void GradientBuffer::zero() {
    for (auto& g : grads_)
        for (auto& x : g.values()) x = 0.0;
}

void GradientBuffer::accumulate(int id, const Tensor& g) {
    Tensor& dst = grads_[static_cast<std::size_t>(id)];
    if (!dst.same_shape(g))
        raise(ErrorKind::Config, "gradient shape " + g.shape_str() + " does not match parameter " + dst.shape_str());
    for (std::int64_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
}

void GradientBuffer::add(const GradientBuffer& other) {
    for (std::size_t i = 0; i < grads_.size(); ++i) {
        auto& dst = grads_[i];
        const auto& src = other.grads_[i];
        for (std::int64_t j = 0; j < dst.numel(); ++j) dst[j] += src[j];
    }
}

void GradientBuffer::scale(double c) {
    for (auto& g : grads_)
        for (auto& x : g.values()) x *= c;
}

bool GradientBuffer::all_finite() const {
    for (const auto& g : grads_)
        if (!g.all_finite()) return false;
    return true;
}

double GradientBuffer::global_norm() const {
    double ss = 0.0;
    for (const auto& g : grads_)
        for (double x : g.values()) ss += x * x;
    return std::sqrt(ss);
}

} // namespace agg
