#pragma once

#include "agg/tensor.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace agg {

struct Parameter {
    std::string name;
    Tensor value;
};

/// Ordered collection of named learnable tensors. Ids are assigned in
/// creation order and stay stable for the life of the store; every
/// iteration in the library walks ids in order so results never depend on
/// hash-map ordering.
class ParameterStore {
public:
    int add(const std::string& name, Tensor value);

    int id_of(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    std::int64_t size() const { return static_cast<std::int64_t>(params_.size()); }
    const Parameter& param(int id) const { return params_[static_cast<std::size_t>(id)]; }
    Tensor& value(int id) { return params_[static_cast<std::size_t>(id)].value; }
    const Tensor& value(int id) const { return params_[static_cast<std::size_t>(id)].value; }
    const std::string& name(int id) const { return params_[static_cast<std::size_t>(id)].name; }

    /// Total number of scalar learnables.
    std::int64_t scalar_count() const;

private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, int> index_;
};

/// Per-parameter gradient accumulator aligned with a ParameterStore.
class GradientBuffer {
public:
    explicit GradientBuffer(const ParameterStore& store);

    void zero();
    void accumulate(int id, const Tensor& g);
    /// this += other, walked in id order.
    void add(const GradientBuffer& other);
    void scale(double c);

    Tensor& grad(int id) { return grads_[static_cast<std::size_t>(id)]; }
    const Tensor& grad(int id) const { return grads_[static_cast<std::size_t>(id)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(grads_.size()); }

    bool all_finite() const;
    /// Global L2 norm over every coordinate, accumulated in id order.
    double global_norm() const;

private:
    std::vector<Tensor> grads_;
};

} // namespace agg
