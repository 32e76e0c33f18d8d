#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace agg {

/// Dense row-major tensor of doubles. Rank 1 tensors are vectors, rank 2
/// are matrices; higher ranks are supported by the storage but the model
/// only uses 1-D/2-D shapes.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::int64_t> shape);
    Tensor(std::vector<std::int64_t> shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor zeros_like(const Tensor& other);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::int64_t rows, std::int64_t cols, std::vector<double> values);

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::int64_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::int64_t numel() const { return static_cast<std::int64_t>(v_.size()); }
    bool empty() const { return v_.empty(); }
    bool is_scalar() const { return numel() == 1; }

    /// Size of the trailing axis (feature axis); 1-D tensors are one row.
    std::int64_t last_dim() const;
    /// Number of length-last_dim() rows (numel / last_dim).
    std::int64_t row_count() const;

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    std::vector<double>& values() { return v_; }
    const std::vector<double>& values() const { return v_; }

    double& operator[](std::int64_t i) { return v_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return v_[static_cast<std::size_t>(i)]; }

    /// 2-D access; also valid for rank-1 tensors with r == 0.
    double& at(std::int64_t r, std::int64_t c) { return v_[static_cast<std::size_t>(r * last_dim() + c)]; }
    double at(std::int64_t r, std::int64_t c) const { return v_[static_cast<std::size_t>(r * last_dim() + c)]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    std::string shape_str() const;

private:
    std::vector<std::int64_t> shape_;
    std::vector<double> v_;
};

/// Plain (non-taped) matrix product op(a) * op(b) where op transposes when
/// the corresponding flag is set. 1-D operands are treated as single rows;
/// the result is 1-D when it has one row and `a` was 1-D.
Tensor matmul_plain(const Tensor& a, const Tensor& b, bool transpose_a = false, bool transpose_b = false);

} // namespace agg
