#include "agg/tensor.hpp"

#include "agg/error.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace agg {

namespace {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
        if (d <= 0) raise(ErrorKind::Config, "tensor extents must be positive, got " + std::to_string(d));
        n *= d;
    }
    return n;
}

} // namespace

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), v_(static_cast<std::size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> values) : shape_(std::move(shape)), v_(std::move(values)) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(v_.size()))
        raise(ErrorKind::Config, "tensor shape/value mismatch: shape holds " + std::to_string(shape_numel(shape_)) +
                                     " elements, got " + std::to_string(v_.size()));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros_like(const Tensor& other) { return Tensor(other.shape_); }

Tensor Tensor::vector(std::vector<double> values) {
    auto n = static_cast<std::int64_t>(values.size());
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::int64_t rows, std::int64_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

std::int64_t Tensor::last_dim() const {
    if (shape_.empty()) return 0;
    return shape_.back();
}

std::int64_t Tensor::row_count() const {
    if (shape_.empty()) return 0;
    return numel() / last_dim();
}

bool Tensor::all_finite() const {
    for (double x : v_)
        if (!std::isfinite(x)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    os << ']';
    return os.str();
}

Tensor matmul_plain(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
    if (a.rank() > 2 || b.rank() > 2 || a.rank() == 0 || b.rank() == 0)
        raise(ErrorKind::Config, "matmul requires 1-D or 2-D operands, got " + a.shape_str() + " and " + b.shape_str());

    const std::int64_t a_rows = a.rank() == 1 ? 1 : a.dim(0);
    const std::int64_t a_cols = a.rank() == 1 ? a.dim(0) : a.dim(1);
    const std::int64_t b_rows = b.rank() == 1 ? 1 : b.dim(0);
    const std::int64_t b_cols = b.rank() == 1 ? b.dim(0) : b.dim(1);

    const std::int64_t m = transpose_a ? a_cols : a_rows;
    const std::int64_t k = transpose_a ? a_rows : a_cols;
    const std::int64_t kb = transpose_b ? b_cols : b_rows;
    const std::int64_t n = transpose_b ? b_rows : b_cols;

    if (k != kb)
        raise(ErrorKind::Config, "matmul inner extents differ: " + a.shape_str() + (transpose_a ? "^T" : "") + " * " +
                                     b.shape_str() + (transpose_b ? "^T" : ""));

    const bool vec_result = (a.rank() == 1 && m == 1);
    Tensor out(vec_result ? std::vector<std::int64_t>{n} : std::vector<std::int64_t>{m, n});

    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();

    // i-k-j ordering keeps the inner loop contiguous for the common
    // non-transposed case; transposed operands are indexed with strides.
    for (std::int64_t i = 0; i < m; ++i) {
        double* orow = po + i * n;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double av = transpose_a ? pa[kk * a_cols + i] : pa[i * a_cols + kk];
            if (av == 0.0) continue;
            if (!transpose_b) {
                const double* brow = pb + kk * b_cols;
                for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
            } else {
                for (std::int64_t j = 0; j < n; ++j) orow[j] += av * pb[j * b_cols + kk];
            }
        }
    }
    return out;
}

} // namespace agg
