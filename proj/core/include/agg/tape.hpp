#pragma once

#include "agg/params.hpp"
#include "agg/rng.hpp"
#include "agg/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace agg {

/// Handle to a node on a Tape.
struct Value {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode autodiff over a linear record of primitive applications.
/// Every primitive appends one node holding its forward result; inputs are
/// always earlier nodes, so reverse id order is a reverse topological
/// order and the backward pass visits each node exactly once.
class Tape {
public:
    explicit Tape(const ParameterStore* store = nullptr) : store_(store) {}

    const Tensor& value(Value v) const;
    std::int64_t node_count() const { return static_cast<std::int64_t>(nodes_.size()); }

    // ---- leaves ----
    Value constant(Tensor t);
    Value parameter(int param_id);

    // ---- elementwise / linear primitives ----
    /// add/sub accept equal shapes, a scalar right operand, or a 1-D right
    /// operand matching the last axis (row broadcast, used for biases).
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    /// Elementwise product; either operand may be a scalar.
    Value mul(Value a, Value b);
    /// Multiplication by a compile-time (non-learnable) constant.
    Value scale(Value a, double c);
    Value matmul(Value a, Value b, bool transpose_a = false, bool transpose_b = false);
    Value sin(Value a);
    Value leaky_relu(Value a, double negative_slope);
    Value sigmoid(Value a);

    // ---- shape primitives ----
    Value concat_last(std::span<const Value> parts);
    Value slice_last(Value a, std::int64_t start, std::int64_t len);
    /// Stack 1-D tensors of equal length into a matrix, one per row.
    Value stack_rows(std::span<const Value> rows);
    /// Row `index` of a 2-D tensor (typically an embedding table); the
    /// gradient flows only to that row.
    Value gather_row(Value table, std::int64_t index);

    // ---- normalization / attention primitives ----
    /// Row-stabilized softmax. Entries equal to -inf are masked out and map
    /// to exactly 0; a row with no finite entry raises an invalid-mask error.
    Value softmax_rows(Value a);
    /// Sets masked columns (valid[c] == 0) to -inf in every row.
    Value mask_cols(Value a, std::vector<std::uint8_t> valid);
    Value layer_norm(Value x, Value gamma, Value beta, double eps = 1e-5);
    /// Inverted dropout: in training each element is zeroed with
    /// probability p and survivors are scaled by 1/(1-p); identity in eval.
    Value dropout(Value a, double p, Rng* rng, bool training);

    // ---- reductions / losses ----
    Value mean_all(Value a);
    Value sum_all(Value a);
    /// Binary cross-entropy of a probability against a fixed 0/1 label,
    /// clamped to [1e-7, 1-1e-7].
    Value bce(Value prob, double label);

    /// Accumulates d(loss)/d(parameter) for every parameter into `grads`.
    /// Parameters not touched by the computation keep their current (zero)
    /// gradient. `loss` must be a finite scalar.
    void backward(Value loss, GradientBuffer& grads) const;

private:
    enum class Op : std::uint8_t {
        LeafConst,
        LeafParam,
        Add,
        Sub,
        Mul,
        Scale,
        Matmul,
        Sin,
        LeakyRelu,
        Sigmoid,
        ConcatLast,
        SliceLast,
        StackRows,
        GatherRow,
        SoftmaxRows,
        MaskCols,
        LayerNorm,
        Dropout,
        MeanAll,
        SumAll,
        Bce,
    };

    struct Node {
        Op op;
        std::vector<std::int32_t> in;
        Tensor out;
        Tensor aux;                      // layer_norm: rows x 2 (mean, inv_std); dropout: mask*scale
        std::vector<std::uint8_t> mask;  // mask_cols
        double a = 0.0;                  // scale factor / slope / p / eps / label / slice start
        double b = 0.0;                  // slice len
        std::int32_t param = -1;         // LeafParam id / GatherRow index
        bool ta = false, tb = false;     // matmul transposes
    };

    std::int32_t push(Node n);
    const Node& node(Value v) const;
    const Tensor& out_of(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].out; }

    static void accumulate(Tensor& dst, const Tensor& src);

    const ParameterStore* store_;
    std::vector<Node> nodes_;
};

} // namespace agg
