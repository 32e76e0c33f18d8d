#include "agg/tape.hpp"

#include "agg/error.hpp"

#include <cmath>
#include <limits>

namespace agg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum class Broadcast { Same, ScalarRhs, RowVecRhs };

Broadcast classify_broadcast(const Tensor& a, const Tensor& b, const char* op) {
    if (a.same_shape(b)) return Broadcast::Same;
    if (b.is_scalar()) return Broadcast::ScalarRhs;
    if (b.rank() == 1 && b.dim(0) == a.last_dim()) return Broadcast::RowVecRhs;
    raise(ErrorKind::Config,
          std::string(op) + ": shapes do not conform: " + a.shape_str() + " vs " + b.shape_str());
}

} // namespace

std::int32_t Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<std::int32_t>(nodes_.size()) - 1;
}

const Tape::Node& Tape::node(Value v) const {
    if (!v.valid() || v.id >= static_cast<std::int32_t>(nodes_.size()))
        raise(ErrorKind::Config, "invalid tape value handle");
    return nodes_[static_cast<std::size_t>(v.id)];
}

const Tensor& Tape::value(Value v) const { return node(v).out; }

Value Tape::constant(Tensor t) {
    Node n;
    n.op = Op::LeafConst;
    n.out = std::move(t);
    return {push(std::move(n))};
}

Value Tape::parameter(int param_id) {
    if (!store_) raise(ErrorKind::Config, "tape has no parameter store attached");
    Node n;
    n.op = Op::LeafParam;
    n.param = param_id;
    n.out = store_->value(param_id);
    return {push(std::move(n))};
}

Value Tape::add(Value a, Value b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    Broadcast bc = classify_broadcast(ta, tb, "add");
    Node n;
    n.op = Op::Add;
    n.in = {a.id, b.id};
    n.out = ta;
    switch (bc) {
    case Broadcast::Same:
        for (std::int64_t i = 0; i < n.out.numel(); ++i) n.out[i] += tb[i];
        break;
    case Broadcast::ScalarRhs:
        for (std::int64_t i = 0; i < n.out.numel(); ++i) n.out[i] += tb[0];
        break;
    case Broadcast::RowVecRhs: {
        const std::int64_t cols = ta.last_dim(), rows = ta.row_count();
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < cols; ++c) n.out[r * cols + c] += tb[c];
        break;
    }
    }
    return {push(std::move(n))};
}

Value Tape::sub(Value a, Value b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    Broadcast bc = classify_broadcast(ta, tb, "sub");
    Node n;
    n.op = Op::Sub;
    n.in = {a.id, b.id};
    n.out = ta;
    switch (bc) {
    case Broadcast::Same:
        for (std::int64_t i = 0; i < n.out.numel(); ++i) n.out[i] -= tb[i];
        break;
    case Broadcast::ScalarRhs:
        for (std::int64_t i = 0; i < n.out.numel(); ++i) n.out[i] -= tb[0];
        break;
    case Broadcast::RowVecRhs: {
        const std::int64_t cols = ta.last_dim(), rows = ta.row_count();
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < cols; ++c) n.out[r * cols + c] -= tb[c];
        break;
    }
    }
    return {push(std::move(n))};
}

Value Tape::mul(Value a, Value b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    Node n;
    n.op = Op::Mul;
    n.in = {a.id, b.id};
    if (ta.same_shape(tb)) {
        n.out = ta;
        for (std::int64_t i = 0; i < n.out.numel(); ++i) n.out[i] *= tb[i];
    } else if (tb.is_scalar()) {
        n.out = ta;
        for (std::int64_t i = 0; i < n.out.numel(); ++i) n.out[i] *= tb[0];
    } else if (ta.is_scalar()) {
        n.out = tb;
        for (std::int64_t i = 0; i < n.out.numel(); ++i) n.out[i] *= ta[0];
    } else {
        raise(ErrorKind::Config, "mul: shapes do not conform: " + ta.shape_str() + " vs " + tb.shape_str());
    }
    return {push(std::move(n))};
}

Value Tape::scale(Value a, double c) {
    Node n;
    n.op = Op::Scale;
    n.in = {a.id};
    n.a = c;
    n.out = value(a);
    for (auto& x : n.out.values()) x *= c;
    return {push(std::move(n))};
}

Value Tape::matmul(Value a, Value b, bool transpose_a, bool transpose_b) {
    Node n;
    n.op = Op::Matmul;
    n.in = {a.id, b.id};
    n.ta = transpose_a;
    n.tb = transpose_b;
    n.out = matmul_plain(value(a), value(b), transpose_a, transpose_b);
    return {push(std::move(n))};
}

Value Tape::sin(Value a) {
    Node n;
    n.op = Op::Sin;
    n.in = {a.id};
    n.out = value(a);
    for (auto& x : n.out.values()) x = std::sin(x);
    return {push(std::move(n))};
}

Value Tape::leaky_relu(Value a, double negative_slope) {
    Node n;
    n.op = Op::LeakyRelu;
    n.in = {a.id};
    n.a = negative_slope;
    n.out = value(a);
    for (auto& x : n.out.values())
        if (x < 0.0) x *= negative_slope;
    return {push(std::move(n))};
}

Value Tape::sigmoid(Value a) {
    Node n;
    n.op = Op::Sigmoid;
    n.in = {a.id};
    n.out = value(a);
    for (auto& x : n.out.values()) x = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    return {push(std::move(n))};
}

Value Tape::concat_last(std::span<const Value> parts) {
    if (parts.empty()) raise(ErrorKind::Config, "concat_last: no inputs");
    const Tensor& first = value(parts[0]);
    const std::int64_t rows = first.row_count();
    std::int64_t total = 0;
    Node n;
    n.op = Op::ConcatLast;
    for (Value v : parts) {
        const Tensor& t = value(v);
        if (t.row_count() != rows || t.rank() != first.rank())
            raise(ErrorKind::Config, "concat_last: leading extents differ: " + first.shape_str() + " vs " + t.shape_str());
        total += t.last_dim();
        n.in.push_back(v.id);
    }
    std::vector<std::int64_t> shape = first.shape();
    shape.back() = total;
    Tensor out(shape);
    std::int64_t offset = 0;
    for (Value v : parts) {
        const Tensor& t = value(v);
        const std::int64_t w = t.last_dim();
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < w; ++c) out[r * total + offset + c] = t[r * w + c];
        offset += w;
    }
    n.out = std::move(out);
    return {push(std::move(n))};
}

Value Tape::slice_last(Value a, std::int64_t start, std::int64_t len) {
    const Tensor& t = value(a);
    const std::int64_t w = t.last_dim();
    if (start < 0 || len <= 0 || start + len > w)
        raise(ErrorKind::Config, "slice_last: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                                     ") out of bounds for " + t.shape_str());
    std::vector<std::int64_t> shape = t.shape();
    shape.back() = len;
    Tensor out(shape);
    const std::int64_t rows = t.row_count();
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < len; ++c) out[r * len + c] = t[r * w + start + c];
    Node n;
    n.op = Op::SliceLast;
    n.in = {a.id};
    n.a = static_cast<double>(start);
    n.b = static_cast<double>(len);
    n.out = std::move(out);
    return {push(std::move(n))};
}

Value Tape::stack_rows(std::span<const Value> rows) {
    if (rows.empty()) raise(ErrorKind::Config, "stack_rows: no inputs");
    const std::int64_t width = value(rows[0]).numel();
    Tensor out({static_cast<std::int64_t>(rows.size()), width});
    Node n;
    n.op = Op::StackRows;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Tensor& t = value(rows[r]);
        if (t.rank() != 1 || t.numel() != width)
            raise(ErrorKind::Config, "stack_rows: expected 1-D rows of equal length, got " + t.shape_str());
        for (std::int64_t c = 0; c < width; ++c) out[static_cast<std::int64_t>(r) * width + c] = t[c];
        n.in.push_back(rows[r].id);
    }
    n.out = std::move(out);
    return {push(std::move(n))};
}

Value Tape::gather_row(Value table, std::int64_t index) {
    const Tensor& t = value(table);
    if (t.rank() != 2) raise(ErrorKind::Config, "gather_row: table must be 2-D, got " + t.shape_str());
    if (index < 0 || index >= t.dim(0))
        raise(ErrorKind::Data, "gather_row: index " + std::to_string(index) + " out of range for table " + t.shape_str());
    const std::int64_t w = t.dim(1);
    Tensor out({w});
    for (std::int64_t c = 0; c < w; ++c) out[c] = t[index * w + c];
    Node n;
    n.op = Op::GatherRow;
    n.in = {table.id};
    n.param = static_cast<std::int32_t>(index);
    n.out = std::move(out);
    return {push(std::move(n))};
}

Value Tape::softmax_rows(Value a) {
    const Tensor& t = value(a);
    Tensor out = t;
    const std::int64_t cols = t.last_dim(), rows = t.row_count();
    for (std::int64_t r = 0; r < rows; ++r) {
        double m = kNegInf;
        for (std::int64_t c = 0; c < cols; ++c) m = std::max(m, t[r * cols + c]);
        if (m == kNegInf)
            raise(ErrorKind::InvalidMask, "softmax row " + std::to_string(r) + " has no finite entry");
        double z = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) {
            double e = t[r * cols + c] == kNegInf ? 0.0 : std::exp(t[r * cols + c] - m);
            out[r * cols + c] = e;
            z += e;
        }
        for (std::int64_t c = 0; c < cols; ++c) out[r * cols + c] /= z;
    }
    Node n;
    n.op = Op::SoftmaxRows;
    n.in = {a.id};
    n.out = std::move(out);
    return {push(std::move(n))};
}

Value Tape::mask_cols(Value a, std::vector<std::uint8_t> valid) {
    const Tensor& t = value(a);
    if (static_cast<std::int64_t>(valid.size()) != t.last_dim())
        raise(ErrorKind::Config, "mask_cols: mask length " + std::to_string(valid.size()) + " vs last axis of " + t.shape_str());
    Tensor out = t;
    const std::int64_t cols = t.last_dim(), rows = t.row_count();
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cols; ++c)
            if (!valid[static_cast<std::size_t>(c)]) out[r * cols + c] = kNegInf;
    Node n;
    n.op = Op::MaskCols;
    n.in = {a.id};
    n.mask = std::move(valid);
    n.out = std::move(out);
    return {push(std::move(n))};
}

Value Tape::layer_norm(Value x, Value gamma, Value beta, double eps) {
    if (eps <= 0.0) raise(ErrorKind::Config, "layer_norm: eps must be positive");
    const Tensor& t = value(x);
    const Tensor& g = value(gamma);
    const Tensor& b = value(beta);
    const std::int64_t cols = t.last_dim(), rows = t.row_count();
    if (g.numel() != cols || b.numel() != cols)
        raise(ErrorKind::Config, "layer_norm: gamma/beta must match last axis " + std::to_string(cols));
    Tensor out = t;
    Tensor aux({rows, 2});
    for (std::int64_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) mean += t[r * cols + c];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) {
            double d = t[r * cols + c] - mean;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        double inv = 1.0 / std::sqrt(var + eps);
        aux[r * 2] = mean;
        aux[r * 2 + 1] = inv;
        for (std::int64_t c = 0; c < cols; ++c) out[r * cols + c] = g[c] * ((t[r * cols + c] - mean) * inv) + b[c];
    }
    Node n;
    n.op = Op::LayerNorm;
    n.in = {x.id, gamma.id, beta.id};
    n.a = eps;
    n.out = std::move(out);
    n.aux = std::move(aux);
    return {push(std::move(n))};
}

Value Tape::dropout(Value a, double p, Rng* rng, bool training) {
    if (p < 0.0 || p >= 1.0) raise(ErrorKind::Config, "dropout: rate must lie in [0, 1), got " + std::to_string(p));
    const Tensor& t = value(a);
    Node n;
    n.op = Op::Dropout;
    n.in = {a.id};
    n.a = p;
    if (!training || p == 0.0) {
        n.out = t;
        return {push(std::move(n))};
    }
    if (!rng) raise(ErrorKind::Config, "dropout: training mode requires an rng");
    const double keep_scale = 1.0 / (1.0 - p);
    Tensor mask = Tensor::zeros_like(t);
    Tensor out = t;
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        if (rng->uniform() < p) {
            out[i] = 0.0;
        } else {
            mask[i] = keep_scale;
            out[i] *= keep_scale;
        }
    }
    n.aux = std::move(mask);
    n.out = std::move(out);
    return {push(std::move(n))};
}

Value Tape::mean_all(Value a) {
    const Tensor& t = value(a);
    double s = 0.0;
    for (double x : t.values()) s += x;
    Node n;
    n.op = Op::MeanAll;
    n.in = {a.id};
    n.out = Tensor::scalar(s / static_cast<double>(t.numel()));
    return {push(std::move(n))};
}

Value Tape::sum_all(Value a) {
    const Tensor& t = value(a);
    double s = 0.0;
    for (double x : t.values()) s += x;
    Node n;
    n.op = Op::SumAll;
    n.in = {a.id};
    n.out = Tensor::scalar(s);
    return {push(std::move(n))};
}

Value Tape::bce(Value prob, double label) {
    const Tensor& t = value(prob);
    if (!t.is_scalar()) raise(ErrorKind::Config, "bce: probability must be scalar, got " + t.shape_str());
    constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
    double p = std::min(std::max(t[0], lo), hi);
    Node n;
    n.op = Op::Bce;
    n.in = {prob.id};
    n.a = label;
    n.out = Tensor::scalar(-(label * std::log(p) + (1.0 - label) * std::log(1.0 - p)));
    return {push(std::move(n))};
}

void Tape::accumulate(Tensor& dst, const Tensor& src) {
    if (dst.empty()) {
        dst = src;
        return;
    }
    for (std::int64_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

void Tape::backward(Value loss, GradientBuffer& grads) const {
    const Tensor& l = value(loss);
    if (!l.is_scalar()) raise(ErrorKind::Config, "backward: loss must be scalar, got " + l.shape_str());
    if (!std::isfinite(l[0])) raise(ErrorKind::Divergence, "backward: loss is non-finite");

    std::vector<Tensor> g(static_cast<std::size_t>(loss.id) + 1);
    g[static_cast<std::size_t>(loss.id)] = Tensor::scalar(1.0);

    for (std::int32_t id = loss.id; id >= 0; --id) {
        Tensor& go = g[static_cast<std::size_t>(id)];
        if (go.empty()) continue;
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        switch (n.op) {
        case Op::LeafConst:
            break;
        case Op::LeafParam:
            grads.accumulate(n.param, go);
            break;
        case Op::Add:
        case Op::Sub: {
            const double sign = n.op == Op::Sub ? -1.0 : 1.0;
            const Tensor& ta = out_of(n.in[0]);
            const Tensor& tb = out_of(n.in[1]);
            accumulate(g[static_cast<std::size_t>(n.in[0])], go);
            Tensor gb;
            if (ta.same_shape(tb)) {
                gb = go;
                if (sign < 0)
                    for (auto& x : gb.values()) x = -x;
            } else if (tb.is_scalar()) {
                double s = 0.0;
                for (double x : go.values()) s += x;
                gb = Tensor::scalar(sign * s);
            } else {
                const std::int64_t cols = ta.last_dim(), rows = ta.row_count();
                gb = Tensor::zeros_like(tb);
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t c = 0; c < cols; ++c) gb[c] += sign * go[r * cols + c];
            }
            accumulate(g[static_cast<std::size_t>(n.in[1])], gb);
            break;
        }
        case Op::Mul: {
            const Tensor& ta = out_of(n.in[0]);
            const Tensor& tb = out_of(n.in[1]);
            Tensor ga, gb;
            if (ta.same_shape(tb)) {
                ga = go;
                gb = go;
                for (std::int64_t i = 0; i < go.numel(); ++i) {
                    ga[i] *= tb[i];
                    gb[i] *= ta[i];
                }
            } else if (tb.is_scalar()) {
                ga = go;
                for (auto& x : ga.values()) x *= tb[0];
                double s = 0.0;
                for (std::int64_t i = 0; i < go.numel(); ++i) s += go[i] * ta[i];
                gb = Tensor::scalar(s);
            } else { // ta scalar
                gb = go;
                for (auto& x : gb.values()) x *= ta[0];
                double s = 0.0;
                for (std::int64_t i = 0; i < go.numel(); ++i) s += go[i] * tb[i];
                ga = Tensor::scalar(s);
            }
            accumulate(g[static_cast<std::size_t>(n.in[0])], ga);
            accumulate(g[static_cast<std::size_t>(n.in[1])], gb);
            break;
        }
        case Op::Scale: {
            Tensor ga = go;
            for (auto& x : ga.values()) x *= n.a;
            accumulate(g[static_cast<std::size_t>(n.in[0])], ga);
            break;
        }
        case Op::Matmul: {
            const Tensor& ta = out_of(n.in[0]);
            const Tensor& tb = out_of(n.in[1]);
            // out = op(A) * op(B). With G = d(loss)/d(out):
            //   dA = ta ? op(B)·G^T : G·op(B)^T, reshaped to A's layout
            //   dB = tb ? G^T·op(A) : op(A)^T·G
            Tensor ga = n.ta ? matmul_plain(tb, go, n.tb, true) : matmul_plain(go, tb, false, !n.tb);
            Tensor gb = n.tb ? matmul_plain(go, ta, true, n.ta) : matmul_plain(ta, go, !n.ta, false);
            ga = Tensor(ta.shape(), std::move(ga.values()));
            gb = Tensor(tb.shape(), std::move(gb.values()));
            accumulate(g[static_cast<std::size_t>(n.in[0])], ga);
            accumulate(g[static_cast<std::size_t>(n.in[1])], gb);
            break;
        }
        case Op::Sin: {
            const Tensor& ta = out_of(n.in[0]);
            Tensor ga = go;
            for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] *= std::cos(ta[i]);
            accumulate(g[static_cast<std::size_t>(n.in[0])], ga);
            break;
        }
        case Op::LeakyRelu: {
            const Tensor& ta = out_of(n.in[0]);
            Tensor ga = go;
            for (std::int64_t i = 0; i < ga.numel(); ++i)
                if (ta[i] < 0.0) ga[i] *= n.a;
            accumulate(g[static_cast<std::size_t>(n.in[0])], ga);
            break;
        }
        case Op::Sigmoid: {
            Tensor ga = go;
            for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] *= n.out[i] * (1.0 - n.out[i]);
            accumulate(g[static_cast<std::size_t>(n.in[0])], ga);
            break;
        }
        case Op::ConcatLast: {
            const std::int64_t total = n.out.last_dim();
            const std::int64_t rows = n.out.row_count();
            std::int64_t offset = 0;
            for (std::int32_t src : n.in) {
                const Tensor& t = out_of(src);
                const std::int64_t w = t.last_dim();
                Tensor gi = Tensor::zeros_like(t);
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t c = 0; c < w; ++c) gi[r * w + c] = go[r * total + offset + c];
                accumulate(g[static_cast<std::size_t>(src)], gi);
                offset += w;
            }
            break;
        }
        case Op::SliceLast: {
            const Tensor& t = out_of(n.in[0]);
            const auto start = static_cast<std::int64_t>(n.a);
            const auto len = static_cast<std::int64_t>(n.b);
            const std::int64_t w = t.last_dim(), rows = t.row_count();
            Tensor gi = Tensor::zeros_like(t);
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t c = 0; c < len; ++c) gi[r * w + start + c] = go[r * len + c];
            accumulate(g[static_cast<std::size_t>(n.in[0])], gi);
            break;
        }
        case Op::StackRows: {
            const std::int64_t width = n.out.last_dim();
            for (std::size_t r = 0; r < n.in.size(); ++r) {
                Tensor gi({width});
                for (std::int64_t c = 0; c < width; ++c) gi[c] = go[static_cast<std::int64_t>(r) * width + c];
                accumulate(g[static_cast<std::size_t>(n.in[r])], gi);
            }
            break;
        }
        case Op::GatherRow: {
            const Tensor& t = out_of(n.in[0]);
            Tensor gi = Tensor::zeros_like(t);
            const std::int64_t w = t.dim(1);
            for (std::int64_t c = 0; c < w; ++c) gi[n.param * w + c] = go[c];
            accumulate(g[static_cast<std::size_t>(n.in[0])], gi);
            break;
        }
        case Op::SoftmaxRows: {
            const std::int64_t cols = n.out.last_dim(), rows = n.out.row_count();
            Tensor gi = Tensor::zeros_like(n.out);
            for (std::int64_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::int64_t c = 0; c < cols; ++c) dot += go[r * cols + c] * n.out[r * cols + c];
                for (std::int64_t c = 0; c < cols; ++c)
                    gi[r * cols + c] = n.out[r * cols + c] * (go[r * cols + c] - dot);
            }
            accumulate(g[static_cast<std::size_t>(n.in[0])], gi);
            break;
        }
        case Op::MaskCols: {
            const std::int64_t cols = n.out.last_dim(), rows = n.out.row_count();
            Tensor gi = go;
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t c = 0; c < cols; ++c)
                    if (!n.mask[static_cast<std::size_t>(c)]) gi[r * cols + c] = 0.0;
            accumulate(g[static_cast<std::size_t>(n.in[0])], gi);
            break;
        }
        case Op::LayerNorm: {
            const Tensor& x = out_of(n.in[0]);
            const Tensor& gamma = out_of(n.in[1]);
            const std::int64_t cols = x.last_dim(), rows = x.row_count();
            Tensor gx = Tensor::zeros_like(x);
            Tensor ggamma = Tensor::zeros_like(gamma);
            Tensor gbeta = Tensor::zeros_like(gamma);
            for (std::int64_t r = 0; r < rows; ++r) {
                const double mean = n.aux[r * 2];
                const double inv = n.aux[r * 2 + 1];
                double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                for (std::int64_t c = 0; c < cols; ++c) {
                    const double xhat = (x[r * cols + c] - mean) * inv;
                    const double dy = go[r * cols + c];
                    gbeta[c] += dy;
                    ggamma[c] += dy * xhat;
                    const double dxhat = dy * gamma[c];
                    mean_dxhat += dxhat;
                    mean_dxhat_xhat += dxhat * xhat;
                }
                mean_dxhat /= static_cast<double>(cols);
                mean_dxhat_xhat /= static_cast<double>(cols);
                for (std::int64_t c = 0; c < cols; ++c) {
                    const double xhat = (x[r * cols + c] - mean) * inv;
                    const double dxhat = go[r * cols + c] * gamma[c];
                    gx[r * cols + c] = inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                }
            }
            accumulate(g[static_cast<std::size_t>(n.in[0])], gx);
            accumulate(g[static_cast<std::size_t>(n.in[1])], ggamma);
            accumulate(g[static_cast<std::size_t>(n.in[2])], gbeta);
            break;
        }
        case Op::Dropout: {
            Tensor gi = go;
            if (!n.aux.empty())
                for (std::int64_t i = 0; i < gi.numel(); ++i) gi[i] *= n.aux[i];
            accumulate(g[static_cast<std::size_t>(n.in[0])], gi);
            break;
        }
        case Op::MeanAll: {
            const Tensor& t = out_of(n.in[0]);
            Tensor gi(t.shape());
            const double s = go[0] / static_cast<double>(t.numel());
            for (auto& x : gi.values()) x = s;
            accumulate(g[static_cast<std::size_t>(n.in[0])], gi);
            break;
        }
        case Op::SumAll: {
            const Tensor& t = out_of(n.in[0]);
            Tensor gi(t.shape());
            for (auto& x : gi.values()) x = go[0];
            accumulate(g[static_cast<std::size_t>(n.in[0])], gi);
            break;
        }
        case Op::Bce: {
            const Tensor& t = out_of(n.in[0]);
            constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
            const double p = t[0];
            Tensor gi = Tensor::scalar(0.0);
            if (p > lo && p < hi) gi[0] = go[0] * (p - n.a) / (p * (1.0 - p));
            accumulate(g[static_cast<std::size_t>(n.in[0])], gi);
            break;
        }
        }
        // Free the consumed gradient early; long tapes would otherwise hold
        // every intermediate gradient until the end of the pass.
        go = Tensor();
    }
}

} // namespace agg
