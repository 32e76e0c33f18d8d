#include "agg/sample.hpp"

#include "agg/error.hpp"

namespace agg {

BlockInput pad_block(const Tensor& rows, std::int64_t target_rows) {
    if (rows.rank() != 2) raise(ErrorKind::Config, "pad_block: expected a 2-D node matrix, got " + rows.shape_str());
    const std::int64_t n = rows.dim(0);
    if (n < 1) raise(ErrorKind::Data, "pad_block: block has no nodes");
    if (n > target_rows)
        raise(ErrorKind::Config, "pad_block: block holds " + std::to_string(n) + " nodes, more than L=" +
                                     std::to_string(target_rows));
    BlockInput out;
    out.rows = Tensor({target_rows, rows.dim(1)});
    out.mask.assign(static_cast<std::size_t>(target_rows), 0);
    for (std::int64_t i = 0; i < rows.numel(); ++i) out.rows[i] = rows[i];
    for (std::int64_t r = 0; r < n; ++r) out.mask[static_cast<std::size_t>(r)] = 1;
    return out;
}

} // namespace agg
