#pragma once

#include "vsr/mask.hpp"
#include "vsr/tensor.hpp"

namespace vsr {

// Numerically stable softmax per row, restricted to mask-allowed entries.
// Disallowed entries are exactly zero in the output. A row with no allowed
// entry throws DegenerateRowError naming the row.
TensorF32 masked_softmax_rows(const TensorF32& scores, const MaskMatrix& mask);

// Ground-truth attention: masked_softmax_rows(q k^T scale, mask) * v, built
// from the materialized score matrix. Every sparse and streaming path is
// checked against this.
TensorF32 dense_attention_oracle(const TensorF32& q, const TensorF32& k,
                                 const TensorF32& v, const MaskMatrix& mask,
                                 float scale);

// Same result as the oracle within the reassociation budget, computed one
// query row at a time with a reused score buffer. Serves as the dense
// baseline in benchmarks: no L x L materialization, separate code path.
TensorF32 dense_attention_stream(const TensorF32& q, const TensorF32& k,
                                 const TensorF32& v, const MaskMatrix& mask,
                                 float scale);

}  // namespace vsr
