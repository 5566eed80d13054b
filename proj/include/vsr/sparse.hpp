#pragma once

#include <cstdint>
#include <vector>

#include "vsr/attention.hpp"
#include "vsr/mask.hpp"
#include "vsr/partition.hpp"
#include "vsr/tensor.hpp"

namespace vsr {

// Top-k key-block selection per query block, with the coarse scores and the
// block-level mask that produced it. Partitions travel with the plan so the
// executor needs no extra geometry arguments.
struct SparsePlan {
  std::size_t topk = 0;
  std::size_t head_dim = 0;
  BlockPartition part_q;
  BlockPartition part_k;
  TensorF32 coarse_scores;              // [bnq x bnk]
  MaskMatrix coarse_allowed;            // block pair has >= 1 allowed token pair
  std::vector<std::vector<int>> selected;  // per query block, ascending key-block ids
  std::vector<int> diagonal_block;      // matching key block per query block, or -1

  std::size_t selected_pairs() const;
  std::size_t allowed_pairs() const;
  void validate() const;
};

// Exact FLOP accounting for the executed sparse attention against the dense
// masked baseline. density counts block pairs; flop_ratio counts token work.
struct SparsityReport {
  double density = 0.0;
  std::uint64_t executed_flops = 0;
  std::uint64_t dense_flops = 0;
  double flop_ratio = 0.0;
};

// Pools q/k per block (real members only), scores pooled_q pooled_k^T / sqrt(d),
// marks a block pair coarse-allowed iff any token pair inside it is allowed,
// then keeps the k best coarse-allowed key blocks per query block. Ties break
// toward the lower key-block id. The key block sharing the query block's tile
// is force-included, counting toward k. k beyond the allowed count saturates.
SparsePlan plan_sparse(const TensorF32& q, const TensorF32& k,
                       const BlockPartition& part_q, const BlockPartition& part_k,
                       const MaskMatrix& mask, std::size_t topk);

// Self-attention form: one shared partition, square mask.
SparsePlan plan_sparse(const TensorF32& q, const TensorF32& k,
                       const BlockPartition& part, const MaskMatrix& mask,
                       std::size_t topk);

// Runs exact attention restricted to each query's selected key blocks, further
// filtered by token_mask. Softmax is merged across blocks with a running
// max/sum rescale, so block visitation order moves results by at most the
// reassociation budget. row_begin/row_end bound the query rows computed
// (rows outside stay zero); threads > 1 splits query blocks across threads.
TensorF32 sparse_attention_exec(const TensorF32& q, const TensorF32& k,
                                const TensorF32& v, const SparsePlan& plan,
                                const MaskMatrix& token_mask, float scale,
                                std::size_t row_begin = 0,
                                std::size_t row_end = SIZE_MAX,
                                unsigned threads = 1);

SparsityReport sparsity_report(const SparsePlan& plan, const MaskMatrix& mask);

}  // namespace vsr
