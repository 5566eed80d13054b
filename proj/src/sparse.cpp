#include "vsr/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace vsr {

std::size_t SparsePlan::selected_pairs() const {
  std::size_t n = 0;
  for (const auto& s : selected) n += s.size();
  return n;
}

std::size_t SparsePlan::allowed_pairs() const { return coarse_allowed.count_allowed(); }

void SparsePlan::validate() const {
  const std::size_t bnq = part_q.block_num, bnk = part_k.block_num;
  VSR_REQUIRE(topk >= 1, InvariantError, "SparsePlan: topk must be >= 1");
  VSR_REQUIRE(selected.size() == bnq && diagonal_block.size() == bnq, InvariantError,
              "SparsePlan: per-query-block table sizes disagree");
  VSR_REQUIRE(coarse_scores.rank() == 2 && coarse_scores.shape[0] == bnq &&
                  coarse_scores.shape[1] == bnk,
              InvariantError, "SparsePlan: coarse score shape mismatch");
  for (std::size_t qb = 0; qb < bnq; ++qb) {
    const auto& sel = selected[qb];
    VSR_REQUIRE(sel.size() <= topk, InvariantError, "SparsePlan: selection exceeds k");
    VSR_REQUIRE(std::is_sorted(sel.begin(), sel.end()) &&
                    std::adjacent_find(sel.begin(), sel.end()) == sel.end(),
                InvariantError, "SparsePlan: selection not sorted unique");
    for (int kb : sel) {
      VSR_REQUIRE(kb >= 0 && static_cast<std::size_t>(kb) < bnk, InvariantError,
                  "SparsePlan: key block id out of range");
      VSR_REQUIRE(coarse_allowed.allowed(qb, static_cast<std::size_t>(kb)),
                  InvariantError, "SparsePlan: selection not mask-allowed");
    }
    const int diag = diagonal_block[qb];
    if (diag >= 0 && coarse_allowed.allowed(qb, static_cast<std::size_t>(diag)))
      VSR_REQUIRE(std::binary_search(sel.begin(), sel.end(), diag), InvariantError,
                  "SparsePlan: diagonal block missing from selection");
  }
}

static MaskMatrix coarse_allowed_mask(const BlockPartition& part_q,
                                      const BlockPartition& part_k,
                                      const MaskMatrix& mask) {
  const std::size_t bnq = part_q.block_num, bnk = part_k.block_num;
  std::vector<ColumnSet> key_cols;
  key_cols.reserve(bnk);
  for (std::size_t kb = 0; kb < bnk; ++kb) {
    ColumnSet cs(mask.cols());
    for (std::size_t tok : part_k.block_tokens[kb]) cs.add(tok);
    key_cols.push_back(std::move(cs));
  }
  MaskMatrix coarse(bnq, bnk, false);
  for (std::size_t qb = 0; qb < bnq; ++qb) {
    for (std::size_t kb = 0; kb < bnk; ++kb) {
      for (std::size_t tok : part_q.block_tokens[qb]) {
        if (key_cols[kb].intersects_row(mask, tok)) {
          coarse.set(qb, kb, true);
          break;
        }
      }
    }
  }
  return coarse;
}

SparsePlan plan_sparse(const TensorF32& q, const TensorF32& k,
                       const BlockPartition& part_q, const BlockPartition& part_k,
                       const MaskMatrix& mask, std::size_t topk) {
  VSR_REQUIRE(q.rank() == 2 && k.rank() == 2, ShapeError,
              "plan_sparse: rank-2 operands required");
  VSR_REQUIRE(q.shape[1] == k.shape[1], ShapeError, "plan_sparse: q/k dim mismatch");
  VSR_REQUIRE(q.shape[0] == part_q.token_count && k.shape[0] == part_k.token_count,
              ShapeError, "plan_sparse: partitions do not cover the inputs");
  VSR_REQUIRE(mask.rows() == q.shape[0] && mask.cols() == k.shape[0], ShapeError,
              "plan_sparse: mask shape mismatch");
  VSR_REQUIRE(topk >= 1, ConfigError, "plan_sparse: topk must be >= 1");

  const std::size_t d = q.shape[1];
  const std::size_t bnq = part_q.block_num, bnk = part_k.block_num;

  SparsePlan plan;
  plan.topk = topk;
  plan.head_dim = d;
  plan.part_q = part_q;
  plan.part_k = part_k;

  // Only real member rows enter the pool, so partial blocks average over
  // their actual tokens rather than phantom zero padding.
  TensorF32 pooled_q = avg_pool_blocks(q, part_q.assignment, bnq);
  TensorF32 pooled_k = avg_pool_blocks(k, part_k.assignment, bnk);
  plan.coarse_scores = matmul(pooled_q, transpose2d(pooled_k));
  const float scale = 1.0f / std::sqrt(static_cast<float>(d));
  for (float& x : plan.coarse_scores.data) x *= scale;

  plan.coarse_allowed = coarse_allowed_mask(part_q, part_k, mask);

  plan.selected.resize(bnq);
  plan.diagonal_block.resize(bnq);
  std::vector<int> order;
  for (std::size_t qb = 0; qb < bnq; ++qb) {
    order.clear();
    for (std::size_t kb = 0; kb < bnk; ++kb)
      if (plan.coarse_allowed.allowed(qb, kb)) order.push_back(static_cast<int>(kb));
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const float sa = plan.coarse_scores.at(qb, static_cast<std::size_t>(a));
      const float sb = plan.coarse_scores.at(qb, static_cast<std::size_t>(b));
      if (sa != sb) return sa > sb;
      return a < b;
    });

    const int diag = part_k.find_block(part_q.block_keys[qb]);
    plan.diagonal_block[qb] =
        (diag >= 0 && plan.coarse_allowed.allowed(qb, static_cast<std::size_t>(diag)))
            ? diag
            : -1;

    auto& sel = plan.selected[qb];
    if (plan.diagonal_block[qb] >= 0) sel.push_back(plan.diagonal_block[qb]);
    for (int kb : order) {
      if (sel.size() >= topk) break;
      if (kb != plan.diagonal_block[qb]) sel.push_back(kb);
    }
    std::sort(sel.begin(), sel.end());
  }
  plan.validate();
  return plan;
}

SparsePlan plan_sparse(const TensorF32& q, const TensorF32& k,
                       const BlockPartition& part, const MaskMatrix& mask,
                       std::size_t topk) {
  return plan_sparse(q, k, part, part, mask, topk);
}

static void exec_block_range(const TensorF32& q, const TensorF32& k,
                             const TensorF32& v, const SparsePlan& plan,
                             const MaskMatrix& token_mask, float scale,
                             std::size_t row_begin, std::size_t row_end,
                             std::size_t qb_begin, std::size_t qb_end,
                             TensorF32& out) {
  const std::size_t d = q.shape[1], dv = v.shape[1];
  std::vector<float> block_scores(kTokensPerBlock);
  std::vector<float> acc(dv);

  for (std::size_t qb = qb_begin; qb < qb_end; ++qb) {
    const auto& sel = plan.selected[qb];
    for (std::size_t i : plan.part_q.block_tokens[qb]) {
      if (i < row_begin || i >= row_end) continue;
      const float* qi = q.row(i);
      float run_max = -std::numeric_limits<float>::infinity();
      float run_sum = 0.0f;
      std::fill(acc.begin(), acc.end(), 0.0f);

      for (int kb : sel) {
        const auto& toks = plan.part_k.block_tokens[static_cast<std::size_t>(kb)];
        // pass 1: scores and local max over mask-allowed members
        float local_max = -std::numeric_limits<float>::infinity();
        std::size_t nb = 0;
        for (std::size_t j : toks) {
          if (!token_mask.allowed(i, j)) {
            block_scores[nb++] = -std::numeric_limits<float>::infinity();
            continue;
          }
          const float* kj = k.row(j);
          float dot = 0.0f;
          for (std::size_t c = 0; c < d; ++c) dot += qi[c] * kj[c];
          dot *= scale;
          block_scores[nb++] = dot;
          if (dot > local_max) local_max = dot;
        }
        if (local_max == -std::numeric_limits<float>::infinity()) continue;

        // pass 2: merge under the combined running max
        const float new_max = std::max(run_max, local_max);
        if (run_sum > 0.0f && new_max > run_max) {
          const float rescale = std::exp(run_max - new_max);
          run_sum *= rescale;
          for (std::size_t c = 0; c < dv; ++c) acc[c] *= rescale;
        }
        nb = 0;
        for (std::size_t j : toks) {
          const float s = block_scores[nb++];
          if (s == -std::numeric_limits<float>::infinity()) continue;
          const float w = std::exp(s - new_max);
          run_sum += w;
          const float* vj = v.row(j);
          for (std::size_t c = 0; c < dv; ++c) acc[c] += w * vj[c];
        }
        run_max = new_max;
      }

      VSR_REQUIRE(run_sum > 0.0f, DegenerateRowError,
                  "sparse_attention_exec: query " + std::to_string(i) +
                      " has no allowed keys in its selected blocks");
      float* oi = out.row(i);
      const float inv = 1.0f / run_sum;
      for (std::size_t c = 0; c < dv; ++c) oi[c] = acc[c] * inv;
    }
  }
}

TensorF32 sparse_attention_exec(const TensorF32& q, const TensorF32& k,
                                const TensorF32& v, const SparsePlan& plan,
                                const MaskMatrix& token_mask, float scale,
                                std::size_t row_begin, std::size_t row_end,
                                unsigned threads) {
  VSR_REQUIRE(q.rank() == 2 && k.rank() == 2 && v.rank() == 2, ShapeError,
              "sparse_attention_exec: rank-2 operands required");
  VSR_REQUIRE(q.shape[0] == plan.part_q.token_count &&
                  k.shape[0] == plan.part_k.token_count &&
                  v.shape[0] == k.shape[0],
              ShapeError, "sparse_attention_exec: plan does not match inputs");
  VSR_REQUIRE(q.shape[1] == k.shape[1] && q.shape[1] == plan.head_dim, ShapeError,
              "sparse_attention_exec: head dim mismatch");
  VSR_REQUIRE(token_mask.rows() == q.shape[0] && token_mask.cols() == k.shape[0],
              ShapeError, "sparse_attention_exec: mask shape mismatch");
  row_end = std::min(row_end, q.shape[0]);
  VSR_REQUIRE(row_begin <= row_end, ConfigError,
              "sparse_attention_exec: empty or inverted row range");

  TensorF32 out({q.shape[0], v.shape[1]});
  const std::size_t bnq = plan.part_q.block_num;
  if (threads <= 1 || bnq < 2) {
    exec_block_range(q, k, v, plan, token_mask, scale, row_begin, row_end, 0, bnq, out);
    return out;
  }

  const unsigned nt = std::min<unsigned>(threads, static_cast<unsigned>(bnq));
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex error_mu;
  for (unsigned t = 0; t < nt; ++t) {
    const std::size_t b0 = bnq * t / nt;
    const std::size_t b1 = bnq * (t + 1) / nt;
    pool.emplace_back([&, b0, b1] {
      try {
        exec_block_range(q, k, v, plan, token_mask, scale, row_begin, row_end, b0, b1,
                         out);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

SparsityReport sparsity_report(const SparsePlan& plan, const MaskMatrix& mask) {
  VSR_REQUIRE(mask.rows() == plan.part_q.token_count &&
                  mask.cols() == plan.part_k.token_count,
              ShapeError, "sparsity_report: mask shape mismatch");
  SparsityReport rep;
  const std::size_t allowed_blocks = plan.allowed_pairs();
  VSR_REQUIRE(allowed_blocks > 0, InvariantError, "sparsity_report: no allowed block pairs");
  rep.density = static_cast<double>(plan.selected_pairs()) /
                static_cast<double>(allowed_blocks);

  // Token-pair work: d multiplies for the score, exp plus normalize, d for
  // the value accumulation.
  const std::uint64_t per_pair = 2 * static_cast<std::uint64_t>(plan.head_dim) + 2;
  std::uint64_t executed_pairs = 0;
  for (std::size_t qb = 0; qb < plan.part_q.block_num; ++qb) {
    for (std::size_t i : plan.part_q.block_tokens[qb]) {
      for (int kb : plan.selected[qb]) {
        for (std::size_t j : plan.part_k.block_tokens[static_cast<std::size_t>(kb)])
          if (mask.allowed(i, j)) ++executed_pairs;
      }
    }
  }
  const std::uint64_t dense_pairs = mask.count_allowed();
  rep.executed_flops = executed_pairs * per_pair;
  rep.dense_flops = dense_pairs * per_pair;
  rep.flop_ratio = dense_pairs == 0
                       ? 0.0
                       : static_cast<double>(executed_pairs) / static_cast<double>(dense_pairs);
  return rep;
}

}  // namespace vsr
