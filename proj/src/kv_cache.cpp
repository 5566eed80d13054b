#include "vsr/kv_cache.hpp"

#include <algorithm>
#include <cmath>

namespace vsr {

const char* to_string(EvictStrategy s) {
  switch (s) {
    case EvictStrategy::sliding_window: return "sliding";
    case EvictStrategy::uniform: return "uniform";
    case EvictStrategy::head_wise: return "headwise";
  }
  return "?";
}

EvictStrategy evict_strategy_from_string(const std::string& s) {
  if (s == "sliding") return EvictStrategy::sliding_window;
  if (s == "uniform") return EvictStrategy::uniform;
  if (s == "headwise") return EvictStrategy::head_wise;
  throw ConfigError("unknown eviction strategy: " + s);
}

KVCache::KVCache(std::size_t n_layers, std::size_t n_heads, std::size_t window_frames,
                 EvictStrategy strategy)
    : n_layers_(n_layers), n_heads_(n_heads), window_frames_(window_frames),
      strategy_(strategy) {
  VSR_REQUIRE(n_layers >= 1 && n_heads >= 1 && window_frames >= 1, ConfigError,
              "KVCache: empty extents");
  store_.assign(n_layers, std::vector<std::vector<CachedFrame>>(n_heads));
}

std::vector<CachedFrame>& KVCache::slot(std::size_t layer, std::size_t head) {
  VSR_REQUIRE(layer < n_layers_ && head < n_heads_, ShapeError,
              "KVCache: layer/head out of range");
  return store_[layer][head];
}

void KVCache::append(std::size_t layer, std::size_t head, int frame_id, TensorF32 k,
                     TensorF32 v) {
  std::vector<CachedFrame>& s = slot(layer, head);
  VSR_REQUIRE(s.empty() || frame_id > s.back().frame_id, InvariantError,
              "KVCache: frame ids must increase");
  VSR_REQUIRE(k.rank() == 2 && k.same_shape(v), ShapeError,
              "KVCache: rank-2 matching k/v required");
  s.push_back(CachedFrame{frame_id, std::move(k), std::move(v)});
}

const std::vector<CachedFrame>& KVCache::frames(std::size_t layer,
                                                std::size_t head) const {
  VSR_REQUIRE(layer < n_layers_ && head < n_heads_, ShapeError,
              "KVCache: layer/head out of range");
  return store_[layer][head];
}

std::vector<int> KVCache::frame_ids(std::size_t layer, std::size_t head) const {
  const std::vector<CachedFrame>& s = frames(layer, head);
  std::vector<int> ids;
  ids.reserve(s.size());
  for (const CachedFrame& f : s) ids.push_back(f.frame_id);
  return ids;
}

std::size_t KVCache::retained(std::size_t layer, std::size_t head) const {
  return frames(layer, head).size();
}

void KVCache::drop(std::size_t layer, std::size_t head, int frame_id) {
  std::vector<CachedFrame>& s = slot(layer, head);
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i].frame_id == frame_id) {
      s.erase(s.begin() + static_cast<std::ptrdiff_t>(i));
      return;
    }
  throw InvariantError("KVCache: dropping a frame that is not cached");
}

namespace {

// Victim order for one head: lowest score first, older frame on ties; the
// newest frame is exempt.
std::vector<int> victims(const std::vector<int>& ids, const std::vector<double>& score,
                         std::size_t excess) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i + 1 < ids.size(); ++i) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] < score[b];
    return ids[a] < ids[b];
  });
  std::vector<int> out;
  for (std::size_t i = 0; i < excess && i < idx.size(); ++i) out.push_back(ids[idx[i]]);
  return out;
}

}  // namespace

void KVCache::evict(std::size_t layer, const std::vector<std::vector<double>>& scores) {
  VSR_REQUIRE(layer < n_layers_, ShapeError, "KVCache: layer out of range");

  if (strategy_ == EvictStrategy::sliding_window) {
    for (std::size_t h = 0; h < n_heads_; ++h) {
      std::vector<CachedFrame>& s = store_[layer][h];
      while (s.size() > window_frames_) s.erase(s.begin());
    }
    return;
  }

  bool over = false;
  for (std::size_t h = 0; h < n_heads_; ++h)
    over = over || store_[layer][h].size() > window_frames_;
  if (!over) return;
  VSR_REQUIRE(scores.size() == n_heads_, ConfigError,
              "KVCache: importance scores required for scored eviction");
  for (std::size_t h = 0; h < n_heads_; ++h)
    VSR_REQUIRE(scores[h].size() == store_[layer][h].size(), ShapeError,
                "KVCache: score count must match retained frames");

  if (strategy_ == EvictStrategy::uniform) {
    const std::vector<int> ids = frame_ids(layer, 0);
    for (std::size_t h = 1; h < n_heads_; ++h)
      VSR_REQUIRE(frame_ids(layer, h) == ids, InvariantError,
                  "KVCache: uniform strategy requires head-identical sets");
    std::vector<double> total(ids.size(), 0.0);
    for (std::size_t h = 0; h < n_heads_; ++h)
      for (std::size_t i = 0; i < ids.size(); ++i) total[i] += scores[h][i];
    for (int id : victims(ids, total, ids.size() - window_frames_))
      for (std::size_t h = 0; h < n_heads_; ++h) drop(layer, h, id);
    return;
  }

  for (std::size_t h = 0; h < n_heads_; ++h) {
    const std::vector<int> ids = frame_ids(layer, h);
    if (ids.size() <= window_frames_) continue;
    for (int id : victims(ids, scores[h], ids.size() - window_frames_))
      drop(layer, h, id);
  }
}

void KVCache::validate() const {
  for (std::size_t l = 0; l < n_layers_; ++l) {
    const std::vector<int> head0 = frame_ids(l, 0);
    for (std::size_t h = 0; h < n_heads_; ++h) {
      const std::vector<int> ids = frame_ids(l, h);
      VSR_REQUIRE(ids.size() <= window_frames_ + 1, InvariantError,
                  "KVCache: head retains more than window + current");
      VSR_REQUIRE(std::is_sorted(ids.begin(), ids.end()), InvariantError,
                  "KVCache: frame ids out of order");
      if (strategy_ == EvictStrategy::sliding_window)
        for (std::size_t i = 1; i < ids.size(); ++i)
          VSR_REQUIRE(ids[i] == ids[i - 1] + 1, InvariantError,
                      "KVCache: sliding window must retain a contiguous range");
      if (strategy_ != EvictStrategy::head_wise)
        VSR_REQUIRE(ids == head0, InvariantError,
                    "KVCache: retained sets diverge across heads");
    }
  }
}

void KVCache::corrupt_head_sets(std::size_t layer) {
  VSR_REQUIRE(layer < n_layers_, ShapeError, "KVCache: layer out of range");
  std::vector<CachedFrame>& s = store_[layer][0];
  VSR_REQUIRE(!s.empty(), InvariantError, "KVCache: nothing cached to corrupt");
  s.erase(s.begin());
  corrupted_ = true;
}

std::vector<double> frame_attention_mass(const SparsePlan& plan,
                                         const TokenGrid& key_grid) {
  VSR_REQUIRE(plan.part_k.token_count == key_grid.token_count(), ShapeError,
              "frame_attention_mass: plan does not match key grid");
  const std::size_t bnq = plan.part_q.block_num, bnk = plan.part_k.block_num;

  std::vector<double> block_mass(bnk, 0.0);
  std::vector<double> row(bnk);
  for (std::size_t qb = 0; qb < bnq; ++qb) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t kb = 0; kb < bnk; ++kb)
      if (plan.coarse_allowed.allowed(qb, kb))
        mx = std::max(mx, static_cast<double>(plan.coarse_scores.at(qb, kb)));
    if (!std::isfinite(mx)) continue;  // block with no allowed keys
    double denom = 0.0;
    for (std::size_t kb = 0; kb < bnk; ++kb) {
      row[kb] = plan.coarse_allowed.allowed(qb, kb)
                    ? std::exp(static_cast<double>(plan.coarse_scores.at(qb, kb)) - mx)
                    : 0.0;
      denom += row[kb];
    }
    for (std::size_t kb = 0; kb < bnk; ++kb) block_mass[kb] += row[kb] / denom;
  }

  // Split block mass across member frames in proportion to token counts.
  std::vector<double> out(key_grid.frame_count(), 0.0);
  const std::vector<int>& ids = key_grid.frame_ids();
  for (std::size_t kb = 0; kb < bnk; ++kb) {
    const std::vector<std::size_t>& members = plan.part_k.block_tokens[kb];
    if (block_mass[kb] == 0.0 || members.empty()) continue;
    const double per_token = block_mass[kb] / static_cast<double>(members.size());
    for (std::size_t tok : members) {
      const int fid = key_grid.frame_of(tok);
      const std::size_t fi = static_cast<std::size_t>(
          std::lower_bound(ids.begin(), ids.end(), fid) - ids.begin());
      out[fi] += per_token;
    }
  }
  return out;
}

}  // namespace vsr
