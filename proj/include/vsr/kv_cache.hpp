#pragma once

#include <cstdint>
#include <vector>

#include "vsr/grid.hpp"
#include "vsr/sparse.hpp"
#include "vsr/tensor.hpp"

namespace vsr {

enum class EvictStrategy { sliding_window, uniform, head_wise };

const char* to_string(EvictStrategy s);
EvictStrategy evict_strategy_from_string(const std::string& s);

// One latent frame's cached rows for a single (layer, head). Keys are stored
// already rotated at the frame's original absolute position, so evicting
// neighbors never shifts relative offsets for the survivors.
struct CachedFrame {
  int frame_id = -1;
  TensorF32 k;  // [tokens_per_frame x d_head]
  TensorF32 v;  // [tokens_per_frame x d_head]
};

// Windowed per-(layer, head) KV store with whole-frame eviction granularity.
class KVCache {
 public:
  KVCache() = default;
  KVCache(std::size_t n_layers, std::size_t n_heads, std::size_t window_frames,
          EvictStrategy strategy);

  std::size_t n_layers() const { return n_layers_; }
  std::size_t n_heads() const { return n_heads_; }
  std::size_t window_frames() const { return window_frames_; }
  EvictStrategy strategy() const { return strategy_; }

  // Frames stay ordered by ascending frame_id; ids are strictly increasing
  // across appends per (layer, head).
  void append(std::size_t layer, std::size_t head, int frame_id, TensorF32 k,
              TensorF32 v);

  const std::vector<CachedFrame>& frames(std::size_t layer, std::size_t head) const;
  std::vector<int> frame_ids(std::size_t layer, std::size_t head) const;
  std::size_t retained(std::size_t layer, std::size_t head) const;

  // Shrinks one layer to at most window_frames frames per head. scores[h]
  // aligns with frame_ids(layer, h); the newest frame is never evicted, the
  // lowest-scored other frame goes first, ties evict the older frame.
  // sliding_window ignores scores (pass {}); uniform sums them across heads
  // and applies one decision to every head; head_wise decides per head.
  // Missing scores while over budget on a scored strategy is a config error.
  void evict(std::size_t layer, const std::vector<std::vector<double>>& scores);

  // Strategy structural invariants: per-head budget respected after evict,
  // sliding_window retains a contiguous trailing id range, sliding_window and
  // uniform keep head-identical retained sets. Throws InvariantError.
  void validate() const;

  // Deliberately breaks head-identity in one layer (drops the oldest frame of
  // head 0 only). Negative control for validate(); no-op semantics otherwise.
  void corrupt_head_sets(std::size_t layer);
  bool corrupted() const { return corrupted_; }

 private:
  void drop(std::size_t layer, std::size_t head, int frame_id);
  std::vector<CachedFrame>& slot(std::size_t layer, std::size_t head);

  std::size_t n_layers_ = 0, n_heads_ = 0, window_frames_ = 0;
  EvictStrategy strategy_ = EvictStrategy::sliding_window;
  bool corrupted_ = false;
  std::vector<std::vector<std::vector<CachedFrame>>> store_;  // [layer][head]
};

// Per-frame attention mass implied by a plan's coarse map: each query block's
// scores are softmax-normalized over its coarse-allowed key blocks, key-block
// mass is split across the frames its member tokens belong to, and the result
// aligns with key_grid.frame_ids(). Blocks nothing attends to contribute 0.
std::vector<double> frame_attention_mass(const SparsePlan& plan,
                                         const TokenGrid& key_grid);

}  // namespace vsr
