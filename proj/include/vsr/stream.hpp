#pragma once

#include <cstdint>
#include <vector>

#include "vsr/kv_cache.hpp"
#include "vsr/mask.hpp"
#include "vsr/projin.hpp"
#include "vsr/rope.hpp"
#include "vsr/sparse.hpp"
#include "vsr/tensor.hpp"

namespace vsr {

// Toy streaming stack: per-frame one-step generation over a small multi-layer
// attention model with a windowed KV-cache. Correctness contracts (streaming
// vs batch, causality, eviction behavior) are weight-agnostic.
struct StreamConfig {
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t d_head = 32;
  std::size_t ffw_dim = 256;
  std::size_t latent_rows = 8;
  std::size_t latent_cols = 8;
  std::size_t window_frames = 4;
  EvictStrategy strategy = EvictStrategy::sliding_window;
  std::size_t topk = 2;
  bool use_locality = false;
  LocalityWindow locality;
  ProjInConfig projin;
  std::uint64_t weight_seed = 1234;

  std::size_t model_dim() const { return n_heads * d_head; }
  std::size_t tokens_per_frame() const { return latent_rows * latent_cols; }
  RopeConfig rope() const;
  void validate() const;
};

// Fills the locality frame extents from the latent grid.
LocalityWindow make_stream_locality(const StreamConfig& cfg, LocalityWindow::Mode mode,
                                    int extent_h, int extent_w);

struct LayerWeights {
  TensorF32 wq, wk, wv, wo;    // [D x D]
  TensorF32 w_in;              // [D x ffw]
  TensorF32 w_out;             // [ffw x D]
  TensorF32 norm1_g, norm2_g;  // [D]
};

struct ToyDiT {
  std::vector<LayerWeights> layers;
  ProjInWeights projin;

  static ToyDiT init(const StreamConfig& cfg);
  std::size_t param_count() const;
};

struct StreamState {
  int t = 0;  // next frame index; also the count of frames stepped
  KVCache cache;
  ProjInCarry carry;
  // Coarse maps of the most recent step, [layer][head], each [bnq x bnk] over
  // that step's context. Empty until the first step completes.
  std::vector<std::vector<TensorF32>> prior_coarse;

  static StreamState init(const StreamConfig& cfg);
};

// Zeroes the conv carries, as if the next clip opened a fresh stream. The KV
// cache and frame counter are untouched. Pairs with truncated-batch oracles
// that start from a cold proj-in at the truncation boundary.
void reset_projin_carry(StreamState& state);

struct StepTrace {
  double density = 0.0;  // mean selected/allowed block ratio over (layer, head)
  std::vector<std::size_t> retained_per_layer;  // max over heads, post-eviction
};

// One-step generation for the next frame: proj-in embeds the LR clip, the sum
// with the noise latent runs through n_layers of block-sparse attention whose
// keys/values span {cached frames, current frame}, the current frame's K/V
// enter the cache, and eviction shrinks each layer back to the window. K/V
// projections read the frame's initial embedding (not the evolving residual),
// so cached rows are independent of how much context was visible when their
// frame was stepped; queries read the residual stream.
// lr_clip: [clip_len x rows*8 x cols*8 x lr_channels], noise: [rows x cols x D].
// Returns the latent frame [rows x cols x D].
TensorF32 step(const StreamConfig& cfg, const ToyDiT& model, StreamState& state,
               const TensorF32& lr_clip, const TensorF32& noise,
               StepTrace* trace = nullptr);

// Reference path: the same per-frame computation done over a whole sequence at
// once, context limited to the trailing window of frames, all frame indices
// shifted by frame_id_offset so truncated runs see their absolute positions.
// Only the sliding_window strategy has a well-defined batch equivalent.
// lr_frames: [clip_len*T x rows*8 x cols*8 x lr_channels],
// noise: [T x rows x cols x D]. Returns [T x rows x cols x D].
TensorF32 run_batch_causal(const StreamConfig& cfg, const ToyDiT& model,
                           const TensorF32& lr_frames, const TensorF32& noise,
                           int frame_id_offset = 0);

// --- Latency accounting ------------------------------------------------------

struct LatencyConfig {
  enum class Mode { streaming, chunked };
  Mode mode = Mode::streaming;
  std::size_t clip_len = 4;
  // Causal temporal compression convs look back one extra clip before the
  // first latent stabilizes.
  bool temporal_convs = true;
  std::size_t chunk_size = 32;
};

// Input frames that must arrive before the first output frame can be emitted.
std::size_t lookahead_latency(const LatencyConfig& cfg);

}  // namespace vsr
