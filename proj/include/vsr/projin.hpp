#pragma once

#include <cstdint>
#include <vector>

#include "vsr/rng.hpp"
#include "vsr/tensor.hpp"

namespace vsr {

// Space-to-depth: [f x H x W x c] -> [f x H/r x W/r x r*r*c]. Channel order
// within a tile is (dy, dx, c) row-major, so channel blocks enumerate the
// r x r tile in raster order. Bijective; pixel_unshuffle_2d inverts it.
TensorF32 pixel_shuffle_2d(const TensorF32& frames, std::size_t r);
TensorF32 pixel_unshuffle_2d(const TensorF32& shuffled, std::size_t r);

// Dense 3D convolution weights, kernel laid out [out_c][kt][kh][kw][in_c].
struct Conv3dWeights {
  std::size_t in_c = 0, out_c = 0;
  std::size_t kt = 3, kh = 3, kw = 3;
  std::size_t stride_t = 1;
  TensorF32 w;     // [out_c x kt x kh x kw x in_c] flattened rank-2 [out_c x rest]
  TensorF32 bias;  // [out_c]

  static Conv3dWeights init(std::size_t in_c, std::size_t out_c, std::size_t kt,
                            std::size_t kh, std::size_t kw, std::size_t stride_t,
                            Rng& rng, float stddev = 0.02f);
  static Conv3dWeights zeros(std::size_t in_c, std::size_t out_c, std::size_t kt,
                             std::size_t kh, std::size_t kw, std::size_t stride_t);
  std::size_t param_count() const { return w.numel() + bias.numel(); }
  void validate() const;
};

// Trailing input slab (kt-1 frames) carried between clips for temporal
// continuity. Zero frames at stream start.
struct ConvCarry {
  TensorF32 slab;  // [kt-1 x H x W x in_c]; kt==1 stores an empty marker
  bool empty = true;
};

// Causal 3D convolution over [f x H x W x C]: temporal padding comes entirely
// from the carry (past side only), spatial padding is symmetric zeros. The
// temporal stride must divide f so clip boundaries align across stream and
// batch calls. Returns the output and the carry for the next clip.
struct Conv3dResult {
  TensorF32 y;
  ConvCarry carry;
};
Conv3dResult causal_conv3d(const TensorF32& x, const Conv3dWeights& w,
                           const ConvCarry& carry);

// --- LR projection-in --------------------------------------------------------

struct ProjInConfig {
  std::size_t clip_len = 4;        // LR frames per latent frame
  std::size_t spatial_factor = 8;  // pixel-shuffle ratio
  std::size_t lr_channels = 3;
  std::size_t conv1_c = 96;   // after first 2x temporal compression
  std::size_t conv2_c = 128;  // after second 2x temporal compression
  std::size_t model_dim = 128;
  std::size_t kernel_t = 3, kernel_h = 3, kernel_w = 3;

  std::size_t shuffled_channels() const {
    return spatial_factor * spatial_factor * lr_channels;
  }
  void validate() const;
};

struct ProjInWeights {
  Conv3dWeights conv1, conv2;
  TensorF32 mlp_w;  // [conv2_c x model_dim]
  TensorF32 mlp_b;  // [model_dim]

  static ProjInWeights init(const ProjInConfig& cfg, Rng& rng);
  std::size_t param_count() const;
};

struct ProjInCarry {
  ConvCarry conv1, conv2;
};

// One clip of LR frames [clip_len x H x W x lr_channels] -> one latent-frame
// embedding [1 x H/8 x W/8 x model_dim]: pixel shuffle, two causal convs each
// halving time, then a pointwise MLP. Element-wise addable to the patchified
// noise latent. Streaming calls thread the carry; a zeroed carry reproduces
// the head of a batch run.
struct ProjInResult {
  TensorF32 embedding;
  ProjInCarry carry;
};
ProjInResult project_clip(const TensorF32& clip, const ProjInConfig& cfg,
                          const ProjInWeights& weights, const ProjInCarry& carry);

}  // namespace vsr
