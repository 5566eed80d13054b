#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vsr/projin.hpp"
#include "vsr/rng.hpp"
#include "vsr/tensor.hpp"

namespace vsr {

// Latent -> HR frame expansion factors; fixed by the compression scheme the
// decoder inverts (4x temporal, 8x spatial over 3 stages of 2x).
inline constexpr std::size_t kDecoderTemporalRepeat = 4;
inline constexpr std::size_t kDecoderStages = 3;
inline constexpr std::size_t kDecoderSpatialFactor = 8;

struct DecoderConfig {
  std::size_t latent_channels = 16;
  std::size_t lr_channels = 3;
  std::size_t out_channels = 3;
  std::array<std::size_t, kDecoderStages> stage_channels = {48, 32, 24};
  bool conditional = true;
  std::size_t cond_width = 8;  // channels injected per stage from the LR branch
  std::size_t kernel = 3;      // cubic kernel for every causal conv

  void validate() const;
};

// One upsampling stage: optional LR injection (1x1x1 conv to cond_width,
// concatenated), a causal conv into the stage width, and a residual causal
// conv, then 2x nearest spatial upsampling.
struct StageWeights {
  Conv3dWeights cond;  // [lr_channels -> cond_width], conditional only
  Conv3dWeights main;  // [prev (+ cond_width) -> stage_channels[s]]
  Conv3dWeights res;   // [stage_channels[s] -> stage_channels[s]]
};

struct DecoderWeights {
  Conv3dWeights stem;  // [latent_channels -> stage_channels[0]]
  std::array<StageWeights, kDecoderStages> stages;
  Conv3dWeights head;  // [stage_channels[last] -> out_channels]

  static DecoderWeights init(const DecoderConfig& cfg, Rng& rng);
  static DecoderWeights zeros(const DecoderConfig& cfg);
  std::size_t param_count() const;
};

// Exact trainable-parameter count for a config, without allocating weights.
std::size_t param_count(const DecoderConfig& cfg);

// Unconditional config whose total parameter count matches the given
// conditional config as closely as possible (searched over stage-width
// offsets); the result is within 1% or construction throws.
DecoderConfig unconditional_parity_config(const DecoderConfig& cfg);

// Carry state for streaming decode, one slab per causal conv.
struct DecoderCarry {
  ConvCarry stem;
  std::array<std::array<ConvCarry, 2>, kDecoderStages> stage;  // [s][main, res]
  ConvCarry head;
};

// Decodes latents [T x h x w x latent_channels] into frames
// [4T x 8h x 8w x out_channels]. Conditional configs read lr_frames
// [4T x 8h x 8w x lr_channels]; unconditional configs ignore them. Temporally
// causal: processed latent frame by latent frame internally, so batch decode
// and clip-wise streaming produce identical bits.
TensorF32 decode(const TensorF32& latents, const TensorF32& lr_frames,
                 const DecoderConfig& cfg, const DecoderWeights& weights);

// Streaming form: one latent frame per call, carry threaded explicitly.
class DecoderStream {
 public:
  DecoderStream(DecoderConfig cfg, const DecoderWeights* weights);
  // latent [1 x h x w x C], lr_clip [4 x 8h x 8w x lr_channels] ->
  // [4 x 8h x 8w x out_channels]
  TensorF32 decode_frame(const TensorF32& latent, const TensorF32& lr_clip);

 private:
  DecoderConfig cfg_;
  const DecoderWeights* weights_;
  DecoderCarry carry_;
};

// Nearest-neighbor spatial resampling on [f x H x W x C] stacks.
TensorF32 nearest_upsample2(const TensorF32& x);
TensorF32 nearest_downsample(const TensorF32& x, std::size_t factor);

// Weight serialization: one tensor fixture per conv plus a JSON manifest of
// names and shapes. load validates shapes against cfg.
void save_decoder_weights(const std::string& dir, const DecoderConfig& cfg,
                          const DecoderWeights& w);
DecoderWeights load_decoder_weights(const std::string& dir, const DecoderConfig& cfg);

}  // namespace vsr
