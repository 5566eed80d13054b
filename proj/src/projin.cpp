#include "vsr/projin.hpp"

#include <cmath>

namespace vsr {

namespace {

inline float silu(float x) { return x / (1.0f + std::exp(-x)); }

void apply_silu(TensorF32& t) {
  for (float& x : t.data) x = silu(x);
}

}  // namespace

TensorF32 pixel_shuffle_2d(const TensorF32& frames, std::size_t r) {
  VSR_REQUIRE(frames.rank() == 4, ShapeError, "pixel_shuffle_2d: rank-4 required");
  VSR_REQUIRE(r >= 1, ConfigError, "pixel_shuffle_2d: ratio must be >= 1");
  const std::size_t f = frames.shape[0], H = frames.shape[1], W = frames.shape[2],
                    c = frames.shape[3];
  VSR_REQUIRE(H % r == 0 && W % r == 0, ShapeError,
              "pixel_shuffle_2d: extents not divisible by ratio");
  TensorF32 out({f, H / r, W / r, r * r * c});
  for (std::size_t t = 0; t < f; ++t)
    for (std::size_t y = 0; y < H / r; ++y)
      for (std::size_t x = 0; x < W / r; ++x)
        for (std::size_t dy = 0; dy < r; ++dy)
          for (std::size_t dx = 0; dx < r; ++dx)
            for (std::size_t ci = 0; ci < c; ++ci)
              out.at(t, y, x, (dy * r + dx) * c + ci) =
                  frames.at(t, y * r + dy, x * r + dx, ci);
  return out;
}

TensorF32 pixel_unshuffle_2d(const TensorF32& shuffled, std::size_t r) {
  VSR_REQUIRE(shuffled.rank() == 4, ShapeError, "pixel_unshuffle_2d: rank-4 required");
  VSR_REQUIRE(r >= 1 && shuffled.shape[3] % (r * r) == 0, ShapeError,
              "pixel_unshuffle_2d: channel count not divisible by ratio^2");
  const std::size_t f = shuffled.shape[0], h = shuffled.shape[1], w = shuffled.shape[2],
                    c = shuffled.shape[3] / (r * r);
  TensorF32 out({f, h * r, w * r, c});
  for (std::size_t t = 0; t < f; ++t)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t dy = 0; dy < r; ++dy)
          for (std::size_t dx = 0; dx < r; ++dx)
            for (std::size_t ci = 0; ci < c; ++ci)
              out.at(t, y * r + dy, x * r + dx, ci) =
                  shuffled.at(t, y, x, (dy * r + dx) * c + ci);
  return out;
}

Conv3dWeights Conv3dWeights::init(std::size_t in_c, std::size_t out_c, std::size_t kt,
                                  std::size_t kh, std::size_t kw, std::size_t stride_t,
                                  Rng& rng, float stddev) {
  Conv3dWeights cw = zeros(in_c, out_c, kt, kh, kw, stride_t);
  for (float& x : cw.w.data) x = rng.gaussian_f(stddev);
  return cw;
}

Conv3dWeights Conv3dWeights::zeros(std::size_t in_c, std::size_t out_c, std::size_t kt,
                                   std::size_t kh, std::size_t kw, std::size_t stride_t) {
  Conv3dWeights cw;
  cw.in_c = in_c;
  cw.out_c = out_c;
  cw.kt = kt;
  cw.kh = kh;
  cw.kw = kw;
  cw.stride_t = stride_t;
  cw.w = TensorF32({out_c, kt * kh * kw * in_c});
  cw.bias = TensorF32({out_c});
  cw.validate();
  return cw;
}

void Conv3dWeights::validate() const {
  VSR_REQUIRE(in_c >= 1 && out_c >= 1 && kt >= 1, ConfigError,
              "Conv3dWeights: empty extents");
  VSR_REQUIRE(kh % 2 == 1 && kw % 2 == 1, ConfigError,
              "Conv3dWeights: spatial kernels must be odd for symmetric padding");
  VSR_REQUIRE(stride_t == 1 || stride_t == 2, ConfigError,
              "Conv3dWeights: temporal stride must be 1 or 2");
  VSR_REQUIRE(w.rank() == 2 && w.shape[0] == out_c && w.shape[1] == kt * kh * kw * in_c,
              ShapeError, "Conv3dWeights: kernel tensor shape mismatch");
  VSR_REQUIRE(bias.rank() == 1 && bias.shape[0] == out_c, ShapeError,
              "Conv3dWeights: bias shape mismatch");
}

Conv3dResult causal_conv3d(const TensorF32& x, const Conv3dWeights& cw,
                           const ConvCarry& carry) {
  cw.validate();
  VSR_REQUIRE(x.rank() == 4, ShapeError, "causal_conv3d: rank-4 input required");
  const std::size_t f = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
  VSR_REQUIRE(C == cw.in_c, ShapeError, "causal_conv3d: channel count mismatch");
  VSR_REQUIRE(f % cw.stride_t == 0, ShapeError,
              "causal_conv3d: temporal stride must divide clip length");
  const std::size_t pad_t = cw.kt - 1;
  if (!carry.empty) {
    VSR_REQUIRE(carry.slab.rank() == 4 && carry.slab.shape[0] == pad_t &&
                    carry.slab.shape[1] == H && carry.slab.shape[2] == W &&
                    carry.slab.shape[3] == C,
                ShapeError, "causal_conv3d: carry slab shape mismatch");
  }

  // Past-side temporal pad from the carry (zeros at stream start).
  TensorF32 padded({f + pad_t, H, W, C});
  if (!carry.empty && pad_t > 0)
    std::copy(carry.slab.data.begin(), carry.slab.data.end(), padded.data.begin());
  std::copy(x.data.begin(), x.data.end(),
            padded.data.begin() + static_cast<std::ptrdiff_t>(pad_t * H * W * C));

  const std::size_t ft = f / cw.stride_t;
  const int ph = static_cast<int>(cw.kh / 2), pw = static_cast<int>(cw.kw / 2);
  TensorF32 y({ft, H, W, cw.out_c});
  // Output tau ends its temporal window at input frame tau*stride (padded
  // index tau*stride + pad_t), so it never reads past that frame.
  for (std::size_t tau = 0; tau < ft; ++tau) {
    const std::size_t t0 = tau * cw.stride_t;  // padded window start
    for (std::size_t oy = 0; oy < H; ++oy)
      for (std::size_t ox = 0; ox < W; ++ox)
        for (std::size_t oc = 0; oc < cw.out_c; ++oc) {
          float acc = cw.bias.at(oc);
          const float* wrow = cw.w.row(oc);
          std::size_t wi = 0;
          for (std::size_t dt = 0; dt < cw.kt; ++dt) {
            const std::size_t it = t0 + dt;
            for (std::size_t dy = 0; dy < cw.kh; ++dy) {
              const int iy = static_cast<int>(oy) + static_cast<int>(dy) - ph;
              if (iy < 0 || iy >= static_cast<int>(H)) {
                wi += cw.kw * cw.in_c;
                continue;
              }
              for (std::size_t dx = 0; dx < cw.kw; ++dx) {
                const int ix = static_cast<int>(ox) + static_cast<int>(dx) - pw;
                if (ix < 0 || ix >= static_cast<int>(W)) {
                  wi += cw.in_c;
                  continue;
                }
                const float* src = &padded.at(it, static_cast<std::size_t>(iy),
                                              static_cast<std::size_t>(ix), 0);
                for (std::size_t ic = 0; ic < cw.in_c; ++ic) acc += wrow[wi++] * src[ic];
              }
            }
          }
          y.at(tau, oy, ox, oc) = acc;
        }
  }

  Conv3dResult res;
  res.y = std::move(y);
  res.carry.empty = pad_t == 0;
  if (pad_t > 0) {
    res.carry.slab = TensorF32({pad_t, H, W, C});
    std::copy(x.data.end() - static_cast<std::ptrdiff_t>(pad_t * H * W * C),
              x.data.end(), res.carry.slab.data.begin());
  }
  return res;
}

void ProjInConfig::validate() const {
  VSR_REQUIRE(clip_len == 4, ConfigError,
              "ProjInConfig: clip length must be 4 (two 2x temporal compressions)");
  VSR_REQUIRE(spatial_factor == 8, ConfigError, "ProjInConfig: spatial factor must be 8");
  VSR_REQUIRE(lr_channels >= 1 && conv1_c >= 1 && conv2_c >= 1 && model_dim >= 1,
              ConfigError, "ProjInConfig: empty widths");
  VSR_REQUIRE(kernel_h % 2 == 1 && kernel_w % 2 == 1, ConfigError,
              "ProjInConfig: spatial kernels must be odd");
}

ProjInWeights ProjInWeights::init(const ProjInConfig& cfg, Rng& rng) {
  cfg.validate();
  ProjInWeights w;
  w.conv1 = Conv3dWeights::init(cfg.shuffled_channels(), cfg.conv1_c, cfg.kernel_t,
                                cfg.kernel_h, cfg.kernel_w, 2, rng, 0.02f);
  w.conv2 = Conv3dWeights::init(cfg.conv1_c, cfg.conv2_c, cfg.kernel_t, cfg.kernel_h,
                                cfg.kernel_w, 2, rng, 0.02f);
  w.mlp_w = TensorF32::gaussian({cfg.conv2_c, cfg.model_dim}, rng, 0.02f);
  w.mlp_b = TensorF32({cfg.model_dim});
  return w;
}

std::size_t ProjInWeights::param_count() const {
  return conv1.param_count() + conv2.param_count() + mlp_w.numel() + mlp_b.numel();
}

ProjInResult project_clip(const TensorF32& clip, const ProjInConfig& cfg,
                          const ProjInWeights& weights, const ProjInCarry& carry) {
  cfg.validate();
  VSR_REQUIRE(clip.rank() == 4, ShapeError, "project_clip: rank-4 clip required");
  VSR_REQUIRE(clip.shape[0] == cfg.clip_len, ShapeError,
              "project_clip: clip length mismatch");
  VSR_REQUIRE(clip.shape[3] == cfg.lr_channels, ShapeError,
              "project_clip: channel count mismatch");

  TensorF32 shuffled = pixel_shuffle_2d(clip, cfg.spatial_factor);
  Conv3dResult c1 = causal_conv3d(shuffled, weights.conv1, carry.conv1);
  apply_silu(c1.y);
  Conv3dResult c2 = causal_conv3d(c1.y, weights.conv2, carry.conv2);
  apply_silu(c2.y);

  // Pointwise projection into the model dimension.
  const std::size_t h = c2.y.shape[1], w = c2.y.shape[2];
  TensorF32 flat({h * w, cfg.conv2_c}, std::move(c2.y.data));
  TensorF32 proj = matmul(flat, weights.mlp_w);
  for (std::size_t i = 0; i < proj.shape[0]; ++i)
    for (std::size_t j = 0; j < cfg.model_dim; ++j) proj.at(i, j) += weights.mlp_b.at(j);

  ProjInResult res;
  res.embedding = TensorF32({1, h, w, cfg.model_dim}, std::move(proj.data));
  res.carry.conv1 = std::move(c1.carry);
  res.carry.conv2 = std::move(c2.carry);
  return res;
}

}  // namespace vsr
