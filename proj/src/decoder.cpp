#include "vsr/decoder.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>

namespace vsr {

void DecoderConfig::validate() const {
  VSR_REQUIRE(latent_channels >= 1 && lr_channels >= 1 && out_channels >= 1,
              ConfigError, "DecoderConfig: empty channel counts");
  for (std::size_t c : stage_channels)
    VSR_REQUIRE(c >= 1, ConfigError, "DecoderConfig: empty stage width");
  VSR_REQUIRE(kernel % 2 == 1, ConfigError, "DecoderConfig: kernel must be odd");
  if (conditional)
    VSR_REQUIRE(cond_width >= 1, ConfigError, "DecoderConfig: empty cond width");
}

namespace {

std::size_t conv_params(std::size_t in_c, std::size_t out_c, std::size_t k) {
  return out_c * (k * k * k * in_c) + out_c;
}

std::size_t stage_in(const DecoderConfig& cfg, std::size_t s) {
  return s == 0 ? cfg.stage_channels[0] : cfg.stage_channels[s - 1];
}

}  // namespace

std::size_t param_count(const DecoderConfig& cfg) {
  cfg.validate();
  std::size_t n = conv_params(cfg.latent_channels, cfg.stage_channels[0], cfg.kernel);
  for (std::size_t s = 0; s < kDecoderStages; ++s) {
    std::size_t in = stage_in(cfg, s);
    if (cfg.conditional) {
      n += conv_params(cfg.lr_channels, cfg.cond_width, 1);
      in += cfg.cond_width;
    }
    n += conv_params(in, cfg.stage_channels[s], cfg.kernel);
    n += conv_params(cfg.stage_channels[s], cfg.stage_channels[s], cfg.kernel);
  }
  n += conv_params(cfg.stage_channels[kDecoderStages - 1], cfg.out_channels, cfg.kernel);
  return n;
}

DecoderWeights DecoderWeights::init(const DecoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t k = cfg.kernel;
  DecoderWeights w;
  w.stem = Conv3dWeights::init(cfg.latent_channels, cfg.stage_channels[0], k, k, k, 1,
                               rng, 0.05f);
  for (std::size_t s = 0; s < kDecoderStages; ++s) {
    std::size_t in = stage_in(cfg, s);
    if (cfg.conditional) {
      w.stages[s].cond =
          Conv3dWeights::init(cfg.lr_channels, cfg.cond_width, 1, 1, 1, 1, rng, 0.05f);
      in += cfg.cond_width;
    }
    w.stages[s].main =
        Conv3dWeights::init(in, cfg.stage_channels[s], k, k, k, 1, rng, 0.05f);
    w.stages[s].res = Conv3dWeights::init(cfg.stage_channels[s], cfg.stage_channels[s],
                                          k, k, k, 1, rng, 0.05f);
  }
  w.head = Conv3dWeights::init(cfg.stage_channels[kDecoderStages - 1], cfg.out_channels,
                               k, k, k, 1, rng, 0.05f);
  return w;
}

DecoderWeights DecoderWeights::zeros(const DecoderConfig& cfg) {
  Rng rng(0);
  DecoderWeights w = init(cfg, rng);
  auto wipe = [](Conv3dWeights& c) {
    std::fill(c.w.data.begin(), c.w.data.end(), 0.0f);
    std::fill(c.bias.data.begin(), c.bias.data.end(), 0.0f);
  };
  wipe(w.stem);
  for (StageWeights& s : w.stages) {
    if (s.cond.in_c > 0) wipe(s.cond);
    wipe(s.main);
    wipe(s.res);
  }
  wipe(w.head);
  return w;
}

std::size_t DecoderWeights::param_count() const {
  auto p = [](const Conv3dWeights& c) { return c.in_c ? c.param_count() : 0; };
  std::size_t n = p(stem) + p(head);
  for (const StageWeights& s : stages) n += p(s.cond) + p(s.main) + p(s.res);
  return n;
}

DecoderConfig unconditional_parity_config(const DecoderConfig& cfg) {
  cfg.validate();
  VSR_REQUIRE(cfg.conditional, ConfigError,
              "unconditional_parity_config: input must be conditional");
  const std::size_t target = param_count(cfg);

  DecoderConfig best = cfg;
  best.conditional = false;
  long long best_diff = -1;
  std::size_t best_l1 = 0;
  const int span = 32;
  for (int d0 = -span; d0 <= span; ++d0)
    for (int d1 = -span; d1 <= span; ++d1)
      for (int d2 = -span; d2 <= span; ++d2) {
        const long long c0 = static_cast<long long>(cfg.stage_channels[0]) + d0;
        const long long c1 = static_cast<long long>(cfg.stage_channels[1]) + d1;
        const long long c2 = static_cast<long long>(cfg.stage_channels[2]) + d2;
        if (c0 < 4 || c1 < 4 || c2 < 4) continue;
        DecoderConfig u = cfg;
        u.conditional = false;
        u.stage_channels = {static_cast<std::size_t>(c0), static_cast<std::size_t>(c1),
                            static_cast<std::size_t>(c2)};
        const long long diff = std::llabs(static_cast<long long>(param_count(u)) -
                                          static_cast<long long>(target));
        const std::size_t l1 = static_cast<std::size_t>(std::abs(d0) + std::abs(d1) +
                                                        std::abs(d2));
        if (best_diff < 0 || diff < best_diff || (diff == best_diff && l1 < best_l1)) {
          best_diff = diff;
          best_l1 = l1;
          best = u;
        }
      }
  VSR_REQUIRE(best_diff >= 0 && static_cast<double>(best_diff) <=
                                    0.01 * static_cast<double>(target),
              InvariantError, "unconditional_parity_config: no width combination "
                              "within 1% of the conditional budget");
  return best;
}

TensorF32 nearest_upsample2(const TensorF32& x) {
  VSR_REQUIRE(x.rank() == 4, ShapeError, "nearest_upsample2: rank-4 required");
  const std::size_t f = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
  TensorF32 out({f, H * 2, W * 2, C});
  for (std::size_t t = 0; t < f; ++t)
    for (std::size_t y = 0; y < H * 2; ++y)
      for (std::size_t xc = 0; xc < W * 2; ++xc) {
        const float* src = x.data.data() + ((t * H + y / 2) * W + xc / 2) * C;
        float* dst = out.data.data() + ((t * H * 2 + y) * W * 2 + xc) * C;
        std::copy(src, src + C, dst);
      }
  return out;
}

TensorF32 nearest_downsample(const TensorF32& x, std::size_t factor) {
  VSR_REQUIRE(x.rank() == 4, ShapeError, "nearest_downsample: rank-4 required");
  VSR_REQUIRE(factor >= 1, ConfigError, "nearest_downsample: factor must be >= 1");
  if (factor == 1) return x;
  const std::size_t f = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
  VSR_REQUIRE(H % factor == 0 && W % factor == 0, ShapeError,
              "nearest_downsample: extents not divisible by factor");
  const std::size_t Ho = H / factor, Wo = W / factor;
  TensorF32 out({f, Ho, Wo, C});
  for (std::size_t t = 0; t < f; ++t)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xc = 0; xc < Wo; ++xc) {
        const float* src =
            x.data.data() + ((t * H + y * factor) * W + xc * factor) * C;
        float* dst = out.data.data() + ((t * Ho + y) * Wo + xc) * C;
        std::copy(src, src + C, dst);
      }
  return out;
}

namespace {

void silu_inplace(TensorF32& x) {
  for (float& v : x.data) v = v / (1.0f + std::exp(-v));
}

TensorF32 repeat_temporal(const TensorF32& x, std::size_t r) {
  const std::size_t f = x.shape[0], per = x.numel() / f;
  TensorF32 out({f * r, x.shape[1], x.shape[2], x.shape[3]});
  for (std::size_t t = 0; t < f; ++t)
    for (std::size_t j = 0; j < r; ++j)
      std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(t * per),
                x.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * per),
                out.data.begin() + static_cast<std::ptrdiff_t>((t * r + j) * per));
  return out;
}

TensorF32 concat_channels(const TensorF32& a, const TensorF32& b) {
  VSR_REQUIRE(a.rank() == 4 && b.rank() == 4 && a.shape[0] == b.shape[0] &&
                  a.shape[1] == b.shape[1] && a.shape[2] == b.shape[2],
              ShapeError, "concat_channels: leading extents differ");
  const std::size_t ca = a.shape[3], cb = b.shape[3];
  TensorF32 out({a.shape[0], a.shape[1], a.shape[2], ca + cb});
  const std::size_t cells = a.numel() / ca;
  for (std::size_t i = 0; i < cells; ++i) {
    std::copy(a.data.begin() + static_cast<std::ptrdiff_t>(i * ca),
              a.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * ca),
              out.data.begin() + static_cast<std::ptrdiff_t>(i * (ca + cb)));
    std::copy(b.data.begin() + static_cast<std::ptrdiff_t>(i * cb),
              b.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * cb),
              out.data.begin() + static_cast<std::ptrdiff_t>(i * (ca + cb) + ca));
  }
  return out;
}

}  // namespace

DecoderStream::DecoderStream(DecoderConfig cfg, const DecoderWeights* weights)
    : cfg_(std::move(cfg)), weights_(weights) {
  cfg_.validate();
  VSR_REQUIRE(weights_ != nullptr, ConfigError, "DecoderStream: null weights");
}

TensorF32 DecoderStream::decode_frame(const TensorF32& latent,
                                      const TensorF32& lr_clip) {
  VSR_REQUIRE(latent.rank() == 4 && latent.shape[0] == 1 &&
                  latent.shape[3] == cfg_.latent_channels,
              ShapeError, "decode_frame: latent must be [1 x h x w x C]");
  const std::size_t h = latent.shape[1], w = latent.shape[2];
  if (cfg_.conditional) {
    VSR_REQUIRE(lr_clip.rank() == 4 &&
                    lr_clip.shape[0] == kDecoderTemporalRepeat &&
                    lr_clip.shape[1] == h * kDecoderSpatialFactor &&
                    lr_clip.shape[2] == w * kDecoderSpatialFactor &&
                    lr_clip.shape[3] == cfg_.lr_channels,
                ShapeError, "decode_frame: LR clip extents must be 4x / 8x the latent");
  }

  TensorF32 x = repeat_temporal(latent, kDecoderTemporalRepeat);
  Conv3dResult r = causal_conv3d(x, weights_->stem, carry_.stem);
  carry_.stem = std::move(r.carry);
  x = std::move(r.y);
  silu_inplace(x);

  for (std::size_t s = 0; s < kDecoderStages; ++s) {
    if (cfg_.conditional) {
      const std::size_t factor = kDecoderSpatialFactor >> s;
      TensorF32 lr_ds = nearest_downsample(lr_clip, factor);
      Conv3dResult c = causal_conv3d(lr_ds, weights_->stages[s].cond, ConvCarry{});
      x = concat_channels(x, c.y);
    }
    r = causal_conv3d(x, weights_->stages[s].main, carry_.stage[s][0]);
    carry_.stage[s][0] = std::move(r.carry);
    x = std::move(r.y);
    silu_inplace(x);

    r = causal_conv3d(x, weights_->stages[s].res, carry_.stage[s][1]);
    carry_.stage[s][1] = std::move(r.carry);
    silu_inplace(r.y);
    add_inplace(x, r.y);

    x = nearest_upsample2(x);
  }

  r = causal_conv3d(x, weights_->head, carry_.head);
  carry_.head = std::move(r.carry);
  return std::move(r.y);
}

TensorF32 decode(const TensorF32& latents, const TensorF32& lr_frames,
                 const DecoderConfig& cfg, const DecoderWeights& weights) {
  cfg.validate();
  VSR_REQUIRE(latents.rank() == 4 && latents.shape[3] == cfg.latent_channels,
              ShapeError, "decode: latents must be [T x h x w x C]");
  const std::size_t T = latents.shape[0], h = latents.shape[1], w = latents.shape[2];
  const std::size_t per_lat = h * w * cfg.latent_channels;
  const std::size_t fh = h * kDecoderSpatialFactor, fw = w * kDecoderSpatialFactor;
  if (cfg.conditional)
    VSR_REQUIRE(lr_frames.rank() == 4 &&
                    lr_frames.shape[0] == T * kDecoderTemporalRepeat &&
                    lr_frames.shape[1] == fh && lr_frames.shape[2] == fw &&
                    lr_frames.shape[3] == cfg.lr_channels,
                ShapeError, "decode: LR frames misaligned with latents");

  DecoderStream stream(cfg, &weights);
  TensorF32 out({T * kDecoderTemporalRepeat, fh, fw, cfg.out_channels});
  const std::size_t per_out = kDecoderTemporalRepeat * fh * fw * cfg.out_channels;
  TensorF32 lr_clip;
  if (cfg.conditional)
    lr_clip = TensorF32({kDecoderTemporalRepeat, fh, fw, cfg.lr_channels});
  for (std::size_t t = 0; t < T; ++t) {
    TensorF32 latent({1, h, w, cfg.latent_channels});
    std::copy(latents.data.begin() + static_cast<std::ptrdiff_t>(t * per_lat),
              latents.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * per_lat),
              latent.data.begin());
    if (cfg.conditional)
      std::copy(
          lr_frames.data.begin() + static_cast<std::ptrdiff_t>(t * lr_clip.numel()),
          lr_frames.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * lr_clip.numel()),
          lr_clip.data.begin());
    const TensorF32 frames = stream.decode_frame(latent, lr_clip);
    std::copy(frames.data.begin(), frames.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(t * per_out));
  }
  return out;
}

namespace {

struct NamedConv {
  std::string name;
  Conv3dWeights* conv;
};

std::vector<NamedConv> named_convs(const DecoderConfig& cfg, DecoderWeights& w) {
  std::vector<NamedConv> out{{"stem", &w.stem}};
  for (std::size_t s = 0; s < kDecoderStages; ++s) {
    const std::string p = "stage" + std::to_string(s) + ".";
    if (cfg.conditional) out.push_back({p + "cond", &w.stages[s].cond});
    out.push_back({p + "main", &w.stages[s].main});
    out.push_back({p + "res", &w.stages[s].res});
  }
  out.push_back({"head", &w.head});
  return out;
}

}  // namespace

void save_decoder_weights(const std::string& dir, const DecoderConfig& cfg,
                          const DecoderWeights& w) {
  cfg.validate();
  nlohmann::json manifest;
  manifest["format"] = "decoder-weights-v1";
  manifest["tensors"] = nlohmann::json::array();
  DecoderWeights& wm = const_cast<DecoderWeights&>(w);  // read-only traversal
  for (const NamedConv& nc : named_convs(cfg, wm)) {
    for (const char* part : {"w", "bias"}) {
      const TensorF32& t = part == std::string("w") ? nc.conv->w : nc.conv->bias;
      const std::string file = nc.name + "." + part + ".bin";
      write_fixture(t, dir + "/" + file);
      nlohmann::json entry;
      entry["name"] = nc.name + "." + part;
      entry["file"] = file;
      entry["shape"] = t.shape;
      manifest["tensors"].push_back(entry);
    }
    nlohmann::json entry;
    entry["name"] = nc.name + ".meta";
    entry["kernel"] = {nc.conv->kt, nc.conv->kh, nc.conv->kw};
    entry["stride_t"] = nc.conv->stride_t;
    entry["in_c"] = nc.conv->in_c;
    entry["out_c"] = nc.conv->out_c;
    manifest["meta"].push_back(entry);
  }
  std::ofstream os(dir + "/manifest.json");
  VSR_REQUIRE(os.good(), IoError, "save_decoder_weights: cannot write manifest");
  os << manifest.dump(2) << '\n';
}

DecoderWeights load_decoder_weights(const std::string& dir, const DecoderConfig& cfg) {
  cfg.validate();
  std::ifstream is(dir + "/manifest.json");
  VSR_REQUIRE(is.good(), IoError, "load_decoder_weights: cannot open manifest");
  nlohmann::json manifest;
  is >> manifest;
  VSR_REQUIRE(manifest.value("format", "") == "decoder-weights-v1", IoError,
              "load_decoder_weights: unknown manifest format");

  DecoderWeights w = DecoderWeights::zeros(cfg);
  std::vector<NamedConv> convs = named_convs(cfg, w);
  for (const NamedConv& nc : convs) {
    for (const char* part : {"w", "bias"}) {
      const std::string name = nc.name + "." + part;
      bool found = false;
      for (const auto& entry : manifest["tensors"]) {
        if (entry["name"] != name) continue;
        TensorF32 t = read_fixture(dir + "/" + entry["file"].get<std::string>());
        TensorF32& dst = part == std::string("w") ? nc.conv->w : nc.conv->bias;
        VSR_REQUIRE(t.same_shape(dst), ShapeError,
                    "load_decoder_weights: shape mismatch for " + name);
        dst = std::move(t);
        found = true;
        break;
      }
      VSR_REQUIRE(found, IoError, "load_decoder_weights: missing tensor " + name);
    }
  }
  return w;
}

}  // namespace vsr
