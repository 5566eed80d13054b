#include "vsr/stream.hpp"

#include <algorithm>
#include <cmath>

namespace vsr {

RopeConfig StreamConfig::rope() const {
  return RopeConfig::split_default(static_cast<int>(d_head));
}

void StreamConfig::validate() const {
  VSR_REQUIRE(n_layers >= 2, ConfigError, "StreamConfig: at least 2 layers");
  VSR_REQUIRE(n_heads >= 1 && d_head >= 1 && ffw_dim >= 1, ConfigError,
              "StreamConfig: empty widths");
  VSR_REQUIRE(latent_rows >= 1 && latent_cols >= 1, ConfigError,
              "StreamConfig: empty latent grid");
  VSR_REQUIRE(window_frames >= 1, ConfigError, "StreamConfig: window must be >= 1");
  VSR_REQUIRE(topk >= 1, ConfigError, "StreamConfig: topk must be >= 1");
  projin.validate();
  VSR_REQUIRE(projin.model_dim == model_dim(), ConfigError,
              "StreamConfig: proj-in model_dim must equal n_heads * d_head");
  rope().validate();
  if (use_locality) {
    VSR_REQUIRE(locality.frame_extent_h == static_cast<int>(latent_rows) &&
                    locality.frame_extent_w == static_cast<int>(latent_cols),
                ConfigError, "StreamConfig: locality frame extents mismatch");
  }
}

LocalityWindow make_stream_locality(const StreamConfig& cfg, LocalityWindow::Mode mode,
                                    int extent_h, int extent_w) {
  LocalityWindow win;
  win.mode = mode;
  win.extent_h = extent_h;
  win.extent_w = extent_w;
  win.frame_extent_h = static_cast<int>(cfg.latent_rows);
  win.frame_extent_w = static_cast<int>(cfg.latent_cols);
  return win;
}

ToyDiT ToyDiT::init(const StreamConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.weight_seed);
  const std::size_t D = cfg.model_dim();
  ToyDiT m;
  m.projin = ProjInWeights::init(cfg.projin, rng);
  m.layers.resize(cfg.n_layers);
  for (LayerWeights& w : m.layers) {
    w.wq = TensorF32::gaussian({D, D}, rng, 0.02f);
    w.wk = TensorF32::gaussian({D, D}, rng, 0.02f);
    w.wv = TensorF32::gaussian({D, D}, rng, 0.02f);
    w.wo = TensorF32::gaussian({D, D}, rng, 0.02f);
    w.w_in = TensorF32::gaussian({D, cfg.ffw_dim}, rng, 0.02f);
    w.w_out = TensorF32::gaussian({cfg.ffw_dim, D}, rng, 0.02f);
    w.norm1_g = TensorF32::full({D}, 1.0f);
    w.norm2_g = TensorF32::full({D}, 1.0f);
  }
  return m;
}

std::size_t ToyDiT::param_count() const {
  std::size_t n = projin.param_count();
  for (const LayerWeights& w : layers)
    n += w.wq.numel() + w.wk.numel() + w.wv.numel() + w.wo.numel() + w.w_in.numel() +
         w.w_out.numel() + w.norm1_g.numel() + w.norm2_g.numel();
  return n;
}

StreamState StreamState::init(const StreamConfig& cfg) {
  cfg.validate();
  StreamState st;
  st.cache = KVCache(cfg.n_layers, cfg.n_heads, cfg.window_frames, cfg.strategy);
  return st;
}

void reset_projin_carry(StreamState& state) {
  state.carry.conv1 = ConvCarry{};
  state.carry.conv2 = ConvCarry{};
}

namespace {

constexpr double kRmsEps = 1e-6;

TensorF32 rms_norm(const TensorF32& x, const TensorF32& gain) {
  const std::size_t n = x.shape[0], d = x.shape[1];
  TensorF32 y(x.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const float* src = x.row(i);
    float* dst = y.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += static_cast<double>(src[j]) * src[j];
    const float inv =
        static_cast<float>(1.0 / std::sqrt(acc / static_cast<double>(d) + kRmsEps));
    for (std::size_t j = 0; j < d; ++j) dst[j] = src[j] * inv * gain.data[j];
  }
  return y;
}

TensorF32 slice_cols(const TensorF32& x, std::size_t c0, std::size_t c1) {
  const std::size_t n = x.shape[0];
  TensorF32 y({n, c1 - c0});
  for (std::size_t i = 0; i < n; ++i)
    std::copy(x.row(i) + c0, x.row(i) + c1, y.row(i));
  return y;
}

void paste_cols(TensorF32& dst, const TensorF32& src, std::size_t c0) {
  for (std::size_t i = 0; i < dst.shape[0]; ++i)
    std::copy(src.row(i), src.row(i) + src.shape[1], dst.row(i) + c0);
}

void silu_inplace(TensorF32& x) {
  for (float& v : x.data) v = v / (1.0f + std::exp(-v));
}

// emb [1 x rows x cols x D] + noise [rows x cols x D] -> tokens [rows*cols x D]
TensorF32 frame_tokens(const TensorF32& emb, const TensorF32& noise) {
  VSR_REQUIRE(noise.rank() == 3 && emb.numel() == noise.numel(), ShapeError,
              "frame tokens: embedding/noise shape mismatch");
  TensorF32 x({noise.shape[0] * noise.shape[1], noise.shape[2]});
  for (std::size_t i = 0; i < x.numel(); ++i)
    x.data[i] = emb.data[i] + noise.data[i];
  return x;
}

struct FrameKV {
  // Per head: rotated keys and plain values, [tokens_per_frame x d_head].
  std::vector<TensorF32> k, v;
};

// K/V for one frame of one layer, from the frame's initial token embedding.
FrameKV make_frame_kv(const StreamConfig& cfg, const LayerWeights& w,
                      const TensorF32& x0, int frame_id) {
  const TensorF32 xn = rms_norm(x0, w.norm1_g);
  const TensorF32 kc = matmul(xn, w.wk);
  const TensorF32 vc = matmul(xn, w.wv);
  const std::vector<Position3D> pos =
      TokenGrid(std::vector<int>{frame_id}, cfg.latent_rows, cfg.latent_cols)
          .positions();
  const RopeConfig rc = cfg.rope();
  FrameKV out;
  out.k.reserve(cfg.n_heads);
  out.v.reserve(cfg.n_heads);
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    const std::size_t c0 = h * cfg.d_head, c1 = c0 + cfg.d_head;
    out.k.push_back(apply_rope(slice_cols(kc, c0, c1), pos, rc));
    out.v.push_back(slice_cols(vc, c0, c1));
  }
  return out;
}

TensorF32 concat_rows(const std::vector<const TensorF32*>& parts) {
  std::size_t rows = 0;
  for (const TensorF32* p : parts) rows += p->shape[0];
  TensorF32 out({rows, parts[0]->shape[1]});
  float* dst = out.data.data();
  for (const TensorF32* p : parts) {
    std::copy(p->data.begin(), p->data.end(), dst);
    dst += p->numel();
  }
  return out;
}

struct HeadAttention {
  TensorF32 out;         // [tokens_per_frame x d_head]
  TensorF32 coarse;      // plan coarse scores
  std::vector<double> frame_scores;  // aligned with context frame ids
  double density = 0.0;
};

// One head's sparse attention for queries of frame `frame_id` over the given
// context frames (ascending ids, concatenated K/V in the same order).
HeadAttention head_attention(const StreamConfig& cfg, const TensorF32& q_h,
                             const std::vector<int>& ctx_ids, const TensorF32& K,
                             const TensorF32& V, const TokenGrid& grid_q) {
  const TokenGrid grid_k(ctx_ids, cfg.latent_rows, cfg.latent_cols);
  const BlockPartition part_q = partition_blocks(grid_q);
  const BlockPartition part_k = partition_blocks(grid_k);
  MaskMatrix mask =
      cfg.use_locality
          ? build_locality_mask(cfg.locality, grid_q.positions(), grid_k.positions())
          : MaskMatrix::all_allowed(grid_q.token_count(), grid_k.token_count());
  SparsePlan plan = plan_sparse(q_h, K, part_q, part_k, mask, cfg.topk);
  const float scale = 1.0f / std::sqrt(static_cast<float>(cfg.d_head));

  HeadAttention res;
  res.out = sparse_attention_exec(q_h, K, V, plan, mask, scale);
  res.frame_scores = frame_attention_mass(plan, grid_k);
  res.density = sparsity_report(plan, mask).density;
  res.coarse = std::move(plan.coarse_scores);
  return res;
}

}  // namespace

TensorF32 step(const StreamConfig& cfg, const ToyDiT& model, StreamState& state,
               const TensorF32& lr_clip, const TensorF32& noise, StepTrace* trace) {
  cfg.validate();
  VSR_REQUIRE(model.layers.size() == cfg.n_layers, ConfigError,
              "step: model/config layer mismatch");
  VSR_REQUIRE(noise.rank() == 3 && noise.shape[0] == cfg.latent_rows &&
                  noise.shape[1] == cfg.latent_cols && noise.shape[2] == cfg.model_dim(),
              ShapeError, "step: noise must be [rows x cols x model_dim]");
  state.cache.validate();

  const int t = state.t;
  const std::size_t N = cfg.tokens_per_frame(), D = cfg.model_dim();

  ProjInResult pr = project_clip(lr_clip, cfg.projin, model.projin, state.carry);
  state.carry = std::move(pr.carry);

  const TensorF32 x0 = frame_tokens(pr.embedding, noise);
  TensorF32 x = x0;

  const TokenGrid grid_q(std::vector<int>{t}, cfg.latent_rows, cfg.latent_cols);
  const std::vector<Position3D> pos_q = grid_q.positions();
  const RopeConfig rc = cfg.rope();

  std::vector<std::vector<TensorF32>> coarse(cfg.n_layers);
  double density_acc = 0.0;
  if (trace) trace->retained_per_layer.assign(cfg.n_layers, 0);

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerWeights& w = model.layers[l];
    const FrameKV kv = make_frame_kv(cfg, w, x0, t);
    for (std::size_t h = 0; h < cfg.n_heads; ++h)
      state.cache.append(l, h, t, kv.k[h], kv.v[h]);

    const TensorF32 xq = rms_norm(x, w.norm1_g);
    const TensorF32 qc = matmul(xq, w.wq);

    TensorF32 att({N, D});
    std::vector<std::vector<double>> scores(cfg.n_heads);
    coarse[l].reserve(cfg.n_heads);
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      const std::size_t c0 = h * cfg.d_head;
      const TensorF32 q_h =
          apply_rope(slice_cols(qc, c0, c0 + cfg.d_head), pos_q, rc);

      std::vector<int> ctx_ids;
      std::vector<const TensorF32*> kparts, vparts;
      for (const CachedFrame& f : state.cache.frames(l, h)) {
        ctx_ids.push_back(f.frame_id);
        kparts.push_back(&f.k);
        vparts.push_back(&f.v);
      }
      const TensorF32 K = concat_rows(kparts), V = concat_rows(vparts);

      HeadAttention ha = head_attention(cfg, q_h, ctx_ids, K, V, grid_q);
      paste_cols(att, ha.out, c0);
      scores[h] = std::move(ha.frame_scores);
      coarse[l].push_back(std::move(ha.coarse));
      density_acc += ha.density;
    }

    add_inplace(x, matmul(att, w.wo));
    TensorF32 h1 = matmul(rms_norm(x, w.norm2_g), w.w_in);
    silu_inplace(h1);
    add_inplace(x, matmul(h1, w.w_out));

    state.cache.evict(
        l, cfg.strategy == EvictStrategy::sliding_window ? std::vector<std::vector<double>>{}
                                                         : scores);
    if (trace) {
      std::size_t r = 0;
      for (std::size_t h = 0; h < cfg.n_heads; ++h)
        r = std::max(r, state.cache.retained(l, h));
      trace->retained_per_layer[l] = r;
    }
  }

  state.cache.validate();
  state.prior_coarse = std::move(coarse);
  state.t = t + 1;
  if (trace)
    trace->density = density_acc / static_cast<double>(cfg.n_layers * cfg.n_heads);

  return TensorF32({cfg.latent_rows, cfg.latent_cols, D}, std::move(x.data));
}

TensorF32 run_batch_causal(const StreamConfig& cfg, const ToyDiT& model,
                           const TensorF32& lr_frames, const TensorF32& noise,
                           int frame_id_offset) {
  cfg.validate();
  VSR_REQUIRE(cfg.strategy == EvictStrategy::sliding_window, ConfigError,
              "run_batch_causal: only the sliding window has a batch equivalent");
  VSR_REQUIRE(noise.rank() == 4, ShapeError,
              "run_batch_causal: noise must be [frames x rows x cols x model_dim]");
  const std::size_t T = noise.shape[0];
  VSR_REQUIRE(lr_frames.rank() == 4 && lr_frames.shape[0] == cfg.projin.clip_len * T,
              ShapeError, "run_batch_causal: LR frame count must be clip_len * frames");
  VSR_REQUIRE(frame_id_offset >= 0, ConfigError,
              "run_batch_causal: negative frame offset");

  const std::size_t N = cfg.tokens_per_frame(), D = cfg.model_dim();
  const std::size_t clip = cfg.projin.clip_len;
  const std::size_t H = lr_frames.shape[1], W = lr_frames.shape[2];

  // Proj-in over consecutive clips with the carry threaded from a cold start.
  std::vector<TensorF32> x0(T);
  ProjInCarry carry;
  for (std::size_t tau = 0; tau < T; ++tau) {
    TensorF32 lr_clip({clip, H, W, lr_frames.shape[3]});
    std::copy(lr_frames.data.begin() +
                  static_cast<std::ptrdiff_t>(tau * lr_clip.numel()),
              lr_frames.data.begin() +
                  static_cast<std::ptrdiff_t>((tau + 1) * lr_clip.numel()),
              lr_clip.data.begin());
    ProjInResult pr = project_clip(lr_clip, cfg.projin, model.projin, carry);
    carry = std::move(pr.carry);
    TensorF32 nz({cfg.latent_rows, cfg.latent_cols, D});
    std::copy(noise.data.begin() + static_cast<std::ptrdiff_t>(tau * nz.numel()),
              noise.data.begin() + static_cast<std::ptrdiff_t>((tau + 1) * nz.numel()),
              nz.data.begin());
    x0[tau] = frame_tokens(pr.embedding, nz);
  }

  std::vector<TensorF32> x = x0;
  const RopeConfig rc = cfg.rope();
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerWeights& w = model.layers[l];
    std::vector<FrameKV> kv(T);
    for (std::size_t tau = 0; tau < T; ++tau)
      kv[tau] = make_frame_kv(cfg, w, x0[tau], frame_id_offset + static_cast<int>(tau));

    for (std::size_t tau = 0; tau < T; ++tau) {
      const int fid = frame_id_offset + static_cast<int>(tau);
      const std::size_t first =
          tau >= cfg.window_frames ? tau - cfg.window_frames : 0;

      const TokenGrid grid_q(std::vector<int>{fid}, cfg.latent_rows,
                             cfg.latent_cols);
      const TensorF32 xq = rms_norm(x[tau], w.norm1_g);
      const TensorF32 qc = matmul(xq, w.wq);

      TensorF32 att({N, D});
      for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        const std::size_t c0 = h * cfg.d_head;
        const TensorF32 q_h =
            apply_rope(slice_cols(qc, c0, c0 + cfg.d_head), grid_q.positions(), rc);
        std::vector<int> ctx_ids;
        std::vector<const TensorF32*> kparts, vparts;
        for (std::size_t f = first; f <= tau; ++f) {
          ctx_ids.push_back(frame_id_offset + static_cast<int>(f));
          kparts.push_back(&kv[f].k[h]);
          vparts.push_back(&kv[f].v[h]);
        }
        const TensorF32 K = concat_rows(kparts), V = concat_rows(vparts);
        HeadAttention ha = head_attention(cfg, q_h, ctx_ids, K, V, grid_q);
        paste_cols(att, ha.out, c0);
      }

      add_inplace(x[tau], matmul(att, w.wo));
      TensorF32 h1 = matmul(rms_norm(x[tau], w.norm2_g), w.w_in);
      silu_inplace(h1);
      add_inplace(x[tau], matmul(h1, w.w_out));
    }
  }

  TensorF32 out({T, cfg.latent_rows, cfg.latent_cols, D});
  for (std::size_t tau = 0; tau < T; ++tau)
    std::copy(x[tau].data.begin(), x[tau].data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(tau * N * D));
  return out;
}

std::size_t lookahead_latency(const LatencyConfig& cfg) {
  if (cfg.mode == LatencyConfig::Mode::chunked) return cfg.chunk_size;
  return cfg.temporal_convs ? cfg.clip_len * 2 : cfg.clip_len;
}

}  // namespace vsr
