#include "vsr/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "vsr/attention.hpp"
#include "vsr/bench.hpp"
#include "vsr/decoder.hpp"
#include "vsr/losses.hpp"
#include "vsr/stream.hpp"

namespace vsr {

namespace {

std::string fmt_err(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

CheckResult make_result(const std::string& name, bool pass, double err,
                        const std::string& detail) {
  CheckResult r;
  r.name = name;
  r.pass = pass;
  r.max_err = err;
  r.detail = detail;
  return r;
}

// Small stream setup shared by the engine checks.
StreamConfig checks_stream_config(std::size_t window, EvictStrategy strategy) {
  StreamConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_head = 8;
  cfg.ffw_dim = 32;
  cfg.latent_rows = 4;
  cfg.latent_cols = 4;
  cfg.window_frames = window;
  cfg.strategy = strategy;
  cfg.topk = 2;
  cfg.projin.conv1_c = 8;
  cfg.projin.conv2_c = 12;
  cfg.projin.model_dim = cfg.model_dim();
  return cfg;
}

struct StreamInputs {
  TensorF32 lr;     // [4T x H x W x 3]
  TensorF32 noise;  // [T x rows x cols x D]
};

StreamInputs stream_inputs(const StreamConfig& cfg, std::size_t T,
                           std::uint64_t seed) {
  Rng rng(seed);
  StreamInputs in;
  in.lr = TensorF32::gaussian({4 * T, cfg.latent_rows * 8, cfg.latent_cols * 8, 3},
                              rng, 0.5f);
  in.noise = TensorF32::gaussian(
      {T, cfg.latent_rows, cfg.latent_cols, cfg.model_dim()}, rng);
  return in;
}

std::vector<TensorF32> drive_stream(const StreamConfig& cfg, const ToyDiT& model,
                                    const StreamInputs& in, std::size_t T) {
  StreamState st = StreamState::init(cfg);
  const std::size_t lr_per = in.lr.numel() / T;
  const std::size_t nz_per = in.noise.numel() / T;
  std::vector<TensorF32> outs;
  for (std::size_t t = 0; t < T; ++t) {
    TensorF32 clip({4, cfg.latent_rows * 8, cfg.latent_cols * 8, 3});
    std::copy(in.lr.data.begin() + static_cast<std::ptrdiff_t>(t * lr_per),
              in.lr.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * lr_per),
              clip.data.begin());
    TensorF32 nz({cfg.latent_rows, cfg.latent_cols, cfg.model_dim()});
    std::copy(in.noise.data.begin() + static_cast<std::ptrdiff_t>(t * nz_per),
              in.noise.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * nz_per),
              nz.data.begin());
    outs.push_back(step(cfg, model, st, clip, nz));
  }
  return outs;
}

}  // namespace

CheckResult check_sparse_vs_dense_saturated() {
  const std::size_t dims_f[4] = {1, 2, 3, 4};
  const std::size_t dims_s[3] = {8, 12, 16};
  double worst = 0.0;
  std::size_t fixtures = 0;
  Rng rng(401);
  for (std::size_t i = 0; i < 20; ++i) {
    const std::size_t f = dims_f[i % 4];
    const std::size_t rows = dims_s[i % 3];
    const std::size_t cols = dims_s[(i + 1) % 3];
    const TokenGrid grid(f, rows, cols);
    const std::size_t L = grid.token_count();
    const MaskMatrix mask = MaskMatrix::all_allowed(L, L);
    const float scale = 1.0f / std::sqrt(32.0f);
    const BlockPartition part = partition_blocks(grid);
    for (std::size_t h = 0; h < 4; ++h) {
      const TensorF32 q = TensorF32::gaussian({L, 32}, rng);
      const TensorF32 k = TensorF32::gaussian({L, 32}, rng);
      const TensorF32 v = TensorF32::gaussian({L, 32}, rng);
      const SparsePlan plan = plan_sparse(q, k, part, mask, part.block_num);
      const TensorF32 sparse = sparse_attention_exec(q, k, v, plan, mask, scale);
      const TensorF32 dense = dense_attention_oracle(q, k, v, mask, scale);
      worst = std::max(worst, static_cast<double>(max_abs_diff(sparse, dense)));
    }
    ++fixtures;
  }
  return make_result("sparse-vs-dense-saturated", worst < 1e-5, worst,
                     std::to_string(fixtures) + " fixtures x 4 heads, tol 1e-5");
}

CheckResult check_topk_selection_rules() {
  // Identical keys force coarse-score ties; selection must pick the lowest
  // key-block ids after the forced diagonal.
  const TokenGrid grid(8, 8, 8);  // 4 key blocks
  const std::size_t L = grid.token_count();
  TensorF32 q({L, 8});
  TensorF32 k = TensorF32::full({L, 8}, 0.5f);
  for (std::size_t i = 0; i < L; ++i) q.at(i, 0) = 1.0f;
  const MaskMatrix mask = MaskMatrix::all_allowed(L, L);
  const BlockPartition part = partition_blocks(grid);
  const SparsePlan tied = plan_sparse(q, k, part, mask, 2);
  bool ok = true;
  for (std::size_t qb = 0; qb < tied.part_q.block_num; ++qb) {
    std::vector<int> sel = tied.selected[qb];
    std::sort(sel.begin(), sel.end());
    std::vector<int> want{static_cast<int>(qb)};
    for (int cand = 0; static_cast<std::size_t>(want.size()) < 2; ++cand) {
      if (cand != static_cast<int>(qb)) want.push_back(cand);
      if (cand > static_cast<int>(tied.part_k.block_num)) break;
    }
    std::sort(want.begin(), want.end());
    ok = ok && sel == want;
  }
  // Saturation: k beyond the block count selects everything without error.
  const SparsePlan sat = plan_sparse(q, k, part, mask, 99);
  for (std::size_t qb = 0; qb < sat.part_q.block_num; ++qb)
    ok = ok && sat.selected[qb].size() == sat.part_k.block_num;
  return make_result("topk-selection-rules", ok, 0.0,
                     "tie -> lowest block id, diagonal forced, saturation clamps");
}

CheckResult check_flop_ratio_tracks_density() {
  const TokenGrid grid(4, 32, 64);  // 64 key blocks, 8192 tokens
  const std::size_t L = grid.token_count();
  Rng rng(402);
  const TensorF32 q = TensorF32::gaussian({L, 32}, rng);
  const TensorF32 k = TensorF32::gaussian({L, 32}, rng);
  const MaskMatrix mask = MaskMatrix::all_allowed(L, L);
  const BlockPartition part = partition_blocks(grid);
  const std::size_t kk = topk_for_density(0.136, part.block_num);
  const SparsePlan plan = plan_sparse(q, k, part, mask, kk);
  const SparsityReport rep = sparsity_report(plan, mask);
  const double gap = std::abs(rep.flop_ratio - rep.density);
  std::ostringstream detail;
  detail << "k=" << kk << " density=" << rep.density
         << " flop_ratio=" << rep.flop_ratio;
  return make_result("flop-ratio-tracks-density", gap < 0.01, gap, detail.str());
}

CheckResult check_sparse_speedup() {
  BenchConfig cfg;  // defaults: 4x32x64 grid = 8192 tokens, d_head 32
  cfg.reps = 5;
  cfg.warmup = 1;
  const std::size_t blocks =
      partition_blocks(TokenGrid(cfg.frames, cfg.rows, cfg.cols)).block_num;
  const std::vector<SparsityRow> rows =
      bench_sparsity(cfg, {topk_for_density(0.125, blocks)});
  const SparsityRow& r = rows.front();
  std::ostringstream detail;
  detail << "density=" << r.density << " dense=" << r.wall_ms_dense
         << "ms sparse=" << r.wall_ms_sparse << "ms speedup=" << r.speedup;
  return make_result("sparse-speedup-12.5pct", r.speedup >= 3.0, r.speedup,
                     detail.str());
}

CheckResult check_locality_offset_bounds() {
  const TokenGrid grid(2, 24, 24);
  const std::vector<Position3D> pos = grid.positions();
  std::size_t violations = 0;
  for (const LocalityWindow::Mode mode : {LocalityWindow::Mode::boundary_preserved,
                                          LocalityWindow::Mode::boundary_truncated}) {
    LocalityWindow win;
    win.mode = mode;
    win.extent_h = 7;
    win.extent_w = 9;
    win.frame_extent_h = 24;
    win.frame_extent_w = 24;
    const MaskMatrix m = build_locality_mask(win, pos);
    const int bh = mode == LocalityWindow::Mode::boundary_truncated
                       ? win.extent_h / 2
                       : win.extent_h - 1;
    const int bw = mode == LocalityWindow::Mode::boundary_truncated
                       ? win.extent_w / 2
                       : win.extent_w - 1;
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j)
        if (m.allowed(i, j) && (std::abs(pos[i].h - pos[j].h) > bh ||
                                std::abs(pos[i].w - pos[j].w) > bw))
          ++violations;
  }
  return make_result("locality-offset-bounds", violations == 0,
                     static_cast<double>(violations),
                     "exhaustive 2x24x24, both boundary modes");
}

CheckResult check_rope_shift_invariance() {
  RopeConfig rc = RopeConfig::split_default(32);
  Rng rng(403);
  double worst = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    for (int n = 0; n < 50; ++n) {
      const TensorF32 x = TensorF32::gaussian({1, 32}, rng);
      const TensorF32 y = TensorF32::gaussian({1, 32}, rng);
      Position3D p1{static_cast<int>(rng.gaussian_f(20.0f) + 50.0f) & 63,
                    static_cast<int>(rng.gaussian_f(20.0f) + 50.0f) & 63,
                    static_cast<int>(rng.gaussian_f(20.0f) + 50.0f) & 63};
      Position3D p2 = p1;
      const int delta = 1 + (n % 13);
      const int shift = 1 + (n % 29);
      Position3D s1 = p1, s2 = p2;
      if (axis == 0) {
        p2.t += delta;
        s1 = p1;
        s2 = p2;
        s1.t += shift;
        s2.t += shift;
      } else if (axis == 1) {
        p2.h += delta;
        s1 = p1;
        s2 = p2;
        s1.h += shift;
        s2.h += shift;
      } else {
        p2.w += delta;
        s1 = p1;
        s2 = p2;
        s1.w += shift;
        s2.w += shift;
      }
      const TensorF32 e1 = apply_rope(x, {p1}, rc);
      const TensorF32 e2 = apply_rope(y, {p2}, rc);
      const TensorF32 f1 = apply_rope(x, {s1}, rc);
      const TensorF32 f2 = apply_rope(y, {s2}, rc);
      double d0 = 0.0, d1 = 0.0;
      for (std::size_t i = 0; i < 32; ++i) {
        d0 += static_cast<double>(e1.data[i]) * e2.data[i];
        d1 += static_cast<double>(f1.data[i]) * f2.data[i];
      }
      worst = std::max(worst, std::abs(d0 - d1));
    }
  }
  return make_result("rope-shift-invariance", worst < 1e-4, worst,
                     "50 tuples per axis, tol 1e-4");
}

CheckResult check_rope_inverse() {
  const RopeConfig rc = RopeConfig::split_default(16);
  const TokenGrid grid(2, 3, 4);
  Rng rng(404);
  const TensorF32 x = TensorF32::gaussian({grid.token_count(), 16}, rng);
  const TensorF32 fwd = apply_rope(x, grid.positions(), rc);
  const TensorF32 back = apply_rope(fwd, grid.positions(), rc, true);
  const double err = max_abs_diff(back, x);
  return make_result("rope-inverse", err < 1e-5, err, "forward then invert");
}

CheckResult check_partition_structure() {
  const TokenGrid grid({0, 1, 2, 5, 6}, 10, 18);
  const BlockPartition part = partition_blocks(grid);
  bool ok = true;
  try {
    part.validate();
  } catch (const Error&) {
    ok = false;
  }
  for (std::size_t b = 1; b < part.block_num; ++b)
    ok = ok && part.block_keys[b - 1] < part.block_keys[b];
  std::size_t members = 0;
  for (const auto& toks : part.block_tokens) {
    ok = ok && !toks.empty();
    members += toks.size();
  }
  ok = ok && members == grid.token_count();
  return make_result("partition-structure", ok, 0.0,
                     "lexicographic keys, partial tiles keep real members");
}

CheckResult check_projin_stream_vs_batch() {
  ProjInConfig cfg;
  cfg.conv1_c = 8;
  cfg.conv2_c = 12;
  cfg.model_dim = 16;
  Rng rng(405);
  const ProjInWeights w = ProjInWeights::init(cfg, rng);
  const TensorF32 seq = TensorF32::gaussian({12, 32, 32, 3}, rng, 0.5f);
  const auto silu = [](TensorF32& t) {
    for (float& v : t.data) v = v / (1.0f + std::exp(-v));
  };

  // Whole-sequence reference composed from the public conv pieces.
  const TensorF32 shuffled = pixel_shuffle_2d(seq, 8);
  Conv3dResult c1 = causal_conv3d(shuffled, w.conv1, ConvCarry{});
  silu(c1.y);
  Conv3dResult c2 = causal_conv3d(c1.y, w.conv2, ConvCarry{});
  silu(c2.y);
  const std::size_t tokens = c2.y.shape[0] * c2.y.shape[1] * c2.y.shape[2];
  TensorF32 flat({tokens, cfg.conv2_c}, std::move(c2.y.data));
  TensorF32 ref = matmul(flat, w.mlp_w);
  for (std::size_t i = 0; i < tokens; ++i)
    for (std::size_t j = 0; j < cfg.model_dim; ++j) ref.at(i, j) += w.mlp_b.at(j);

  ProjInCarry carry;
  double err = 0.0;
  const std::size_t per_clip = 4 * 32 * 32 * 3;
  const std::size_t per_emb = 4 * 4 * cfg.model_dim;
  for (std::size_t c = 0; c < 3; ++c) {
    TensorF32 clip({4, 32, 32, 3});
    std::copy(seq.data.begin() + static_cast<std::ptrdiff_t>(c * per_clip),
              seq.data.begin() + static_cast<std::ptrdiff_t>((c + 1) * per_clip),
              clip.data.begin());
    ProjInResult r = project_clip(clip, cfg, w, carry);
    carry = std::move(r.carry);
    for (std::size_t i = 0; i < per_emb; ++i)
      err = std::max(err, static_cast<double>(std::abs(
                              r.embedding.data[i] - ref.data[c * per_emb + i])));
  }
  return make_result("projin-stream-vs-batch", err < 1e-6, err,
                     "3 streamed clips vs whole-sequence composition, tol 1e-6");
}

CheckResult check_projin_causality() {
  ProjInConfig cfg;
  cfg.conv1_c = 8;
  cfg.conv2_c = 12;
  cfg.model_dim = 16;
  Rng rng(406);
  ProjInWeights w = ProjInWeights::init(cfg, rng);
  TensorF32 seq = TensorF32::gaussian({12, 32, 32, 3}, rng, 0.5f);
  const auto run = [&](const TensorF32& s) {
    ProjInCarry carry;
    std::vector<TensorF32> outs;
    for (std::size_t c = 0; c < 3; ++c) {
      TensorF32 clip({4, 32, 32, 3});
      std::copy(s.data.begin() + static_cast<std::ptrdiff_t>(c * clip.numel()),
                s.data.begin() + static_cast<std::ptrdiff_t>((c + 1) * clip.numel()),
                clip.data.begin());
      ProjInResult r = project_clip(clip, cfg, w, carry);
      carry = std::move(r.carry);
      outs.push_back(std::move(r.embedding));
    }
    return outs;
  };
  const std::vector<TensorF32> base = run(seq);
  seq.data[2 * 4 * 32 * 32 * 3] += 3.0f;  // first sample of clip 2
  const std::vector<TensorF32> bent = run(seq);
  const bool ok = max_abs_diff(base[0], bent[0]) == 0.0f &&
                  max_abs_diff(base[1], bent[1]) == 0.0f &&
                  max_abs_diff(base[2], bent[2]) > 0.0f;
  return make_result("projin-causality", ok, 0.0,
                     "perturbed clip 2 leaves clips 0..1 bit-identical");
}

CheckResult check_conv_carry_alignment() {
  Rng rng(407);
  const Conv3dWeights cw = Conv3dWeights::init(3, 5, 3, 3, 3, 2, rng, 0.3f);
  const TensorF32 whole = TensorF32::gaussian({8, 12, 12, 3}, rng);
  const Conv3dResult batch = causal_conv3d(whole, cw, ConvCarry{});
  TensorF32 a({4, 12, 12, 3}), b({4, 12, 12, 3});
  std::copy(whole.data.begin(),
            whole.data.begin() + static_cast<std::ptrdiff_t>(a.numel()),
            a.data.begin());
  std::copy(whole.data.begin() + static_cast<std::ptrdiff_t>(a.numel()),
            whole.data.end(), b.data.begin());
  const Conv3dResult s1 = causal_conv3d(a, cw, ConvCarry{});
  const Conv3dResult s2 = causal_conv3d(b, cw, s1.carry);
  std::vector<float> streamed(s1.y.data);
  streamed.insert(streamed.end(), s2.y.data.begin(), s2.y.data.end());
  bool ok = streamed.size() == batch.y.numel();
  for (std::size_t i = 0; ok && i < streamed.size(); ++i)
    ok = streamed[i] == batch.y.data[i];
  return make_result("conv-carry-alignment", ok, 0.0,
                     "two streamed clips reproduce the batch pass bitwise");
}

CheckResult check_stream_vs_batch() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const StreamConfig cfg = checks_stream_config(12, EvictStrategy::sliding_window);
    const ToyDiT model = ToyDiT::init(cfg);
    const std::size_t T = 12;
    const StreamInputs in = stream_inputs(cfg, T, 900 + s);
    const std::vector<TensorF32> outs = drive_stream(cfg, model, in, T);
    const TensorF32 batch = run_batch_causal(cfg, model, in.lr, in.noise);
    const std::size_t per = cfg.tokens_per_frame() * cfg.model_dim();
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t i = 0; i < per; ++i)
        worst = std::max(worst, static_cast<double>(std::abs(
                                    batch.data[t * per + i] - outs[t].data[i])));
  }
  return make_result("stream-vs-batch", worst < 1e-5, worst,
                     "10 streams x 12 frames, W=12, tol 1e-5");
}

CheckResult check_stream_causality() {
  const StreamConfig cfg = checks_stream_config(3, EvictStrategy::sliding_window);
  const ToyDiT model = ToyDiT::init(cfg);
  const std::size_t T = 5;
  StreamInputs base = stream_inputs(cfg, T, 910);
  StreamInputs bent = base;
  const std::size_t lr_per = base.lr.numel() / T;
  const std::size_t nz_per = base.noise.numel() / T;
  bent.lr.data[3 * lr_per] += 2.0f;
  bent.noise.data[3 * nz_per] += 1.0f;
  const std::vector<TensorF32> a = drive_stream(cfg, model, base, T);
  const std::vector<TensorF32> b = drive_stream(cfg, model, bent, T);
  bool ok = true;
  for (std::size_t t = 0; t < 3; ++t) ok = ok && max_abs_diff(a[t], b[t]) == 0.0f;
  ok = ok && max_abs_diff(a[3], b[3]) > 0.0f;
  return make_result("stream-causality", ok, 0.0,
                     "perturbed frame 3 leaves frames 0..2 bit-identical");
}

CheckResult check_stream_truncated_window() {
  StreamConfig cfg = checks_stream_config(2, EvictStrategy::sliding_window);
  cfg.topk = 8;
  const ToyDiT model = ToyDiT::init(cfg);
  const std::size_t T = 5;
  const StreamInputs in = stream_inputs(cfg, T, 920);

  StreamState st = StreamState::init(cfg);
  const std::size_t lr_per = in.lr.numel() / T;
  const std::size_t nz_per = in.noise.numel() / T;
  TensorF32 last;
  for (std::size_t t = 0; t < T; ++t) {
    if (t == 2) reset_projin_carry(st);
    TensorF32 clip({4, cfg.latent_rows * 8, cfg.latent_cols * 8, 3});
    std::copy(in.lr.data.begin() + static_cast<std::ptrdiff_t>(t * lr_per),
              in.lr.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * lr_per),
              clip.data.begin());
    TensorF32 nz({cfg.latent_rows, cfg.latent_cols, cfg.model_dim()});
    std::copy(in.noise.data.begin() + static_cast<std::ptrdiff_t>(t * nz_per),
              in.noise.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * nz_per),
              nz.data.begin());
    last = step(cfg, model, st, clip, nz);
  }

  TensorF32 lr_tail({4 * 3, cfg.latent_rows * 8, cfg.latent_cols * 8, 3});
  std::copy(in.lr.data.begin() + static_cast<std::ptrdiff_t>(2 * lr_per),
            in.lr.data.end(), lr_tail.data.begin());
  TensorF32 nz_tail({3, cfg.latent_rows, cfg.latent_cols, cfg.model_dim()});
  std::copy(in.noise.data.begin() + static_cast<std::ptrdiff_t>(2 * nz_per),
            in.noise.data.end(), nz_tail.data.begin());
  const TensorF32 batch = run_batch_causal(cfg, model, lr_tail, nz_tail, 2);
  const std::size_t per = cfg.tokens_per_frame() * cfg.model_dim();
  double err = 0.0;
  for (std::size_t i = 0; i < per; ++i)
    err = std::max(err, static_cast<double>(
                            std::abs(batch.data[2 * per + i] - last.data[i])));
  return make_result("stream-truncated-window", err < 1e-5, err,
                     "W=2 frame 4 vs fresh batch over frames 2..4, tol 1e-5");
}

CheckResult check_evict_uniform_head_identity() {
  const StreamConfig cfg = checks_stream_config(3, EvictStrategy::uniform);
  const ToyDiT model = ToyDiT::init(cfg);
  const std::size_t T = 8;
  const StreamInputs in = stream_inputs(cfg, T, 930);
  StreamState st = StreamState::init(cfg);
  const std::size_t lr_per = in.lr.numel() / T;
  const std::size_t nz_per = in.noise.numel() / T;
  bool ok = true;
  for (std::size_t t = 0; t < T; ++t) {
    TensorF32 clip({4, cfg.latent_rows * 8, cfg.latent_cols * 8, 3});
    std::copy(in.lr.data.begin() + static_cast<std::ptrdiff_t>(t * lr_per),
              in.lr.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * lr_per),
              clip.data.begin());
    TensorF32 nz({cfg.latent_rows, cfg.latent_cols, cfg.model_dim()});
    std::copy(in.noise.data.begin() + static_cast<std::ptrdiff_t>(t * nz_per),
              in.noise.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * nz_per),
              nz.data.begin());
    step(cfg, model, st, clip, nz);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      const std::vector<int> head0 = st.cache.frame_ids(l, 0);
      ok = ok && head0.size() <= cfg.window_frames;
      for (std::size_t h = 1; h < cfg.n_heads; ++h)
        ok = ok && st.cache.frame_ids(l, h) == head0;
    }
  }
  return make_result("evict-uniform-head-identity", ok, 0.0,
                     "8 uniform-eviction steps, all layers head-identical");
}

CheckResult check_evict_sink_fixture() {
  // Sink-style importance: one head dumps its attention mass on frame 0.
  // Head-wise eviction must keep frame 0 there while dropping a fresher frame.
  KVCache cache(1, 2, 3, EvictStrategy::head_wise);
  Rng rng(931);
  for (int f = 0; f < 4; ++f)
    for (std::size_t h = 0; h < 2; ++h)
      cache.append(0, h, f, TensorF32::gaussian({16, 8}, rng),
                   TensorF32::gaussian({16, 8}, rng));
  const std::vector<std::vector<double>> scores{{0.97, 0.01, 0.01, 0.01},
                                                {0.02, 0.50, 0.24, 0.24}};
  cache.evict(0, scores);
  const std::vector<int> sink = cache.frame_ids(0, 0);
  const std::vector<int> flat = cache.frame_ids(0, 1);
  const bool keeps_sink =
      std::find(sink.begin(), sink.end(), 0) != sink.end() &&
      std::find(sink.begin(), sink.end(), 1) == sink.end();
  const bool other_drops_zero =
      std::find(flat.begin(), flat.end(), 0) == flat.end();
  const bool ok = keeps_sink && other_drops_zero;
  return make_result("evict-sink-fixture", ok, 0.0,
                     "sink head retains frame 0 and evicts fresher frame 1");
}

CheckResult check_cache_corruption_detected() {
  KVCache cache(1, 2, 4, EvictStrategy::uniform);
  Rng rng(932);
  for (int f = 0; f < 3; ++f)
    for (std::size_t h = 0; h < 2; ++h)
      cache.append(0, h, f, TensorF32::gaussian({16, 8}, rng),
                   TensorF32::gaussian({16, 8}, rng));
  bool before = true;
  try {
    cache.validate();
  } catch (const Error&) {
    before = false;
  }
  cache.corrupt_head_sets(0);
  bool detected = false;
  try {
    cache.validate();
  } catch (const InvariantError&) {
    detected = true;
  }
  return make_result("cache-corruption-detected", before && detected, 0.0,
                     "validate raises after the head sets are desynchronized");
}

CheckResult check_lookahead_latency() {
  LatencyConfig deflt;
  LatencyConfig chunked;
  chunked.mode = LatencyConfig::Mode::chunked;
  chunked.chunk_size = 32;
  LatencyConfig tight;
  tight.clip_len = 1;
  tight.temporal_convs = false;
  const bool ok = lookahead_latency(deflt) == 8 && lookahead_latency(chunked) == 32 &&
                  lookahead_latency(tight) == 1;
  return make_result("lookahead-latency", ok, 0.0,
                     "default 8, chunk-32 32, single-frame no-conv 1");
}

namespace {

TensorF32 fd_gradient_checks(const std::function<double(const TensorF32&)>& f,
                             const TensorF32& x, float h) {
  TensorF32 g(x.shape);
  TensorF32 probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    probe.data[i] = x.data[i] + h;
    const double up = f(probe);
    probe.data[i] = x.data[i] - h;
    const double dn = f(probe);
    probe.data[i] = x.data[i];
    g.data[i] = static_cast<float>((up - dn) / (2.0 * h));
  }
  return g;
}

double rel_grad_err(const TensorF32& got, const TensorF32& fd) {
  double num = 0.0, den = 1e-8;
  for (std::size_t i = 0; i < got.numel(); ++i) {
    num = std::max(num, static_cast<double>(std::abs(got.data[i] - fd.data[i])));
    den = std::max(den, static_cast<double>(std::abs(fd.data[i])));
  }
  return num / den;
}

}  // namespace

CheckResult check_flow_matching_grad() {
  Rng rng(940);
  double worst = 0.0;
  for (int n = 0; n < 10; ++n) {
    const TensorF32 v = TensorF32::gaussian({3, 5}, rng);
    const TensorF32 z0 = TensorF32::gaussian({3, 5}, rng);
    const TensorF32 z1 = TensorF32::gaussian({3, 5}, rng);
    TensorF32 grad;
    flow_matching_loss(v, z0, z1, &grad);
    const TensorF32 fd = fd_gradient_checks(
        [&](const TensorF32& p) { return flow_matching_loss(p, z0, z1); }, v, 1e-2f);
    worst = std::max(worst, rel_grad_err(grad, fd));
  }
  return make_result("flow-matching-grad", worst < 1e-4, worst,
                     "10 fixtures vs central differences, tol 1e-4");
}

CheckResult check_reconstruction_grad() {
  Rng rng(941);
  GradMagPerceptual perc;
  double worst = 0.0;
  for (int n = 0; n < 10; ++n) {
    const TensorF32 x = TensorF32::gaussian({1, 8, 8, 2}, rng);
    const TensorF32 gt = TensorF32::gaussian({1, 8, 8, 2}, rng);
    TensorF32 grad;
    reconstruction_loss(x, gt, perc, &grad);
    const TensorF32 fd = fd_gradient_checks(
        [&](const TensorF32& p) { return reconstruction_loss(p, gt, perc); }, x,
        1e-2f);
    worst = std::max(worst, rel_grad_err(grad, fd));
  }
  return make_result("reconstruction-grad", worst < 1e-4, worst,
                     "10 fixtures vs central differences, tol 1e-4");
}

CheckResult check_distill_grad() {
  Rng rng(942);
  GradMagPerceptual perc;
  double worst = 0.0;
  for (int n = 0; n < 10; ++n) {
    const TensorF32 x = TensorF32::gaussian({1, 8, 8, 2}, rng);
    const TensorF32 gt = TensorF32::gaussian({1, 8, 8, 2}, rng);
    const TensorF32 wan = TensorF32::gaussian({1, 8, 8, 2}, rng);
    TensorF32 grad;
    decoder_distill_loss(x, gt, wan, perc, &grad);
    const TensorF32 fd = fd_gradient_checks(
        [&](const TensorF32& p) { return decoder_distill_loss(p, gt, wan, perc); },
        x, 1e-2f);
    worst = std::max(worst, rel_grad_err(grad, fd));
  }
  return make_result("distill-grad", worst < 1e-4, worst,
                     "10 fixtures vs central differences, tol 1e-4");
}

CheckResult check_dmd_gaussian() {
  const double mu = 0.8, sigma_f = 1.5;
  NoiseSchedule sched;
  (void)sched;
  const auto scores = [&](double mean, double sf) {
    ScorePair sp;
    sp.real_score_fn = [](const TensorF32& z, double t) {
      const double a = NoiseSchedule::alpha(t), s = NoiseSchedule::sigma(t);
      TensorF32 out(z.shape);
      for (std::size_t i = 0; i < z.numel(); ++i)
        out.data[i] = static_cast<float>(-z.data[i] / (a * a + s * s));
      return out;
    };
    sp.fake_score_fn = [mean, sf](const TensorF32& z, double t) {
      const double a = NoiseSchedule::alpha(t), s = NoiseSchedule::sigma(t);
      const double var = a * a * sf * sf + s * s;
      TensorF32 out(z.shape);
      for (std::size_t i = 0; i < z.numel(); ++i)
        out.data[i] = static_cast<float>(-(z.data[i] - a * mean) / var);
      return out;
    };
    return sp;
  };

  // Matched variances: one sample is already exact.
  DmdConfig one;
  one.n_samples = 1;
  one.seed = 5;
  const TensorF32 z1 = TensorF32::full({8}, 0.3f);
  const TensorF32 g1 = dmd_gradient(z1, scores(mu, 1.0), one);
  double exact_err = 0.0;
  for (const float v : g1.data)
    exact_err = std::max(exact_err, std::abs(static_cast<double>(v) - mu));

  // Mismatched variances: unbiased over generator samples from the fake
  // marginal; 1e4 draws land within 5%.
  Rng rng(943);
  TensorF32 z({10000});
  for (float& v : z.data)
    v = static_cast<float>(mu + sigma_f * rng.gaussian());
  DmdConfig mc;
  mc.n_samples = 4;
  mc.seed = 99;
  const TensorF32 g = dmd_gradient(z, scores(mu, sigma_f), mc);
  double mean = 0.0;
  for (const float v : g.data) mean += v;
  mean /= static_cast<double>(g.numel());
  const double mc_err = std::abs(mean - mu) / std::abs(mu);

  const bool ok = exact_err < 1e-5 && mc_err < 0.05;
  std::ostringstream detail;
  detail << "matched exact_err=" << fmt_err(exact_err)
         << " mismatched rel_err=" << fmt_err(mc_err) << " at 1e4 samples";
  return make_result("dmd-gaussian", ok, std::max(exact_err, mc_err), detail.str());
}

CheckResult check_schedule_bounds() {
  bool ok = true;
  const double t = 0.4;
  ok = ok && NoiseSchedule::alpha(t) == 1.0 - t && NoiseSchedule::sigma(t) == t;
  const double w = NoiseSchedule::weight(t);
  const double a = 1.0 - t;
  ok = ok && std::abs(w - (a * a + t * t) / (a * a)) < 1e-12;
  bool low = false, high = false;
  try {
    NoiseSchedule::require_valid(0.01);
  } catch (const ConfigError&) {
    low = true;
  }
  try {
    NoiseSchedule::require_valid(0.99);
  } catch (const ConfigError&) {
    high = true;
  }
  return make_result("schedule-bounds", ok && low && high, 0.0,
                     "affine schedule, weight identity, [0.05, 0.95] enforced");
}

CheckResult check_decoder_shape_law() {
  Rng rng(950);
  bool ok = true;
  for (int n = 0; n < 10; ++n) {
    DecoderConfig cfg;
    cfg.latent_channels = 3 + static_cast<std::size_t>(n % 3);
    cfg.stage_channels = {static_cast<std::size_t>(6 + n % 3), 5, 4};
    cfg.cond_width = 4;
    cfg.conditional = n % 2 == 0;
    const std::size_t T = 1 + static_cast<std::size_t>(n % 2);
    const std::size_t h = 2 + static_cast<std::size_t>(n % 3);
    const std::size_t w = 2 + static_cast<std::size_t>((n + 1) % 3);
    DecoderWeights dw = DecoderWeights::init(cfg, rng);
    const TensorF32 lat = TensorF32::gaussian({T, h, w, cfg.latent_channels}, rng);
    const TensorF32 lr = TensorF32::gaussian({4 * T, 8 * h, 8 * w, 3}, rng);
    const TensorF32 out = decode(lat, lr, cfg, dw);
    const std::vector<std::size_t> want{4 * T, 8 * h, 8 * w, cfg.out_channels};
    ok = ok && out.shape == want;
  }
  return make_result("decoder-shape-law", ok, 0.0,
                     "10 configs: x4 temporal, x8 spatial, out_channels");
}

CheckResult check_decoder_parity() {
  double worst = 0.0;
  for (int n = 0; n < 2; ++n) {
    DecoderConfig cfg;
    if (n == 1) {
      cfg.latent_channels = 4;
      cfg.stage_channels = {8, 6, 5};
      cfg.cond_width = 4;
    }
    const DecoderConfig twin = unconditional_parity_config(cfg);
    const double a = static_cast<double>(param_count(cfg));
    const double b = static_cast<double>(param_count(twin));
    worst = std::max(worst, std::abs(a - b) / a);
  }
  return make_result("decoder-parity", worst < 0.01, worst,
                     "unconditional twin within 1% of the parameter budget");
}

CheckResult check_decoder_lr_sensitivity() {
  std::size_t misclassified = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    DecoderConfig cond;
    cond.latent_channels = 4;
    cond.stage_channels = {8, 6, 5};
    cond.cond_width = 4;
    const DecoderConfig uncond = unconditional_parity_config(cond);
    Rng rng(960 + s);
    const DecoderWeights wc = DecoderWeights::init(cond, rng);
    const DecoderWeights wu = DecoderWeights::init(uncond, rng);
    const TensorF32 lat = TensorF32::gaussian({1, 3, 3, 4}, rng);
    const TensorF32 lr = TensorF32::gaussian({4, 24, 24, 3}, rng);
    TensorF32 lr2 = lr;
    for (float& v : lr2.data) v += 0.5f;
    const auto classify = [&](const DecoderConfig& cfg, const DecoderWeights& w) {
      const TensorF32 a = decode(lat, lr, cfg, w);
      const TensorF32 b = decode(lat, lr2, cfg, w);
      return max_abs_diff(a, b) > 0.0f;  // true: responds to the LR stream
    };
    if (!classify(cond, wc)) ++misclassified;
    if (classify(uncond, wu)) ++misclassified;
  }
  return make_result("decoder-lr-sensitivity", misclassified == 0,
                     static_cast<double>(misclassified),
                     "10 seeds, conditional vs parity twin, zero misreads");
}

CheckResult check_decoder_causality() {
  DecoderConfig cfg;
  cfg.latent_channels = 4;
  cfg.stage_channels = {8, 6, 5};
  cfg.cond_width = 4;
  Rng rng(961);
  const DecoderWeights w = DecoderWeights::init(cfg, rng);
  const TensorF32 lat = TensorF32::gaussian({3, 3, 3, 4}, rng);
  const TensorF32 lr = TensorF32::gaussian({12, 24, 24, 3}, rng);
  TensorF32 lat2 = lat;
  lat2.data[3 * 3 * 4] += 1.0f;  // latent frame 1
  TensorF32 lr2 = lr;
  lr2.data[4 * 24 * 24 * 3] += 1.0f;  // pixel frame 4 (first of clip 1)
  const TensorF32 a = decode(lat, lr, cfg, w);
  const TensorF32 b = decode(lat2, lr2, cfg, w);
  const std::size_t per = 24 * 24 * 3;
  double pre = 0.0, post = 0.0;
  for (std::size_t i = 0; i < 4 * per; ++i)
    pre = std::max(pre, static_cast<double>(std::abs(a.data[i] - b.data[i])));
  for (std::size_t i = 4 * per; i < a.numel(); ++i)
    post = std::max(post, static_cast<double>(std::abs(a.data[i] - b.data[i])));
  return make_result("decoder-causality", pre == 0.0 && post > 0.0, pre,
                     "perturbed latent frame 1 leaves pixel frames 0..3 intact");
}

CheckResult check_decoder_zero_weights() {
  DecoderConfig cfg;
  cfg.latent_channels = 4;
  cfg.stage_channels = {8, 6, 5};
  cfg.cond_width = 4;
  const DecoderWeights w = DecoderWeights::zeros(cfg);
  Rng rng(962);
  const TensorF32 lat = TensorF32::gaussian({1, 3, 3, 4}, rng);
  const TensorF32 lr = TensorF32::gaussian({4, 24, 24, 3}, rng);
  const double err = max_abs(decode(lat, lr, cfg, w));
  return make_result("decoder-zero-weights", err == 0.0, err,
                     "zero weights produce an exactly zero reconstruction");
}

std::vector<CheckResult> run_all_checks(bool include_slow) {
  std::vector<CheckResult> results;
  results.push_back(check_sparse_vs_dense_saturated());
  results.push_back(check_topk_selection_rules());
  results.push_back(check_flop_ratio_tracks_density());
  results.push_back(check_locality_offset_bounds());
  results.push_back(check_rope_shift_invariance());
  results.push_back(check_rope_inverse());
  results.push_back(check_partition_structure());
  results.push_back(check_projin_stream_vs_batch());
  results.push_back(check_projin_causality());
  results.push_back(check_conv_carry_alignment());
  results.push_back(check_stream_vs_batch());
  results.push_back(check_stream_causality());
  results.push_back(check_stream_truncated_window());
  results.push_back(check_evict_uniform_head_identity());
  results.push_back(check_evict_sink_fixture());
  results.push_back(check_cache_corruption_detected());
  results.push_back(check_lookahead_latency());
  results.push_back(check_flow_matching_grad());
  results.push_back(check_reconstruction_grad());
  results.push_back(check_distill_grad());
  results.push_back(check_dmd_gaussian());
  results.push_back(check_schedule_bounds());
  results.push_back(check_decoder_shape_law());
  results.push_back(check_decoder_parity());
  results.push_back(check_decoder_lr_sensitivity());
  results.push_back(check_decoder_causality());
  results.push_back(check_decoder_zero_weights());
  if (include_slow) results.push_back(check_sparse_speedup());
  return results;
}

}  // namespace vsr
