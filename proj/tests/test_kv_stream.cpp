#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "vsr/stream.hpp"

using namespace vsr;

namespace {

TensorF32 kv_mat(Rng& rng) { return TensorF32::gaussian({16, 8}, rng); }

KVCache filled_cache(EvictStrategy strategy, std::size_t W, int frames,
                     std::size_t layers = 1, std::size_t heads = 2) {
  KVCache c(layers, heads, W, strategy);
  Rng rng(50);
  for (int f = 0; f < frames; ++f)
    for (std::size_t l = 0; l < layers; ++l)
      for (std::size_t h = 0; h < heads; ++h) c.append(l, h, f, kv_mat(rng), kv_mat(rng));
  return c;
}

// Minimal stream configuration sized for fast exact checks.
StreamConfig small_stream(std::size_t W, EvictStrategy s) {
  StreamConfig cfg;
  cfg.n_layers = 3;
  cfg.n_heads = 2;
  cfg.d_head = 8;
  cfg.ffw_dim = 32;
  cfg.latent_rows = 4;
  cfg.latent_cols = 4;
  cfg.window_frames = W;
  cfg.strategy = s;
  cfg.topk = 2;
  cfg.projin.conv1_c = 8;
  cfg.projin.conv2_c = 12;
  cfg.projin.model_dim = cfg.model_dim();
  return cfg;
}

struct StreamRun {
  std::vector<TensorF32> outputs;
  TensorF32 lr_frames;  // the whole sequence, for batch reference
  TensorF32 noise;      // [T x rows x cols x D]
};

StreamRun run_stream(const StreamConfig& cfg, const ToyDiT& model, std::size_t T,
                     std::uint64_t data_seed, int perturb_frame = -1,
                     int reset_before = -1) {
  Rng rng(data_seed);
  const std::size_t H = cfg.latent_rows * 8, W = cfg.latent_cols * 8;
  StreamRun run;
  run.lr_frames = TensorF32::gaussian({4 * T, H, W, 3}, rng, 0.5f);
  run.noise = TensorF32::gaussian({T, cfg.latent_rows, cfg.latent_cols, cfg.model_dim()},
                                  rng, 1.0f);
  if (perturb_frame >= 0) {
    const std::size_t off = static_cast<std::size_t>(perturb_frame) * 4 * H * W * 3;
    run.lr_frames.data[off] += 2.0f;
    const std::size_t noff = static_cast<std::size_t>(perturb_frame) *
                             cfg.tokens_per_frame() * cfg.model_dim();
    run.noise.data[noff] += 1.0f;
  }

  StreamState st = StreamState::init(cfg);
  for (std::size_t t = 0; t < T; ++t) {
    if (static_cast<int>(t) == reset_before) reset_projin_carry(st);
    TensorF32 clip({4, H, W, 3});
    std::copy(run.lr_frames.data.begin() + static_cast<std::ptrdiff_t>(t * clip.numel()),
              run.lr_frames.data.begin() +
                  static_cast<std::ptrdiff_t>((t + 1) * clip.numel()),
              clip.data.begin());
    TensorF32 nz({cfg.latent_rows, cfg.latent_cols, cfg.model_dim()});
    std::copy(run.noise.data.begin() + static_cast<std::ptrdiff_t>(t * nz.numel()),
              run.noise.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * nz.numel()),
              nz.data.begin());
    run.outputs.push_back(step(cfg, model, st, clip, nz));
  }
  return run;
}

}  // namespace

TEST_CASE("cache append bookkeeping and ordering") {
  KVCache c = filled_cache(EvictStrategy::sliding_window, 8, 3);
  CHECK(c.retained(0, 0) == 3);
  CHECK(c.frame_ids(0, 1) == std::vector<int>{0, 1, 2});
  Rng rng(1);
  CHECK_THROWS_AS(c.append(0, 0, 2, kv_mat(rng), kv_mat(rng)), InvariantError);
  CHECK_THROWS_AS(c.append(5, 0, 9, kv_mat(rng), kv_mat(rng)), ShapeError);
}

TEST_CASE("sliding eviction keeps the trailing window") {
  KVCache c = filled_cache(EvictStrategy::sliding_window, 3, 5);
  c.evict(0, {});
  for (std::size_t h = 0; h < 2; ++h)
    CHECK(c.frame_ids(0, h) == std::vector<int>{2, 3, 4});
  c.validate();
}

TEST_CASE("eviction below budget is a no-op for every strategy") {
  for (EvictStrategy s : {EvictStrategy::sliding_window, EvictStrategy::uniform,
                          EvictStrategy::head_wise}) {
    KVCache c = filled_cache(s, 4, 3);
    c.evict(0, {});  // scored strategies skip the score requirement when under budget
    for (std::size_t h = 0; h < 2; ++h)
      CHECK(c.frame_ids(0, h) == std::vector<int>{0, 1, 2});
  }
}

TEST_CASE("uniform eviction with sink-style importance keeps frame 0") {
  KVCache c = filled_cache(EvictStrategy::uniform, 3, 4);
  const std::vector<std::vector<double>> scores{{10.0, 0.1, 0.2, 0.3},
                                                {9.0, 0.2, 0.1, 0.4}};
  c.evict(0, scores);
  for (std::size_t h = 0; h < 2; ++h)
    CHECK(c.frame_ids(0, h) == std::vector<int>{0, 2, 3});
  c.validate();
}

TEST_CASE("uniform eviction decides on the cross-head sum") {
  KVCache c = filled_cache(EvictStrategy::uniform, 3, 4);
  // Head 0 dislikes frame 1, head 1 dislikes frame 0; the sum dooms frame 2.
  const std::vector<std::vector<double>> scores{{5.0, 0.5, 1.0, 9.0},
                                                {0.5, 5.0, 1.0, 9.0}};
  c.evict(0, scores);
  for (std::size_t h = 0; h < 2; ++h)
    CHECK(c.frame_ids(0, h) == std::vector<int>{0, 1, 3});
}

TEST_CASE("head-wise eviction may retain different frames per head") {
  KVCache c = filled_cache(EvictStrategy::head_wise, 3, 4);
  const std::vector<std::vector<double>> scores{{10.0, 0.1, 1.0, 1.0},
                                                {0.1, 10.0, 1.0, 1.0}};
  c.evict(0, scores);
  CHECK(c.frame_ids(0, 0) == std::vector<int>{0, 2, 3});
  CHECK(c.frame_ids(0, 1) == std::vector<int>{1, 2, 3});
  c.validate();
}

TEST_CASE("newest frame survives even with the lowest score") {
  KVCache c = filled_cache(EvictStrategy::uniform, 2, 4);
  const std::vector<std::vector<double>> scores{{5.0, 4.0, 3.0, 0.0},
                                                {5.0, 4.0, 3.0, 0.0}};
  c.evict(0, scores);
  for (std::size_t h = 0; h < 2; ++h) {
    const std::vector<int> ids = c.frame_ids(0, h);
    CHECK(ids.size() == 2);
    CHECK(ids.back() == 3);
  }
}

TEST_CASE("score ties evict the older frame first") {
  KVCache c = filled_cache(EvictStrategy::uniform, 2, 4);
  const std::vector<std::vector<double>> scores{{1.0, 1.0, 1.0, 1.0},
                                                {1.0, 1.0, 1.0, 1.0}};
  c.evict(0, scores);
  for (std::size_t h = 0; h < 2; ++h)
    CHECK(c.frame_ids(0, h) == std::vector<int>{2, 3});
}

TEST_CASE("scored strategies demand importance when over budget") {
  KVCache c = filled_cache(EvictStrategy::uniform, 2, 4);
  CHECK_THROWS_AS(c.evict(0, {}), ConfigError);
  KVCache h = filled_cache(EvictStrategy::head_wise, 2, 4);
  CHECK_THROWS_AS(h.evict(0, {{1.0, 2.0, 3.0, 4.0}}), ConfigError);  // one head missing
}

TEST_CASE("corrupted head sets fail validation") {
  KVCache c = filled_cache(EvictStrategy::uniform, 4, 3);
  c.validate();
  CHECK_FALSE(c.corrupted());
  c.corrupt_head_sets(0);
  CHECK(c.corrupted());
  CHECK_THROWS_AS(c.validate(), InvariantError);
}

TEST_CASE("frame mass follows the coarse softmax and splits inside blocks") {
  // Context frames 0 and 2 occupy different temporal block rows.
  const TokenGrid grid({0, 2}, 8, 8);
  SparsePlan plan;
  plan.part_q = partition_blocks(TokenGrid({4}, 8, 8));
  plan.part_k = partition_blocks(grid);
  REQUIRE(plan.part_k.block_num == 2);
  plan.coarse_scores = TensorF32({1, 2});
  plan.coarse_scores.at(0, 0) = std::log(3.0f);
  plan.coarse_scores.at(0, 1) = 0.0f;
  plan.coarse_allowed = MaskMatrix::all_allowed(1, 2);

  const std::vector<double> mass = frame_attention_mass(plan, grid);
  REQUIRE(mass.size() == 2);
  CHECK(mass[0] == doctest::Approx(0.75));
  CHECK(mass[1] == doctest::Approx(0.25));

  // Frames 0 and 1 share one temporal block row: the mass splits evenly.
  const TokenGrid shared({0, 1}, 8, 8);
  SparsePlan plan2;
  plan2.part_q = plan.part_q;
  plan2.part_k = partition_blocks(shared);
  REQUIRE(plan2.part_k.block_num == 1);
  plan2.coarse_scores = TensorF32::full({1, 1}, 0.0f);
  plan2.coarse_allowed = MaskMatrix::all_allowed(1, 1);
  const std::vector<double> mass2 = frame_attention_mass(plan2, shared);
  CHECK(mass2[0] == doctest::Approx(0.5));
  CHECK(mass2[1] == doctest::Approx(0.5));
}

TEST_CASE("stream config validation") {
  StreamConfig cfg = small_stream(4, EvictStrategy::sliding_window);
  cfg.projin.model_dim = 99;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_stream(4, EvictStrategy::sliding_window);
  cfg.n_layers = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_stream(4, EvictStrategy::sliding_window);
  cfg.use_locality = true;
  cfg.locality = make_stream_locality(cfg, LocalityWindow::Mode::boundary_truncated, 3, 3);
  CHECK_NOTHROW(cfg.validate());
  cfg.locality.frame_extent_h = 7;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("identical streams produce identical bits") {
  const StreamConfig cfg = small_stream(3, EvictStrategy::sliding_window);
  const ToyDiT model = ToyDiT::init(cfg);
  const StreamRun a = run_stream(cfg, model, 5, 77);
  const StreamRun b = run_stream(cfg, model, 5, 77);
  for (std::size_t t = 0; t < 5; ++t)
    CHECK(max_abs_diff(a.outputs[t], b.outputs[t]) == 0.0f);
}

TEST_CASE("wide window streaming equals the batch causal run") {
  for (bool locality : {false, true}) {
    StreamConfig cfg = small_stream(10, EvictStrategy::sliding_window);
    if (locality) {
      cfg.use_locality = true;
      cfg.locality =
          make_stream_locality(cfg, LocalityWindow::Mode::boundary_truncated, 3, 3);
    }
    const ToyDiT model = ToyDiT::init(cfg);
    const std::size_t T = 6;
    const StreamRun run = run_stream(cfg, model, T, 91 + (locality ? 1 : 0));
    const TensorF32 batch = run_batch_causal(cfg, model, run.lr_frames, run.noise);
    const std::size_t per = cfg.tokens_per_frame() * cfg.model_dim();
    for (std::size_t t = 0; t < T; ++t) {
      float err = 0.0f;
      for (std::size_t i = 0; i < per; ++i)
        err = std::max(err,
                       std::abs(batch.data[t * per + i] - run.outputs[t].data[i]));
      CHECK(err < 1e-5f);
    }
  }
}

TEST_CASE("windowed stream frame matches a fresh truncated batch run") {
  const std::size_t W = 2;
  StreamConfig cfg = small_stream(W, EvictStrategy::sliding_window);
  cfg.topk = 8;  // saturate selection so the window is the binding constraint
  const ToyDiT model = ToyDiT::init(cfg);
  const std::size_t T = 5;
  // Proj-in carry reset aligned with the truncation boundary (frame 2).
  const StreamRun run = run_stream(cfg, model, T, 17, -1, 2);

  // Batch over frames {2,3,4} with absolute ids preserved.
  const std::size_t H = cfg.latent_rows * 8, Wpx = cfg.latent_cols * 8;
  const std::size_t lr_per = 4 * H * Wpx * 3;
  const std::size_t nz_per = cfg.tokens_per_frame() * cfg.model_dim();
  TensorF32 lr_tail({4 * 3, H, Wpx, 3});
  std::copy(run.lr_frames.data.begin() + static_cast<std::ptrdiff_t>(2 * lr_per),
            run.lr_frames.data.end(), lr_tail.data.begin());
  TensorF32 nz_tail({3, cfg.latent_rows, cfg.latent_cols, cfg.model_dim()});
  std::copy(run.noise.data.begin() + static_cast<std::ptrdiff_t>(2 * nz_per),
            run.noise.data.end(), nz_tail.data.begin());
  const TensorF32 batch = run_batch_causal(cfg, model, lr_tail, nz_tail, 2);

  float err = 0.0f;
  for (std::size_t i = 0; i < nz_per; ++i)
    err = std::max(err, std::abs(batch.data[2 * nz_per + i] - run.outputs[4].data[i]));
  CHECK(err < 1e-5f);

  // The window genuinely truncates: a wide-window run diverges at frame 4.
  StreamConfig wide = cfg;
  wide.window_frames = 10;
  const StreamRun full = run_stream(wide, model, T, 17, -1, 2);
  CHECK(max_abs_diff(full.outputs[4], run.outputs[4]) > 1e-4f);
}

TEST_CASE("perturbing frame t leaves all earlier outputs bit-identical") {
  const StreamConfig cfg = small_stream(3, EvictStrategy::sliding_window);
  const ToyDiT model = ToyDiT::init(cfg);
  const std::size_t T = 5;
  const StreamRun base = run_stream(cfg, model, T, 23);
  const StreamRun bent = run_stream(cfg, model, T, 23, 3);
  for (std::size_t t = 0; t < 3; ++t)
    CHECK(max_abs_diff(base.outputs[t], bent.outputs[t]) == 0.0f);
  CHECK(max_abs_diff(base.outputs[3], bent.outputs[3]) > 0.0f);
}

TEST_CASE("uniform strategy keeps head-identical retained sets while streaming") {
  StreamConfig cfg = small_stream(3, EvictStrategy::uniform);
  const ToyDiT model = ToyDiT::init(cfg);
  Rng rng(5);
  StreamState st = StreamState::init(cfg);
  CHECK(st.prior_coarse.empty());
  for (std::size_t t = 0; t < 7; ++t) {
    const TensorF32 clip =
        TensorF32::gaussian({4, cfg.latent_rows * 8, cfg.latent_cols * 8, 3}, rng, 0.5f);
    const TensorF32 nz = TensorF32::gaussian(
        {cfg.latent_rows, cfg.latent_cols, cfg.model_dim()}, rng);
    StepTrace trace;
    step(cfg, model, st, clip, nz, &trace);
    CHECK_FALSE(st.prior_coarse.empty());
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      const std::vector<int> head0 = st.cache.frame_ids(l, 0);
      CHECK(head0.size() <= cfg.window_frames);
      for (std::size_t h = 1; h < cfg.n_heads; ++h)
        CHECK(st.cache.frame_ids(l, h) == head0);
      CHECK(trace.retained_per_layer[l] <= cfg.window_frames);
    }
    CHECK(trace.density > 0.0);
    CHECK(trace.density <= 1.0);
  }
}

TEST_CASE("head-wise strategy streams within budget and validates") {
  StreamConfig cfg = small_stream(3, EvictStrategy::head_wise);
  const ToyDiT model = ToyDiT::init(cfg);
  Rng rng(6);
  StreamState st = StreamState::init(cfg);
  for (std::size_t t = 0; t < 6; ++t) {
    const TensorF32 clip =
        TensorF32::gaussian({4, cfg.latent_rows * 8, cfg.latent_cols * 8, 3}, rng, 0.5f);
    const TensorF32 nz = TensorF32::gaussian(
        {cfg.latent_rows, cfg.latent_cols, cfg.model_dim()}, rng);
    step(cfg, model, st, clip, nz);
    st.cache.validate();
    for (std::size_t l = 0; l < cfg.n_layers; ++l)
      for (std::size_t h = 0; h < cfg.n_heads; ++h)
        CHECK(st.cache.retained(l, h) <= cfg.window_frames);
  }
}

TEST_CASE("batch reference rejects scored strategies") {
  StreamConfig cfg = small_stream(3, EvictStrategy::uniform);
  const ToyDiT model = ToyDiT::init(cfg);
  const TensorF32 lr({4, cfg.latent_rows * 8, cfg.latent_cols * 8, 3});
  const TensorF32 nz({1, cfg.latent_rows, cfg.latent_cols, cfg.model_dim()});
  CHECK_THROWS_AS(run_batch_causal(cfg, model, lr, nz), ConfigError);
}

TEST_CASE("lookahead latency accounting") {
  LatencyConfig lc;
  CHECK(lookahead_latency(lc) == 8);
  lc.mode = LatencyConfig::Mode::chunked;
  lc.chunk_size = 32;
  CHECK(lookahead_latency(lc) == 32);
  lc.mode = LatencyConfig::Mode::streaming;
  lc.clip_len = 1;
  lc.temporal_convs = false;
  CHECK(lookahead_latency(lc) == 1);
}
