#include "vsr/bench.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vsr/attention.hpp"
#include "vsr/decoder.hpp"

namespace vsr {

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename F>
double time_median_ms(F&& fn, std::size_t reps, std::size_t warmup) {
  using clock = std::chrono::steady_clock;
  for (std::size_t i = 0; i < warmup; ++i) fn();
  std::vector<double> ms;
  ms.reserve(reps);
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = clock::now();
    fn();
    const auto t1 = clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return median(std::move(ms));
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

std::string sparsity_csv_header() {
  return "k,density,flop_ratio,wall_ms_sparse,wall_ms_dense,speedup,"
         "max_abs_err_vs_dense";
}

std::string sparsity_csv_row(const SparsityRow& r) {
  std::ostringstream out;
  out << r.k << ',' << fmt(r.density) << ',' << fmt(r.flop_ratio) << ','
      << fmt(r.wall_ms_sparse) << ',' << fmt(r.wall_ms_dense) << ','
      << fmt(r.speedup) << ',' << fmt(r.max_abs_err_vs_dense);
  return out.str();
}

std::size_t topk_for_density(double target_density, std::size_t key_blocks) {
  VSR_REQUIRE(target_density > 0.0 && target_density <= 1.0, ConfigError,
              "topk_for_density: target must be in (0, 1]");
  VSR_REQUIRE(key_blocks > 0, ConfigError, "topk_for_density: no key blocks");
  const std::size_t k = static_cast<std::size_t>(
      std::ceil(target_density * static_cast<double>(key_blocks) - 1e-9));
  return std::max<std::size_t>(1, k);
}

std::vector<SparsityRow> bench_sparsity(const BenchConfig& cfg,
                                        const std::vector<std::size_t>& k_sweep) {
  cfg.validate();
  VSR_REQUIRE(!k_sweep.empty(), ConfigError, "bench_sparsity: empty k sweep");

  const TokenGrid grid(cfg.frames, cfg.rows, cfg.cols);
  const std::size_t L = grid.token_count();
  Rng rng(cfg.seed);
  const TensorF32 q = TensorF32::gaussian({L, cfg.d_head}, rng);
  const TensorF32 k = TensorF32::gaussian({L, cfg.d_head}, rng);
  const TensorF32 v = TensorF32::gaussian({L, cfg.d_head}, rng);
  const MaskMatrix mask = MaskMatrix::all_allowed(L, L);
  const float scale = 1.0f / std::sqrt(static_cast<float>(cfg.d_head));

  TensorF32 dense;
  const double dense_ms = time_median_ms(
      [&] { dense = dense_attention_stream(q, k, v, mask, scale); }, cfg.reps,
      cfg.warmup);

  const BlockPartition part = partition_blocks(grid);
  std::vector<SparsityRow> rows;
  rows.reserve(k_sweep.size());
  for (const std::size_t kk : k_sweep) {
    const SparsePlan plan = plan_sparse(q, k, part, mask, kk);
    const SparsityReport rep = sparsity_report(plan, mask);
    TensorF32 sparse;
    const double sparse_ms = time_median_ms(
        [&] {
          sparse = sparse_attention_exec(q, k, v, plan, mask, scale, 0, SIZE_MAX,
                                         cfg.threads);
        },
        cfg.reps, cfg.warmup);
    SparsityRow row;
    row.k = kk;
    row.density = rep.density;
    row.flop_ratio = rep.flop_ratio;
    row.wall_ms_sparse = sparse_ms;
    row.wall_ms_dense = dense_ms;
    row.speedup = sparse_ms > 0.0 ? dense_ms / sparse_ms : 0.0;
    row.max_abs_err_vs_dense = static_cast<double>(max_abs_diff(sparse, dense));
    rows.push_back(row);
  }
  return rows;
}

std::string stream_csv_header() {
  return "t,retained_frames,density,step_wall_time_ms";
}

std::string stream_csv_row(const StreamDemoRow& r) {
  std::ostringstream out;
  out << r.t << ',' << r.retained_frames << ',' << fmt(r.density) << ','
      << fmt(r.step_wall_time_ms);
  return out.str();
}

namespace {

StreamConfig demo_stream_config(const BenchConfig& cfg) {
  StreamConfig sc;
  sc.n_layers = 2;
  sc.n_heads = cfg.heads;
  sc.d_head = cfg.d_head;
  sc.ffw_dim = 2 * sc.model_dim();
  sc.latent_rows = cfg.latent_rows;
  sc.latent_cols = cfg.latent_cols;
  sc.window_frames = cfg.window;
  sc.strategy = cfg.strategy;
  sc.topk = cfg.topk;
  sc.weight_seed = cfg.seed;
  sc.projin.conv1_c = 16;
  sc.projin.conv2_c = 24;
  sc.projin.model_dim = sc.model_dim();
  if (cfg.locality != "off") {
    sc.use_locality = true;
    const LocalityWindow::Mode mode = cfg.locality == "preserved"
                                          ? LocalityWindow::Mode::boundary_preserved
                                          : LocalityWindow::Mode::boundary_truncated;
    sc.locality = make_stream_locality(sc, mode, cfg.extent, cfg.extent);
  }
  return sc;
}

DecoderConfig demo_decoder_config(const BenchConfig& cfg,
                                  std::size_t model_dim) {
  DecoderConfig dc;
  dc.latent_channels = std::min<std::size_t>(16, model_dim);
  dc.stage_channels = {cfg.decoder_c0, cfg.decoder_c1, cfg.decoder_c2};
  dc.cond_width = 4;
  return dc;
}

void write_pgm(const std::string& path, const TensorF32& frame) {
  // frame: [H x W x C]; luminance = channel mean, min-max scaled per frame.
  const std::size_t H = frame.shape[0], W = frame.shape[1], C = frame.shape[2];
  float lo = frame.data[0], hi = frame.data[0];
  for (const float x : frame.data) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  const float span = hi > lo ? hi - lo : 1.0f;
  std::ofstream out(path, std::ios::binary);
  VSR_REQUIRE(out.good(), IoError, "write_pgm: cannot open '" + path + "'");
  out << "P5\n" << W << " " << H << "\n255\n";
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      float mean = 0.0f;
      for (std::size_t c = 0; c < C; ++c) mean += frame.at(y, x, c);
      mean /= static_cast<float>(C);
      const int g = static_cast<int>(255.0f * (mean - lo) / span);
      out.put(static_cast<char>(std::clamp(g, 0, 255)));
    }
  VSR_REQUIRE(out.good(), IoError, "write_pgm: write failed for '" + path + "'");
}

}  // namespace

StreamDemoResult stream_demo(const BenchConfig& cfg, std::size_t n_frames,
                             const std::optional<std::string>& dump_dir) {
  cfg.validate();
  const StreamConfig sc = demo_stream_config(cfg);
  sc.validate();
  const DecoderConfig dc = demo_decoder_config(cfg, sc.model_dim());

  LatencyConfig lat;
  lat.mode = LatencyConfig::Mode::streaming;
  lat.clip_len = sc.projin.clip_len;
  lat.temporal_convs = true;
  StreamDemoResult res;
  res.lookahead = lookahead_latency(lat);
  VSR_REQUIRE(n_frames >= res.lookahead / sc.projin.clip_len, ConfigError,
              "stream_demo: fewer latent frames than the lookahead clip");

  const ToyDiT model = ToyDiT::init(sc);
  Rng wrng(cfg.seed + 1);
  const DecoderWeights dw = DecoderWeights::init(dc, wrng);
  StreamState st = StreamState::init(sc);
  DecoderStream dec(dc, &dw);

  if (dump_dir) std::filesystem::create_directories(*dump_dir);

  Rng rng(cfg.seed + 2);
  const std::size_t H = sc.latent_rows * 8, W = sc.latent_cols * 8;
  using clock = std::chrono::steady_clock;
  std::size_t pixel_frame = 0;
  for (std::size_t t = 0; t < n_frames; ++t) {
    const TensorF32 clip = TensorF32::gaussian({4, H, W, 3}, rng, 0.5f);
    const TensorF32 noise = TensorF32::gaussian(
        {sc.latent_rows, sc.latent_cols, sc.model_dim()}, rng);

    const auto t0 = clock::now();
    StepTrace trace;
    const TensorF32 z = step(sc, model, st, clip, noise, &trace);

    // The leading decoder channels read the denoised latent.
    TensorF32 lat_in({1, sc.latent_rows, sc.latent_cols, dc.latent_channels});
    for (std::size_t r = 0; r < sc.latent_rows; ++r)
      for (std::size_t c = 0; c < sc.latent_cols; ++c)
        for (std::size_t ch = 0; ch < dc.latent_channels; ++ch)
          lat_in.at(0, r, c, ch) = z.at(r, c, ch);
    const TensorF32 frames = dec.decode_frame(lat_in, clip);
    const auto t1 = clock::now();

    StreamDemoRow row;
    row.t = static_cast<int>(t);
    row.retained_frames =
        *std::max_element(trace.retained_per_layer.begin(),
                          trace.retained_per_layer.end());
    row.density = trace.density;
    row.step_wall_time_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    res.rows.push_back(row);

    if (dump_dir) {
      const std::size_t fH = frames.shape[1], fW = frames.shape[2],
                        fC = frames.shape[3];
      for (std::size_t f = 0; f < frames.shape[0]; ++f, ++pixel_frame) {
        TensorF32 one({fH, fW, fC});
        std::copy(frames.data.begin() + static_cast<std::ptrdiff_t>(f * one.numel()),
                  frames.data.begin() +
                      static_cast<std::ptrdiff_t>((f + 1) * one.numel()),
                  one.data.begin());
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04zu.pgm", pixel_frame);
        write_pgm(*dump_dir + "/" + name, one);
      }
    }
  }

  const std::size_t tail_start = res.rows.size() > 10 ? 10 : 0;
  double mean = 0.0;
  for (std::size_t i = tail_start; i < res.rows.size(); ++i)
    mean += res.rows[i].step_wall_time_ms;
  const double n = static_cast<double>(res.rows.size() - tail_start);
  mean /= n;
  double var = 0.0;
  for (std::size_t i = tail_start; i < res.rows.size(); ++i) {
    const double d = res.rows[i].step_wall_time_ms - mean;
    var += d * d;
  }
  res.wall_time_cv = mean > 0.0 ? std::sqrt(var / n) / mean : 0.0;
  return res;
}

void gen_fixtures(std::uint64_t seed, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  Rng rng(seed);
  std::vector<std::pair<std::string, TensorF32>> fixtures;
  fixtures.emplace_back("attention_q", TensorF32::gaussian({512, 32}, rng));
  fixtures.emplace_back("attention_k", TensorF32::gaussian({512, 32}, rng));
  fixtures.emplace_back("attention_v", TensorF32::gaussian({512, 32}, rng));
  fixtures.emplace_back("projin_clip", TensorF32::gaussian({4, 32, 32, 3}, rng, 0.5f));
  fixtures.emplace_back("stream_noise", TensorF32::gaussian({4, 4, 32}, rng));
  fixtures.emplace_back("decoder_latents", TensorF32::gaussian({2, 4, 4, 16}, rng));
  fixtures.emplace_back("decoder_lr", TensorF32::gaussian({8, 32, 32, 3}, rng, 0.5f));
  fixtures.emplace_back("loss_pred", TensorF32::gaussian({2, 8, 8, 3}, rng));
  fixtures.emplace_back("loss_target", TensorF32::gaussian({2, 8, 8, 3}, rng));

  nlohmann::json manifest;
  manifest["format"] = "fixtures-v1";
  manifest["seed"] = seed;
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : fixtures) {
    const std::string file = name + ".bin";
    const std::string path = out_dir + "/" + file;
    write_fixture(t, path);
    const TensorF32 back = read_fixture(path);
    VSR_REQUIRE(back.shape == t.shape && back.data == t.data, IoError,
                "gen_fixtures: round trip mismatch for " + file);
    nlohmann::json entry;
    entry["file"] = file;
    entry["shape"] = t.shape;
    entry["checksum_fnv1a64"] =
        fnv1a64(t.data.data(), t.data.size() * sizeof(float));
    manifest["tensors"].push_back(entry);
  }
  std::ofstream out(out_dir + "/manifest.json", std::ios::binary);
  VSR_REQUIRE(out.good(), IoError, "gen_fixtures: cannot write manifest");
  out << manifest.dump(2) << "\n";
  VSR_REQUIRE(out.good(), IoError, "gen_fixtures: manifest write failed");
}

}  // namespace vsr
