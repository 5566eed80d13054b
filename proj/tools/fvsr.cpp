// fvsr: verification, benchmarks, and the streaming demo for the
// block-sparse video super-resolution kernels.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vsr/bench.hpp"
#include "vsr/checks.hpp"

namespace {

std::size_t env_threads() {
  const char* raw = std::getenv("FVSR_THREADS");
  if (!raw) return 1;
  const long v = std::strtol(raw, nullptr, 10);
  return v >= 1 ? static_cast<std::size_t>(v) : 1;
}

std::vector<std::size_t> parse_sweep(const std::string& csv) {
  std::vector<std::size_t> out;
  std::stringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    const long v = std::strtol(item.c_str(), nullptr, 10);
    if (v >= 1) out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

// CSV goes to --out when given, stdout otherwise.
void emit(const std::optional<std::string>& out_path, const std::string& text) {
  if (!out_path) {
    std::cout << text;
    return;
  }
  std::ofstream out(*out_path, std::ios::binary);
  if (!out.good()) throw vsr::IoError("cannot open '" + *out_path + "'");
  out << text;
  if (!out.good()) throw vsr::IoError("write failed for '" + *out_path + "'");
}

int report_checks(const std::vector<vsr::CheckResult>& results) {
  std::size_t failed = 0;
  for (const vsr::CheckResult& r : results) {
    std::printf("%s %-28s max_err=%-10.3g %s\n", r.pass ? "PASS" : "FAIL",
                r.name.c_str(), r.max_err, r.detail.c_str());
    if (!r.pass) ++failed;
  }
  std::printf("%zu/%zu checks passed\n", results.size() - failed, results.size());
  return failed == 0 ? 0 : 1;
}

// Negative control: corrupt a live cache mid-stream and demand that the
// next step's validation trips. Always exits nonzero; the line names the
// failing check either way.
int run_corrupt_eviction() {
  vsr::StreamConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_head = 8;
  cfg.ffw_dim = 32;
  cfg.latent_rows = 4;
  cfg.latent_cols = 4;
  cfg.window_frames = 3;
  cfg.strategy = vsr::EvictStrategy::uniform;
  cfg.topk = 2;
  cfg.projin.conv1_c = 8;
  cfg.projin.conv2_c = 12;
  cfg.projin.model_dim = cfg.model_dim();
  const vsr::ToyDiT model = vsr::ToyDiT::init(cfg);
  vsr::StreamState st = vsr::StreamState::init(cfg);
  vsr::Rng rng(7);
  bool detected = false;
  std::string what;
  for (int t = 0; t < 4; ++t) {
    const vsr::TensorF32 clip =
        vsr::TensorF32::gaussian({4, 32, 32, 3}, rng, 0.5f);
    const vsr::TensorF32 noise =
        vsr::TensorF32::gaussian({4, 4, cfg.model_dim()}, rng);
    if (t == 3) st.cache.corrupt_head_sets(0);
    try {
      vsr::step(cfg, model, st, clip, noise);
    } catch (const vsr::InvariantError& e) {
      detected = true;
      what = e.what();
      break;
    }
  }
  if (detected)
    std::printf("FAIL stream-cache-integrity injected corruption detected: %s\n",
                what.c_str());
  else
    std::printf("FAIL stream-cache-integrity corruption was NOT detected\n");
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "fvsr: block-sparse attention verification and benchmarks.\n"
      "CSV schemas (versioned, emitted as a leading '# schema:' comment):\n"
      "  sparsity-csv-v1: k (selected key blocks per query block),\n"
      "    density (selected/allowed block pairs), flop_ratio (executed/dense\n"
      "    token-pair work), wall_ms_sparse, wall_ms_dense (median ms over\n"
      "    repetitions, warmup discarded), speedup (dense/sparse),\n"
      "    max_abs_err_vs_dense (vs the dense streaming kernel).\n"
      "  stream-csv-v1: t (latent frame index), retained_frames (cache frames\n"
      "    after eviction, max over layers), density (mean executed block\n"
      "    fraction), step_wall_time_ms (projection + step + decode)."};
  app.require_subcommand(1);

  std::size_t threads = env_threads();
  std::string config_path;
  app.add_option("--threads", threads,
                 "worker threads for the sparse kernel (env FVSR_THREADS)");
  app.add_option("--config", config_path,
                 "key=value config file with [grid]/[attention]/[stream]/"
                 "[demo]/[bench] sections; unknown keys are rejected");

  auto* verify = app.add_subcommand("verify",
                                 "run the oracle and invariant suite, print one "
                                 "line per check, exit nonzero on failure");
  bool slow = false, corrupt = false;
  verify->add_flag("--slow", slow, "include the 8192-token kernel timing check");
  verify->add_flag("--corrupt-eviction", corrupt,
                   "negative control: corrupt the KV cache mid-stream and "
                   "report the resulting named failure");

  auto* bench = app.add_subcommand("bench-sparsity",
                                "k-sweep of the sparse kernel against the dense "
                                "baseline; emits sparsity-csv-v1");
  std::string sweep_csv = "1,2,4,8,16,32,64";
  std::optional<std::string> bench_out;
  bench->add_option("--k-sweep", sweep_csv, "comma-separated top-k values");
  bench->add_option("--out", bench_out, "write CSV here instead of stdout");

  auto* demo = app.add_subcommand("stream-demo",
                               "full pipeline on synthetic input: low-res "
                               "projection, sparse DiT step, decode; emits "
                               "stream-csv-v1");
  std::size_t n_frames = 16;
  std::string evict = "sliding";
  std::string locality = "off";
  int extent = 5;
  std::size_t window = 4;
  std::optional<std::string> demo_out, dump_dir;
  demo->add_option("--frames", n_frames, "latent frames to stream");
  demo->add_option("--window", window, "KV cache budget in frames");
  demo->add_option("--evict", evict, "sliding|uniform|headwise");
  demo->add_option("--locality", locality, "off|preserved|truncated");
  demo->add_option("--extent", extent, "locality window extent in tokens");
  demo->add_option("--out", demo_out, "write CSV here instead of stdout");
  demo->add_option("--dump-dir", dump_dir, "write decoded frames as PGM files");

  auto* gen = app.add_subcommand("gen-fixtures",
                              "write deterministic tensor fixtures plus a "
                              "manifest with shapes and fnv1a64 checksums");
  std::uint64_t seed = 1234;
  std::string gen_out;
  gen->add_option("--seed", seed, "fixture seed");
  gen->add_option("--out", gen_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    vsr::BenchConfig cfg;
    if (!config_path.empty())
      cfg = vsr::BenchConfig::from_config(vsr::parse_config_file(config_path));
    cfg.threads = threads;

    if (*verify) {
      if (corrupt) return run_corrupt_eviction();
      return report_checks(vsr::run_all_checks(slow));
    }

    if (*bench) {
      std::vector<std::size_t> sweep = parse_sweep(sweep_csv);
      if (sweep.empty() && cfg.target_density > 0.0) {
        const std::size_t blocks =
            vsr::partition_blocks(vsr::TokenGrid(cfg.frames, cfg.rows, cfg.cols))
                .block_num;
        sweep.push_back(vsr::topk_for_density(cfg.target_density, blocks));
      }
      const std::vector<vsr::SparsityRow> rows = vsr::bench_sparsity(cfg, sweep);
      std::ostringstream csv;
      csv << "# schema: sparsity-csv-v1\n" << vsr::sparsity_csv_header() << "\n";
      for (const vsr::SparsityRow& r : rows) csv << vsr::sparsity_csv_row(r) << "\n";
      emit(bench_out, csv.str());
      return 0;
    }

    if (*demo) {
      cfg.window = window;
      cfg.strategy = vsr::evict_strategy_from_string(evict);
      cfg.locality = locality;
      cfg.extent = extent;
      const vsr::StreamDemoResult res = vsr::stream_demo(cfg, n_frames, dump_dir);
      std::ostringstream csv;
      csv << "# schema: stream-csv-v1\n";
      csv << "# lookahead_frames=" << res.lookahead << "\n";
      csv << "# wall_time_cv=" << res.wall_time_cv << "\n";
      csv << vsr::stream_csv_header() << "\n";
      for (const vsr::StreamDemoRow& r : res.rows)
        csv << vsr::stream_csv_row(r) << "\n";
      emit(demo_out, csv.str());
      return 0;
    }

    if (*gen) {
      vsr::gen_fixtures(seed, gen_out);
      std::printf("fixtures written to %s\n", gen_out.c_str());
      return 0;
    }
  } catch (const vsr::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
