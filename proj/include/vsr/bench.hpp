#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vsr/config.hpp"
#include "vsr/stream.hpp"

namespace vsr {

// One k-sweep row. Wall times are medians over the configured repetitions,
// warmup runs discarded; the dense baseline is the row-streaming kernel.
struct SparsityRow {
  std::size_t k = 0;
  double density = 0.0;
  double flop_ratio = 0.0;
  double wall_ms_sparse = 0.0;
  double wall_ms_dense = 0.0;
  double speedup = 0.0;
  double max_abs_err_vs_dense = 0.0;
};

std::string sparsity_csv_header();
std::string sparsity_csv_row(const SparsityRow& row);

// Plan construction is excluded from the timed region: the plan is reused
// across a stream while the kernel runs per step, so the kernel is timed.
std::vector<SparsityRow> bench_sparsity(const BenchConfig& cfg,
                                        const std::vector<std::size_t>& k_sweep);

// Derives the smallest k whose selected-block density reaches the target.
std::size_t topk_for_density(double target_density, std::size_t key_blocks);

struct StreamDemoRow {
  int t = 0;
  std::size_t retained_frames = 0;
  double density = 0.0;
  double step_wall_time_ms = 0.0;
};

struct StreamDemoResult {
  std::vector<StreamDemoRow> rows;
  std::size_t lookahead = 0;
  double wall_time_cv = 0.0;  // over rows 10..n when available, else all rows
};

std::string stream_csv_header();
std::string stream_csv_row(const StreamDemoRow& row);

// Full pipeline per frame: low-res projection, toy DiT step, decode.
// dump_dir, when set, receives one grayscale PGM per output pixel frame.
StreamDemoResult stream_demo(const BenchConfig& cfg, std::size_t n_frames,
                             const std::optional<std::string>& dump_dir);

// Deterministic tensor fixtures plus a manifest with shapes and checksums.
// Every file is read back and compared bit-exact before the manifest is
// written; a mismatch raises IoError.
void gen_fixtures(std::uint64_t seed, const std::string& out_dir);

}  // namespace vsr
