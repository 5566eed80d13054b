#pragma once

#include <string>
#include <vector>

namespace vsr {

// One named invariant probe. pass reflects the check's own pinned tolerance;
// max_err is the measured error where the check has one (0 for structural
// checks); detail is a one-line summary for the report.
struct CheckResult {
  std::string name;
  bool pass = false;
  double max_err = 0.0;
  std::string detail;
};

// attention / sparse selection
CheckResult check_sparse_vs_dense_saturated();
CheckResult check_topk_selection_rules();
CheckResult check_flop_ratio_tracks_density();
CheckResult check_sparse_speedup();  // slow: times an 8192-token kernel pair

// masks / rope / partition
CheckResult check_locality_offset_bounds();
CheckResult check_rope_shift_invariance();
CheckResult check_rope_inverse();
CheckResult check_partition_structure();

// low-res projection
CheckResult check_projin_stream_vs_batch();
CheckResult check_projin_causality();
CheckResult check_conv_carry_alignment();

// streaming engine + cache
CheckResult check_stream_vs_batch();
CheckResult check_stream_causality();
CheckResult check_stream_truncated_window();
CheckResult check_evict_uniform_head_identity();
CheckResult check_evict_sink_fixture();
CheckResult check_cache_corruption_detected();
CheckResult check_lookahead_latency();

// losses
CheckResult check_flow_matching_grad();
CheckResult check_reconstruction_grad();
CheckResult check_distill_grad();
CheckResult check_dmd_gaussian();
CheckResult check_schedule_bounds();

// decoder
CheckResult check_decoder_shape_law();
CheckResult check_decoder_parity();
CheckResult check_decoder_lr_sensitivity();
CheckResult check_decoder_causality();
CheckResult check_decoder_zero_weights();

// Everything above except the slow benchmark; include_slow appends it.
std::vector<CheckResult> run_all_checks(bool include_slow);

}  // namespace vsr
