#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vsr/common.hpp"
#include "vsr/grid.hpp"

namespace vsr {

// Boolean attention mask over (query, key) pairs, bit-packed per row.
// Rows are padded to whole 64-bit words so row-level set algebra (unions,
// intersections, any-bit tests against block column sets) runs word-wise.
class MaskMatrix {
 public:
  MaskMatrix() = default;
  MaskMatrix(std::size_t rows, std::size_t cols, bool value = false);

  static MaskMatrix all_allowed(std::size_t rows, std::size_t cols) {
    return MaskMatrix(rows, cols, true);
  }
  static MaskMatrix none_allowed(std::size_t rows, std::size_t cols) {
    return MaskMatrix(rows, cols, false);
  }
  static MaskMatrix diagonal(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t words_per_row() const { return words_per_row_; }

  bool allowed(std::size_t i, std::size_t j) const {
    return (bits_[i * words_per_row_ + (j >> 6)] >> (j & 63)) & 1u;
  }
  void set(std::size_t i, std::size_t j, bool v);

  const std::uint64_t* row_words(std::size_t i) const {
    return bits_.data() + i * words_per_row_;
  }
  std::uint64_t* row_words(std::size_t i) { return bits_.data() + i * words_per_row_; }

  std::size_t count_allowed() const;
  std::size_t count_allowed_in_row(std::size_t i) const;
  bool same_shape(const MaskMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  bool operator==(const MaskMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && bits_ == o.bits_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t words_per_row_ = 0;
  std::vector<std::uint64_t> bits_;

  void clear_padding_bits();
};

// A column subset packed into the same word layout as MaskMatrix rows, for
// fast "does this row touch this set" tests.
class ColumnSet {
 public:
  ColumnSet(std::size_t cols);
  void add(std::size_t j) { words_[j >> 6] |= (std::uint64_t{1} << (j & 63)); }
  const std::uint64_t* words() const { return words_.data(); }
  std::size_t word_count() const { return words_.size(); }

  bool intersects_row(const MaskMatrix& m, std::size_t i) const;

 private:
  std::vector<std::uint64_t> words_;
};

// --- Mask families -----------------------------------------------------------

// Segment membership per token (images and video clips packed in one batch).
struct SegmentLabels {
  std::vector<int> seg;
};

// Frame index per token plus permitted future context in frames.
struct CausalSpec {
  std::vector<int> frame;
  int lookahead = 0;
};

// Spatial attention window, sized in latent tokens per side.
struct LocalityWindow {
  enum class Mode { boundary_preserved, boundary_truncated };
  Mode mode = Mode::boundary_truncated;
  int extent_h = 1;
  int extent_w = 1;
  int frame_extent_h = 1;
  int frame_extent_w = 1;
};

// allowed(i,j) iff seg(i) == seg(j). Segment ids must be 0..max with every id
// used at least once.
MaskMatrix build_segment_mask(const SegmentLabels& labels);

// allowed(i,j) iff frame(j) <= frame(i) + lookahead. Tokens of one frame fully
// inter-attend; frame indices must be non-decreasing in token order.
MaskMatrix build_causal_mask(const CausalSpec& spec, std::size_t L);

// Spatial-only window; no temporal restriction. Truncated mode clips a
// query-centered window at frame edges; preserved mode slides the window
// inward so every query keeps a full extent_h x extent_w coverage per frame.
// The rectangular overload masks query tokens against a separate key grid.
MaskMatrix build_locality_mask(const LocalityWindow& win,
                               const std::vector<Position3D>& positions);
MaskMatrix build_locality_mask(const LocalityWindow& win,
                               const std::vector<Position3D>& positions_q,
                               const std::vector<Position3D>& positions_k);

// Elementwise conjunction; all operands must share one shape.
MaskMatrix compose_masks(const std::vector<MaskMatrix>& ms);

// Plain-text PBM (P1) bitmap, allowed pairs rendered black. Debug aid.
void write_mask_pbm(const MaskMatrix& m, const std::string& path);

}  // namespace vsr
