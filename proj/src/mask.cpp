#include "vsr/mask.hpp"

#include <algorithm>
#include <bit>
#include <fstream>

namespace vsr {

MaskMatrix::MaskMatrix(std::size_t rows, std::size_t cols, bool value)
    : rows_(rows), cols_(cols), words_per_row_((cols + 63) / 64) {
  VSR_REQUIRE(rows >= 1 && cols >= 1, ShapeError, "MaskMatrix: empty extents");
  bits_.assign(rows_ * words_per_row_, value ? ~std::uint64_t{0} : 0);
  if (value) clear_padding_bits();
}

MaskMatrix MaskMatrix::diagonal(std::size_t n) {
  MaskMatrix m(n, n, false);
  for (std::size_t i = 0; i < n; ++i) m.set(i, i, true);
  return m;
}

void MaskMatrix::set(std::size_t i, std::size_t j, bool v) {
  VSR_REQUIRE(i < rows_ && j < cols_, ShapeError, "MaskMatrix::set: index out of range");
  std::uint64_t& w = bits_[i * words_per_row_ + (j >> 6)];
  const std::uint64_t bit = std::uint64_t{1} << (j & 63);
  if (v)
    w |= bit;
  else
    w &= ~bit;
}

void MaskMatrix::clear_padding_bits() {
  const std::size_t tail = cols_ & 63;
  if (tail == 0) return;
  const std::uint64_t keep = (std::uint64_t{1} << tail) - 1;
  for (std::size_t i = 0; i < rows_; ++i)
    bits_[i * words_per_row_ + words_per_row_ - 1] &= keep;
}

std::size_t MaskMatrix::count_allowed() const {
  std::size_t n = 0;
  for (std::uint64_t w : bits_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::size_t MaskMatrix::count_allowed_in_row(std::size_t i) const {
  std::size_t n = 0;
  const std::uint64_t* w = row_words(i);
  for (std::size_t a = 0; a < words_per_row_; ++a)
    n += static_cast<std::size_t>(std::popcount(w[a]));
  return n;
}

ColumnSet::ColumnSet(std::size_t cols) : words_((cols + 63) / 64, 0) {}

bool ColumnSet::intersects_row(const MaskMatrix& m, std::size_t i) const {
  VSR_REQUIRE(words_.size() == m.words_per_row(), ShapeError,
              "ColumnSet: column count mismatch");
  const std::uint64_t* r = m.row_words(i);
  for (std::size_t a = 0; a < words_.size(); ++a)
    if (r[a] & words_[a]) return true;
  return false;
}

// --- Builders ----------------------------------------------------------------

MaskMatrix build_segment_mask(const SegmentLabels& labels) {
  const std::size_t L = labels.seg.size();
  VSR_REQUIRE(L >= 1, ConfigError, "build_segment_mask: no tokens labeled");
  int max_id = -1;
  for (int s : labels.seg) {
    VSR_REQUIRE(s >= 0, ConfigError, "build_segment_mask: negative segment id");
    max_id = std::max(max_id, s);
  }
  std::vector<char> seen(static_cast<std::size_t>(max_id) + 1, 0);
  for (int s : labels.seg) seen[static_cast<std::size_t>(s)] = 1;
  for (char c : seen)
    VSR_REQUIRE(c, ConfigError, "build_segment_mask: segment ids not contiguous");

  MaskMatrix m(L, L, false);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j)
      if (labels.seg[i] == labels.seg[j]) m.set(i, j, true);
  return m;
}

MaskMatrix build_causal_mask(const CausalSpec& spec, std::size_t L) {
  VSR_REQUIRE(spec.frame.size() == L, ShapeError,
              "build_causal_mask: frame list length does not match L");
  VSR_REQUIRE(spec.lookahead >= 0, ConfigError, "build_causal_mask: negative lookahead");
  for (std::size_t i = 1; i < L; ++i)
    VSR_REQUIRE(spec.frame[i] >= spec.frame[i - 1], ConfigError,
                "build_causal_mask: frame indices must be non-decreasing");

  MaskMatrix m(L, L, false);
  for (std::size_t i = 0; i < L; ++i) {
    const int limit = spec.frame[i] + spec.lookahead;
    // Frames are non-decreasing, so the allowed keys form a prefix.
    for (std::size_t j = 0; j < L && spec.frame[j] <= limit; ++j) m.set(i, j, true);
  }
  return m;
}

MaskMatrix build_locality_mask(const LocalityWindow& win,
                               const std::vector<Position3D>& positions) {
  return build_locality_mask(win, positions, positions);
}

MaskMatrix build_locality_mask(const LocalityWindow& win,
                               const std::vector<Position3D>& positions_q,
                               const std::vector<Position3D>& positions_k) {
  VSR_REQUIRE(win.extent_h >= 1 && win.extent_w >= 1, ConfigError,
              "build_locality_mask: extents must be >= 1");
  VSR_REQUIRE(win.extent_h <= win.frame_extent_h && win.extent_w <= win.frame_extent_w,
              ConfigError, "build_locality_mask: extent larger than frame");
  const std::size_t Lq = positions_q.size(), Lk = positions_k.size();
  VSR_REQUIRE(Lq >= 1 && Lk >= 1, ConfigError, "build_locality_mask: no positions");
  for (const std::vector<Position3D>* ps : {&positions_q, &positions_k})
    for (const Position3D& p : *ps)
      VSR_REQUIRE(
          p.h >= 0 && p.h < win.frame_extent_h && p.w >= 0 && p.w < win.frame_extent_w,
          ConfigError, "build_locality_mask: position outside frame extents");

  const int rh = win.extent_h / 2;
  const int rw = win.extent_w / 2;
  MaskMatrix m(Lq, Lk, false);
  for (std::size_t i = 0; i < Lq; ++i) {
    const Position3D& pi = positions_q[i];
    int h_lo, h_hi, w_lo, w_hi;  // half-open key ranges
    if (win.mode == LocalityWindow::Mode::boundary_truncated) {
      h_lo = pi.h - rh;
      h_hi = pi.h + rh + 1;
      w_lo = pi.w - rw;
      w_hi = pi.w + rw + 1;
    } else {
      h_lo = std::clamp(pi.h - rh, 0, win.frame_extent_h - win.extent_h);
      h_hi = h_lo + win.extent_h;
      w_lo = std::clamp(pi.w - rw, 0, win.frame_extent_w - win.extent_w);
      w_hi = w_lo + win.extent_w;
    }
    for (std::size_t j = 0; j < Lk; ++j) {
      const Position3D& pj = positions_k[j];
      if (pj.h >= h_lo && pj.h < h_hi && pj.w >= w_lo && pj.w < w_hi) m.set(i, j, true);
    }
  }
  return m;
}

MaskMatrix compose_masks(const std::vector<MaskMatrix>& ms) {
  VSR_REQUIRE(!ms.empty(), ConfigError, "compose_masks: no operands");
  MaskMatrix out = ms[0];
  for (std::size_t n = 1; n < ms.size(); ++n) {
    VSR_REQUIRE(out.same_shape(ms[n]), ShapeError, "compose_masks: shape mismatch");
    for (std::size_t i = 0; i < out.rows(); ++i) {
      std::uint64_t* a = out.row_words(i);
      const std::uint64_t* b = ms[n].row_words(i);
      for (std::size_t w = 0; w < out.words_per_row(); ++w) a[w] &= b[w];
    }
  }
  return out;
}

void write_mask_pbm(const MaskMatrix& m, const std::string& path) {
  std::ofstream f(path);
  VSR_REQUIRE(f.good(), IoError, "write_mask_pbm: cannot open " + path);
  f << "P1\n" << m.cols() << " " << m.rows() << "\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) f << (m.allowed(i, j) ? "1" : "0");
    f << "\n";
  }
  VSR_REQUIRE(f.good(), IoError, "write_mask_pbm: write failed for " + path);
}

}  // namespace vsr
