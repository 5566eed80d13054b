#pragma once

#include <cstddef>
#include <vector>

#include "vsr/common.hpp"

namespace vsr {

// Latent-space coordinate of one token: frame index, row, column.
struct Position3D {
  int t = 0;
  int h = 0;
  int w = 0;

  bool operator==(const Position3D&) const = default;
};

// Token set laid out over a spatial grid across a list of latent frames.
// Frame ids are absolute stream indices (retained cache frames need not be
// contiguous); token order is frame-major, then row-major within a frame.
class TokenGrid {
 public:
  TokenGrid(std::vector<int> frame_ids, std::size_t rows, std::size_t cols);
  // Contiguous frames 0..frames-1.
  TokenGrid(std::size_t frames, std::size_t rows, std::size_t cols);

  std::size_t token_count() const { return frame_ids_.size() * rows_ * cols_; }
  std::size_t frame_count() const { return frame_ids_.size(); }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t tokens_per_frame() const { return rows_ * cols_; }
  const std::vector<int>& frame_ids() const { return frame_ids_; }

  Position3D position(std::size_t token) const;
  int frame_of(std::size_t token) const { return frame_ids_[token / (rows_ * cols_)]; }

  std::vector<Position3D> positions() const;
  // Absolute frame id per token, in token order.
  std::vector<int> frame_per_token() const;

 private:
  std::vector<int> frame_ids_;
  std::size_t rows_;
  std::size_t cols_;
};

inline TokenGrid::TokenGrid(std::vector<int> frame_ids, std::size_t rows, std::size_t cols)
    : frame_ids_(std::move(frame_ids)), rows_(rows), cols_(cols) {
  VSR_REQUIRE(!frame_ids_.empty() && rows_ >= 1 && cols_ >= 1, ConfigError,
              "TokenGrid: empty extents");
  for (std::size_t i = 0; i < frame_ids_.size(); ++i) {
    VSR_REQUIRE(frame_ids_[i] >= 0, ConfigError, "TokenGrid: negative frame id");
    if (i > 0)
      VSR_REQUIRE(frame_ids_[i] > frame_ids_[i - 1], ConfigError,
                  "TokenGrid: frame ids must be strictly increasing");
  }
}

inline TokenGrid::TokenGrid(std::size_t frames, std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols) {
  VSR_REQUIRE(frames >= 1 && rows >= 1 && cols >= 1, ConfigError, "TokenGrid: empty extents");
  frame_ids_.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) frame_ids_[i] = static_cast<int>(i);
}

inline Position3D TokenGrid::position(std::size_t token) const {
  const std::size_t per = rows_ * cols_;
  const std::size_t f = token / per;
  const std::size_t r = token % per;
  return Position3D{frame_ids_[f], static_cast<int>(r / cols_), static_cast<int>(r % cols_)};
}

inline std::vector<Position3D> TokenGrid::positions() const {
  std::vector<Position3D> out;
  out.reserve(token_count());
  for (std::size_t i = 0; i < token_count(); ++i) out.push_back(position(i));
  return out;
}

inline std::vector<int> TokenGrid::frame_per_token() const {
  std::vector<int> out;
  out.reserve(token_count());
  for (int fid : frame_ids_)
    for (std::size_t i = 0; i < rows_ * cols_; ++i) out.push_back(fid);
  return out;
}

}  // namespace vsr
