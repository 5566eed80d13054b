#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "vsr/grid.hpp"

namespace vsr {

inline constexpr int kBlockT = 2;
inline constexpr int kBlockH = 8;
inline constexpr int kBlockW = 8;
inline constexpr std::size_t kTokensPerBlock = 128;  // kBlockT * kBlockH * kBlockW

// Non-overlapping (2,8,8) tiling of a token grid. Temporal tiling uses
// absolute frame ids (floor(frame/2)), so a partial cache after eviction
// tiles the same way as the full stream. Blocks are ordered lexicographically
// by (t_row, h_tile, w_tile) over occupied tiles; tiles cut short by grid
// extents keep their real members and the shortfall is counted as padding.
// Padding slots are excluded from masks and pooling by construction: only
// real tokens appear in member lists.
struct BlockPartition {
  std::size_t token_count = 0;
  std::size_t block_num = 0;
  std::vector<int> assignment;                      // real token -> block id
  std::vector<std::vector<std::size_t>> block_tokens;  // block id -> real tokens
  std::vector<std::array<int, 3>> block_keys;       // (t_row, h_tile, w_tile)
  std::size_t padding_count = 0;                    // over all blocks

  std::size_t padding_in_block(std::size_t b) const {
    return kTokensPerBlock - block_tokens[b].size();
  }
  // Index of the block with the given tile key, or -1.
  int find_block(const std::array<int, 3>& key) const;
  void validate() const;
};

BlockPartition partition_blocks(const TokenGrid& grid);

}  // namespace vsr
