#include "vsr/partition.hpp"

#include <algorithm>
#include <map>

namespace vsr {

int BlockPartition::find_block(const std::array<int, 3>& key) const {
  // block_keys are sorted lexicographically by construction
  auto it = std::lower_bound(block_keys.begin(), block_keys.end(), key);
  if (it != block_keys.end() && *it == key)
    return static_cast<int>(it - block_keys.begin());
  return -1;
}

void BlockPartition::validate() const {
  VSR_REQUIRE(block_num == block_tokens.size() && block_num == block_keys.size(),
              InvariantError, "BlockPartition: block table sizes disagree");
  VSR_REQUIRE(assignment.size() == token_count, InvariantError,
              "BlockPartition: assignment length mismatch");
  std::size_t members = 0;
  for (std::size_t b = 0; b < block_num; ++b) {
    VSR_REQUIRE(!block_tokens[b].empty() && block_tokens[b].size() <= kTokensPerBlock,
                InvariantError, "BlockPartition: block member count out of range");
    for (std::size_t tok : block_tokens[b])
      VSR_REQUIRE(tok < token_count && assignment[tok] == static_cast<int>(b),
                  InvariantError, "BlockPartition: assignment/member mismatch");
    members += block_tokens[b].size();
  }
  VSR_REQUIRE(members == token_count, InvariantError,
              "BlockPartition: tokens not covered exactly once");
  VSR_REQUIRE(members + padding_count == block_num * kTokensPerBlock, InvariantError,
              "BlockPartition: padding arithmetic broken");
  VSR_REQUIRE(std::is_sorted(block_keys.begin(), block_keys.end()), InvariantError,
              "BlockPartition: block keys not sorted");
}

BlockPartition partition_blocks(const TokenGrid& grid) {
  const std::size_t L = grid.token_count();
  std::map<std::array<int, 3>, std::vector<std::size_t>> tiles;
  for (std::size_t tok = 0; tok < L; ++tok) {
    const Position3D p = grid.position(tok);
    tiles[{p.t / kBlockT, p.h / kBlockH, p.w / kBlockW}].push_back(tok);
  }

  BlockPartition part;
  part.token_count = L;
  part.block_num = tiles.size();
  part.assignment.assign(L, -1);
  part.block_tokens.reserve(tiles.size());
  part.block_keys.reserve(tiles.size());
  int bid = 0;
  for (auto& [key, toks] : tiles) {
    for (std::size_t tok : toks) part.assignment[tok] = bid;
    part.padding_count += kTokensPerBlock - toks.size();
    part.block_keys.push_back(key);
    part.block_tokens.push_back(std::move(toks));
    ++bid;
  }
  part.validate();
  return part;
}

}  // namespace vsr
