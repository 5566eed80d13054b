#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "vsr/common.hpp"
#include "vsr/rng.hpp"

namespace vsr {

// Dense row-major float32 array. The universal value carrier: q/k/v rows,
// latents, frames, weights all live in one of these.
struct TensorF32 {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  TensorF32() = default;
  explicit TensorF32(std::vector<std::size_t> s);
  TensorF32(std::vector<std::size_t> s, std::vector<float> d);

  static TensorF32 zeros(std::vector<std::size_t> s) { return TensorF32(std::move(s)); }
  static TensorF32 full(std::vector<std::size_t> s, float v);
  static TensorF32 gaussian(std::vector<std::size_t> s, Rng& rng, float stddev = 1.0f);

  std::size_t rank() const { return shape.size(); }
  std::size_t numel() const;
  std::size_t extent(std::size_t axis) const;
  bool same_shape(const TensorF32& o) const { return shape == o.shape; }
  std::string shape_str() const;

  float& at(std::size_t i) { return data[i]; }
  float at(std::size_t i) const { return data[i]; }
  float& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  float at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  float& at(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  float at(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  float& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }
  float at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }

  float* row(std::size_t i) { return data.data() + i * row_stride(); }
  const float* row(std::size_t i) const { return data.data() + i * row_stride(); }
  // Elements per leading index (rank >= 2).
  std::size_t row_stride() const;

  // Throws ShapeError if any stored value is non-finite.
  void check_finite(const char* what) const;
};

// --- Elementwise helpers -----------------------------------------------------

TensorF32 add(const TensorF32& a, const TensorF32& b);
TensorF32 sub(const TensorF32& a, const TensorF32& b);
TensorF32 scale(const TensorF32& a, float s);
void add_inplace(TensorF32& a, const TensorF32& b);
float max_abs(const TensorF32& a);
float max_abs_diff(const TensorF32& a, const TensorF32& b);
// Sum of squares, accumulated in double.
double sum_sq(const TensorF32& a);

// --- Matmul ------------------------------------------------------------------

// Cache-blocked tiled product, f32 accumulation in a fixed order for a given
// tile size. Changing the tile changes the accumulation order; results then
// agree only within the reassociation budget.
inline constexpr std::size_t kDefaultMatmulTile = 64;

TensorF32 matmul(const TensorF32& a, const TensorF32& b,
                 std::size_t tile = kDefaultMatmulTile);
TensorF32 transpose2d(const TensorF32& a);

// --- Block pooling -----------------------------------------------------------

// Row-wise arithmetic mean per block. assignment[i] in [0, blocks).
// Throws EmptyBlockError if some block id has no member row.
TensorF32 avg_pool_blocks(const TensorF32& x, const std::vector<int>& assignment,
                          std::size_t blocks);

// --- Binary fixture format ---------------------------------------------------
// magic "FVSR" | version u32 LE | rank u32 LE | extents u64 LE each | f32 LE payload

inline constexpr std::uint32_t kFixtureFormatVersion = 1;

void write_fixture(const TensorF32& t, const std::string& path);
TensorF32 read_fixture(const std::string& path);

}  // namespace vsr
