#include "vsr/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace vsr {

static std::size_t product(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

TensorF32::TensorF32(std::vector<std::size_t> s) : shape(std::move(s)) {
  for (std::size_t e : shape)
    VSR_REQUIRE(e >= 1, ShapeError, "tensor extent must be >= 1");
  data.assign(product(shape), 0.0f);
}

TensorF32::TensorF32(std::vector<std::size_t> s, std::vector<float> d)
    : shape(std::move(s)), data(std::move(d)) {
  for (std::size_t e : shape)
    VSR_REQUIRE(e >= 1, ShapeError, "tensor extent must be >= 1");
  VSR_REQUIRE(data.size() == product(shape), ShapeError,
              "tensor data length does not match shape product");
}

TensorF32 TensorF32::full(std::vector<std::size_t> s, float v) {
  TensorF32 t(std::move(s));
  std::fill(t.data.begin(), t.data.end(), v);
  return t;
}

TensorF32 TensorF32::gaussian(std::vector<std::size_t> s, Rng& rng, float stddev) {
  TensorF32 t(std::move(s));
  for (float& x : t.data) x = rng.gaussian_f(stddev);
  return t;
}

std::size_t TensorF32::numel() const { return data.size(); }

std::size_t TensorF32::extent(std::size_t axis) const {
  VSR_REQUIRE(axis < shape.size(), ShapeError, "axis out of range");
  return shape[axis];
}

std::size_t TensorF32::row_stride() const {
  VSR_REQUIRE(rank() >= 1, ShapeError, "row access on rank-0 tensor");
  std::size_t s = 1;
  for (std::size_t a = 1; a < shape.size(); ++a) s *= shape[a];
  return s;
}

std::string TensorF32::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t a = 0; a < shape.size(); ++a) {
    if (a) os << "x";
    os << shape[a];
  }
  os << "]";
  return os.str();
}

void TensorF32::check_finite(const char* what) const {
  for (float x : data)
    VSR_REQUIRE(std::isfinite(x), ShapeError,
                std::string(what) + ": non-finite value");
}

TensorF32 add(const TensorF32& a, const TensorF32& b) {
  VSR_REQUIRE(a.same_shape(b), ShapeError, "add: shape mismatch");
  TensorF32 out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

TensorF32 sub(const TensorF32& a, const TensorF32& b) {
  VSR_REQUIRE(a.same_shape(b), ShapeError, "sub: shape mismatch");
  TensorF32 out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

TensorF32 scale(const TensorF32& a, float s) {
  TensorF32 out = a;
  for (float& x : out.data) x *= s;
  return out;
}

void add_inplace(TensorF32& a, const TensorF32& b) {
  VSR_REQUIRE(a.same_shape(b), ShapeError, "add_inplace: shape mismatch");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

float max_abs(const TensorF32& a) {
  float m = 0.0f;
  for (float x : a.data) m = std::max(m, std::fabs(x));
  return m;
}

float max_abs_diff(const TensorF32& a, const TensorF32& b) {
  VSR_REQUIRE(a.same_shape(b), ShapeError, "max_abs_diff: shape mismatch");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

double sum_sq(const TensorF32& a) {
  double s = 0.0;
  for (float x : a.data) s += static_cast<double>(x) * x;
  return s;
}

TensorF32 matmul(const TensorF32& a, const TensorF32& b, std::size_t tile) {
  VSR_REQUIRE(a.rank() == 2 && b.rank() == 2, ShapeError, "matmul: rank-2 operands required");
  VSR_REQUIRE(a.shape[1] == b.shape[0], ShapeError,
              "matmul: inner extents disagree " + a.shape_str() + " * " + b.shape_str());
  VSR_REQUIRE(tile >= 1, ConfigError, "matmul: tile must be >= 1");
  a.check_finite("matmul lhs");
  b.check_finite("matmul rhs");

  const std::size_t m = a.shape[0], kk = a.shape[1], n = b.shape[1];
  TensorF32 out({m, n});
  // i-k-j inside fixed-size tiles; f32 accumulation directly into out.
  for (std::size_t i0 = 0; i0 < m; i0 += tile) {
    const std::size_t i1 = std::min(m, i0 + tile);
    for (std::size_t k0 = 0; k0 < kk; k0 += tile) {
      const std::size_t k1 = std::min(kk, k0 + tile);
      for (std::size_t j0 = 0; j0 < n; j0 += tile) {
        const std::size_t j1 = std::min(n, j0 + tile);
        for (std::size_t i = i0; i < i1; ++i) {
          float* out_row = out.data.data() + i * n;
          const float* a_row = a.data.data() + i * kk;
          for (std::size_t k = k0; k < k1; ++k) {
            const float av = a_row[k];
            const float* b_row = b.data.data() + k * n;
            for (std::size_t j = j0; j < j1; ++j) out_row[j] += av * b_row[j];
          }
        }
      }
    }
  }
  return out;
}

TensorF32 transpose2d(const TensorF32& a) {
  VSR_REQUIRE(a.rank() == 2, ShapeError, "transpose2d: rank-2 required");
  TensorF32 out({a.shape[1], a.shape[0]});
  for (std::size_t i = 0; i < a.shape[0]; ++i)
    for (std::size_t j = 0; j < a.shape[1]; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

TensorF32 avg_pool_blocks(const TensorF32& x, const std::vector<int>& assignment,
                          std::size_t blocks) {
  VSR_REQUIRE(x.rank() == 2, ShapeError, "avg_pool_blocks: rank-2 required");
  VSR_REQUIRE(assignment.size() == x.shape[0], ShapeError,
              "avg_pool_blocks: assignment length mismatch");
  const std::size_t c = x.shape[1];
  TensorF32 out({blocks, c});
  std::vector<std::size_t> counts(blocks, 0);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const int b = assignment[i];
    VSR_REQUIRE(b >= 0 && static_cast<std::size_t>(b) < blocks, ShapeError,
                "avg_pool_blocks: block id out of range");
    counts[b]++;
    const float* src = x.row(i);
    float* dst = out.row(b);
    for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
  }
  for (std::size_t b = 0; b < blocks; ++b) {
    VSR_REQUIRE(counts[b] > 0, EmptyBlockError,
                "avg_pool_blocks: block " + std::to_string(b) + " has no members");
    const float inv = 1.0f / static_cast<float>(counts[b]);
    float* dst = out.row(b);
    for (std::size_t j = 0; j < c; ++j) dst[j] *= inv;
  }
  return out;
}

// --- Fixture IO --------------------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "fixture IO assumes a little-endian host");

void write_fixture(const TensorF32& t, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  VSR_REQUIRE(f.good(), IoError, "write_fixture: cannot open " + path);
  f.write("FVSR", 4);
  const std::uint32_t version = kFixtureFormatVersion;
  const std::uint32_t rank = static_cast<std::uint32_t>(t.rank());
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&rank), 4);
  for (std::size_t e : t.shape) {
    const std::uint64_t e64 = e;
    f.write(reinterpret_cast<const char*>(&e64), 8);
  }
  f.write(reinterpret_cast<const char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  VSR_REQUIRE(f.good(), IoError, "write_fixture: write failed for " + path);
}

TensorF32 read_fixture(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  VSR_REQUIRE(f.good(), IoError, "read_fixture: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  VSR_REQUIRE(f.good() && std::memcmp(magic, "FVSR", 4) == 0, IoError,
              "read_fixture: bad magic in " + path);
  std::uint32_t version = 0, rank = 0;
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&rank), 4);
  VSR_REQUIRE(f.good() && version == kFixtureFormatVersion, IoError,
              "read_fixture: unsupported format version in " + path);
  VSR_REQUIRE(rank >= 1 && rank <= 8, IoError, "read_fixture: implausible rank");
  std::vector<std::size_t> shape(rank);
  std::size_t n = 1;
  for (std::uint32_t a = 0; a < rank; ++a) {
    std::uint64_t e = 0;
    f.read(reinterpret_cast<char*>(&e), 8);
    VSR_REQUIRE(f.good() && e >= 1, IoError, "read_fixture: bad extent");
    shape[a] = static_cast<std::size_t>(e);
    n *= shape[a];
  }
  std::vector<float> data(n);
  f.read(reinterpret_cast<char*>(data.data()),
         static_cast<std::streamsize>(n * sizeof(float)));
  VSR_REQUIRE(f.good(), IoError, "read_fixture: truncated payload in " + path);
  return TensorF32(std::move(shape), std::move(data));
}

}  // namespace vsr
