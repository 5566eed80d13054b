#include "vsr/attention.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace vsr {

TensorF32 masked_softmax_rows(const TensorF32& scores, const MaskMatrix& mask) {
  VSR_REQUIRE(scores.rank() == 2, ShapeError, "masked_softmax_rows: rank-2 required");
  const std::size_t m = scores.shape[0], n = scores.shape[1];
  VSR_REQUIRE(mask.rows() == m && mask.cols() == n, ShapeError,
              "masked_softmax_rows: mask shape mismatch");
  scores.check_finite("masked_softmax_rows");

  TensorF32 out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const float* s = scores.row(i);
    float* o = out.row(i);
    float mx = -std::numeric_limits<float>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (mask.allowed(i, j) && s[j] > mx) mx = s[j];
    VSR_REQUIRE(mx > -std::numeric_limits<float>::infinity(), DegenerateRowError,
                "masked_softmax_rows: row " + std::to_string(i) + " has no allowed keys");
    float sum = 0.0f;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask.allowed(i, j)) {
        o[j] = std::exp(s[j] - mx);
        sum += o[j];
      } else {
        o[j] = 0.0f;
      }
    }
    const float inv = 1.0f / sum;
    for (std::size_t j = 0; j < n; ++j) o[j] *= inv;
  }
  return out;
}

TensorF32 dense_attention_oracle(const TensorF32& q, const TensorF32& k,
                                 const TensorF32& v, const MaskMatrix& mask,
                                 float scale) {
  VSR_REQUIRE(q.rank() == 2 && k.rank() == 2 && v.rank() == 2, ShapeError,
              "dense_attention_oracle: rank-2 operands required");
  VSR_REQUIRE(q.shape[1] == k.shape[1], ShapeError,
              "dense_attention_oracle: q/k head dim mismatch");
  VSR_REQUIRE(k.shape[0] == v.shape[0], ShapeError,
              "dense_attention_oracle: k/v length mismatch");
  VSR_REQUIRE(mask.rows() == q.shape[0] && mask.cols() == k.shape[0], ShapeError,
              "dense_attention_oracle: mask shape mismatch");

  TensorF32 scores = matmul(q, transpose2d(k));
  for (float& x : scores.data) x *= scale;
  TensorF32 alpha = masked_softmax_rows(scores, mask);
  return matmul(alpha, v);
}

TensorF32 dense_attention_stream(const TensorF32& q, const TensorF32& k,
                                 const TensorF32& v, const MaskMatrix& mask,
                                 float scale) {
  VSR_REQUIRE(q.rank() == 2 && k.rank() == 2 && v.rank() == 2, ShapeError,
              "dense_attention_stream: rank-2 operands required");
  VSR_REQUIRE(q.shape[1] == k.shape[1], ShapeError,
              "dense_attention_stream: q/k head dim mismatch");
  VSR_REQUIRE(k.shape[0] == v.shape[0], ShapeError,
              "dense_attention_stream: k/v length mismatch");
  const std::size_t m = q.shape[0], n = k.shape[0], d = q.shape[1], dv = v.shape[1];
  VSR_REQUIRE(mask.rows() == m && mask.cols() == n, ShapeError,
              "dense_attention_stream: mask shape mismatch");

  TensorF32 out({m, dv});
  std::vector<float> s(n);
  for (std::size_t i = 0; i < m; ++i) {
    const float* qi = q.row(i);
    float mx = -std::numeric_limits<float>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask.allowed(i, j)) continue;
      const float* kj = k.row(j);
      float dot = 0.0f;
      for (std::size_t c = 0; c < d; ++c) dot += qi[c] * kj[c];
      s[j] = dot * scale;
      if (s[j] > mx) mx = s[j];
    }
    VSR_REQUIRE(mx > -std::numeric_limits<float>::infinity(), DegenerateRowError,
                "dense_attention_stream: row " + std::to_string(i) + " has no allowed keys");
    float sum = 0.0f;
    float* oi = out.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask.allowed(i, j)) continue;
      const float w = std::exp(s[j] - mx);
      sum += w;
      const float* vj = v.row(j);
      for (std::size_t c = 0; c < dv; ++c) oi[c] += w * vj[c];
    }
    const float inv = 1.0f / sum;
    for (std::size_t c = 0; c < dv; ++c) oi[c] *= inv;
  }
  return out;
}

}  // namespace vsr
