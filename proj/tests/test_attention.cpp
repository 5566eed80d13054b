#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vsr/attention.hpp"

using namespace vsr;

namespace {

// Reference softmax over an explicit index set, double accumulation.
std::vector<float> softmax_subset(const std::vector<float>& scores,
                                  const std::vector<std::size_t>& idx) {
  double mx = -1e300;
  for (std::size_t j : idx) mx = std::max(mx, static_cast<double>(scores[j]));
  double sum = 0.0;
  std::vector<float> out(scores.size(), 0.0f);
  for (std::size_t j : idx) sum += std::exp(static_cast<double>(scores[j]) - mx);
  for (std::size_t j : idx)
    out[j] = static_cast<float>(std::exp(static_cast<double>(scores[j]) - mx) / sum);
  return out;
}

}  // namespace

TEST_CASE("masked softmax uniform scores give uniform weights") {
  TensorF32 scores = TensorF32::full({2, 4}, 1.7f);
  TensorF32 p = masked_softmax_rows(scores, MaskMatrix::all_allowed(2, 4));
  for (float x : p.data) CHECK(x == doctest::Approx(0.25f).epsilon(1e-6));
}

TEST_CASE("masked softmax with diagonal mask yields identity rows") {
  Rng rng(3);
  TensorF32 scores = TensorF32::gaussian({5, 5}, rng);
  TensorF32 p = masked_softmax_rows(scores, MaskMatrix::diagonal(5));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      CHECK(p.at(i, j) == doctest::Approx(i == j ? 1.0f : 0.0f));
}

TEST_CASE("masked softmax equals independent per-segment softmax") {
  Rng rng(5);
  const std::size_t n = 10;
  SegmentLabels labels;
  labels.seg = {0, 0, 0, 1, 1, 0, 1, 1, 0, 1};
  MaskMatrix mask = build_segment_mask(labels);
  TensorF32 scores = TensorF32::gaussian({n, n}, rng);
  TensorF32 p = masked_softmax_rows(scores, mask);

  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < n; ++j)
      if (labels.seg[j] == labels.seg[i]) idx.push_back(j);
    std::vector<float> row(scores.row(i), scores.row(i) + n);
    std::vector<float> want = softmax_subset(row, idx);
    for (std::size_t j = 0; j < n; ++j)
      CHECK(p.at(i, j) == doctest::Approx(want[j]).epsilon(1e-5));
  }
}

TEST_CASE("masked softmax rows sum to one over allowed entries") {
  Rng rng(7);
  TensorF32 scores = TensorF32::gaussian({16, 16}, rng);
  scale(scores, 30.0f);  // widen the dynamic range
  MaskMatrix mask(16, 16, false);
  for (std::size_t i = 0; i < 16; ++i) {
    mask.set(i, i, true);
    for (std::size_t j = 0; j < 16; ++j)
      if (rng.uniform() < 0.4) mask.set(i, j, true);
  }
  TensorF32 p = masked_softmax_rows(scores, mask);
  for (std::size_t i = 0; i < 16; ++i) {
    float sum = 0.0f;
    for (std::size_t j = 0; j < 16; ++j) {
      if (!mask.allowed(i, j)) CHECK(p.at(i, j) == 0.0f);
      sum += p.at(i, j);
    }
    CHECK(sum == doctest::Approx(1.0f).epsilon(1e-6));
  }
}

TEST_CASE("masked softmax is shift invariant per row") {
  Rng rng(9);
  TensorF32 scores = TensorF32::gaussian({4, 8}, rng);
  MaskMatrix mask = MaskMatrix::all_allowed(4, 8);
  TensorF32 base = masked_softmax_rows(scores, mask);
  TensorF32 shifted = scores;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j) shifted.at(i, j) += 3.25f * (1.0f + i);
  CHECK(max_abs_diff(masked_softmax_rows(shifted, mask), base) < 1e-6f);
}

TEST_CASE("masked softmax refuses degenerate rows") {
  TensorF32 scores = TensorF32::full({3, 3}, 0.0f);
  MaskMatrix mask = MaskMatrix::diagonal(3);
  mask.set(1, 1, false);
  CHECK_THROWS_AS(masked_softmax_rows(scores, mask), DegenerateRowError);
}

TEST_CASE("dense attention single token returns its value row") {
  Rng rng(11);
  TensorF32 q = TensorF32::gaussian({1, 4}, rng);
  TensorF32 k = TensorF32::gaussian({1, 4}, rng);
  TensorF32 v = TensorF32::gaussian({1, 4}, rng);
  TensorF32 out = dense_attention_oracle(q, k, v, MaskMatrix::all_allowed(1, 1), 0.5f);
  CHECK(max_abs_diff(out, v) < 1e-6f);
}

TEST_CASE("dense attention approaches hard selection at large scale") {
  // Orthonormal keys, q aligned with key 2; softmax sharpens toward v row 2.
  const std::size_t L = 4, d = 4;
  TensorF32 k({L, d});
  for (std::size_t i = 0; i < L; ++i) k.at(i, i) = 1.0f;
  TensorF32 v = k;
  TensorF32 q({1, d});
  q.at(0, 2) = 1.0f;
  const float sc = 20.0f;  // sc * |q|^2 = 20
  MaskMatrix mask = MaskMatrix::all_allowed(1, L);
  TensorF32 out = dense_attention_oracle(q, k, v, mask, sc);
  for (std::size_t j = 0; j < d; ++j)
    CHECK(out.at(0, j) == doctest::Approx(j == 2 ? 1.0f : 0.0f).epsilon(1e-3));
}

TEST_CASE("dense attention causal L=3 matches hand expansion") {
  Rng rng(13);
  const std::size_t d = 3;
  TensorF32 q = TensorF32::gaussian({3, d}, rng);
  TensorF32 k = TensorF32::gaussian({3, d}, rng);
  TensorF32 v = TensorF32::gaussian({3, d}, rng);
  const float sc = 1.0f / std::sqrt(3.0f);
  CausalSpec spec;
  spec.frame = {0, 1, 2};
  TensorF32 out = dense_attention_oracle(q, k, v, build_causal_mask(spec, 3), sc);

  for (std::size_t t = 0; t < 3; ++t) {
    std::vector<double> s(t + 1);
    double mx = -1e300;
    for (std::size_t j = 0; j <= t; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c)
        dot += static_cast<double>(q.at(t, c)) * k.at(j, c);
      s[j] = dot * sc;
      mx = std::max(mx, s[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j <= t; ++j) z += std::exp(s[j] - mx);
    for (std::size_t c = 0; c < d; ++c) {
      double want = 0.0;
      for (std::size_t j = 0; j <= t; ++j)
        want += std::exp(s[j] - mx) / z * v.at(j, c);
      CHECK(out.at(t, c) == doctest::Approx(static_cast<float>(want)).epsilon(1e-5));
    }
  }
}

TEST_CASE("dense attention is permutation equivariant") {
  Rng rng(17);
  const std::size_t L = 12, d = 8;
  TensorF32 q = TensorF32::gaussian({L, d}, rng);
  TensorF32 k = TensorF32::gaussian({L, d}, rng);
  TensorF32 v = TensorF32::gaussian({L, d}, rng);
  MaskMatrix mask(L, L, false);
  for (std::size_t i = 0; i < L; ++i) {
    mask.set(i, i, true);
    for (std::size_t j = 0; j < L; ++j)
      if (rng.uniform() < 0.5) mask.set(i, j, true);
  }
  const float sc = 1.0f / std::sqrt(static_cast<float>(d));
  TensorF32 base = dense_attention_oracle(q, k, v, mask, sc);

  std::vector<std::size_t> perm(L);
  for (std::size_t i = 0; i < L; ++i) perm[i] = i;
  for (std::size_t i = L; i > 1; --i)
    std::swap(perm[i - 1], perm[rng.uniform_index(i)]);

  TensorF32 qp({L, d}), kp({L, d}), vp({L, d});
  MaskMatrix mp(L, L, false);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      qp.at(i, c) = q.at(perm[i], c);
      kp.at(i, c) = k.at(perm[i], c);
      vp.at(i, c) = v.at(perm[i], c);
    }
    for (std::size_t j = 0; j < L; ++j)
      if (mask.allowed(perm[i], perm[j])) mp.set(i, j, true);
  }
  TensorF32 out = dense_attention_oracle(qp, kp, vp, mp, sc);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t c = 0; c < d; ++c)
      CHECK(out.at(i, c) == doctest::Approx(base.at(perm[i], c)).epsilon(1e-6));
}

TEST_CASE("streaming dense kernel matches the materialized oracle") {
  Rng rng(19);
  const std::size_t L = 40, d = 16;
  TensorF32 q = TensorF32::gaussian({L, d}, rng);
  TensorF32 k = TensorF32::gaussian({L, d}, rng);
  TensorF32 v = TensorF32::gaussian({L, d}, rng);
  MaskMatrix mask(L, L, false);
  for (std::size_t i = 0; i < L; ++i) {
    mask.set(i, i, true);
    for (std::size_t j = 0; j < L; ++j)
      if (rng.uniform() < 0.3) mask.set(i, j, true);
  }
  const float sc = 1.0f / std::sqrt(static_cast<float>(d));
  TensorF32 a = dense_attention_oracle(q, k, v, mask, sc);
  TensorF32 b = dense_attention_stream(q, k, v, mask, sc);
  CHECK(max_abs_diff(a, b) < 1e-6f);
}
