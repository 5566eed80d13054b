#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vsr/rope.hpp"

using namespace vsr;

namespace {

double dot_row(const TensorF32& a, std::size_t i, const TensorF32& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.shape[1]; ++c)
    s += static_cast<double>(a.at(i, c)) * b.at(j, c);
  return s;
}

double row_norm(const TensorF32& a, std::size_t i) {
  return std::sqrt(dot_row(a, i, a, i));
}

}  // namespace

TEST_CASE("rope config validation") {
  auto odd_parts = [] {
    RopeConfig cfg;
    cfg.dim = 8;
    cfg.axis_split = {3, 3, 2};
    cfg.validate();
  };
  CHECK_THROWS_AS(odd_parts(), ConfigError);
  auto wrong_sum = [] {
    RopeConfig cfg;
    cfg.dim = 8;
    cfg.axis_split = {4, 2, 4};
    cfg.validate();
  };
  CHECK_THROWS_AS(wrong_sum(), ConfigError);
  RopeConfig ok = RopeConfig::split_default(16);
  CHECK(ok.axis_split[0] == 8);
  CHECK(ok.axis_split[1] == 4);
  CHECK(ok.axis_split[2] == 4);
}

TEST_CASE("rope at the origin is the identity") {
  Rng rng(3);
  TensorF32 x = TensorF32::gaussian({5, 16}, rng);
  std::vector<Position3D> pos(5, Position3D{0, 0, 0});
  CHECK(max_abs_diff(apply_rope(x, pos, RopeConfig::split_default(16)), x) == 0.0f);
}

TEST_CASE("rope preserves token norms") {
  Rng rng(5);
  TensorF32 x = TensorF32::gaussian({8, 24}, rng);
  std::vector<Position3D> pos;
  for (int i = 0; i < 8; ++i) pos.push_back({i * 3, i % 5, (i * 7) % 11});
  TensorF32 y = apply_rope(x, pos, RopeConfig::split_default(24));
  for (std::size_t i = 0; i < 8; ++i)
    CHECK(row_norm(y, i) == doctest::Approx(row_norm(x, i)).epsilon(1e-5));
}

TEST_CASE("rope scores depend only on position differences") {
  Rng rng(7);
  RopeConfig cfg = RopeConfig::split_default(32);
  for (int trial = 0; trial < 50; ++trial) {
    TensorF32 u = TensorF32::gaussian({1, 32}, rng);
    TensorF32 v = TensorF32::gaussian({1, 32}, rng);
    Position3D p{static_cast<int>(rng.uniform_index(20)),
                 static_cast<int>(rng.uniform_index(20)),
                 static_cast<int>(rng.uniform_index(20))};
    Position3D q{static_cast<int>(rng.uniform_index(20)),
                 static_cast<int>(rng.uniform_index(20)),
                 static_cast<int>(rng.uniform_index(20))};
    Position3D s{static_cast<int>(rng.uniform_index(30)),
                 static_cast<int>(rng.uniform_index(30)),
                 static_cast<int>(rng.uniform_index(30))};
    Position3D ps{p.t + s.t, p.h + s.h, p.w + s.w};
    Position3D qs{q.t + s.t, q.h + s.h, q.w + s.w};

    TensorF32 up = apply_rope(u, {p}, cfg);
    TensorF32 vq = apply_rope(v, {q}, cfg);
    TensorF32 ups = apply_rope(u, {ps}, cfg);
    TensorF32 vqs = apply_rope(v, {qs}, cfg);
    CHECK(dot_row(up, 0, vq, 0) == doctest::Approx(dot_row(ups, 0, vqs, 0)).epsilon(1e-4));
  }
}

TEST_CASE("rope per-axis shift invariance") {
  Rng rng(9);
  RopeConfig cfg = RopeConfig::split_default(16);
  TensorF32 u = TensorF32::gaussian({1, 16}, rng);
  TensorF32 v = TensorF32::gaussian({1, 16}, rng);
  Position3D p{4, 2, 7}, q{1, 5, 3};
  const double base =
      dot_row(apply_rope(u, {p}, cfg), 0, apply_rope(v, {q}, cfg), 0);
  for (int axis = 0; axis < 3; ++axis) {
    Position3D ps = p, qs = q;
    (axis == 0 ? ps.t : axis == 1 ? ps.h : ps.w) += 13;
    (axis == 0 ? qs.t : axis == 1 ? qs.h : qs.w) += 13;
    const double shifted =
        dot_row(apply_rope(u, {ps}, cfg), 0, apply_rope(v, {qs}, cfg), 0);
    CHECK(shifted == doctest::Approx(base).epsilon(1e-4));
  }
}

TEST_CASE("rope inverse rotation recovers the input") {
  Rng rng(11);
  TensorF32 x = TensorF32::gaussian({6, 32}, rng);
  std::vector<Position3D> pos;
  for (int i = 0; i < 6; ++i) pos.push_back({i, 2 * i, 3 * i});
  RopeConfig cfg = RopeConfig::split_default(32);
  TensorF32 back = apply_rope(apply_rope(x, pos, cfg), pos, cfg, /*invert=*/true);
  CHECK(max_abs_diff(back, x) < 1e-5f);
}

TEST_CASE("rope periods follow the closed form") {
  RopeConfig cfg;
  cfg.dim = 20;
  cfg.axis_split = {2, 16, 2};
  auto periods = rope_period_per_channel(cfg);

  // d_axis = 2: single pair at exponent zero.
  REQUIRE(periods[0].size() == 1);
  CHECK(periods[0][0] == doctest::Approx(2.0 * M_PI).epsilon(1e-12));

  // Strictly increasing within an axis.
  REQUIRE(periods[1].size() == 8);
  for (std::size_t i = 1; i < periods[1].size(); ++i)
    CHECK(periods[1][i] > periods[1][i - 1]);

  // Lowest-frequency pair for d_axis=16.
  CHECK(periods[1].back() ==
        doctest::Approx(2.0 * M_PI * std::pow(10000.0, 14.0 / 16.0)).epsilon(1e-10));
}
