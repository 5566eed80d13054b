#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "vsr/mask.hpp"
#include "vsr/rng.hpp"

using namespace vsr;

namespace {

SegmentLabels random_labels(std::size_t n, int segments, Rng& rng) {
  SegmentLabels labels;
  labels.seg.resize(n);
  // Guarantee every id appears.
  for (int s = 0; s < segments; ++s) labels.seg[static_cast<std::size_t>(s)] = s;
  for (std::size_t i = static_cast<std::size_t>(segments); i < n; ++i)
    labels.seg[i] = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(segments)));
  return labels;
}

}  // namespace

TEST_CASE("segment mask basic shapes") {
  SegmentLabels one;
  one.seg = {0, 0, 0};
  CHECK(build_segment_mask(one) == MaskMatrix::all_allowed(3, 3));

  SegmentLabels each;
  each.seg = {0, 1, 2, 3};
  CHECK(build_segment_mask(each) == MaskMatrix::diagonal(4));
}

TEST_CASE("segment mask [0,0,1,1,1] enumerated") {
  SegmentLabels labels;
  labels.seg = {0, 0, 1, 1, 1};
  MaskMatrix m = build_segment_mask(labels);
  std::size_t allowed = 0, disallowed = 0;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      const bool want = labels.seg[i] == labels.seg[j];
      CHECK(m.allowed(i, j) == want);
      (want ? allowed : disallowed)++;
    }
  CHECK(allowed == 13);  // 2x2 block + 3x3 block
  CHECK(disallowed == 12);
}

TEST_CASE("segment mask is an equivalence relation") {
  Rng rng(31);
  SegmentLabels labels = random_labels(24, 4, rng);
  MaskMatrix m = build_segment_mask(labels);
  const std::size_t n = labels.seg.size();
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(m.allowed(i, i));
    for (std::size_t j = 0; j < n; ++j) {
      CHECK(m.allowed(i, j) == m.allowed(j, i));
      if (!m.allowed(i, j)) continue;
      for (std::size_t k = 0; k < n; ++k)
        if (m.allowed(j, k)) CHECK(m.allowed(i, k));
    }
  }
}

TEST_CASE("segment mask rejects bad labelings") {
  SegmentLabels gap;
  gap.seg = {0, 2, 2};
  CHECK_THROWS_AS(build_segment_mask(gap), ConfigError);
  SegmentLabels neg;
  neg.seg = {0, -1};
  CHECK_THROWS_AS(build_segment_mask(neg), ConfigError);
}

TEST_CASE("causal mask single frame and per-token frames") {
  CausalSpec one;
  one.frame = {0, 0, 0, 0};
  CHECK(build_causal_mask(one, 4) == MaskMatrix::all_allowed(4, 4));

  CausalSpec tri;
  tri.frame = {0, 1, 2};
  MaskMatrix m = build_causal_mask(tri, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(m.allowed(i, j) == (j <= i));
}

TEST_CASE("causal mask two frames of four tokens") {
  CausalSpec spec;
  spec.frame = {0, 0, 0, 0, 1, 1, 1, 1};
  MaskMatrix m = build_causal_mask(spec, 8);
  for (std::size_t i = 0; i < 4; ++i) CHECK(m.count_allowed_in_row(i) == 4);
  for (std::size_t i = 4; i < 8; ++i) CHECK(m.count_allowed_in_row(i) == 8);
}

TEST_CASE("causal mask lookahead admits bounded future frames") {
  CausalSpec spec;
  spec.frame = {0, 1, 2, 3};
  spec.lookahead = 1;
  MaskMatrix m = build_causal_mask(spec, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(m.allowed(i, j) == (spec.frame[j] <= spec.frame[i] + 1));
}

TEST_CASE("causal mask rows are constant within a frame") {
  CausalSpec spec;
  spec.frame = {0, 0, 1, 1, 1, 2};
  MaskMatrix m = build_causal_mask(spec, 6);
  for (std::size_t i = 0; i + 1 < 6; ++i) {
    if (spec.frame[i] != spec.frame[i + 1]) continue;
    for (std::size_t j = 0; j < 6; ++j) CHECK(m.allowed(i, j) == m.allowed(i + 1, j));
  }
}

TEST_CASE("causal mask rejects invalid specs") {
  CausalSpec dec;
  dec.frame = {1, 0};
  CHECK_THROWS_AS(build_causal_mask(dec, 2), ConfigError);
  CausalSpec spec;
  spec.frame = {0, 1};
  CHECK_THROWS_AS(build_causal_mask(spec, 3), ShapeError);
}

namespace {

std::vector<Position3D> row_positions(int n) {
  std::vector<Position3D> pos;
  for (int w = 0; w < n; ++w) pos.push_back({0, 0, w});
  return pos;
}

}  // namespace

TEST_CASE("locality window matches enumerated 1x8 example") {
  LocalityWindow win;
  win.extent_h = 1;
  win.extent_w = 3;
  win.frame_extent_h = 1;
  win.frame_extent_w = 8;
  auto pos = row_positions(8);

  win.mode = LocalityWindow::Mode::boundary_truncated;
  MaskMatrix trunc = build_locality_mask(win, pos);
  CHECK(trunc.count_allowed_in_row(0) == 2);  // keys {0,1}
  CHECK(trunc.allowed(0, 0));
  CHECK(trunc.allowed(0, 1));
  CHECK_FALSE(trunc.allowed(0, 2));
  CHECK(trunc.count_allowed_in_row(4) == 3);  // interior keeps the full window

  win.mode = LocalityWindow::Mode::boundary_preserved;
  MaskMatrix pres = build_locality_mask(win, pos);
  CHECK(pres.count_allowed_in_row(0) == 3);  // keys {0,1,2}
  CHECK(pres.allowed(0, 2));
  CHECK_FALSE(pres.allowed(0, 3));
}

TEST_CASE("locality window equal to frame extent allows everything") {
  // Preserved mode: the slid window is the whole frame for every query.
  LocalityWindow win;
  win.mode = LocalityWindow::Mode::boundary_preserved;
  win.extent_h = 4;
  win.extent_w = 6;
  win.frame_extent_h = 4;
  win.frame_extent_w = 6;
  std::vector<Position3D> pos;
  for (int h = 0; h < 4; ++h)
    for (int w = 0; w < 6; ++w) pos.push_back({0, h, w});
  CHECK(build_locality_mask(win, pos) == MaskMatrix::all_allowed(24, 24));

  // Truncated mode keeps the centered radius even at full extent, so corner
  // pairs drop out once the frame is wider than extent/2 + 1.
  win.mode = LocalityWindow::Mode::boundary_truncated;
  MaskMatrix trunc = build_locality_mask(win, pos);
  CHECK_FALSE(trunc.allowed(0, 23));  // (0,0) vs (3,5): |dh|=3 > 4/2
  CHECK(trunc.allowed(0, 0));

  // With a frame small enough for the radius, truncated is all-allowed too.
  LocalityWindow tiny;
  tiny.mode = LocalityWindow::Mode::boundary_truncated;
  tiny.extent_h = 2;
  tiny.extent_w = 2;
  tiny.frame_extent_h = 2;
  tiny.frame_extent_w = 2;
  std::vector<Position3D> tp{{0, 0, 0}, {0, 0, 1}, {0, 1, 0}, {0, 1, 1}};
  CHECK(build_locality_mask(tiny, tp) == MaskMatrix::all_allowed(4, 4));
}

TEST_CASE("boundary-preserved windows keep full coverage per frame") {
  LocalityWindow win;
  win.mode = LocalityWindow::Mode::boundary_preserved;
  win.extent_h = 3;
  win.extent_w = 5;
  win.frame_extent_h = 7;
  win.frame_extent_w = 9;
  std::vector<Position3D> pos;
  for (int h = 0; h < 7; ++h)
    for (int w = 0; w < 9; ++w) pos.push_back({0, h, w});
  MaskMatrix m = build_locality_mask(win, pos);
  for (std::size_t i = 0; i < pos.size(); ++i)
    CHECK(m.count_allowed_in_row(i) == 15);  // extent_h * extent_w
}

TEST_CASE("locality respects the relative-range guarantee in both modes") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    LocalityWindow win;
    win.frame_extent_h = 3 + static_cast<int>(rng.uniform_index(8));
    win.frame_extent_w = 3 + static_cast<int>(rng.uniform_index(8));
    win.extent_h = 1 + static_cast<int>(rng.uniform_index(
                           static_cast<std::uint64_t>(win.frame_extent_h)));
    win.extent_w = 1 + static_cast<int>(rng.uniform_index(
                           static_cast<std::uint64_t>(win.frame_extent_w)));
    std::vector<Position3D> pos;
    for (int t = 0; t < 2; ++t)
      for (int h = 0; h < win.frame_extent_h; ++h)
        for (int w = 0; w < win.frame_extent_w; ++w) pos.push_back({t, h, w});
    for (auto mode : {LocalityWindow::Mode::boundary_truncated,
                      LocalityWindow::Mode::boundary_preserved}) {
      win.mode = mode;
      MaskMatrix m = build_locality_mask(win, pos);
      for (std::size_t i = 0; i < pos.size(); ++i)
        for (std::size_t j = 0; j < pos.size(); ++j) {
          if (!m.allowed(i, j)) continue;
          CHECK(std::abs(pos[i].h - pos[j].h) <= win.extent_h - 1);
          CHECK(std::abs(pos[i].w - pos[j].w) <= win.extent_w - 1);
        }
    }
  }
}

TEST_CASE("locality imposes no temporal restriction") {
  LocalityWindow win;
  win.extent_h = 1;
  win.extent_w = 1;
  win.frame_extent_h = 2;
  win.frame_extent_w = 2;
  std::vector<Position3D> pos{{0, 0, 0}, {5, 0, 0}, {9, 0, 0}};
  MaskMatrix m = build_locality_mask(win, pos);
  CHECK(m == MaskMatrix::all_allowed(3, 3));  // same spatial site across frames
}

TEST_CASE("locality rejects oversized windows and stray positions") {
  LocalityWindow win;
  win.extent_h = 5;
  win.extent_w = 1;
  win.frame_extent_h = 4;
  win.frame_extent_w = 4;
  CHECK_THROWS_AS(build_locality_mask(win, row_positions(4)), ConfigError);

  win.extent_h = 1;
  std::vector<Position3D> stray{{0, 0, 7}};
  CHECK_THROWS_AS(build_locality_mask(win, stray), ConfigError);
}

TEST_CASE("compose_masks conjunction algebra") {
  CausalSpec spec;
  spec.frame = {0, 1, 2};
  MaskMatrix causal = build_causal_mask(spec, 3);
  MaskMatrix all = MaskMatrix::all_allowed(3, 3);
  MaskMatrix diag = MaskMatrix::diagonal(3);

  CHECK(compose_masks({causal, all}) == causal);
  CHECK(compose_masks({causal, causal}) == causal);
  CHECK(compose_masks({causal, diag}) == diag);
  CHECK_THROWS_AS(compose_masks({causal, MaskMatrix::all_allowed(4, 4)}), ShapeError);
  CHECK_THROWS_AS(compose_masks({}), ConfigError);
}

TEST_CASE("mask PBM export writes a parseable bitmap") {
  MaskMatrix m = MaskMatrix::diagonal(3);
  const std::string path = "mask_debug.pbm";
  write_mask_pbm(m, path);
  std::ifstream f(path);
  std::string magic;
  int w = 0, h = 0;
  f >> magic >> w >> h;
  CHECK(magic == "P1");
  CHECK(w == 3);
  CHECK(h == 3);
  std::string bits, line;
  while (f >> line) bits += line;
  CHECK(bits == "100010001");
  std::remove(path.c_str());
}
