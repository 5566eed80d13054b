#include "vsr/rope.hpp"

#include <cmath>

namespace vsr {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

RopeConfig RopeConfig::split_default(int dim) {
  RopeConfig cfg;
  cfg.dim = dim;
  cfg.axis_split = {dim / 2, dim / 4, dim / 4};
  cfg.validate();
  return cfg;
}

void RopeConfig::validate() const {
  int sum = 0;
  for (int part : axis_split) {
    VSR_REQUIRE(part > 0 && part % 2 == 0, ConfigError,
                "RopeConfig: axis split parts must be positive and even");
    sum += part;
  }
  VSR_REQUIRE(sum == dim, ConfigError, "RopeConfig: axis split must sum to dim");
  VSR_REQUIRE(theta0 > 1.0, ConfigError, "RopeConfig: theta0 must exceed 1");
}

TensorF32 apply_rope(const TensorF32& x, const std::vector<Position3D>& positions,
                     const RopeConfig& cfg, bool invert) {
  cfg.validate();
  VSR_REQUIRE(x.rank() == 2, ShapeError, "apply_rope: rank-2 required");
  VSR_REQUIRE(x.shape[1] == static_cast<std::size_t>(cfg.dim), ShapeError,
              "apply_rope: channel count does not match config dim");
  VSR_REQUIRE(positions.size() == x.shape[0], ShapeError,
              "apply_rope: position list length mismatch");

  const double sign = invert ? -1.0 : 1.0;
  TensorF32 out = x;
  for (std::size_t tok = 0; tok < x.shape[0]; ++tok) {
    const std::array<int, 3> pos{positions[tok].t, positions[tok].h, positions[tok].w};
    float* row = out.row(tok);
    int base = 0;
    for (int axis = 0; axis < 3; ++axis) {
      const int d_axis = cfg.axis_split[static_cast<std::size_t>(axis)];
      for (int i = 0; i < d_axis / 2; ++i) {
        const double inv_freq =
            std::pow(cfg.theta0, -2.0 * i / static_cast<double>(d_axis));
        const double angle = sign * pos[static_cast<std::size_t>(axis)] * inv_freq;
        const float c = static_cast<float>(std::cos(angle));
        const float s = static_cast<float>(std::sin(angle));
        const float x0 = row[base + 2 * i];
        const float x1 = row[base + 2 * i + 1];
        row[base + 2 * i] = x0 * c - x1 * s;
        row[base + 2 * i + 1] = x0 * s + x1 * c;
      }
      base += d_axis;
    }
  }
  return out;
}

std::array<std::vector<double>, 3> rope_period_per_channel(const RopeConfig& cfg) {
  cfg.validate();
  std::array<std::vector<double>, 3> out;
  for (int axis = 0; axis < 3; ++axis) {
    const int d_axis = cfg.axis_split[static_cast<std::size_t>(axis)];
    for (int i = 0; i < d_axis / 2; ++i)
      out[static_cast<std::size_t>(axis)].push_back(
          kTwoPi * std::pow(cfg.theta0, 2.0 * i / static_cast<double>(d_axis)));
  }
  return out;
}

}  // namespace vsr
