#pragma once

#include <array>
#include <vector>

#include "vsr/grid.hpp"
#include "vsr/tensor.hpp"

namespace vsr {

// Rotary encoding over three position axes. Channels are split into one
// segment per axis; within a segment, channels (2i, 2i+1) form a rotation
// pair with inverse frequency theta0^(-2i/d_axis).
struct RopeConfig {
  int dim = 0;
  std::array<int, 3> axis_split{0, 0, 0};  // channels for (t, h, w)
  double theta0 = 10000.0;

  // Half the channels to t, a quarter each to h and w.
  static RopeConfig split_default(int dim);
  void validate() const;
};

// Rotates each token's channels by its position angles. invert applies the
// negated angles, exactly undoing a forward application.
TensorF32 apply_rope(const TensorF32& x, const std::vector<Position3D>& positions,
                     const RopeConfig& cfg, bool invert = false);

// Angular period 2*pi*theta0^(2i/d_axis) per rotation pair, one list per
// axis (t, h, w). Diagnostic for comparing window extents against the
// wavelengths the encoding can distinguish.
std::array<std::vector<double>, 3> rope_period_per_channel(const RopeConfig& cfg);

}  // namespace vsr
