#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vsr/rng.hpp"
#include "vsr/tensor.hpp"

namespace vsr {

// Perceptual-loss weight in the reconstruction and distillation objectives.
inline constexpr double kLambdaPerceptual = 2.0;

// Linear noising path: z_t = alpha(t) * z + sigma(t) * eps, t in [kScheduleTMin,
// kScheduleTMax]. weight(t) is the distribution-matching gradient weighting.
inline constexpr double kScheduleTMin = 0.05;
inline constexpr double kScheduleTMax = 0.95;

struct NoiseSchedule {
  static double alpha(double t) { return 1.0 - t; }
  static double sigma(double t) { return t; }
  static double weight(double t) {
    const double a = alpha(t), s = sigma(t);
    return (a * a + s * s) / (a * a);
  }
  static void require_valid(double t);
};

// --- Flow matching -----------------------------------------------------------

// Mean squared error between the predicted velocity and the linear-path target
// z1 - z0. If grad is non-null it receives d(loss)/d(v_pred).
double flow_matching_loss(const TensorF32& v_pred, const TensorF32& z0,
                          const TensorF32& z1, TensorF32* grad = nullptr);

// --- Perceptual metric -------------------------------------------------------

// Differentiable pair metric on HR frame stacks [f x H x W x C]. Implementations
// must fill grad_pred with d(metric)/d(x_pred) when it is non-null.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual double eval(const TensorF32& x_pred, const TensorF32& x_gt,
                      TensorF32* grad_pred) const = 0;
  virtual std::string name() const = 0;
};

// Pretrained-free default: mean squared difference of forward-difference
// gradient fields, averaged over dyadic scales {1, 2, 4} that keep at least
// 4 pixels per side and divide both spatial extents. Zero iff the inputs have
// identical spatial gradients at every retained scale.
class GradMagPerceptual final : public PerceptualMetric {
 public:
  double eval(const TensorF32& x_pred, const TensorF32& x_gt,
              TensorF32* grad_pred) const override;
  std::string name() const override { return "gradmag_multiscale"; }

  static std::vector<std::size_t> scales_for(std::size_t H, std::size_t W);
};

// --- Reconstruction and distillation -----------------------------------------

// ||x_pred - x_gt||^2 + lambda * perceptual(x_pred, x_gt). The L2 part is a
// sum of squares (not a mean). Optional out-params split the two components.
double reconstruction_loss(const TensorF32& x_pred, const TensorF32& x_gt,
                           const PerceptualMetric& perceptual,
                           TensorF32* grad = nullptr, double* l2_part = nullptr,
                           double* perc_part = nullptr);

// Two reconstruction terms sharing x_pred: one against ground truth, one
// against the reference decoder output.
double decoder_distill_loss(const TensorF32& x_pred, const TensorF32& x_gt,
                            const TensorF32& x_wan, const PerceptualMetric& perceptual,
                            TensorF32* grad = nullptr);

// Seeded choice of which latent frames get decoded for the pixel-space terms
// in a given iteration. Returns `count` distinct indices in ascending order.
std::vector<std::size_t> select_decode_latents(std::size_t latent_count,
                                               std::size_t count, std::uint64_t seed);

// --- Distribution matching ---------------------------------------------------

// Score functions of the *noised* marginals: (z_t, t) -> grad_z log p_t(z_t),
// same shape as z_t. Both live on the same NoiseSchedule.
struct ScorePair {
  std::function<TensorF32(const TensorF32&, double)> real_score_fn;
  std::function<TensorF32(const TensorF32&, double)> fake_score_fn;
};

struct DmdConfig {
  std::size_t n_samples = 1;
  std::uint64_t seed = 0;
  // When set, every sample uses this timestep; otherwise t ~ U[kScheduleTMin,
  // kScheduleTMax] per sample.
  std::optional<double> fixed_t;
};

// Monte-Carlo estimate of the distribution-matching gradient at z_pred:
// average over (t, eps) of weight(t) * alpha(t) * (fake_score - real_score)
// evaluated at z_t = alpha(t) * z_pred + sigma(t) * eps. Pushing z_pred along
// the negative of this direction decreases KL(fake || real).
TensorF32 dmd_gradient(const TensorF32& z_pred, const ScorePair& scores,
                       const DmdConfig& cfg);

// --- Diagnostics -------------------------------------------------------------

struct LossReport {
  double l_dmd = 0.0;  // gradient-norm proxy; the KL itself is not computable
  double l_fm = 0.0;
  double l_recon_l2 = 0.0;
  double l_perc = 0.0;

  double total() const { return l_dmd + l_fm + l_recon_l2 + kLambdaPerceptual * l_perc; }

  static std::string csv_header();
  std::string csv_row() const;
};

}  // namespace vsr
