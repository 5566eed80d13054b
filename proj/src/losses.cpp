#include "vsr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace vsr {

void NoiseSchedule::require_valid(double t) {
  VSR_REQUIRE(t >= kScheduleTMin && t <= kScheduleTMax, ConfigError,
              "timestep outside schedule range");
}

double flow_matching_loss(const TensorF32& v_pred, const TensorF32& z0,
                          const TensorF32& z1, TensorF32* grad) {
  VSR_REQUIRE(v_pred.same_shape(z0) && v_pred.same_shape(z1), ShapeError,
              "flow_matching_loss: shape mismatch");
  const std::size_t n = v_pred.numel();
  VSR_REQUIRE(n > 0, ShapeError, "flow_matching_loss: empty input");
  if (grad) *grad = TensorF32(v_pred.shape);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double target = static_cast<double>(z1.data[i]) - z0.data[i];
    const double d = v_pred.data[i] - target;
    acc += d * d;
    if (grad) grad->data[i] = static_cast<float>(2.0 * d / static_cast<double>(n));
  }
  return acc / static_cast<double>(n);
}

std::vector<std::size_t> GradMagPerceptual::scales_for(std::size_t H, std::size_t W) {
  std::vector<std::size_t> out;
  for (std::size_t s : {std::size_t{1}, std::size_t{2}, std::size_t{4}})
    if (H % s == 0 && W % s == 0 && std::min(H, W) / s >= 4) out.push_back(s);
  return out;
}

namespace {

// Spatial average pooling of one [f x H x W x C] stack by s.
TensorF32 avg_pool_spatial(const TensorF32& x, std::size_t s) {
  const std::size_t f = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
  TensorF32 out({f, H / s, W / s, C});
  const float inv = 1.0f / static_cast<float>(s * s);
  for (std::size_t t = 0; t < f; ++t)
    for (std::size_t y = 0; y < H / s; ++y)
      for (std::size_t xcol = 0; xcol < W / s; ++xcol)
        for (std::size_t c = 0; c < C; ++c) {
          float acc = 0.0f;
          for (std::size_t dy = 0; dy < s; ++dy)
            for (std::size_t dx = 0; dx < s; ++dx)
              acc += x.at(t, y * s + dy, xcol * s + dx, c);
          out.at(t, y, xcol, c) = acc * inv;
        }
  return out;
}

}  // namespace

double GradMagPerceptual::eval(const TensorF32& x_pred, const TensorF32& x_gt,
                               TensorF32* grad_pred) const {
  VSR_REQUIRE(x_pred.rank() == 4, ShapeError, "GradMagPerceptual: rank-4 required");
  VSR_REQUIRE(x_pred.same_shape(x_gt), ShapeError, "GradMagPerceptual: shape mismatch");
  const std::size_t f = x_pred.shape[0], H = x_pred.shape[1], W = x_pred.shape[2],
                    C = x_pred.shape[3];
  const std::vector<std::size_t> scales = scales_for(H, W);
  VSR_REQUIRE(!scales.empty(), ShapeError,
              "GradMagPerceptual: spatial extents below minimum scale");
  if (grad_pred) *grad_pred = TensorF32(x_pred.shape);

  double total = 0.0;
  const double scale_w = 1.0 / static_cast<double>(scales.size());
  for (std::size_t s : scales) {
    const TensorF32 pp = avg_pool_spatial(x_pred, s);
    const TensorF32 pg = avg_pool_spatial(x_gt, s);
    const std::size_t h = H / s, w = W / s;
    const std::size_t n_diffs = f * C * (h * (w - 1) + (h - 1) * w);
    const double norm = scale_w / static_cast<double>(n_diffs);

    // Adjoint accumulates on the pooled grid first, then spreads through
    // the average pool.
    TensorF32 pooled_grad;
    if (grad_pred) pooled_grad = TensorF32(pp.shape);

    double acc = 0.0;
    for (std::size_t t = 0; t < f; ++t)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          for (std::size_t c = 0; c < C; ++c) {
            if (x + 1 < w) {
              const double gx = (static_cast<double>(pp.at(t, y, x + 1, c)) -
                                 pp.at(t, y, x, c)) -
                                (static_cast<double>(pg.at(t, y, x + 1, c)) -
                                 pg.at(t, y, x, c));
              acc += gx * gx;
              if (grad_pred) {
                const float d = static_cast<float>(2.0 * gx * norm);
                pooled_grad.at(t, y, x + 1, c) += d;
                pooled_grad.at(t, y, x, c) -= d;
              }
            }
            if (y + 1 < h) {
              const double gy = (static_cast<double>(pp.at(t, y + 1, x, c)) -
                                 pp.at(t, y, x, c)) -
                                (static_cast<double>(pg.at(t, y + 1, x, c)) -
                                 pg.at(t, y, x, c));
              acc += gy * gy;
              if (grad_pred) {
                const float d = static_cast<float>(2.0 * gy * norm);
                pooled_grad.at(t, y + 1, x, c) += d;
                pooled_grad.at(t, y, x, c) -= d;
              }
            }
          }
    total += acc * norm;

    if (grad_pred) {
      const float inv = 1.0f / static_cast<float>(s * s);
      for (std::size_t t = 0; t < f; ++t)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < C; ++c) {
              const float g = pooled_grad.at(t, y, x, c) * inv;
              if (g == 0.0f) continue;
              for (std::size_t dy = 0; dy < s; ++dy)
                for (std::size_t dx = 0; dx < s; ++dx)
                  grad_pred->at(t, y * s + dy, x * s + dx, c) += g;
            }
    }
  }
  return total;
}

double reconstruction_loss(const TensorF32& x_pred, const TensorF32& x_gt,
                           const PerceptualMetric& perceptual, TensorF32* grad,
                           double* l2_part, double* perc_part) {
  VSR_REQUIRE(x_pred.same_shape(x_gt), ShapeError, "reconstruction_loss: shape mismatch");
  TensorF32 perc_grad;
  const double perc =
      perceptual.eval(x_pred, x_gt, grad ? &perc_grad : nullptr);
  if (grad)
    VSR_REQUIRE(perc_grad.same_shape(x_pred), ShapeError,
                "reconstruction_loss: perceptual metric left no gradient");
  double l2 = 0.0;
  if (grad) *grad = TensorF32(x_pred.shape);
  for (std::size_t i = 0; i < x_pred.numel(); ++i) {
    const double d = static_cast<double>(x_pred.data[i]) - x_gt.data[i];
    l2 += d * d;
    if (grad)
      grad->data[i] = static_cast<float>(
          2.0 * d + kLambdaPerceptual * perc_grad.data[i]);
  }
  if (l2_part) *l2_part = l2;
  if (perc_part) *perc_part = perc;
  return l2 + kLambdaPerceptual * perc;
}

double decoder_distill_loss(const TensorF32& x_pred, const TensorF32& x_gt,
                            const TensorF32& x_wan, const PerceptualMetric& perceptual,
                            TensorF32* grad) {
  VSR_REQUIRE(x_pred.same_shape(x_gt) && x_pred.same_shape(x_wan), ShapeError,
              "decoder_distill_loss: shape mismatch");
  TensorF32 g_gt, g_wan;
  const double a = reconstruction_loss(x_pred, x_gt, perceptual, grad ? &g_gt : nullptr);
  const double b =
      reconstruction_loss(x_pred, x_wan, perceptual, grad ? &g_wan : nullptr);
  if (grad) {
    *grad = std::move(g_gt);
    add_inplace(*grad, g_wan);
  }
  return a + b;
}

std::vector<std::size_t> select_decode_latents(std::size_t latent_count,
                                               std::size_t count, std::uint64_t seed) {
  VSR_REQUIRE(count <= latent_count, ConfigError,
              "select_decode_latents: requested more frames than available");
  std::vector<std::size_t> pool(latent_count);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first `count` entries become the sample.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_index(latent_count - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

TensorF32 dmd_gradient(const TensorF32& z_pred, const ScorePair& scores,
                       const DmdConfig& cfg) {
  VSR_REQUIRE(cfg.n_samples >= 1, ConfigError, "dmd_gradient: n_samples must be >= 1");
  VSR_REQUIRE(static_cast<bool>(scores.real_score_fn) &&
                  static_cast<bool>(scores.fake_score_fn),
              ConfigError, "dmd_gradient: score functions must be set");
  if (cfg.fixed_t) NoiseSchedule::require_valid(*cfg.fixed_t);

  const std::size_t n = z_pred.numel();
  std::vector<double> acc(n, 0.0);
  Rng rng(cfg.seed);
  TensorF32 z_t(z_pred.shape);
  for (std::size_t sample = 0; sample < cfg.n_samples; ++sample) {
    const double t =
        cfg.fixed_t ? *cfg.fixed_t : rng.uniform(kScheduleTMin, kScheduleTMax);
    const double a = NoiseSchedule::alpha(t), s = NoiseSchedule::sigma(t);
    const double wa = NoiseSchedule::weight(t) * a;
    for (std::size_t i = 0; i < n; ++i)
      z_t.data[i] = static_cast<float>(a * z_pred.data[i] + s * rng.gaussian());
    const TensorF32 s_real = scores.real_score_fn(z_t, t);
    const TensorF32 s_fake = scores.fake_score_fn(z_t, t);
    VSR_REQUIRE(s_real.same_shape(z_pred) && s_fake.same_shape(z_pred), ShapeError,
                "dmd_gradient: score output shape mismatch");
    for (std::size_t i = 0; i < n; ++i)
      acc[i] += wa * (static_cast<double>(s_fake.data[i]) - s_real.data[i]);
  }
  TensorF32 out(z_pred.shape);
  const double inv = 1.0 / static_cast<double>(cfg.n_samples);
  for (std::size_t i = 0; i < n; ++i) out.data[i] = static_cast<float>(acc[i] * inv);
  return out;
}

std::string LossReport::csv_header() { return "l_dmd,l_fm,l_recon_l2,l_perc,total"; }

std::string LossReport::csv_row() const {
  std::ostringstream os;
  os << l_dmd << ',' << l_fm << ',' << l_recon_l2 << ',' << l_perc << ',' << total();
  return os.str();
}

}  // namespace vsr
