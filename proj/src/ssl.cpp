//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/ssl.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mvcgt {

NoisySample inject_noise(const GraphFeatures &clean, double sigma,
                         CounterRng &rng) {
  if (!(sigma >= 0.0))
    throw std::invalid_argument("noise sigma must be non-negative");
  const int e_count = clean.num_edges();
  NoisySample s;
  s.angles.resize(e_count);
  s.angle_noise.resize(e_count);
  s.distances.resize(e_count);
  s.distance_noise.resize(e_count);
  for (int e = 0; e < e_count; ++e)
    for (int k = 0; k < 3; ++k) {
      const double theta = clean.angles[e][k];
      const double noisy = std::clamp(theta + sigma * rng.normal(), 0.0,
                                      std::numbers::pi);
      s.angles[e][k] = noisy;
      s.angle_noise[e][k] = noisy - theta;
    }
  for (int e = 0; e < e_count; ++e) {
    const double d = clean.distances[e];
    const double noisy = std::max(d + sigma * rng.normal(),
                                  kMinNoisyDistance);
    s.distances[e] = noisy;
    s.distance_noise[e] = noisy - d;
  }
  return s;
}

GraphFeatures apply_noise(const GraphFeatures &clean,
                          const NoisySample &noise,
                          const FeaturizerOptions &opts) {
  GraphFeatures f = clean;
  set_angles(f, noise.angles, opts.angle_spec());
  set_so3_distances(f, noise.distances, opts.distance_spec());
  return f;
}

template <class T>
std::array<Tensor<T>, 2>
noise_targets(std::span<const NoisySample *const> samples) {
  std::vector<T> angles, distances;
  for (const auto *s: samples) {
    for (const auto &a: s->angle_noise)
      for (double v: a)
        angles.push_back(static_cast<T>(v));
    for (double v: s->distance_noise)
      distances.push_back(static_cast<T>(v));
  }
  const int e_count = static_cast<int>(distances.size());
  return { Tensor<T>::from_data({ e_count, 3 }, std::move(angles)),
           Tensor<T>::from_data({ e_count, 1 }, std::move(distances)) };
}

template <class T>
Tensor<T> denoising_loss(const Tensor<T> &predicted,
                         const Tensor<T> &target) {
  if (predicted.shape() != target.shape())
    throw ShapeError("denoising_loss: prediction " + shape_str(predicted.shape())
                     + " vs target " + shape_str(target.shape()));
  return sum(square(sub(predicted, target)));
}

template <class T>
Tensor<T> nt_xent(const Tensor<T> &z1, const Tensor<T> &z2, double tau) {
  if (z1.shape() != z2.shape() || z1.rank() != 2)
    throw ShapeError("nt_xent: views " + shape_str(z1.shape()) + " and "
                     + shape_str(z2.shape()));
  const int n = z1.rows();
  if (n < 2)
    throw std::invalid_argument("nt_xent needs at least two pairs");
  if (!(tau > 0.0))
    throw std::invalid_argument("nt_xent temperature must be positive");

  const Tensor<T> z = concat<T>({ z1, z2 }, 0);
  const Tensor<T> norms = row_norm(z);
  for (int a = 0; a < 2 * n; ++a)
    if (!(norms.data()[a] > T(0)))
      throw std::invalid_argument("nt_xent: zero-norm embedding row "
                                  + std::to_string(a));
  const Tensor<T> unit = div(z, norms);
  // Cosine similarities are at most 1, so subtracting 1/tau keeps every
  // exponent non-positive.
  const T inv_tau = static_cast<T>(1.0 / tau);
  const Tensor<T> logits = add_scalar(
    scale(matmul(unit, transpose(unit)), inv_tau), -inv_tau);

  const int m = 2 * n;
  std::vector<T> off_diag(static_cast<std::size_t>(m) * m, T(1));
  std::vector<T> positive(static_cast<std::size_t>(m) * m, T(0));
  for (int a = 0; a < m; ++a) {
    off_diag[a * m + a] = T(0);
    positive[a * m + (a + n) % m] = T(1);
  }
  const auto mask = Tensor<T>::from_data({ m, m }, std::move(off_diag));
  const auto pos = Tensor<T>::from_data({ m, m }, std::move(positive));

  const Tensor<T> log_denom = log(sum(mul(exp(logits), mask), 1));
  const Tensor<T> pos_logit = sum(mul(logits, pos), 1);
  return mean(sub(log_denom, pos_logit));
}

template <class T>
PretrainLoss<T> pretrain_loss(const CrystalModel<T> &model,
                              const ModelInputs<T> &noisy,
                              const std::array<Tensor<T>, 2> &targets,
                              const LossWeights &weights, double tau,
                              RunMode mode) {
  const EncoderOutput<T> se3 = model.se3()(noisy, mode);
  const EncoderOutput<T> so3 = model.so3()(noisy, mode);
  PretrainLoss<T> out;
  out.se3 = denoising_loss(model.predict_angle_noise(se3), targets[0]);
  out.so3 = denoising_loss(model.predict_distance_noise(so3, noisy),
                           targets[1]);
  out.contrast = nt_xent(se3.graph, so3.graph, tau);
  out.total = add(add(scale(out.contrast, static_cast<T>(weights.contrast)),
                      scale(out.se3, static_cast<T>(weights.se3))),
                  scale(out.so3, static_cast<T>(weights.so3)));
  return out;
}

template <class T>
Tensor<T> mse_loss(const Tensor<T> &predicted, const Tensor<T> &target) {
  if (predicted.shape() != target.shape())
    throw ShapeError("mse_loss: prediction " + shape_str(predicted.shape())
                     + " vs target " + shape_str(target.shape()));
  return mean(square(sub(predicted, target)));
}

#define MVCGT_INSTANTIATE_SSL(T)                                             \
  template std::array<Tensor<T>, 2> noise_targets(                           \
    std::span<const NoisySample *const>);                                    \
  template Tensor<T> denoising_loss(const Tensor<T> &, const Tensor<T> &);  \
  template Tensor<T> nt_xent(const Tensor<T> &, const Tensor<T> &, double);  \
  template PretrainLoss<T> pretrain_loss(                                    \
    const CrystalModel<T> &, const ModelInputs<T> &,                         \
    const std::array<Tensor<T>, 2> &, const LossWeights &, double, RunMode); \
  template Tensor<T> mse_loss(const Tensor<T> &, const Tensor<T> &);
MVCGT_INSTANTIATE_SSL(float)
MVCGT_INSTANTIATE_SSL(double)
#undef MVCGT_INSTANTIATE_SSL

}  // namespace mvcgt
