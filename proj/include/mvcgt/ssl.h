//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_SSL_H_
#define MVCGT_SSL_H_

#include <array>
#include <span>
#include <vector>

#include "mvcgt/batch.h"
#include "mvcgt/model.h"
#include "mvcgt/rng.h"

namespace mvcgt {

// Perturbed geometry of one structure. Noise entries are the realized
// (post-clamp) differences noisy - clean.
struct NoisySample {
  std::vector<std::array<double, 3>> angles;       // in [0, pi]
  std::vector<std::array<double, 3>> angle_noise;
  std::vector<double> distances;                   // > 0
  std::vector<double> distance_noise;
};

// Smallest perturbed distance; keeps the clamp inside (0, inf).
constexpr double kMinNoisyDistance = 1e-6;

// Clamped additive noise: one draw per (edge, angle channel) in edge-major
// order, then one draw per edge for the distance.
NoisySample inject_noise(const GraphFeatures &clean, double sigma,
                         CounterRng &rng);

// Clean features with the invariant view's angles and the equivariant
// view's distances replaced by the noisy ones.
GraphFeatures apply_noise(const GraphFeatures &clean,
                          const NoisySample &noise,
                          const FeaturizerOptions &opts);

// Realized noise of a batch as E x 3 (angles) and E x 1 (distances).
template <class T>
std::array<Tensor<T>, 2>
noise_targets(std::span<const NoisySample *const> samples);

// squared error summed over every edge of the batch
template <class T>
Tensor<T> denoising_loss(const Tensor<T> &predicted, const Tensor<T> &target);

// Symmetric NT-Xent over the 2N pool [z1; z2] with cosine similarity;
// row a is positive with row a +- N, every other row is a negative.
// Throws std::invalid_argument for N < 2, tau <= 0 or a zero row.
template <class T>
Tensor<T> nt_xent(const Tensor<T> &z1, const Tensor<T> &z2, double tau);

struct LossWeights {
  double contrast = 1.0;
  double se3 = 0.5;
  double so3 = 0.5;
};

template <class T>
struct PretrainLoss {
  Tensor<T> total, contrast, se3, so3;
};

// Forward pass on a noisy batch and the weighted objective
//   total = w_c L_contrast + w_se3 L_SE3 + w_so3 L_SO3.
// The contrastive term pairs the pooled embeddings of both views.
template <class T>
PretrainLoss<T> pretrain_loss(const CrystalModel<T> &model,
                              const ModelInputs<T> &noisy,
                              const std::array<Tensor<T>, 2> &targets,
                              const LossWeights &weights, double tau,
                              RunMode mode);

// mean over the batch of (y - y_hat)^2
template <class T>
Tensor<T> mse_loss(const Tensor<T> &predicted, const Tensor<T> &target);

}  // namespace mvcgt

#endif  // MVCGT_SSL_H_
