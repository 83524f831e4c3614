//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_MODEL_H_
#define MVCGT_MODEL_H_

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "mvcgt/moe_head.h"
#include "mvcgt/se3_encoder.h"
#include "mvcgt/so3_encoder.h"

namespace mvcgt {

enum class Fusion { kMoe, kConcat };

std::string fusion_name(Fusion f);
Fusion parse_fusion(const std::string &name);

struct ModelConfig {
  int atom_dim = 100;
  int width = 64;
  int se3_node_layers = 3;
  int so3_node_layers = 1;
  int l_max = 2;
  int distance_rbf = 64;
  int angle_rbf = 64;
  Fusion fusion = Fusion::kMoe;

  // Prediction head (fine-tuning) and per-edge noise heads (pretraining).
  bool with_fusion_head = true;
  bool with_denoise_heads = false;

  int so3_channels() const { return width / 4 > 0 ? width / 4 : 1; }
  EncoderDims se3_dims() const;
  EncoderDims so3_dims() const;
};

template <class T>
struct ModelOutput {
  EncoderOutput<T> se3, so3;
  Tensor<T> prediction;  // B x 1, when the model has a fusion head
  Tensor<T> router;      // B x 2, MoE only
};

// Both encoders plus the optional fusion and denoising heads, sharing one
// parameter store. Parameter names are prefixed "se3.", "so3.", "moe.",
// "concat." and "denoise.".
template <class T>
class CrystalModel {
public:
  CrystalModel(const ModelConfig &config, std::uint64_t seed);

  CrystalModel(const CrystalModel &) = delete;
  CrystalModel &operator=(const CrystalModel &) = delete;

  const ModelConfig &config() const { return config_; }
  ParamStore<T> &params() { return store_; }
  const ParamStore<T> &params() const { return store_; }

  ModelOutput<T>
  forward(const ModelInputs<T> &in, RunMode mode,
          const std::optional<std::array<T, 2>> &forced_router = {}) const;

  FusionOutput<T>
  fuse(const Tensor<T> &e_se3, const Tensor<T> &e_so3,
       const std::optional<std::array<T, 2>> &forced_router = {}) const;

  // Per-edge noise predictions: angles (E x 3) from the final invariant
  // edge features; distances (E x 1) from the endpoint node embeddings of
  // the equivariant view and the edge distance embedding.
  Tensor<T> predict_angle_noise(const EncoderOutput<T> &se3) const;
  Tensor<T> predict_distance_noise(const EncoderOutput<T> &so3,
                                   const ModelInputs<T> &in) const;

  const Se3Encoder<T> &se3() const { return se3_; }
  const So3Encoder<T> &so3() const { return so3_; }
  const MoeHead<T> &moe() const { return moe_; }
  const ConcatHead<T> &concat_head() const { return concat_; }

private:
  ModelConfig config_;
  ParamStore<T> store_;
  Se3Encoder<T> se3_;
  So3Encoder<T> so3_;
  MoeHead<T> moe_;
  ConcatHead<T> concat_;
  Mlp<T> angle_noise_head_, distance_noise_head_;
};

extern template class CrystalModel<float>;
extern template class CrystalModel<double>;

// Copies every parameter whose name starts with one of `prefixes` and
// exists with the same shape in `dst`. Returns the copied names.
template <class S, class D>
std::vector<std::string>
transfer_parameters(const ParamStore<S> &src, ParamStore<D> &dst,
                    const std::vector<std::string> &prefixes);

}  // namespace mvcgt

#endif  // MVCGT_MODEL_H_
