//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/model.h"

#include <stdexcept>

namespace mvcgt {

std::string fusion_name(Fusion f) {
  return f == Fusion::kMoe ? "moe" : "concat";
}

Fusion parse_fusion(const std::string &name) {
  if (name == "moe")
    return Fusion::kMoe;
  if (name == "concat")
    return Fusion::kConcat;
  throw std::invalid_argument("unknown fusion '" + name
                              + "' (expected moe or concat)");
}

EncoderDims ModelConfig::se3_dims() const {
  EncoderDims d;
  d.atom_dim = atom_dim;
  d.width = width;
  d.distance_rbf = distance_rbf;
  d.angle_rbf = angle_rbf;
  d.node_layers = se3_node_layers;
  return d;
}

EncoderDims ModelConfig::so3_dims() const {
  EncoderDims d = se3_dims();
  d.node_layers = so3_node_layers;
  d.channels = so3_channels();
  d.l_max = l_max;
  return d;
}

template <class T>
CrystalModel<T>::CrystalModel(const ModelConfig &config, std::uint64_t seed)
    : config_(config),
      store_(seed),
      se3_(store_, "se3", config.se3_dims()),
      so3_(store_, "so3", config.so3_dims()) {
  if (config.with_fusion_head) {
    if (config.fusion == Fusion::kMoe)
      moe_ = MoeHead<T>(store_, "moe", config.width);
    else
      concat_ = ConcatHead<T>(store_, "concat", config.width);
  }
  if (config.with_denoise_heads) {
    const int d = config.width;
    angle_noise_head_ = Mlp<T>(store_, "denoise.se3", d, d, 3);
    distance_noise_head_ = Mlp<T>(store_, "denoise.so3",
                                  2 * d + config.distance_rbf, d, 1);
  }
}

template <class T>
FusionOutput<T>
CrystalModel<T>::fuse(const Tensor<T> &e_se3, const Tensor<T> &e_so3,
                      const std::optional<std::array<T, 2>> &forced) const {
  if (!config_.with_fusion_head)
    throw std::logic_error("model was built without a prediction head");
  if (config_.fusion == Fusion::kMoe)
    return moe_(e_se3, e_so3, forced);
  if (forced)
    throw std::logic_error("router weights can only be forced for moe");
  return concat_(e_se3, e_so3);
}

template <class T>
ModelOutput<T>
CrystalModel<T>::forward(const ModelInputs<T> &in, RunMode mode,
                         const std::optional<std::array<T, 2>> &forced) const {
  ModelOutput<T> out;
  out.se3 = se3_(in, mode);
  out.so3 = so3_(in, mode);
  if (config_.with_fusion_head) {
    auto fused = fuse(out.se3.graph, out.so3.graph, forced);
    out.prediction = fused.prediction;
    out.router = fused.weights;
  }
  return out;
}

template <class T>
Tensor<T>
CrystalModel<T>::predict_angle_noise(const EncoderOutput<T> &se3) const {
  if (!config_.with_denoise_heads)
    throw std::logic_error("model was built without denoising heads");
  return angle_noise_head_(se3.edges);
}

template <class T>
Tensor<T>
CrystalModel<T>::predict_distance_noise(const EncoderOutput<T> &so3,
                                        const ModelInputs<T> &in) const {
  if (!config_.with_denoise_heads)
    throw std::logic_error("model was built without denoising heads");
  const Tensor<T> x = concat<T>({ gather_rows(so3.nodes, in.src),
                                  gather_rows(so3.nodes, in.dst),
                                  in.so3_distance_rbf },
                                1);
  return distance_noise_head_(x);
}

template <class S, class D>
std::vector<std::string>
transfer_parameters(const ParamStore<S> &src, ParamStore<D> &dst,
                    const std::vector<std::string> &prefixes) {
  std::vector<std::string> copied;
  for (const auto &entry: src.entries()) {
    bool match = false;
    for (const auto &p: prefixes)
      match = match || entry.name.starts_with(p);
    if (!match)
      continue;
    auto *target = dst.find(entry.name);
    if (!target)
      continue;
    if (target->tensor.shape() != entry.tensor.shape())
      throw ShapeError("cannot transfer " + entry.name + ": shape "
                       + shape_str(entry.tensor.shape()) + " vs "
                       + shape_str(target->tensor.shape()));
    auto from = entry.tensor.data();
    auto to = target->tensor.data();
    for (std::size_t k = 0; k < from.size(); ++k)
      to[k] = static_cast<D>(from[k]);
    copied.push_back(entry.name);
  }
  return copied;
}

template class CrystalModel<float>;
template class CrystalModel<double>;

#define MVCGT_INSTANTIATE_TRANSFER(S, D)                                     \
  template std::vector<std::string> transfer_parameters(                     \
    const ParamStore<S> &, ParamStore<D> &, const std::vector<std::string> &);
MVCGT_INSTANTIATE_TRANSFER(float, float)
MVCGT_INSTANTIATE_TRANSFER(float, double)
MVCGT_INSTANTIATE_TRANSFER(double, float)
MVCGT_INSTANTIATE_TRANSFER(double, double)
#undef MVCGT_INSTANTIATE_TRANSFER

}  // namespace mvcgt
