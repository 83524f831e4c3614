//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_CONFIG_H_
#define MVCGT_CONFIG_H_

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mvcgt/batch.h"
#include "mvcgt/model.h"
#include "mvcgt/optim.h"
#include "mvcgt/ssl.h"

namespace mvcgt {

// Invalid configuration; carries every problem found.
class ConfigError: public std::runtime_error {
public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string> &problems() const { return problems_; }

private:
  std::vector<std::string> problems_;
};

// Loss became NaN or infinite during training.
class NumericError: public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // graph construction
  double cutoff = 8.0;
  int max_neighbors = 25;
  std::int64_t image_budget = 4'000'000;

  // featurization; an empty atom_table means one-hot over Z = 1..100
  int distance_rbf = 64;
  int angle_rbf = 64;
  std::string atom_table;
  int atom_dim = 100;

  // model
  int width = 64;
  int se3_node_layers = 3;
  int so3_node_layers = 1;
  int l_max = 2;
  std::string fusion = "moe";

  // self-supervised objective
  double noise_sigma = 0.15;
  double tau = 0.1;
  double lambda_contrast = 1.0;
  double lambda_se3 = 0.5;
  double lambda_so3 = 0.5;

  // optimizer and schedule
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  int warmup_steps = 10;
  double lr_min = 1e-6;

  double pretrain_lr = 1e-5;
  int pretrain_batch = 128;
  int pretrain_epochs = 100;

  double finetune_lr = 5e-4;
  int finetune_batch = 16;
  int finetune_epochs = 500;
  // 0 disables early stopping
  int patience = 50;

  std::array<double, 3> split { 0.8, 0.1, 0.1 };
  std::uint64_t seed = 0;
  std::string precision = "f32";

  std::string task = "property";
  int router_batch = 16;
  int check_trials = 20;

  // Every violated constraint, empty when valid.
  std::vector<std::string> problems() const;
  void validate() const;

  FeaturizerOptions featurizer() const;
  ModelConfig model(bool with_fusion_head, bool with_denoise_heads) const;
  AdamWOptions optimizer(double lr) const;
  LossWeights loss_weights() const;

  std::string to_json() const;
};

// Strict: unknown keys and wrongly typed values are errors; missing keys
// keep their defaults.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string &path);

}  // namespace mvcgt

#endif  // MVCGT_CONFIG_H_
