//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_PIPELINE_H_
#define MVCGT_PIPELINE_H_

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvcgt/config.h"
#include "mvcgt/featurization.h"
#include "mvcgt/model.h"
#include "mvcgt/structures.h"

namespace mvcgt {

// One record per non-empty line; DataError carries the line number.
std::vector<StructureRecord> parse_jsonl(std::string_view text);
std::vector<StructureRecord> load_jsonl(const std::string &path);

AtomTable load_atom_table(const RunConfig &config);

// Graphs and features of a dataset, index-aligned with the records.
struct PreparedData {
  std::vector<GraphFeatures> features;
  std::vector<std::optional<double>> targets;
  std::vector<std::string> ids;

  int size() const { return static_cast<int>(features.size()); }
};

// Ids default to "#<index>". Errors name the offending record.
PreparedData prepare_data(const std::vector<StructureRecord> &records,
                          const AtomTable &table,
                          const FeaturizerOptions &opts);

struct Split {
  std::vector<int> train, val, test;
};

// Deterministic shuffle under `seed`, then contiguous partition with sizes
// floor(ratio * n) and the remainder added to the training part. Throws
// std::invalid_argument when a part with a positive ratio would be empty.
Split split_dataset(int n, const std::array<double, 3> &ratios,
                    std::uint64_t seed);

struct Normalizer {
  double mean = 0.0;
  double std = 1.0;

  // Throws DataError for an empty sample or zero spread.
  static Normalizer fit(std::span<const double> values);
  double normalize(double y) const { return (y - mean) / std; }
  double denormalize(double z) const { return z * std + mean; }
};

struct Metrics {
  int count = 0;
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> r2;  // undefined for constant targets

  std::string to_json() const;
};

// Throws std::invalid_argument on empty or mismatched inputs.
Metrics compute_metrics(std::span<const double> truth,
                        std::span<const double> predicted);

// Consecutive batches of `batch_size`; a trailing batch smaller than
// `min_size` is merged into the previous one.
std::vector<std::vector<int>> make_batches(const std::vector<int> &order,
                                           int batch_size, int min_size = 1);

// Fisher-Yates shuffle driven by `rng`.
void shuffle_indices(std::vector<int> &order, CounterRng &rng);

// Eval-mode predictions (normalized scale) for the given records.
template <class T>
std::vector<double> predict(const CrystalModel<T> &model,
                            const PreparedData &data,
                            std::span<const int> indices, int batch_size);

// Eval-mode router weights per record (MoE models only).
template <class T>
std::vector<std::array<double, 2>>
router_scores(const CrystalModel<T> &model, const PreparedData &data,
              std::span<const int> indices, int batch_size);

struct EpochStats {
  int epoch = 0;
  std::int64_t step = 0;
  double train_loss = 0.0;
  double lr = 0.0;
  std::optional<double> val_mae;  // denormalized
};

struct FinetuneResult {
  int epochs_run = 0;
  int best_epoch = 0;
  std::optional<double> best_val_mae;
  std::vector<EpochStats> history;
};

struct FinetuneHooks {
  // Called after every epoch; returning false stops training.
  std::function<bool(const EpochStats &)> on_epoch;
  std::function<void(const std::string &)> log;
};

// MSE on normalized targets with AdamW and the warmup + cosine schedule.
// With a non-empty validation split the parameters of the epoch with the
// lowest validation MAE are restored at the end, and training stops after
// `patience` epochs without improvement (patience 0 disables this).
template <class T>
FinetuneResult finetune(CrystalModel<T> &model, const PreparedData &data,
                        const Split &split, const Normalizer &norm,
                        const RunConfig &config,
                        const FinetuneHooks &hooks = {});

struct PretrainStep {
  std::int64_t step = 0;
  double lr = 0.0;
  double total = 0.0;
  double contrast = 0.0;
  double se3 = 0.0;
  double so3 = 0.0;

  // {"step", "lr", "L_total", "L_contrast", "L_SE3", "L_SO3"}
  std::string to_json() const;
};

struct PretrainHooks {
  // Called after every optimizer step; returning false stops training.
  std::function<bool(const PretrainStep &)> on_step;
  // Caps the number of optimizer steps (0 = epochs * batches).
  std::int64_t max_steps = 0;
};

// Denoising + contrastive pretraining over `indices`.
template <class T>
std::vector<PretrainStep> pretrain(CrystalModel<T> &model,
                                   const PreparedData &data,
                                   const std::vector<int> &indices,
                                   const RunConfig &config,
                                   const PretrainHooks &hooks = {});

}  // namespace mvcgt

#endif  // MVCGT_PIPELINE_H_
