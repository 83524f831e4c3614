//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_CHECKPOINT_H_
#define MVCGT_CHECKPOINT_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvcgt/config.h"
#include "mvcgt/model.h"
#include "mvcgt/pipeline.h"

namespace mvcgt {

constexpr int kCheckpointVersion = 1;

class CheckpointError: public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct CheckpointInfo {
  std::string kind;  // "pretrain" or "finetune"
  RunConfig config;
  bool with_fusion_head = true;
  bool with_denoise_heads = false;
  std::optional<Normalizer> normalizer;
  std::uint64_t seed = 0;

  struct Param {
    std::string name;
    Shape shape;
    bool trainable = true;
  };
  std::vector<Param> params;
};

// Writes <dir>/manifest.json and <dir>/params.bin (float32 little endian,
// manifest order). Creates `dir` if needed.
template <class T>
void save_checkpoint(const std::string &dir, const CrystalModel<T> &model,
                     const std::string &kind, const RunConfig &config,
                     const std::optional<Normalizer> &normalizer);

// Reads and checks the manifest only.
CheckpointInfo read_manifest(const std::string &dir);

// Rebuilds the model described by the manifest and loads every tensor,
// batch-norm statistics included. Nothing is returned unless the whole
// payload matches the manifest.
template <class T>
std::unique_ptr<CrystalModel<T>> load_checkpoint(const std::string &dir,
                                                 CheckpointInfo *info = nullptr);

// Rounds every parameter to float32 and back, i.e. to what a checkpoint
// stores.
template <class T>
void round_to_storage(ParamStore<T> &store);

}  // namespace mvcgt

#endif  // MVCGT_CHECKPOINT_H_
