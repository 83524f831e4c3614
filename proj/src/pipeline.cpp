//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/pipeline.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "mvcgt/optim.h"
#include "mvcgt/rng.h"
#include "mvcgt/ssl.h"

namespace mvcgt {
namespace {
  std::string read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
      throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  template <class T>
  std::vector<const GraphFeatures *> batch_features(const PreparedData &data,
                                                    std::span<const int> idx) {
    std::vector<const GraphFeatures *> out;
    out.reserve(idx.size());
    for (int i: idx)
      out.push_back(&data.features[i]);
    return out;
  }

  template <class T>
  std::vector<std::vector<T>> snapshot(const ParamStore<T> &store) {
    std::vector<std::vector<T>> out;
    for (const auto &e: store.entries()) {
      auto d = e.tensor.data();
      out.emplace_back(d.begin(), d.end());
    }
    return out;
  }

  template <class T>
  void restore(ParamStore<T> &store, const std::vector<std::vector<T>> &snap) {
    auto &entries = store.entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
      auto d = entries[k].tensor.data();
      std::copy(snap[k].begin(), snap[k].end(), d.begin());
    }
  }

  std::string join_ids(const PreparedData &data, std::span<const int> idx) {
    std::string out;
    for (int i: idx) {
      if (!out.empty())
        out += ", ";
      out += data.ids[i];
    }
    return out;
  }

  std::int64_t effective_warmup(std::int64_t warmup, std::int64_t total) {
    return std::min<std::int64_t>(warmup, std::max<std::int64_t>(total - 1, 0));
  }
}  // namespace

std::vector<StructureRecord> parse_jsonl(std::string_view text) {
  std::vector<StructureRecord> out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == text.size())
        break;
      continue;
    }
    try {
      out.push_back(parse_json_record(line));
    } catch (const DataError &e) {
      throw DataError(e.what(), line_no);
    }
    if (end == text.size())
      break;
  }
  return out;
}

std::vector<StructureRecord> load_jsonl(const std::string &path) {
  return parse_jsonl(read_file(path));
}

AtomTable load_atom_table(const RunConfig &config) {
  if (config.atom_table.empty()) {
    if (config.atom_dim != 100)
      throw ConfigError({ "atom_dim must be 100 without an atom_table" });
    return AtomTable::one_hot(100);
  }
  return AtomTable::from_json(read_file(config.atom_table), config.atom_dim);
}

PreparedData prepare_data(const std::vector<StructureRecord> &records,
                          const AtomTable &table,
                          const FeaturizerOptions &opts) {
  PreparedData data;
  data.features.reserve(records.size());
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto &r = records[k];
    const std::string id = r.id ? *r.id : "#" + std::to_string(k);
    try {
      GraphFeatures f = featurize(build_graph(r.structure, opts.graph), table,
                                  opts);
      f.id = id;
      data.features.push_back(std::move(f));
    } catch (const DataError &e) {
      throw DataError("record " + id + ": " + e.what(), e.line());
    }
    data.targets.push_back(r.target);
    data.ids.push_back(id);
  }
  return data;
}

Split split_dataset(int n, const std::array<double, 3> &ratios,
                    std::uint64_t seed) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(seed, RngStream::kShuffle);
  shuffle_indices(order, rng);

  std::array<int, 3> sizes {};
  int used = 0;
  for (int k = 0; k < 3; ++k) {
    sizes[k] = static_cast<int>(std::floor(ratios[k] * n + 1e-9));
    used += sizes[k];
  }
  sizes[0] += n - used;
  static const char *names[] = { "train", "validation", "test" };
  for (int k = 0; k < 3; ++k)
    if (ratios[k] > 0.0 && sizes[k] == 0)
      throw std::invalid_argument(std::string("empty ") + names[k]
                                  + " split for " + std::to_string(n)
                                  + " records");

  Split s;
  auto first = order.begin();
  s.train.assign(first, first + sizes[0]);
  s.val.assign(first + sizes[0], first + sizes[0] + sizes[1]);
  s.test.assign(first + sizes[0] + sizes[1], order.end());
  return s;
}

Normalizer Normalizer::fit(std::span<const double> values) {
  if (values.empty())
    throw DataError("cannot normalize an empty target set");
  Normalizer n;
  n.mean = std::accumulate(values.begin(), values.end(), 0.0)
           / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v: values)
    ss += (v - n.mean) * (v - n.mean);
  n.std = std::sqrt(ss / static_cast<double>(values.size()));
  if (!(n.std > 0.0))
    throw DataError("training targets have zero spread");
  return n;
}

Metrics compute_metrics(std::span<const double> truth,
                        std::span<const double> predicted) {
  if (truth.empty())
    throw std::invalid_argument("metrics of an empty split");
  if (truth.size() != predicted.size())
    throw std::invalid_argument("metrics: size mismatch");
  Metrics m;
  m.count = static_cast<int>(truth.size());
  const double n = static_cast<double>(truth.size());
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
  double abs_sum = 0.0, sq_sum = 0.0, tot = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const double r = truth[k] - predicted[k];
    abs_sum += std::abs(r);
    sq_sum += r * r;
    tot += (truth[k] - mean) * (truth[k] - mean);
  }
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  if (tot > 0.0)
    m.r2 = 1.0 - sq_sum / tot;
  return m;
}

std::string Metrics::to_json() const {
  nlohmann::json j;
  j["count"] = count;
  j["MAE"] = mae;
  j["RMSE"] = rmse;
  j["R2"] = r2 ? nlohmann::json(*r2) : nlohmann::json(nullptr);
  return j.dump();
}

std::vector<std::vector<int>> make_batches(const std::vector<int> &order,
                                           int batch_size, int min_size) {
  if (batch_size < 1)
    throw std::invalid_argument("batch size must be >= 1");
  std::vector<std::vector<int>> out;
  for (std::size_t k = 0; k < order.size(); k += batch_size) {
    const std::size_t end = std::min(order.size(), k + batch_size);
    out.emplace_back(order.begin() + k, order.begin() + end);
  }
  if (out.size() > 1 && static_cast<int>(out.back().size()) < min_size) {
    auto tail = std::move(out.back());
    out.pop_back();
    out.back().insert(out.back().end(), tail.begin(), tail.end());
  }
  return out;
}

void shuffle_indices(std::vector<int> &order, CounterRng &rng) {
  for (std::size_t k = order.size(); k > 1; --k) {
    const auto j = static_cast<std::size_t>(rng.below(k));
    std::swap(order[k - 1], order[j]);
  }
}

template <class T>
std::vector<double> predict(const CrystalModel<T> &model,
                            const PreparedData &data,
                            std::span<const int> indices, int batch_size) {
  NoGradGuard no_grad;
  std::vector<double> out;
  out.reserve(indices.size());
  const std::vector<int> order(indices.begin(), indices.end());
  for (const auto &batch: make_batches(order, batch_size)) {
    const auto feats = batch_features<T>(data, batch);
    const auto in = make_inputs<T>(feats);
    const auto res = model.forward(in, RunMode::kEval);
    for (T v: res.prediction.data())
      out.push_back(static_cast<double>(v));
  }
  return out;
}

template <class T>
std::vector<std::array<double, 2>>
router_scores(const CrystalModel<T> &model, const PreparedData &data,
              std::span<const int> indices, int batch_size) {
  if (model.config().fusion != Fusion::kMoe
      || !model.config().with_fusion_head)
    throw std::logic_error("router scores need a model with the moe head");
  NoGradGuard no_grad;
  std::vector<std::array<double, 2>> out;
  const std::vector<int> order(indices.begin(), indices.end());
  for (const auto &batch: make_batches(order, batch_size)) {
    const auto feats = batch_features<T>(data, batch);
    const auto res = model.forward(make_inputs<T>(feats), RunMode::kEval);
    auto w = res.router.data();
    for (std::size_t r = 0; r < batch.size(); ++r)
      out.push_back({ static_cast<double>(w[2 * r]),
                      static_cast<double>(w[2 * r + 1]) });
  }
  return out;
}

template <class T>
FinetuneResult finetune(CrystalModel<T> &model, const PreparedData &data,
                        const Split &split, const Normalizer &norm,
                        const RunConfig &config, const FinetuneHooks &hooks) {
  if (split.train.empty())
    throw DataError("empty training split");
  for (const auto *part: { &split.train, &split.val })
    for (int i: *part)
      if (!data.targets[i])
        throw DataError("record " + data.ids[i] + " has no target");

  AdamW<T> opt(model.params(), config.optimizer(config.finetune_lr));
  CounterRng shuffle_rng(config.seed, RngStream::kShuffle);
  // Skip the draws used by split_dataset so the streams do not overlap.
  shuffle_rng.set_counter(std::uint64_t { 1 } << 40);

  const std::int64_t per_epoch = static_cast<std::int64_t>(
    make_batches(split.train, config.finetune_batch).size());
  const std::int64_t total = per_epoch * config.finetune_epochs;
  const std::int64_t warmup = effective_warmup(config.warmup_steps, total);

  std::vector<double> val_truth;
  for (int i: split.val)
    val_truth.push_back(*data.targets[i]);

  FinetuneResult result;
  std::vector<std::vector<T>> best;
  int since_best = 0;
  std::int64_t step = 0;
  std::vector<int> order = split.train;
  for (int epoch = 1; epoch <= config.finetune_epochs; ++epoch) {
    shuffle_indices(order, shuffle_rng);
    double loss_sum = 0.0;
    int loss_count = 0;
    double lr = 0.0;
    for (const auto &batch: make_batches(order, config.finetune_batch)) {
      ++step;
      lr = lr_schedule(step, total, warmup, config.finetune_lr,
                       config.lr_min);
      const auto feats = batch_features<T>(data, batch);
      const auto in = make_inputs<T>(feats);
      std::vector<T> y;
      for (int i: batch)
        y.push_back(static_cast<T>(norm.normalize(*data.targets[i])));
      const auto target = Tensor<T>::from_data(
        { static_cast<int>(batch.size()), 1 }, std::move(y));

      model.params().zero_grad();
      const auto out = model.forward(in, RunMode::kTrain);
      const Tensor<T> loss = mse_loss(out.prediction, target);
      const double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv))
        throw NumericError("non-finite fine-tuning loss at step "
                           + std::to_string(step) + " (structures "
                           + join_ids(data, batch) + ")");
      loss.backward();
      opt.step(lr);
      loss_sum += lv * batch.size();
      loss_count += static_cast<int>(batch.size());
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.step = step;
    stats.lr = lr;
    stats.train_loss = loss_sum / loss_count;
    if (!split.val.empty()) {
      auto pred = predict(model, data, split.val, config.finetune_batch);
      for (double &p: pred)
        p = norm.denormalize(p);
      stats.val_mae = compute_metrics(val_truth, pred).mae;
      if (!result.best_val_mae || *stats.val_mae < *result.best_val_mae) {
        result.best_val_mae = stats.val_mae;
        result.best_epoch = epoch;
        best = snapshot(model.params());
        since_best = 0;
      } else {
        ++since_best;
      }
    } else {
      result.best_epoch = epoch;
    }
    result.history.push_back(stats);
    result.epochs_run = epoch;
    if (hooks.log) {
      nlohmann::json j;
      j["epoch"] = epoch;
      j["step"] = step;
      j["lr"] = lr;
      j["train_mse"] = stats.train_loss;
      j["val_mae"] = stats.val_mae ? nlohmann::json(*stats.val_mae)
                                   : nlohmann::json(nullptr);
      hooks.log(j.dump());
    }
    if (hooks.on_epoch && !hooks.on_epoch(stats))
      break;
    if (config.patience > 0 && since_best >= config.patience)
      break;
  }
  if (!best.empty())
    restore(model.params(), best);
  return result;
}

std::string PretrainStep::to_json() const {
  nlohmann::json j;
  j["step"] = step;
  j["lr"] = lr;
  j["L_total"] = total;
  j["L_contrast"] = contrast;
  j["L_SE3"] = se3;
  j["L_SO3"] = so3;
  return j.dump();
}

template <class T>
std::vector<PretrainStep> pretrain(CrystalModel<T> &model,
                                   const PreparedData &data,
                                   const std::vector<int> &indices,
                                   const RunConfig &config,
                                   const PretrainHooks &hooks) {
  if (indices.size() < 2)
    throw DataError("pretraining needs at least two structures");
  AdamW<T> opt(model.params(), config.optimizer(config.pretrain_lr));
  CounterRng shuffle_rng(config.seed, RngStream::kShuffle);
  shuffle_rng.set_counter(std::uint64_t { 2 } << 40);
  CounterRng noise_rng(config.seed, RngStream::kNoise);
  const FeaturizerOptions fopts = config.featurizer();
  const LossWeights weights = config.loss_weights();

  const std::int64_t per_epoch = static_cast<std::int64_t>(
    make_batches(indices, config.pretrain_batch, 2).size());
  std::int64_t total = per_epoch * config.pretrain_epochs;
  if (hooks.max_steps > 0)
    total = std::min(total, hooks.max_steps);
  const std::int64_t warmup = effective_warmup(config.warmup_steps, total);

  std::vector<PretrainStep> log;
  std::int64_t step = 0;
  std::vector<int> order = indices;
  for (int epoch = 1; epoch <= config.pretrain_epochs && step < total;
       ++epoch) {
    shuffle_indices(order, shuffle_rng);
    for (const auto &batch: make_batches(order, config.pretrain_batch, 2)) {
      if (step >= total)
        break;
      ++step;
      const double lr = lr_schedule(step, total, warmup, config.pretrain_lr,
                                    config.lr_min);
      std::vector<NoisySample> noise;
      std::vector<GraphFeatures> noisy;
      noise.reserve(batch.size());
      noisy.reserve(batch.size());
      for (int i: batch) {
        noise.push_back(inject_noise(data.features[i], config.noise_sigma,
                                     noise_rng));
        noisy.push_back(apply_noise(data.features[i], noise.back(), fopts));
      }
      std::vector<const GraphFeatures *> fptr;
      std::vector<const NoisySample *> nptr;
      for (std::size_t k = 0; k < batch.size(); ++k) {
        fptr.push_back(&noisy[k]);
        nptr.push_back(&noise[k]);
      }
      const auto in = make_inputs<T>(fptr);
      const auto targets = noise_targets<T>(nptr);

      model.params().zero_grad();
      const auto loss = pretrain_loss(model, in, targets, weights,
                                      config.tau, RunMode::kTrain);
      PretrainStep rec;
      rec.step = step;
      rec.lr = lr;
      rec.total = static_cast<double>(loss.total.item());
      rec.contrast = static_cast<double>(loss.contrast.item());
      rec.se3 = static_cast<double>(loss.se3.item());
      rec.so3 = static_cast<double>(loss.so3.item());
      if (!std::isfinite(rec.total))
        throw NumericError("non-finite pretraining loss at step "
                           + std::to_string(step) + " (structures "
                           + join_ids(data, batch) + ")");
      loss.total.backward();
      opt.step(lr);
      log.push_back(rec);
      if (hooks.on_step && !hooks.on_step(rec))
        return log;
    }
  }
  return log;
}

#define MVCGT_INSTANTIATE_PIPELINE(T)                                        \
  template std::vector<double> predict(const CrystalModel<T> &,              \
                                       const PreparedData &,                 \
                                       std::span<const int>, int);           \
  template std::vector<std::array<double, 2>> router_scores(                 \
    const CrystalModel<T> &, const PreparedData &, std::span<const int>,     \
    int);                                                                    \
  template FinetuneResult finetune(CrystalModel<T> &, const PreparedData &,  \
                                   const Split &, const Normalizer &,        \
                                   const RunConfig &, const FinetuneHooks &); \
  template std::vector<PretrainStep> pretrain(                               \
    CrystalModel<T> &, const PreparedData &, const std::vector<int> &,       \
    const RunConfig &, const PretrainHooks &);
MVCGT_INSTANTIATE_PIPELINE(float)
MVCGT_INSTANTIATE_PIPELINE(double)
#undef MVCGT_INSTANTIATE_PIPELINE

}  // namespace mvcgt
