//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mvcgt/checkpoint.h"
#include "mvcgt/config.h"
#include "mvcgt/moe_head.h"
#include "mvcgt/periodic_graph.h"
#include "mvcgt/pipeline.h"
#include "mvcgt/symmetry_check.h"

namespace {

using namespace mvcgt;
using nlohmann::json;

enum ExitCode {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
};

struct Flags {
  std::string config, data, out, from, precision;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
};

RunConfig resolve_config(const Flags &f) {
  RunConfig c = f.config.empty() ? RunConfig {} : load_config(f.config);
  if (f.seed)
    c.seed = *f.seed;
  if (f.trials)
    c.check_trials = *f.trials;
  if (!f.precision.empty())
    c.precision = f.precision;
  c.validate();
  return c;
}

void require(const std::string &value, const char *flag) {
  if (value.empty())
    throw ConfigError({ std::string(flag) + " is required" });
}

// Writes to `path`, or stdout when it is empty.
class Output {
public:
  explicit Output(const std::string &path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_)
        throw DataError("cannot write " + path);
    }
  }
  std::ostream &stream() { return file_.is_open() ? file_ : std::cout; }

private:
  std::ofstream file_;
};

std::vector<int> all_indices(int n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

PreparedData load_data(const std::string &path, const RunConfig &c) {
  require(path, "--data");
  return prepare_data(load_jsonl(path), load_atom_table(c), c.featurizer());
}

int cmd_ingest(const Flags &f) {
  const RunConfig c = resolve_config(f);
  require(f.data, "--data");
  const auto records = load_jsonl(f.data);
  const AtomTable table = load_atom_table(c);
  const FeaturizerOptions opts = c.featurizer();

  std::optional<std::ofstream> cache;
  if (!f.out.empty())
    cache.emplace(f.out);
  std::int64_t nodes = 0, edges = 0;
  int labeled = 0;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto &r = records[k];
    const std::string id = r.id.value_or("#" + std::to_string(k));
    try {
      const PeriodicGraph g = build_graph(r.structure, opts.graph);
      featurize(g, table, opts);
      nodes += g.num_nodes();
      edges += g.num_edges();
      if (cache)
        *cache << graph_to_json(g) << '\n';
    } catch (const DataError &e) {
      throw DataError("record " + id + ": " + e.what());
    }
    labeled += r.target.has_value();
  }
  json summary { { "records", records.size() },
                 { "labeled", labeled },
                 { "nodes", nodes },
                 { "edges", edges } };
  std::cout << summary.dump() << '\n';
  return kOk;
}

template <class T>
int cmd_pretrain(const Flags &f) {
  const RunConfig c = resolve_config(f);
  require(f.out, "--out");
  const PreparedData data = load_data(f.data, c);
  CrystalModel<T> model(c.model(false, true), c.seed);

  std::filesystem::create_directories(f.out);
  std::ofstream log(std::filesystem::path(f.out) / "pretrain_log.jsonl");
  PretrainHooks hooks;
  hooks.on_step = [&log](const PretrainStep &s) {
    log << s.to_json() << '\n';
    return true;
  };
  const auto steps = pretrain(model, data, all_indices(data.size()), c,
                              hooks);
  save_checkpoint(f.out, model, "pretrain", c, std::nullopt);
  json summary { { "steps", steps.size() }, { "checkpoint", f.out } };
  if (!steps.empty())
    summary["final"] = json::parse(steps.back().to_json());
  std::cout << summary.dump() << '\n';
  return kOk;
}

template <class T>
int cmd_finetune(const Flags &f) {
  const RunConfig c = resolve_config(f);
  const PreparedData data = load_data(f.data, c);
  for (int k = 0; k < data.size(); ++k)
    if (!data.targets[k])
      throw DataError("record " + data.ids[k] + " has no target");

  CrystalModel<T> model(c.model(true, false), c.seed);
  if (!f.from.empty()) {
    const auto pre = load_checkpoint<T>(f.from);
    const auto copied = transfer_parameters(pre->params(), model.params(),
                                            { "se3.", "so3." });
    std::vector<std::string> missing;
    for (const auto &e: model.params().entries()) {
      const bool shared = e.name.starts_with("se3.")
                          || e.name.starts_with("so3.");
      if (shared
          && std::find(copied.begin(), copied.end(), e.name) == copied.end())
        missing.push_back("encoder tensor " + e.name
                          + " not found with matching shape in " + f.from);
    }
    if (!missing.empty())
      throw ConfigError(missing);
  }

  const Split split = split_dataset(data.size(), c.split, c.seed);
  std::vector<double> train_targets;
  for (int i: split.train)
    train_targets.push_back(*data.targets[i]);
  const Normalizer norm = Normalizer::fit(train_targets);

  FinetuneHooks hooks;
  hooks.on_epoch = [](const EpochStats &s) {
    json j { { "epoch", s.epoch }, { "step", s.step },
             { "train_loss", s.train_loss }, { "lr", s.lr } };
    if (s.val_mae)
      j["val_MAE"] = *s.val_mae;
    std::cerr << j.dump() << '\n';
    return true;
  };
  const FinetuneResult result = finetune(model, data, split, norm, c, hooks);
  if (!f.out.empty())
    save_checkpoint(f.out, model, "finetune", c, norm);

  auto metrics = [&](const std::vector<int> &idx) -> json {
    if (idx.empty())
      return nullptr;
    const auto pred = predict(model, data, idx, c.finetune_batch);
    std::vector<double> truth, yhat;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      truth.push_back(*data.targets[idx[k]]);
      yhat.push_back(norm.denormalize(pred[k]));
    }
    return json::parse(compute_metrics(truth, yhat).to_json());
  };
  const json train = metrics(split.train), val = metrics(split.val),
             test = metrics(split.test);
  // headline metrics: test split, falling back to validation then train
  json out = !test.is_null() ? test : !val.is_null() ? val : train;
  out["split"] = !test.is_null() ? "test" : !val.is_null() ? "val" : "train";
  out["splits"] = { { "train", train }, { "val", val }, { "test", test } };
  out["epochs_run"] = result.epochs_run;
  out["best_epoch"] = result.best_epoch;
  std::cout << out.dump() << '\n';
  return kOk;
}

template <class T>
std::unique_ptr<CrystalModel<T>> load_finetuned(const Flags &f,
                                                CheckpointInfo &info) {
  require(f.from, "--from");
  auto model = load_checkpoint<T>(f.from, &info);
  if (!info.with_fusion_head)
    throw ConfigError({ f.from + " has no prediction head (kind "
                        + info.kind + ")" });
  return model;
}

template <class T>
int cmd_predict(const Flags &f) {
  CheckpointInfo info;
  const auto model = load_finetuned<T>(f, info);
  const PreparedData data = load_data(f.data, info.config);
  const auto pred = predict(*model, data, all_indices(data.size()),
                            info.config.finetune_batch);
  const Normalizer norm = info.normalizer.value_or(Normalizer {});
  Output out(f.out);
  for (int k = 0; k < data.size(); ++k)
    out.stream() << json { { "id", data.ids[k] },
                           { "prediction", norm.denormalize(pred[k]) } }
                      .dump()
                 << '\n';
  return kOk;
}

template <class T>
int cmd_eval(const Flags &f) {
  CheckpointInfo info;
  const auto model = load_finetuned<T>(f, info);
  const PreparedData data = load_data(f.data, info.config);
  std::vector<int> idx;
  for (int k = 0; k < data.size(); ++k)
    if (data.targets[k])
      idx.push_back(k);
  if (idx.empty())
    throw DataError("no record in " + f.data + " has a target");
  const auto pred = predict(*model, data, idx, info.config.finetune_batch);
  const Normalizer norm = info.normalizer.value_or(Normalizer {});
  std::vector<double> truth, yhat;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    truth.push_back(*data.targets[idx[k]]);
    yhat.push_back(norm.denormalize(pred[k]));
  }
  Output(f.out).stream() << compute_metrics(truth, yhat).to_json() << '\n';
  return kOk;
}

template <class T>
int cmd_inspect_router(const Flags &f) {
  CheckpointInfo info;
  const auto model = load_finetuned<T>(f, info);
  if (model->config().fusion != Fusion::kMoe)
    throw ConfigError({ f.from + " uses the concat head, which has no router" });
  const PreparedData data = load_data(f.data, info.config);
  const auto scores = router_scores(*model, data, all_indices(data.size()),
                                    info.config.router_batch);
  Output(f.out).stream()
    << report_contributions(info.config.task, scores).to_json() << '\n';
  return kOk;
}

int cmd_check(const Flags &f) {
  const RunConfig c = resolve_config(f);
  const SymmetryReport report = run_symmetry_checks(c, c.check_trials,
                                                    c.seed);
  Output(f.out).stream() << report.to_json() << '\n';
  return report.passed() ? kOk : kFailure;
}

template <template <class> class Fn>
int dispatch(const Flags &f, const std::string &precision) {
  return precision == "f64" ? Fn<double>::run(f) : Fn<float>::run(f);
}

#define MVCGT_COMMAND(name)                                                  \
  template <class T>                                                         \
  struct name##_fn {                                                         \
    static int run(const Flags &f) { return cmd_##name<T>(f); }              \
  };
MVCGT_COMMAND(pretrain)
MVCGT_COMMAND(finetune)
MVCGT_COMMAND(predict)
MVCGT_COMMAND(eval)
MVCGT_COMMAND(inspect_router)
#undef MVCGT_COMMAND

// Precision of a command that starts from a checkpoint: the flag if given,
// else the stored config.
std::string checkpoint_precision(const Flags &f) {
  if (!f.precision.empty())
    return f.precision;
  if (f.from.empty())
    return "f32";
  return read_manifest(f.from).config.precision;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app { "Multi-view crystal graph transformer" };
  app.require_subcommand(1);

  Flags flags;
  std::uint64_t seed = 0;
  int trials = 0;
  auto common = [&](CLI::App *cmd) {
    cmd->add_option("--config", flags.config, "JSON run configuration")
      ->check(CLI::ExistingFile);
    cmd->add_option("--data", flags.data, "dataset (JSON lines)");
    cmd->add_option("--out", flags.out, "output file or checkpoint dir");
    cmd->add_option("--from", flags.from, "checkpoint directory");
    cmd->add_option("--seed", seed, "overrides the config seed");
    cmd->add_option("--trials", trials, "random structures for check")
      ->check(CLI::PositiveNumber);
    cmd->add_option("--precision", flags.precision, "compute precision")
      ->check(CLI::IsMember({ "f32", "f64" }));
  };

  auto *ingest = app.add_subcommand("ingest", "validate data, cache graphs");
  auto *pre = app.add_subcommand("pretrain", "self-supervised pretraining");
  auto *fine = app.add_subcommand("finetune", "supervised fine-tuning");
  auto *pred = app.add_subcommand("predict", "predictions as JSON lines");
  auto *eval = app.add_subcommand("eval", "metrics of a checkpoint");
  auto *check = app.add_subcommand("check", "symmetry and gradient suite");
  auto *router = app.add_subcommand("inspect-router",
                                    "expert contribution scores");
  for (auto *cmd: { ingest, pre, fine, pred, eval, check, router })
    common(cmd);

  CLI11_PARSE(app, argc, argv);

  for (auto *cmd: app.get_subcommands()) {
    if (cmd->count("--seed"))
      flags.seed = seed;
    if (cmd->count("--trials"))
      flags.trials = trials;
  }

  try {
    if (*ingest)
      return cmd_ingest(flags);
    if (*check)
      return cmd_check(flags);
    if (*pre)
      return dispatch<pretrain_fn>(flags, resolve_config(flags).precision);
    if (*fine)
      return dispatch<finetune_fn>(flags, resolve_config(flags).precision);
    const std::string precision = checkpoint_precision(flags);
    if (*pred)
      return dispatch<predict_fn>(flags, precision);
    if (*eval)
      return dispatch<eval_fn>(flags, precision);
    if (*router)
      return dispatch<inspect_router_fn>(flags, precision);
  } catch (const ConfigError &e) {
    std::cerr << "configuration error:\n";
    for (const auto &p: e.problems())
      std::cerr << "  " << p << '\n';
    return kConfig;
  } catch (const DataError &e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const CheckpointError &e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError &e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
