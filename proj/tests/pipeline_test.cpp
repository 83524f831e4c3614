//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/pipeline.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include <gtest/gtest.h>
#include <json.hpp>

#include "mvcgt/checkpoint.h"
#include "mvcgt/config.h"
#include "test_util.h"

namespace mvcgt {
namespace {
namespace fs = std::filesystem;

// Targets are the volume per atom, a function of the structure.
PreparedData toy_data(int n, const RunConfig &c) {
  std::vector<StructureRecord> records;
  for (int k = 0; k < n; ++k) {
    StructureRecord r;
    r.structure = test::random_crystal(300 + k, 1, 3);
    r.target = r.structure.volume() / r.structure.num_atoms();
    r.id = "toy-" + std::to_string(k);
    records.push_back(std::move(r));
  }
  return prepare_data(records, load_atom_table(c), c.featurizer());
}

TEST(SplitDataset, Sizes) {
  const Split a = split_dataset(10, { 0.8, 0.1, 0.1 }, 1);
  EXPECT_EQ(a.train.size(), 8u);
  EXPECT_EQ(a.val.size(), 1u);
  EXPECT_EQ(a.test.size(), 1u);
  const Split b = split_dataset(11, { 0.8, 0.1, 0.1 }, 1);
  EXPECT_EQ(b.train.size(), 9u);
  EXPECT_EQ(b.val.size(), 1u);
  EXPECT_EQ(b.test.size(), 1u);
}

TEST(SplitDataset, DeterministicDisjointCovering) {
  const Split a = split_dataset(37, { 0.8, 0.1, 0.1 }, 5);
  const Split b = split_dataset(37, { 0.8, 0.1, 0.1 }, 5);
  const Split c = split_dataset(37, { 0.8, 0.1, 0.1 }, 6);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.train, c.train);
  std::set<int> all;
  for (const auto *part: { &a.train, &a.val, &a.test })
    for (int i: *part)
      EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 37u);
}

TEST(SplitDataset, EmptySplitRejected) {
  EXPECT_THROW(split_dataset(5, { 0.8, 0.1, 0.1 }, 1), std::invalid_argument);
  EXPECT_NO_THROW(split_dataset(5, { 1.0, 0.0, 0.0 }, 1));
}

TEST(Metrics, HandComputed) {
  const std::vector<double> y { 1, 2, 3 }, p { 1, 2, 4 };
  const Metrics m = compute_metrics(y, p);
  EXPECT_NEAR(m.mae, 1.0 / 3, 1e-15);
  EXPECT_NEAR(m.rmse, 1 / std::sqrt(3.0), 1e-15);
  ASSERT_TRUE(m.r2);
  EXPECT_NEAR(*m.r2, 0.5, 1e-15);
}

TEST(Metrics, PerfectAndMeanPredictors) {
  const std::vector<double> y { 1, 5, 6 };
  const Metrics perfect = compute_metrics(y, y);
  EXPECT_EQ(perfect.mae, 0.0);
  EXPECT_EQ(perfect.rmse, 0.0);
  EXPECT_EQ(perfect.r2, 1.0);
  const std::vector<double> mean(3, 4.0);
  EXPECT_NEAR(*compute_metrics(y, mean).r2, 0.0, 1e-15);
}

TEST(Metrics, ConstantTargetsHaveNoR2) {
  const std::vector<double> y { 2, 2 }, p { 1, 3 };
  const Metrics m = compute_metrics(y, p);
  EXPECT_FALSE(m.r2.has_value());
  const auto j = nlohmann::json::parse(m.to_json());
  EXPECT_TRUE(j.at("R2").is_null());
  EXPECT_EQ(j.at("MAE"), 1.0);
  EXPECT_THROW(compute_metrics(std::vector<double> {}, std::vector<double> {}),
               std::invalid_argument);
}

TEST(Normalizer, RoundTrip) {
  const std::vector<double> y { -3.2, 0.5, 7.25, 1e3 };
  const Normalizer n = Normalizer::fit(y);
  for (double v: y)
    EXPECT_NEAR(n.denormalize(n.normalize(v)), v, 1e-12);
  EXPECT_THROW(Normalizer::fit(std::vector<double> { 1, 1 }), DataError);
}

TEST(MakeBatches, MergesShortTail) {
  const std::vector<int> order { 0, 1, 2, 3, 4, 5, 6 };
  const auto a = make_batches(order, 3);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[2].size(), 1u);
  const auto b = make_batches(order, 3, 2);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[1].size(), 4u);
}

TEST(ParseJsonl, LineNumbersInErrors) {
  const std::string text
    = R"({"species": [1], "frac_coords": [[0,0,0]], "lattice": [[2,0,0],[0,2,0],[0,0,2]]}

{"species": [1], "frac_coords": [[0,0]], "lattice": [[2,0,0],[0,2,0],[0,0,2]]}
)";
  try {
    parse_jsonl(text);
    FAIL() << "malformed record accepted";
  } catch (const DataError &e) {
    EXPECT_EQ(e.line(), 3);
  }
}

TEST(PrepareData, ErrorsNameTheRecord) {
  RunConfig c = test::small_config();
  StructureRecord r;
  r.structure = CrystalStructure({ 110 }, { Vec3::Zero() },
                                 3 * Mat3::Identity());
  r.id = "bad-one";
  try {
    prepare_data({ r }, load_atom_table(c), c.featurizer());
    FAIL() << "unknown element accepted";
  } catch (const DataError &e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("bad-one"), std::string::npos) << what;
    EXPECT_NE(what.find("110"), std::string::npos) << what;
  }
}

TEST(Config, DefaultsCarryTrainingHyperparameters) {
  const RunConfig c;
  EXPECT_EQ(c.noise_sigma, 0.15);
  EXPECT_EQ(c.lambda_contrast, 1.0);
  EXPECT_EQ(c.lambda_se3, 0.5);
  EXPECT_EQ(c.lambda_so3, 0.5);
  EXPECT_EQ(c.pretrain_lr, 1e-5);
  EXPECT_EQ(c.pretrain_batch, 128);
  EXPECT_EQ(c.pretrain_epochs, 100);
  EXPECT_EQ(c.finetune_lr, 5e-4);
  EXPECT_EQ(c.finetune_batch, 16);
  EXPECT_EQ(c.finetune_epochs, 500);
  EXPECT_EQ(c.split, (std::array<double, 3> { 0.8, 0.1, 0.1 }));
  EXPECT_TRUE(c.problems().empty());
}

TEST(Config, StrictParsingListsEveryProblem) {
  try {
    parse_config(R"({"width": -3, "bogus": 1, "tau": "x", "split": [0.5, 0.5, 0.5]})");
    FAIL() << "invalid config accepted";
  } catch (const ConfigError &e) {
    const auto &p = e.problems();
    auto has = [&](const std::string &s) {
      return std::any_of(p.begin(), p.end(), [&](const std::string &x) {
        return x.find(s) != std::string::npos;
      });
    };
    EXPECT_TRUE(has("bogus"));
    EXPECT_TRUE(has("tau"));
    EXPECT_TRUE(has("width"));
    EXPECT_TRUE(has("split"));
  }
}

TEST(Config, JsonRoundTrip) {
  RunConfig c;
  c.width = 32;
  c.fusion = "concat";
  c.seed = 1234567890123ull;
  c.split = { 0.7, 0.2, 0.1 };
  const RunConfig back = parse_config(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.seed, c.seed);
}

class CheckpointTest: public ::testing::Test {
protected:
  RunConfig config = test::small_config();
  PreparedData data = toy_data(6, config);
  fs::path dir = test::temp_dir("ckpt");

  void TearDown() override { fs::remove_all(dir); }
};

TEST_F(CheckpointTest, RoundTripIsBitwise) {
  CrystalModel<double> model(config.model(true, false), 3);
  // make the batch-norm statistics non-trivial
  {
    const auto in = make_inputs<double>(test::pointers(data.features));
    model.forward(in, RunMode::kTrain);
  }
  round_to_storage(model.params());
  const std::vector<int> all { 0, 1, 2, 3, 4, 5 };
  const auto before = predict(model, data, all, 4);
  save_checkpoint(dir.string(), model, "finetune", config,
                  Normalizer { 1.5, 2.0 });
  CheckpointInfo info;
  const auto loaded = load_checkpoint<double>(dir.string(), &info);
  const auto after = predict(*loaded, data, all, 4);
  for (std::size_t k = 0; k < all.size(); ++k)
    EXPECT_EQ(before[k], after[k]);
  EXPECT_EQ(info.kind, "finetune");
  EXPECT_EQ(info.normalizer->mean, 1.5);
  EXPECT_EQ(fs::file_size(dir / "params.bin"),
            4 * [&] {
              std::size_t n = 0;
              for (const auto &e: model.params().entries())
                n += e.tensor.numel();
              return n;
            }());
}

TEST_F(CheckpointTest, FloatModelRoundTrip) {
  CrystalModel<float> model(config.model(true, false), 4);
  const std::vector<int> all { 0, 1, 2 };
  const auto before = predict(model, data, all, 3);
  save_checkpoint(dir.string(), model, "finetune", config, std::nullopt);
  const auto after = predict(*load_checkpoint<float>(dir.string()), data,
                             all, 3);
  EXPECT_EQ(before, after);
}

TEST_F(CheckpointTest, TruncatedPayloadIsRejected) {
  const CrystalModel<double> model(config.model(true, false), 3);
  save_checkpoint(dir.string(), model, "finetune", config, std::nullopt);
  fs::resize_file(dir / "params.bin", fs::file_size(dir / "params.bin") - 6);
  try {
    load_checkpoint<double>(dir.string());
    FAIL() << "truncated payload accepted";
  } catch (const CheckpointError &e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
}

TEST_F(CheckpointTest, VersionAndShapeMismatch) {
  const CrystalModel<double> model(config.model(true, false), 3);
  save_checkpoint(dir.string(), model, "finetune", config, std::nullopt);
  auto manifest = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
  auto edited = manifest;
  edited["version"] = 99;
  std::ofstream(dir / "manifest.json") << edited.dump();
  EXPECT_THROW(load_checkpoint<double>(dir.string()), CheckpointError);

  edited = manifest;
  edited["params"][0]["shape"] = { 1, 1 };
  std::ofstream(dir / "manifest.json") << edited.dump();
  EXPECT_THROW(load_checkpoint<double>(dir.string()), CheckpointError);
}

TEST(Finetune, LossDecreasesAndBestEpochRestored) {
  RunConfig c = test::small_config();
  c.finetune_epochs = 30;
  c.finetune_batch = 4;
  c.finetune_lr = 3e-3;
  c.patience = 0;
  const PreparedData data = toy_data(12, c);
  const Split split = split_dataset(data.size(), { 0.75, 0.25, 0.0 }, 1);
  std::vector<double> y;
  for (int i: split.train)
    y.push_back(*data.targets[i]);
  const Normalizer norm = Normalizer::fit(y);
  CrystalModel<double> model(c.model(true, false), 2);
  const FinetuneResult r = finetune(model, data, split, norm, c);
  ASSERT_EQ(r.epochs_run, 30);
  EXPECT_LT(r.history.back().train_loss, 0.5 * r.history.front().train_loss);
  // parameters of the best validation epoch are in place
  const auto pred = predict(model, data, split.val, 4);
  std::vector<double> truth, den;
  for (std::size_t k = 0; k < split.val.size(); ++k) {
    truth.push_back(*data.targets[split.val[k]]);
    den.push_back(norm.denormalize(pred[k]));
  }
  EXPECT_NEAR(compute_metrics(truth, den).mae, *r.best_val_mae, 1e-12);
}

TEST(Finetune, EarlyStoppingAndDeterminism) {
  RunConfig c = test::small_config();
  c.finetune_epochs = 40;
  c.finetune_batch = 4;
  c.patience = 2;
  c.finetune_lr = 5e-2;  // noisy on purpose
  const PreparedData data = toy_data(10, c);
  const Split split = split_dataset(data.size(), { 0.6, 0.4, 0.0 }, 3);
  std::vector<double> y;
  for (int i: split.train)
    y.push_back(*data.targets[i]);
  const Normalizer norm = Normalizer::fit(y);
  CrystalModel<double> a(c.model(true, false), 2), b(c.model(true, false), 2);
  const FinetuneResult ra = finetune(a, data, split, norm, c);
  const FinetuneResult rb = finetune(b, data, split, norm, c);
  EXPECT_LT(ra.epochs_run, 40);
  EXPECT_EQ(ra.epochs_run - ra.best_epoch, 2);
  ASSERT_EQ(ra.history.size(), rb.history.size());
  for (std::size_t k = 0; k < ra.history.size(); ++k)
    EXPECT_EQ(ra.history[k].train_loss, rb.history[k].train_loss);
}

TEST(Finetune, NonFiniteLossNamesStructures) {
  RunConfig c = test::small_config();
  c.finetune_epochs = 1;
  const PreparedData data = toy_data(4, c);
  const Split split { { 0, 1, 2, 3 }, {}, {} };
  CrystalModel<double> model(c.model(true, false), 2);
  fill_(model.params().find("moe.output.bias")->tensor,
        std::numeric_limits<double>::quiet_NaN());
  try {
    finetune(model, data, split, Normalizer {}, c);
    FAIL() << "NaN loss accepted";
  } catch (const NumericError &e) {
    EXPECT_NE(std::string(e.what()).find("toy-"), std::string::npos);
  }
}

TEST(Pretrain, StepLogAndCap) {
  RunConfig c = test::small_config();
  c.pretrain_batch = 4;
  c.pretrain_lr = 1e-3;
  const PreparedData data = toy_data(8, c);
  CrystalModel<double> model(c.model(false, true), 2);
  PretrainHooks hooks;
  hooks.max_steps = 5;
  const auto steps = pretrain(model, data, { 0, 1, 2, 3, 4, 5, 6, 7 }, c,
                              hooks);
  ASSERT_EQ(steps.size(), 5u);
  for (const auto &s: steps) {
    EXPECT_NEAR(s.total, s.contrast + 0.5 * s.se3 + 0.5 * s.so3,
                1e-12 * std::max(1.0, std::abs(s.total)));
    EXPECT_GE(s.se3, 0.0);
    EXPECT_GE(s.so3, 0.0);
  }
  const auto j = nlohmann::json::parse(steps[0].to_json());
  for (const char *key: { "step", "lr", "L_total", "L_contrast", "L_SE3",
                          "L_SO3" })
    EXPECT_TRUE(j.contains(key)) << key;
}

}  // namespace
}  // namespace mvcgt
