//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "mvcgt/structures.h"
#include "test_util.h"

namespace mvcgt {
namespace {
namespace fs = std::filesystem;
using nlohmann::json;

struct Invocation {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path &p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest: public ::testing::Test {
protected:
  fs::path dir = test::temp_dir("cli");

  void SetUp() override {
    RunConfig c = test::small_config(8);
    c.finetune_epochs = 3;
    c.finetune_batch = 4;
    c.pretrain_epochs = 1;
    c.pretrain_batch = 4;
    c.precision = "f64";
    std::ofstream(dir / "config.json") << c.to_json();
    write_data("train.jsonl", 12, true, 0);
  }
  void TearDown() override { fs::remove_all(dir); }

  void write_data(const std::string &name, int n, bool labeled,
                  int unknown_at, int bad_z = 0) {
    std::ofstream out(dir / name);
    for (int k = 0; k < n; ++k) {
      CrystalStructure s = test::random_crystal(700 + k, 1, 3);
      json j = json::parse(structure_to_json(
        s, labeled ? std::optional<double>(0.2 * k) : std::nullopt));
      if (bad_z != 0 && k == unknown_at)
        j["species"][0] = bad_z;
      j["id"] = "s" + std::to_string(k);
      out << j.dump() << '\n';
    }
  }

  Invocation run(const std::string &args) {
    const std::string cmd = std::string(MVCGT_CLI) + " " + args + " > "
                            + (dir / "stdout").string() + " 2> "
                            + (dir / "stderr").string();
    const int status = std::system(cmd.c_str());
    Invocation r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(dir / "stdout");
    r.err = slurp(dir / "stderr");
    return r;
  }

  std::string path(const std::string &name) const {
    return (dir / name).string();
  }
  std::string common() const {
    return "--config " + path("config.json") + " --seed 3";
  }
};

TEST_F(CliTest, CheckPasses) {
  const Invocation r = run("check --trials 2 --seed 1");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_TRUE(j.at("passed").get<bool>());
  EXPECT_TRUE(j.at("so3_equivariance").at("ok").get<bool>());
}

TEST_F(CliTest, IngestSummary) {
  const Invocation r = run("ingest " + common() + " --data " + path("train.jsonl"));
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_EQ(j.at("records"), 12);
  EXPECT_EQ(j.at("labeled"), 12);
  EXPECT_GT(j.at("edges").get<int>(), 0);
}

TEST_F(CliTest, PretrainFinetunePredictEvalRouter) {
  Invocation r = run("pretrain " + common() + " --data " + path("train.jsonl")
              + " --out " + path("pre"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "pre" / "manifest.json"));
  const std::string log = slurp(dir / "pre" / "pretrain_log.jsonl");
  const json first = json::parse(log.substr(0, log.find('\n')));
  EXPECT_TRUE(first.contains("L_total"));

  r = run("finetune " + common() + " --data " + path("train.jsonl")
          + " --from " + path("pre") + " --out " + path("fine"));
  ASSERT_EQ(r.code, 0) << r.err;
  const json metrics = json::parse(r.out);
  EXPECT_TRUE(metrics.contains("MAE"));
  EXPECT_EQ(metrics.at("epochs_run"), 3);

  write_data("unlabeled.jsonl", 5, false, 0);
  r = run("predict --from " + path("fine") + " --data "
          + path("unlabeled.jsonl"));
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    const json p = json::parse(line);
    EXPECT_EQ(p.at("id"), "s" + std::to_string(count));
    EXPECT_TRUE(p.at("prediction").is_number());
    ++count;
  }
  EXPECT_EQ(count, 5);

  r = run("eval --from " + path("fine") + " --data " + path("train.jsonl"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out).at("count"), 12);

  r = run("inspect-router --from " + path("fine") + " --data "
          + path("train.jsonl"));
  ASSERT_EQ(r.code, 0) << r.err;
  const json router = json::parse(r.out);
  ASSERT_EQ(router.at("scores").size(), 12u);
  for (const auto &s: router.at("scores"))
    EXPECT_EQ(s.size(), 2u);

  // a pretraining checkpoint has no prediction head
  r = run("predict --from " + path("pre") + " --data "
          + path("unlabeled.jsonl"));
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, UnknownElementIsDataError) {
  write_data("bad.jsonl", 3, true, 1, 109);
  const Invocation r = run("ingest " + common() + " --data " + path("bad.jsonl"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("109"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("s1"), std::string::npos) << r.err;
}

TEST_F(CliTest, MalformedLineIsDataError) {
  std::ofstream(dir / "broken.jsonl") << "{}\n";
  const Invocation r = run("ingest " + common() + " --data " + path("broken.jsonl"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("line 1"), std::string::npos) << r.err;
}

TEST_F(CliTest, InvalidConfigIsConfigError) {
  std::ofstream(dir / "bad.json") << R"({"width": 0, "nope": true})";
  const Invocation r = run("check --config " + path("bad.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("width"), std::string::npos) << r.err;
}

TEST_F(CliTest, MissingCheckpointIsDataError) {
  const Invocation r = run("predict --from " + path("absent") + " --data "
                    + path("train.jsonl"));
  EXPECT_EQ(r.code, 3);
}

}  // namespace
}  // namespace mvcgt
