/* Copyright 2026 The negunc Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/


#include "negunc/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "test_util.hpp"

namespace negunc::cli {
namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "negunc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string grammar() { return (fs::path(NEGUNC_SOURCE_DIR) / "configs" / "synthetic_grammar.json").string(); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// A tiny model config so the pipeline runs in seconds.
fs::path tiny_config(const fs::path& dir) {
  const auto p = dir / "tiny.json";
  std::ofstream(p) << R"({"epochs": 2, "batch_size": 64, "learning_rate": 0.003, "embedding_dim": 8, "hidden_dim": 8,
                         "layers": 1, "latent_dims": [1, 1, 4], "club_hidden": 8, "dev_probe_train_examples": 200})";
  return p;
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = testing::scratch_dir("cli_pipeline");
    ASSERT_EQ(invoke({"gen-synthetic", "--config", grammar(), "--n", "1200", "--seed", "4", "--out", (root_ / "data").string()}).code, 0);
    const auto cfg = tiny_config(root_);
    auto r = invoke({"train", "--config", cfg.string(), "--data", (root_ / "data").string(), "--objectives", "inf,adv,min",
                     "--out", (root_ / "runs" / "full").string(), "--quiet"});
    ASSERT_EQ(r.code, 0) << r.err;
    r = invoke({"evaluate", "--checkpoint", (root_ / "runs" / "full" / "best").string(), "--data", (root_ / "data").string(),
                "--out", (root_ / "rep" / "full").string(), "--resamples", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  static fs::path root_;
};

fs::path Pipeline::root_;

TEST(Cli, GenSyntheticIsByteIdentical) {
  const auto dir = testing::scratch_dir("cli_gen");
  for (const char* out : {"a", "b"}) {
    const auto r = invoke({"gen-synthetic", "--config", grammar(), "--n", "500", "--seed", "1", "--out", (dir / out).string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* split : {"train.jsonl", "dev.jsonl", "test.jsonl", "manifest.json"}) {
    EXPECT_EQ(slurp(dir / "a" / split), slurp(dir / "b" / split)) << split;
  }
  const auto other = invoke({"gen-synthetic", "--config", grammar(), "--n", "500", "--seed", "2", "--out", (dir / "c").string()});
  ASSERT_EQ(other.code, 0);
  EXPECT_NE(slurp(dir / "a" / "train.jsonl"), slurp(dir / "c" / "train.jsonl"));
}

TEST(Cli, RefusesToOverwriteWithoutForce) {
  const auto dir = testing::scratch_dir("cli_force");
  const std::vector<std::string> args = {"gen-synthetic", "--config", grammar(), "--n", "100", "--out", (dir / "d").string()};
  EXPECT_EQ(invoke(args).code, 0);
  const auto again = invoke(args);
  EXPECT_EQ(again.code, 1);
  EXPECT_NE(again.err.find("--force"), std::string::npos);
  auto forced = args;
  forced.push_back("--force");
  EXPECT_EQ(invoke(forced).code, 0);
}

TEST(Cli, UsageErrorsExitWithOne) {
  const auto unknown = invoke({"gen-synthetic", "--config", grammar(), "--out", "x", "--bogus"});
  EXPECT_EQ(unknown.code, 1);
  EXPECT_NE(unknown.err.find("Usage"), std::string::npos);
  EXPECT_EQ(invoke({}).code, 1);
  EXPECT_EQ(invoke({"frobnicate"}).code, 1);
  EXPECT_EQ(invoke({"--help"}).code, 0);
}

TEST(Cli, MissingInputNamesThePath) {
  const auto dir = testing::scratch_dir("cli_missing");
  const auto r = invoke({"train", "--data", (dir / "nowhere").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("nowhere"), std::string::npos);
  const auto g = invoke({"gen-synthetic", "--config", (dir / "none.json").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(g.code, 1);
  EXPECT_NE(g.err.find("none.json"), std::string::npos);
}

TEST(Cli, InvalidConfigIsAValidationError) {
  const auto dir = testing::scratch_dir("cli_badcfg");
  std::ofstream(dir / "bad.json") << R"({"epochz": 3})";
  ASSERT_EQ(invoke({"gen-synthetic", "--config", grammar(), "--n", "100", "--out", (dir / "d").string()}).code, 0);
  const auto r = invoke({"train", "--config", (dir / "bad.json").string(), "--data", (dir / "d").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("epochz"), std::string::npos);
}

TEST(Cli, OutputRootEnvironmentVariable) {
  const auto dir = testing::scratch_dir("cli_root");
  ::setenv(kOutRootEnv, dir.c_str(), 1);
  const auto r = invoke({"gen-synthetic", "--config", grammar(), "--n", "100", "--out", "rel"});
  ::unsetenv(kOutRootEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "rel" / "train.jsonl"));
}

TEST(Cli, PrepareDataAndWeakLabeling) {
  const auto dir = testing::scratch_dir("cli_prepare");
  {
    std::ofstream raw(dir / "raw.jsonl");
    for (int i = 0; i < 60; ++i) {
      nlohmann::json j = {{"id", "r" + std::to_string(i)}, {"split", i % 10 == 0 ? "dev" : (i % 10 == 1 ? "test" : "train")}};
      if (i % 3 == 0) {
        j["tokens"] = {"the", "food", "was", "not", "good"};
        j["cues"] = {{{"factor", "negation"}, {"start", 3}, {"end", 4}}};
      } else if (i % 3 == 1) {
        j["text"] = "The room might be small";
        j["cues"] = {{{"factor", "uncertainty"}, {"start", 2}, {"end", 3}}};
      } else {
        j["text"] = "The staff was friendly";
      }
      raw << j.dump() << '\n';
    }
  }
  auto r = invoke({"prepare-data", "--input", (dir / "raw.jsonl").string(), "--out", (dir / "gold").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto gold = corpus::load_dataset(dir / "gold");
  EXPECT_EQ(gold.train.statements.size() + gold.dev.statements.size() + gold.test.statements.size(), 60u);
  EXPECT_EQ(gold.dev.statements.size(), 6u);

  r = invoke({"train-weaklabeler", "--data", (dir / "gold").string(), "--k", "3", "--out", (dir / "wl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "wl" / "negation.json"));
  EXPECT_TRUE(fs::exists(dir / "wl" / "metrics.json"));

  {
    std::ofstream unl(dir / "unlabeled.jsonl");
    unl << R"({"id": "u1", "text": "the food was not good"})" << '\n' << R"({"id": "u2", "text": "the staff was friendly"})" << '\n';
  }
  r = invoke({"weak-label", "--models", (dir / "wl").string(), "--input", (dir / "unlabeled.jsonl").string(), "--merge-gold",
              (dir / "gold").string(), "--out", (dir / "merged").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto merged = corpus::load_dataset(dir / "merged", false);
  std::size_t weak = 0;
  for (const auto& s : merged.train.statements) {
    if (s.source == corpus::LabelSource::kWeak) {
      ++weak;
      EXPECT_EQ(s.negation, s.id.rfind("u1", 0) == 0 ? 1 : 0) << s.id;
    }
  }
  EXPECT_GE(weak, 1u);
  EXPECT_EQ(merged.dev.statements, gold.dev.statements);

  std::ofstream(dir / "broken.jsonl") << "{\"id\": 3}\n";
  r = invoke({"prepare-data", "--input", (dir / "broken.jsonl").string(), "--out", (dir / "b").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 1"), std::string::npos);
}

TEST_F(Pipeline, TrainWritesCheckpointsMetricsAndManifest) {
  const auto run = root_ / "runs" / "full";
  for (const char* f : {"best.ckpt", "last.ckpt", "metrics.jsonl", "config.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(run / f)) << f;
  }
  const auto manifest = nlohmann::json::parse(slurp(run / "manifest.json"));
  EXPECT_EQ(manifest.at("objectives"), "+INF+ADV+MIN");
  EXPECT_EQ(manifest.at("seed"), 1);
  const auto cfg = train::TrainConfig::load(run / "config.json");
  EXPECT_EQ(manifest.at("config_hash"), cfg.hash());
}

TEST_F(Pipeline, EvaluateWritesEveryReport) {
  const auto rep = root_ / "rep" / "full";
  for (const char* name : {"informativeness", "mig", "correlation", "length", "generation", "consistency", "transfer", "summary"}) {
    ASSERT_TRUE(fs::exists(rep / (std::string(name) + ".json"))) << name;
    const auto j = nlohmann::json::parse(slurp(rep / (std::string(name) + ".json")));
    EXPECT_TRUE(j.contains("meta")) << name;
    EXPECT_TRUE(j.at("meta").contains("config_hash")) << name;
    EXPECT_TRUE(j.at("meta").contains("seed")) << name;
  }
  const auto inf = nlohmann::json::parse(slurp(rep / "informativeness.json"));
  for (const char* l : {"n", "u", "c"}) {
    for (const char* k : {"n", "u"}) {
      for (const char* m : {"precision", "recall", "f1", "mi"}) EXPECT_TRUE(inf.at(l).at(k).contains(m)) << l << k << m;
    }
  }
  const auto mig = nlohmann::json::parse(slurp(rep / "mig.json"));
  for (const char* k : {"n", "u"}) {
    const double v = mig.at(k).at("mig").get<double>();
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  const auto tr = nlohmann::json::parse(slurp(rep / "transfer.json"));
  EXPECT_TRUE(tr.at("n").contains("remove"));
  EXPECT_TRUE(tr.at("u").contains("add"));
  EXPECT_TRUE(fs::exists(rep / "latents_test.csv"));
  EXPECT_TRUE(fs::exists(rep / "projection" / "projection_c.csv"));
}

TEST_F(Pipeline, EvaluateIsDeterministic) {
  const auto out = root_ / "rep" / "again";
  const auto r = invoke({"evaluate", "--checkpoint", (root_ / "runs" / "full" / "best.ckpt").string(), "--data",
                         (root_ / "data").string(), "--out", out.string(), "--resamples", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto a = nlohmann::json::parse(slurp(root_ / "rep" / "full" / "summary.json"));
  auto b = nlohmann::json::parse(slurp(out / "summary.json"));
  a["meta"].erase("checkpoint");
  b["meta"].erase("checkpoint");
  EXPECT_EQ(a, b);
}

TEST_F(Pipeline, ReportSingleRunAndQuartiles) {
  const auto out = root_ / "cmp_single";
  const auto r = invoke({"report", "--runs", (root_ / "rep" / "full").string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream csv(out / "informativeness.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "latent,factor,metric,+INF+ADV+MIN");
  const auto summary = nlohmann::json::parse(slurp(root_ / "rep" / "full" / "mig.json"));
  const auto rep = nlohmann::json::parse(slurp(out / "report.json"));
  EXPECT_DOUBLE_EQ(rep["mig_quartiles"]["+INF+ADV+MIN"]["n"]["median"].get<double>(), summary["n"]["mig"].get<double>());
  EXPECT_TRUE(fs::exists(out / "mig_boxplot.svg"));
}

TEST_F(Pipeline, ReportOrdersColumnsAndRefusesForeignData) {
  const auto cfg = tiny_config(root_);
  auto r = invoke({"train", "--config", cfg.string(), "--data", (root_ / "data").string(), "--objectives", "elbo", "--epochs", "1",
                   "--out", (root_ / "runs" / "elbo").string(), "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = invoke({"evaluate", "--checkpoint", (root_ / "runs" / "elbo").string(), "--data", (root_ / "data").string(), "--out",
              (root_ / "rep" / "elbo").string(), "--resamples", "2", "--no-generation"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = invoke({"report", "--runs", (root_ / "rep" / "full").string(), (root_ / "rep" / "elbo").string(), "--out",
              (root_ / "cmp_two").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream csv(root_ / "cmp_two" / "informativeness.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "latent,factor,metric,ELBO,+INF+ADV+MIN");

  auto foreign = nlohmann::json::parse(slurp(root_ / "rep" / "elbo" / "summary.json"));
  foreign["meta"]["data_fingerprint"] = "0000000000000000";
  fs::create_directories(root_ / "rep" / "foreign");
  std::ofstream(root_ / "rep" / "foreign" / "summary.json") << foreign.dump();
  r = invoke({"report", "--runs", (root_ / "rep" / "full").string(), (root_ / "rep" / "foreign").string(), "--out",
              (root_ / "cmp_bad").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("fingerprint"), std::string::npos);
}

TEST_F(Pipeline, ResumeContinuesFromLastCheckpoint) {
  const auto cfg = tiny_config(root_);
  const auto out = root_ / "runs" / "resumed";
  auto r = invoke({"train", "--config", cfg.string(), "--data", (root_ / "data").string(), "--epochs", "1", "--out", out.string(),
                   "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = invoke({"train", "--config", cfg.string(), "--data", (root_ / "data").string(), "--epochs", "2", "--out", out.string(),
              "--resume", "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("resuming from epoch 1"), std::string::npos);
  auto resumed = train::Trainer<float>::load(out / "last.ckpt");
  auto straight = train::Trainer<float>::load(root_ / "runs" / "full" / "last.ckpt");
  EXPECT_EQ(resumed->history().back()["losses"], straight->history().back()["losses"]);
}

TEST_F(Pipeline, TransferWritesExamples) {
  const auto out = root_ / "transfer";
  const auto r = invoke({"transfer", "--checkpoint", (root_ / "runs" / "full" / "best.ckpt").string(), "--data",
                         (root_ / "data").string(), "--factor", "uncertainty", "--direction", "add", "--limit", "50",
                         "--resamples", "2", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = nlohmann::json::parse(slurp(out / "summary.json"));
  EXPECT_EQ(s["u"]["attempted"].get<int>() + s["u"]["skipped"].get<int>(), 50);
  EXPECT_EQ(invoke({"transfer", "--checkpoint", (root_ / "runs" / "full" / "best.ckpt").string(), "--data",
                    (root_ / "data").string(), "--direction", "sideways", "--out", (root_ / "t2").string()})
                .code,
            1);
}

}  // namespace
}  // namespace negunc::cli
