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

#include "negunc/trainer.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "test_util.hpp"

namespace negunc::train {
namespace {

namespace fs = std::filesystem;

corpus::Dataset tiny_corpus(std::size_t n = 240) {
  auto g = corpus::SyntheticGrammar::load(fs::path(NEGUNC_SOURCE_DIR) / "configs" / "synthetic_grammar.json");
  return corpus::generate_synthetic_corpus(g, n);
}

TrainConfig tiny_config(const std::string& objectives = "inf,adv,min") {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 32;
  c.learning_rate = 3e-3;
  c.adversary_learning_rate = 3e-3;
  c.club_learning_rate = 3e-3;
  c.embedding_dim = 8;
  c.hidden_dim = 8;
  c.layers = 1;
  c.latent_dims = {1, 1, 6};
  c.club_hidden = 8;
  c.dev_probe_train_examples = 100;
  c.objectives = ObjectiveSet::parse(objectives);
  c.seed = 5;
  return c;
}

template <typename T>
std::vector<Matrix<T>> snapshot(Trainer<T>& t) {
  std::vector<Matrix<T>> out;
  t.visit_all([&](const std::string&, Parameter<T>& p) { out.push_back(p.value); });
  return out;
}

template <typename T>
std::map<std::string, std::vector<Matrix<T>>> snapshot_groups(Trainer<T>& t) {
  std::map<std::string, std::vector<Matrix<T>>> out;
  t.visit_all([&](const std::string& g, Parameter<T>& p) { out[g].push_back(p.value); });
  return out;
}

template <typename T>
bool same(const std::vector<Matrix<T>>& a, const std::vector<Matrix<T>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols()) return false;
    if (std::memcmp(a[i].data(), b[i].data(), sizeof(T) * static_cast<std::size_t>(a[i].size())) != 0) return false;
  }
  return true;
}

Batch first_batch(const corpus::Vocabulary& v, const corpus::Dataset& d, std::size_t n = 16) {
  const auto ex = encode_statements(v, d.train.statements);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return Batch::gather(ex, idx);
}

TEST(ObjectiveSet, ParsesAndLabels) {
  EXPECT_EQ(ObjectiveSet::parse("elbo").label(), "ELBO");
  EXPECT_EQ(ObjectiveSet::parse("").label(), "ELBO");
  EXPECT_EQ(ObjectiveSet::parse("inf").label(), "+INF");
  EXPECT_EQ(ObjectiveSet::parse("inf,adv").label(), "+INF+ADV");
  EXPECT_EQ(ObjectiveSet::parse("min, INF").label(), "+INF+MIN");
  EXPECT_EQ(ObjectiveSet::parse("inf,adv,min").label(), "+INF+ADV+MIN");
  EXPECT_THROW(ObjectiveSet::parse("inf,foo"), ValidationError);
}

TEST(TrainConfig, DefaultsAreValid) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.epochs, 20);
  EXPECT_EQ(c.batch_size, 128);
  EXPECT_DOUBLE_EQ(c.club_learning_rate, 5e-4);
  EXPECT_DOUBLE_EQ(c.lambda.min, 0.01);
  EXPECT_EQ(c.latent_dims, (std::array<int, 3>{1, 1, 62}));
}

TEST(TrainConfig, JsonRoundTripAndHash) {
  TrainConfig c = tiny_config("inf,min");
  c.beta.content = 0.02;
  const TrainConfig back = TrainConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
  TrainConfig d = c;
  d.seed = 6;
  EXPECT_NE(d.hash(), c.hash());
}

TEST(TrainConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(TrainConfig::from_json({{"epoch", 3}}), ValidationError);
  EXPECT_THROW(TrainConfig::from_json({{"batch_size", 1}}), ValidationError);
  EXPECT_THROW(TrainConfig::from_json({{"learning_rate", 0.0}}), ValidationError);
  EXPECT_THROW(TrainConfig::from_json({{"hidden_dropout", 1.0}}), ValidationError);
  EXPECT_THROW(TrainConfig::from_json({{"beta", {{"n", -1.0}}}}), ValidationError);
  EXPECT_THROW(TrainConfig::from_json({{"lambda", {{"adv", -1.0}}}}), ValidationError);
  EXPECT_THROW(TrainConfig::from_json({{"latent_dims", {1, 0, 4}}}), ValidationError);
  EXPECT_THROW(TrainConfig::from_json({{"epochs", "many"}}), ValidationError);
  const auto c = TrainConfig::from_json({{"objectives", "elbo"}, {"epochs", 3}});
  EXPECT_EQ(c.objectives.label(), "ELBO");
  EXPECT_EQ(c.epochs, 3);
}

TEST(Trainer, BuildsOnlyActiveAuxiliaryNetworks) {
  const auto d = tiny_corpus();
  const auto v = corpus::Vocabulary::build(d.train.statements);
  Trainer<double> elbo(tiny_config("elbo"), v);
  EXPECT_FALSE(elbo.has_probes() || elbo.has_adversaries() || elbo.has_club());
  Trainer<double> full(tiny_config(), v);
  EXPECT_TRUE(full.has_probes() && full.has_adversaries() && full.has_club());
  Trainer<double> inf_min(tiny_config("inf,min"), v);
  EXPECT_TRUE(inf_min.has_probes() && !inf_min.has_adversaries() && inf_min.has_club());
}

TEST(Trainer, StepIsDeterministic) {
  const auto d = tiny_corpus();
  const auto v = corpus::Vocabulary::build(d.train.statements);
  const Batch b = first_batch(v, d);
  Trainer<double> a(tiny_config(), v), c(tiny_config(), v);
  for (int i = 0; i < 3; ++i) {
    const auto ra = a.train_step(b), rc = c.train_step(b);
    EXPECT_EQ(ra.total, rc.total);
    EXPECT_EQ(ra.club, rc.club);
  }
  EXPECT_TRUE(same(snapshot(a), snapshot(c)));
  Trainer<double> other(tiny_config(), v);
  other.set_determinism(99);
  other.train_step(b);
  Trainer<double> ref(tiny_config(), v);
  ref.train_step(b);
  EXPECT_FALSE(same(snapshot(other), snapshot(ref)));
}

TEST(Trainer, LossRecordMatchesActiveTerms) {
  const auto d = tiny_corpus();
  const auto v = corpus::Vocabulary::build(d.train.statements);
  const Batch b = first_batch(v, d);
  Trainer<double> elbo(tiny_config("elbo"), v);
  const auto r = elbo.train_step(b);
  EXPECT_EQ(r.inf, 0.0);
  EXPECT_EQ(r.adv_classifier, 0.0);
  EXPECT_EQ(r.min, 0.0);
  EXPECT_EQ(r.club, 0.0);
  EXPECT_NEAR(r.total, r.elbo, 1e-12);
  const auto& beta = elbo.config().beta;
  EXPECT_NEAR(r.elbo, r.reconstruction + beta.negation * r.kl[0] + beta.uncertainty * r.kl[1] + beta.content * r.kl[2], 1e-9);

  TrainConfig cfg = tiny_config();
  Trainer<double> full(cfg, v);
  const auto f = full.train_step(b);
  EXPECT_GT(f.inf, 0.0);
  EXPECT_GT(f.adv_classifier, 0.0);
  EXPECT_LT(f.adv_encoder, 0.0);
  EXPECT_GE(f.adv_encoder, -4.0 * std::log(2.0) - 1e-12);
  EXPECT_NEAR(f.total, f.elbo + cfg.lambda.inf * f.inf + cfg.lambda.adv * f.adv_encoder + cfg.lambda.min * f.min, 1e-9);
}

TEST(Trainer, StepMovesEveryActiveGroup) {
  const auto d = tiny_corpus();
  const auto v = corpus::Vocabulary::build(d.train.statements);
  Trainer<double> t(tiny_config(), v);
  const auto before = snapshot_groups(t);
  t.train_step(first_batch(v, d));
  const auto after = snapshot_groups(t);
  for (const auto& [g, values] : before) EXPECT_FALSE(same(values, after.at(g))) << g;
}

TEST(Trainer, ZeroWeightsReduceTotalToElbo) {
  const auto d = tiny_corpus();
  const auto v = corpus::Vocabulary::build(d.train.statements);
  TrainConfig cfg = tiny_config();
  cfg.lambda = {0.0, 0.0, 0.0};
  Trainer<double> t(cfg, v);
  const auto b = first_batch(v, d);
  const auto r = t.train_step(b);
  EXPECT_NEAR(r.total, r.elbo, 1e-12);
}

TEST(Trainer, RejectsTinyBatchesAndNonFiniteLosses) {
  const auto d = tiny_corpus();
  const auto v = corpus::Vocabulary::build(d.train.statements);
  Trainer<double> t(tiny_config(), v);
  EXPECT_THROW(t.train_step(first_batch(v, d, 1)), ValidationError);
  t.visit_all([](const std::string& g, Parameter<double>& p) {
    if (g == "heads") p.value.setConstant(std::numeric_limits<double>::quiet_NaN());
  });
  try {
    t.train_step(first_batch(v, d));
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_FALSE(e.term().empty());
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Trainer, FitWritesMetricsAndCheckpoints) {
  const auto d = tiny_corpus();
  const auto v = corpus::Vocabulary::build(d.train.statements);
  const auto dir = testing::scratch_dir("trainer_fit");
  Trainer<float> t(tiny_config(), v);
  std::vector<std::string> lines;
  typename Trainer<float>::FitOptions opt;
  opt.progress = [&](const std::string& s) { lines.push_back(s); };
  t.fit(d, dir, opt);
  EXPECT_EQ(lines.size(), 2u);
  EXPECT_TRUE(fs::exists(dir / "last.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "best.ckpt"));
  std::ifstream in(dir / "metrics.jsonl");
  std::string line;
  int epochs = 0, steps = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.at("type") == "epoch") {
      ++epochs;
      EXPECT_TRUE(j.at("dev").contains("probe_f1_n"));
    } else {
      ++steps;
    }
  }
  EXPECT_EQ(epochs, 2);
  EXPECT_EQ(steps, static_cast<int>(t.step()));
  EXPECT_EQ(t.history().size(), 2u);
  EXPECT_GE(t.best_epoch(), 1);
}

TEST(Trainer, CheckpointRoundTripPreservesModelAndDevScores) {
  const auto d = tiny_corpus();
  const auto v = corpus::Vocabulary::build(d.train.statements);
  const auto dir = testing::scratch_dir("trainer_ckpt");
  Trainer<double> t(tiny_config(), v);
  t.set_epochs(1);
  t.fit(d, dir);
  auto loaded = Trainer<double>::load(dir / "last.ckpt");
  EXPECT_TRUE(same(snapshot(t), snapshot(*loaded)));
  EXPECT_EQ(loaded->epoch(), 1);
  EXPECT_EQ(loaded->step(), t.step());
  EXPECT_EQ(loaded->vocab().tokens(), v.tokens());
  const auto train = encode_statements(v, d.train.statements);
  const auto dev = encode_statements(v, d.dev.statements);
  EXPECT_EQ(t.evaluate_dev(train, dev).to_json(), loaded->evaluate_dev(train, dev).to_json());
  EXPECT_EQ(resolve_checkpoint(dir / "best"), dir / "best.ckpt");
  EXPECT_EQ(resolve_checkpoint(dir), dir / "best.ckpt");
  EXPECT_THROW(resolve_checkpoint(dir / "nope"), ValidationError);
  EXPECT_THROW(Trainer<float>::load(dir / "last.ckpt"), ValidationError);
}

TEST(Trainer, ResumeReproducesUninterruptedRun) {
  const auto d = tiny_corpus();
  const auto v = corpus::Vocabulary::build(d.train.statements);
  const auto full_dir = testing::scratch_dir("trainer_full");
  const auto part_dir = testing::scratch_dir("trainer_part");
  Trainer<double> full(tiny_config(), v);
  full.fit(d, full_dir);

  Trainer<double> part(tiny_config(), v);
  part.set_epochs(1);
  part.fit(d, part_dir);
  auto resumed = Trainer<double>::load(part_dir / "last.ckpt");
  resumed->set_epochs(2);
  resumed->fit(d, part_dir);
  EXPECT_TRUE(same(snapshot(full), snapshot(*resumed)));
  EXPECT_EQ(full.history().back()["losses"], resumed->history().back()["losses"]);
  EXPECT_EQ(full.history().back()["dev"], resumed->history().back()["dev"]);
}

TEST(Trainer, RejectsCorruptCheckpoints) {
  const auto dir = testing::scratch_dir("trainer_corrupt");
  {
    std::ofstream out(dir / "bad.ckpt");
    out << "not a checkpoint\n";
  }
  EXPECT_THROW(Trainer<double>::load(dir / "bad.ckpt"), ValidationError);
  const auto d = tiny_corpus();
  const auto v = corpus::Vocabulary::build(d.train.statements);
  Trainer<double> t(tiny_config(), v);
  t.save(dir / "ok.ckpt");
  const auto size = fs::file_size(dir / "ok.ckpt");
  fs::resize_file(dir / "ok.ckpt", size - 16);
  EXPECT_THROW(Trainer<double>::load(dir / "ok.ckpt"), ValidationError);
}

}  // namespace
}  // namespace negunc::train
