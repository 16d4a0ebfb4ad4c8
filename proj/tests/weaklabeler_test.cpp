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

#include "negunc/scores.hpp"
#include "negunc/weaklabeler.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <cmath>
#include <random>

namespace {

using namespace negunc::weak;
using negunc::ValidationError;
using negunc::corpus::LabelSource;
using Tokens = std::vector<std::string>;

Statement doc(const std::string& id, const Tokens& t, int neg, int unc = 0) {
  return Statement{id, t, neg, unc, LabelSource::kGold};
}

TEST(AnovaF, HandExamples) {
  Eigen::MatrixXd x(4, 3);
  x << 1, 1, 1,
       1, 0, 1,
       1, 1, 0,
       1, 0, 0;
  const std::vector<int> y = {1, 0, 1, 0};
  auto f = anova_f_scores(x, y);
  EXPECT_EQ(f[0], 0.0);          // constant column
  EXPECT_EQ(f[1], kInfiniteF);   // identical to the labels
  EXPECT_EQ(f[2], 0.0);          // equal group means
  EXPECT_THROW(anova_f_scores(x, {1, 1, 1, 1}), ValidationError);
}

// Two-group F via group sample variances.
double two_group_f(const Eigen::VectorXd& col, const std::vector<int>& y) {
  std::vector<double> g0, g1;
  for (Eigen::Index i = 0; i < col.size(); ++i) (y[i] ? g1 : g0).push_back(col(i));
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double a : v) s += a;
    return s / static_cast<double>(v.size());
  };
  auto ss = [&](const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0;
    for (double a : v) s += (a - m) * (a - m);
    return s;
  };
  const double n0 = static_cast<double>(g0.size()), n1 = static_cast<double>(g1.size());
  const double diff = mean(g1) - mean(g0);
  const double between = n0 * n1 / (n0 + n1) * diff * diff;
  const double within = (ss(g0) + ss(g1)) / (n0 + n1 - 2);
  return between / within;
}

TEST(AnovaF, MatchesTwoGroupFormulaOnRandomBinaryMatrices) {
  std::mt19937_64 rng(2024);
  int compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd x(20, 5);
    std::vector<int> y(20);
    for (int i = 0; i < 20; ++i) {
      y[static_cast<std::size_t>(i)] = i < 2 ? i : static_cast<int>(rng() % 2);
      for (int j = 0; j < 5; ++j) x(i, j) = static_cast<double>(rng() % 2);
    }
    auto f = anova_f_scores(x, y);
    for (int j = 0; j < 5; ++j) {
      const double oracle = two_group_f(x.col(j), y);
      if (!std::isfinite(oracle)) {
        EXPECT_EQ(f[static_cast<std::size_t>(j)], kInfiniteF);
      } else if (std::isnan(oracle)) {
        EXPECT_EQ(f[static_cast<std::size_t>(j)], 0.0);
      } else {
        EXPECT_NEAR(f[static_cast<std::size_t>(j)], oracle, 1e-9 * std::max(1.0, oracle));
        ++compared;
      }
    }
  }
  EXPECT_GT(compared, 900);
}

TEST(SelectTopK, Examples) {
  const std::vector<std::string> names = {"c", "a", "b"};
  auto top = select_top_k({3, 1, 2}, names, 2);
  EXPECT_EQ(top, (std::vector<std::size_t>{0, 2}));
  auto tie = select_top_k({1, 1, 1}, names, 1);
  EXPECT_EQ(names[tie[0]], "a");
  EXPECT_EQ(select_top_k({1, 5, 2}, names, 3).size(), 3u);
  EXPECT_THROW(select_top_k({1, 2, 3}, names, 4), ValidationError);
  EXPECT_EQ(select_top_k({kInfiniteF, 1e300, 0}, names, 1)[0], 0u);
}

TEST(SelectTopK, InvariantToColumnPermutation) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(12);
    std::vector<std::string> n(12);
    for (int i = 0; i < 12; ++i) {
      s[static_cast<std::size_t>(i)] = static_cast<double>(rng() % 4);
      n[static_cast<std::size_t>(i)] = "f" + std::to_string(i);
    }
    std::vector<std::size_t> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> ps(12);
    std::vector<std::string> pn(12);
    for (std::size_t i = 0; i < 12; ++i) {
      ps[i] = s[perm[i]];
      pn[i] = n[perm[i]];
    }
    std::vector<std::string> a, b;
    for (auto i : select_top_k(s, n, 5)) a.push_back(n[i]);
    for (auto i : select_top_k(ps, pn, 5)) b.push_back(pn[i]);
    EXPECT_EQ(a, b);
  }
}

TEST(NaiveBayes, ToyModelParametersAndPosterior) {
  std::vector<Statement> docs = {doc("1", {"never", "x"}, 1), doc("2", {"never", "y"}, 1), doc("3", {"x"}, 0),
                                 doc("4", {"y"}, 0)};
  auto m = fit(docs, Factor::kNegation, 1, 1.0);
  ASSERT_EQ(m.features.tokens, Tokens{"never"});
  EXPECT_DOUBLE_EQ(m.present_prob[0][1], 0.75);
  EXPECT_DOUBLE_EQ(m.present_prob[0][0], 0.25);
  EXPECT_DOUBLE_EQ(m.log_prior[0], std::log(0.5));
  EXPECT_DOUBLE_EQ(m.log_prior[1], std::log(0.5));
  auto p = predict(m, {"it", "never", "works"});
  EXPECT_EQ(p.label, 1);
  EXPECT_NEAR(p.posterior, 0.75, 1e-12);
  EXPECT_THROW(fit(docs, Factor::kNegation, 1, 0.0), ValidationError);
  EXPECT_THROW(fit({doc("a", {"x"}, 0), doc("b", {"y"}, 0)}, Factor::kNegation, 1), ValidationError);
}

TEST(NaiveBayes, SymmetricModelTiesToZero) {
  NaiveBayesModel m;
  m.features.tokens = {"a", "b"};
  m.log_prior = {std::log(0.5), std::log(0.5)};
  m.present_prob = {{0.3, 0.3}, {0.6, 0.6}};
  auto p = predict(m, {"a"});
  EXPECT_EQ(p.label, 0);
  EXPECT_DOUBLE_EQ(p.posterior, 0.5);
}

TEST(NaiveBayes, NoFeatureTokensDecidedByPriorAndAbsenceTerms) {
  NaiveBayesModel m;
  m.features.tokens = {"a"};
  m.log_prior = {std::log(0.4), std::log(0.6)};
  m.present_prob = {{0.1, 0.5}};
  auto p = predict(m, {"zzz"});
  const double s0 = 0.4 * 0.9, s1 = 0.6 * 0.5;
  EXPECT_NEAR(p.posterior, s1 / (s0 + s1), 1e-12);
  EXPECT_EQ(p.label, 0);
}

// Independent log-domain computation on a 6-document fixture.
TEST(NaiveBayes, PosteriorsMatchHandComputationOnSixDocuments) {
  std::vector<Statement> docs = {
      doc("1", {"i", "do", "n't", "like", "it"}, 1),   doc("2", {"never", "again"}, 1),
      doc("3", {"not", "good", "at", "all"}, 1),       doc("4", {"i", "like", "it"}, 0),
      doc("5", {"good", "phone"}, 0),                  doc("6", {"works", "again", "now"}, 0),
  };
  const std::size_t k = 4;
  auto m = fit(docs, Factor::kNegation, k, 1.0);
  ASSERT_EQ(m.features.k(), k);

  for (const auto& probe : std::vector<Tokens>{{"i", "never", "like", "it"}, {"good", "again"}, {"n't"}, {"x"}}) {
    double l[2] = {std::log(3.0 / 6.0), std::log(3.0 / 6.0)};
    for (const auto& f : m.features.tokens) {
      for (int c = 0; c < 2; ++c) {
        double count = 0, nc = 0;
        for (const auto& d : docs) {
          if (d.negation != c) continue;
          nc += 1;
          count += std::find(d.tokens.begin(), d.tokens.end(), f) != d.tokens.end() ? 1 : 0;
        }
        const double p = (count + 1.0) / (nc + 2.0);
        const bool on = std::find(probe.begin(), probe.end(), f) != probe.end();
        l[c] += on ? std::log(p) : std::log(1.0 - p);
      }
    }
    const double hi = std::max(l[0], l[1]);
    const double post = std::exp(l[1] - hi) / (std::exp(l[0] - hi) + std::exp(l[1] - hi));
    auto pred = predict(m, probe);
    EXPECT_NEAR(pred.posterior, post, 1e-9);
    EXPECT_EQ(pred.label, l[1] > l[0] ? 1 : 0);
  }
}

TEST(NaiveBayes, ScaleFreeDecision) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int i = 0; i < 1000; ++i) {
    std::array<double, 2> s = {u(rng), u(rng)};
    const double c = u(rng);
    EXPECT_EQ(decide(s), decide({s[0] + c, s[1] + c}));
  }
}

TEST(Scores, BinaryPrf) {
  auto all = negunc::binary_prf({1, 0, 1}, {1, 0, 1});
  EXPECT_DOUBLE_EQ(all.f1, 1.0);
  // TP=1, FP=1, FN=1
  auto s = negunc::binary_prf({1, 0, 1, 0}, {1, 1, 0, 0});
  EXPECT_DOUBLE_EQ(s.precision, 0.5);
  EXPECT_DOUBLE_EQ(s.recall, 0.5);
  EXPECT_DOUBLE_EQ(s.f1, 0.5);
  auto none = negunc::binary_prf({0, 0}, {0, 0});
  EXPECT_DOUBLE_EQ(none.f1, 0.0);
  auto macro = negunc::macro_prf({0, 0}, {0, 0});
  EXPECT_DOUBLE_EQ(macro.f1, 0.5);
}

TEST(WeakLabel, CorpusLabelingIsIdempotentAndMarksSource) {
  std::vector<Statement> docs = {doc("1", {"never", "x"}, 1, 1), doc("2", {"never", "y"}, 1, 0),
                                 doc("3", {"x", "maybe"}, 0, 1), doc("4", {"y"}, 0, 0)};
  auto neg = fit(docs, Factor::kNegation, 2);
  auto unc = fit(docs, Factor::kUncertainty, 2);
  EXPECT_TRUE(weak_label_corpus(neg, unc, {}).empty());
  auto once = weak_label_corpus(neg, unc, docs);
  auto twice = weak_label_corpus(neg, unc, once);
  EXPECT_EQ(once, twice);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    EXPECT_EQ(once[i].source, LabelSource::kWeak);
    EXPECT_EQ(once[i].tokens, docs[i].tokens);
  }
  EXPECT_EQ(once[0].negation, 1);
  EXPECT_THROW(weak_label_corpus(unc, neg, docs), ValidationError);
  auto perfect = evaluate(neg, docs);
  EXPECT_DOUBLE_EQ(perfect.f1, 1.0);
}

TEST(WeakLabel, ModelRoundTrip) {
  std::vector<Statement> docs = {doc("1", {"never", "x"}, 1), doc("2", {"y"}, 0), doc("3", {"not"}, 1)};
  auto m = fit(docs, Factor::kNegation, 3);
  auto dir = negunc::testing::scratch_dir("nb");
  save_model(m, dir / "neg.json");
  auto back = load_model(dir / "neg.json");
  EXPECT_EQ(back.features.tokens, m.features.tokens);
  EXPECT_EQ(back.present_prob, m.present_prob);
  EXPECT_EQ(back.log_prior, m.log_prior);
  for (const auto& d : docs) EXPECT_EQ(predict(back, d.tokens).posterior, predict(m, d.tokens).posterior);
}

}  // namespace
