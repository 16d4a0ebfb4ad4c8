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

// Weak statement-level labelers: Bernoulli naive Bayes over bag-of-words
// presence features, with the feature set chosen by two-group ANOVA F.

#ifndef NEGUNC_WEAKLABELER_HPP_
#define NEGUNC_WEAKLABELER_HPP_

#include "json.hpp"
#include "negunc/corpus.hpp"
#include "negunc/errors.hpp"
#include "negunc/scores.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

namespace negunc::weak {

using corpus::Factor;
using corpus::Statement;

// Stands in for an infinite F (zero within-group variance, nonzero
// between-group variance). Orders above every finite score.
inline constexpr double kInfiniteF = std::numeric_limits<double>::max();

// One-way ANOVA F statistic of every column against binary labels.
inline std::vector<double> anova_f_scores(const Eigen::MatrixXd& features, const std::vector<int>& labels) {
  const Eigen::Index n = features.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw ValidationError("anova_f_scores: label count mismatch");
  if (n < 2) throw ValidationError("anova_f_scores: need at least two rows");
  Eigen::Index n1 = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ValidationError("anova_f_scores: labels must be 0/1");
    n1 += y;
  }
  const Eigen::Index n0 = n - n1;
  if (n0 == 0 || n1 == 0) throw ValidationError("anova_f_scores: both classes must be present");
  std::vector<double> scores(static_cast<std::size_t>(features.cols()));
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    double s0 = 0, s1 = 0;
    for (Eigen::Index i = 0; i < n; ++i) (labels[i] ? s1 : s0) += features(i, j);
    const double m0 = s0 / static_cast<double>(n0), m1 = s1 / static_cast<double>(n1);
    const double m = (s0 + s1) / static_cast<double>(n);
    const double between = static_cast<double>(n0) * (m0 - m) * (m0 - m) + static_cast<double>(n1) * (m1 - m) * (m1 - m);
    double within = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = features(i, j) - (labels[i] ? m1 : m0);
      within += d * d;
    }
    const double df_within = static_cast<double>(n - 2);
    double f;
    if (within <= 0.0 || df_within <= 0.0) {
      f = between > 0.0 ? kInfiniteF : 0.0;
    } else {
      f = between / (within / df_within);
    }
    scores[static_cast<std::size_t>(j)] = f;
  }
  return scores;
}

// Indices of the k best scores, highest first; equal scores are ordered by
// feature name.
inline std::vector<std::size_t> select_top_k(const std::vector<double>& scores, const std::vector<std::string>& names,
                                             std::size_t k) {
  if (names.size() != scores.size()) throw ValidationError("select_top_k: names and scores differ in length");
  if (k > scores.size()) {
    throw ValidationError("select_top_k: K=" + std::to_string(k) + " exceeds feature count " + std::to_string(scores.size()));
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return names[a] < names[b];
  });
  idx.resize(k);
  return idx;
}

struct BowFeatureSet {
  Factor factor = Factor::kNegation;
  std::vector<std::string> tokens;

  std::size_t k() const { return tokens.size(); }
};

struct NaiveBayesModel {
  Factor factor = Factor::kNegation;
  BowFeatureSet features;
  double alpha = 1.0;
  std::array<double, 2> log_prior{};
  // present_prob[f][c] = P(feature f present | class c).
  std::vector<std::array<double, 2>> present_prob;
};

// Presence matrix of `vocab` tokens over statements.
inline Eigen::MatrixXd presence_matrix(const std::vector<Statement>& statements, const std::vector<std::string>& vocab) {
  std::unordered_map<std::string, Eigen::Index> col;
  for (std::size_t j = 0; j < vocab.size(); ++j) col[vocab[j]] = static_cast<Eigen::Index>(j);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(statements.size()), static_cast<Eigen::Index>(vocab.size()));
  for (std::size_t i = 0; i < statements.size(); ++i) {
    for (const auto& t : statements[i].tokens) {
      if (auto it = col.find(t); it != col.end()) x(static_cast<Eigen::Index>(i), it->second) = 1.0;
    }
  }
  return x;
}

// Feature selection over the statements' token types followed by smoothed
// Bernoulli likelihood estimation.
inline NaiveBayesModel fit(const std::vector<Statement>& statements, Factor factor, std::size_t k = 20,
                           double alpha = 1.0) {
  if (!(alpha > 0.0)) throw ValidationError("naive Bayes: smoothing alpha must be > 0");
  std::vector<int> y;
  y.reserve(statements.size());
  for (const auto& s : statements) y.push_back(s.label(factor));
  const auto n1 = std::count(y.begin(), y.end(), 1);
  const auto n0 = static_cast<long>(y.size()) - n1;
  if (n0 == 0 || n1 == 0) throw ValidationError("naive Bayes: training data must contain both classes");

  std::set<std::string> types;
  for (const auto& s : statements) types.insert(s.tokens.begin(), s.tokens.end());
  const std::vector<std::string> vocab(types.begin(), types.end());
  const Eigen::MatrixXd x = presence_matrix(statements, vocab);
  const auto top = select_top_k(anova_f_scores(x, y), vocab, k);

  NaiveBayesModel m;
  m.factor = factor;
  m.alpha = alpha;
  m.features.factor = factor;
  const double n = static_cast<double>(y.size());
  m.log_prior = {std::log(static_cast<double>(n0) / n), std::log(static_cast<double>(n1) / n)};
  for (std::size_t j : top) {
    m.features.tokens.push_back(vocab[j]);
    double c0 = 0, c1 = 0;
    for (std::size_t i = 0; i < y.size(); ++i) (y[i] ? c1 : c0) += x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    m.present_prob.push_back({(c0 + alpha) / (static_cast<double>(n0) + 2 * alpha),
                              (c1 + alpha) / (static_cast<double>(n1) + 2 * alpha)});
  }
  return m;
}

// Class log-scores (unnormalized joint log-probabilities).
inline std::array<double, 2> log_scores(const NaiveBayesModel& m, const std::vector<std::string>& tokens) {
  const std::unordered_set<std::string> present(tokens.begin(), tokens.end());
  std::array<double, 2> s = m.log_prior;
  for (std::size_t f = 0; f < m.features.tokens.size(); ++f) {
    const bool on = present.count(m.features.tokens[f]) != 0;
    for (int c = 0; c < 2; ++c) {
      const double p = m.present_prob[f][static_cast<std::size_t>(c)];
      s[static_cast<std::size_t>(c)] += on ? std::log(p) : std::log1p(-p);
    }
  }
  return s;
}

// Ties go to class 0.
inline int decide(const std::array<double, 2>& scores) { return scores[1] > scores[0] ? 1 : 0; }

struct Prediction {
  int label = 0;
  double posterior = 0.5;  // P(class 1 | statement)
};

inline Prediction predict(const NaiveBayesModel& m, const std::vector<std::string>& tokens) {
  const auto s = log_scores(m, tokens);
  const double mx = std::max(s[0], s[1]);
  const double z = mx + std::log(std::exp(s[0] - mx) + std::exp(s[1] - mx));
  return {decide(s), std::exp(s[1] - z)};
}

inline PrfScores evaluate(const NaiveBayesModel& m, const std::vector<Statement>& gold) {
  std::vector<int> g, p;
  for (const auto& s : gold) {
    g.push_back(s.label(m.factor));
    p.push_back(predict(m, s.tokens).label);
  }
  return binary_prf(g, p, 1);
}

// Replaces both labels with model predictions and marks the records weak.
inline std::vector<Statement> weak_label_corpus(const NaiveBayesModel& negation, const NaiveBayesModel& uncertainty,
                                                std::vector<Statement> statements) {
  if (negation.factor != Factor::kNegation || uncertainty.factor != Factor::kUncertainty) {
    throw ValidationError("weak_label_corpus: models passed for the wrong factors");
  }
  for (auto& s : statements) {
    s.negation = predict(negation, s.tokens).label;
    s.uncertainty = predict(uncertainty, s.tokens).label;
    s.source = corpus::LabelSource::kWeak;
  }
  return statements;
}

// ---------------------------------------------------------------------------
// Serialization: {"factor", "k", "alpha", "features": [...],
//                 "log_prior": [c0, c1], "present_prob": [[p0, p1], ...]}

inline nlohmann::json to_json(const NaiveBayesModel& m) {
  nlohmann::json probs = nlohmann::json::array();
  for (const auto& p : m.present_prob) probs.push_back({p[0], p[1]});
  return {{"format", "negunc-bernoulli-nb/1"},
          {"factor", corpus::to_string(m.factor)},
          {"k", m.features.k()},
          {"alpha", m.alpha},
          {"features", m.features.tokens},
          {"log_prior", {m.log_prior[0], m.log_prior[1]}},
          {"present_prob", probs}};
}

inline NaiveBayesModel model_from_json(const nlohmann::json& j) {
  NaiveBayesModel m;
  try {
    auto f = corpus::parse_factor(j.at("factor").get<std::string>());
    if (!f) throw ValidationError("weak labeler model: unknown factor");
    m.factor = *f;
    m.features.factor = *f;
    m.alpha = j.at("alpha").get<double>();
    m.features.tokens = j.at("features").get<std::vector<std::string>>();
    const auto lp = j.at("log_prior").get<std::vector<double>>();
    if (lp.size() != 2) throw ValidationError("weak labeler model: log_prior needs two entries");
    m.log_prior = {lp[0], lp[1]};
    for (const auto& p : j.at("present_prob")) m.present_prob.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    if (j.at("k").get<std::size_t>() != m.features.tokens.size() || m.present_prob.size() != m.features.tokens.size()) {
      throw ValidationError("weak labeler model: feature table size mismatch");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("weak labeler model: ") + e.what());
  }
  return m;
}

inline void save_model(const NaiveBayesModel& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(m).dump(2) << '\n';
}

inline NaiveBayesModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace negunc::weak

#endif  // NEGUNC_WEAKLABELER_HPP_
