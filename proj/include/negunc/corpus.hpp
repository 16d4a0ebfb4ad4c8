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

// Statement-level corpora: tokenization, preprocessing of cue-annotated
// sentences, vocabulary, the synthetic statement grammar and the JSONL
// dataset format.
//
// JSONL record (one per line, keys in this order):
//   {"id": "...", "tokens": ["..."], "negation": 0|1, "uncertainty": 0|1,
//    "source": "gold"|"weak"|"synthetic"}
//
// A dataset directory holds train.jsonl, dev.jsonl and test.jsonl.

#ifndef NEGUNC_CORPUS_HPP_
#define NEGUNC_CORPUS_HPP_

#include "json.hpp"
#include "negunc/errors.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace negunc::corpus {

enum class LabelSource { kGold, kWeak, kSynthetic };

inline std::string to_string(LabelSource s) {
  switch (s) {
    case LabelSource::kGold: return "gold";
    case LabelSource::kWeak: return "weak";
    case LabelSource::kSynthetic: return "synthetic";
  }
  return "gold";
}

inline std::optional<LabelSource> parse_label_source(const std::string& s) {
  if (s == "gold") return LabelSource::kGold;
  if (s == "weak") return LabelSource::kWeak;
  if (s == "synthetic") return LabelSource::kSynthetic;
  return std::nullopt;
}

enum class Factor { kNegation, kUncertainty };

inline std::string to_string(Factor f) { return f == Factor::kNegation ? "negation" : "uncertainty"; }

inline std::optional<Factor> parse_factor(const std::string& s) {
  if (s == "negation" || s == "n") return Factor::kNegation;
  if (s == "uncertainty" || s == "u") return Factor::kUncertainty;
  return std::nullopt;
}

struct Statement {
  std::string id;
  std::vector<std::string> tokens;
  int negation = 0;
  int uncertainty = 0;
  LabelSource source = LabelSource::kGold;

  int label(Factor f) const { return f == Factor::kNegation ? negation : uncertainty; }
  int& label(Factor f) { return f == Factor::kNegation ? negation : uncertainty; }

  friend bool operator==(const Statement&, const Statement&) = default;
};

enum class SplitName { kTrain, kDev, kTest };

inline std::string to_string(SplitName s) {
  switch (s) {
    case SplitName::kTrain: return "train";
    case SplitName::kDev: return "dev";
    case SplitName::kTest: return "test";
  }
  return "train";
}

inline std::optional<SplitName> parse_split(const std::string& s) {
  if (s == "train") return SplitName::kTrain;
  if (s == "dev") return SplitName::kDev;
  if (s == "test") return SplitName::kTest;
  return std::nullopt;
}

struct DatasetSplit {
  SplitName name = SplitName::kTrain;
  std::vector<Statement> statements;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

struct Dataset {
  DatasetSplit train{SplitName::kTrain, {}};
  DatasetSplit dev{SplitName::kDev, {}};
  DatasetSplit test{SplitName::kTest, {}};

  DatasetSplit& split(SplitName s) { return s == SplitName::kTrain ? train : s == SplitName::kDev ? dev : test; }
  const DatasetSplit& split(SplitName s) const {
    return s == SplitName::kTrain ? train : s == SplitName::kDev ? dev : test;
  }
};

// ---------------------------------------------------------------------------
// Tokenization

namespace detail {

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace detail

// Lowercases, splits on whitespace and detaches English contractions:
// "didn't" -> "did" "n't", "it's" -> "it" "'s".
inline std::vector<std::string> tokenize(const std::string& text) {
  static const std::array<std::string, 7> kSuffixes = {"n't", "'s", "'re", "'ve", "'ll", "'d", "'m"};
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    std::string w;
    w.reserve(word.size());
    for (char ch : word) {
      w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    bool split = false;
    for (const auto& suf : kSuffixes) {
      if (detail::ends_with(w, suf)) {
        out.push_back(w.substr(0, w.size() - suf.size()));
        out.push_back(suf);
        split = true;
        break;
      }
    }
    if (!split) out.push_back(w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Preprocessing of annotated sentences

// Splits a sentence at the given conjunction token positions. Returns the
// maximal conjunction-free segments in order, dropping empty ones.
inline std::vector<std::vector<std::string>> split_multi_statement(const std::vector<std::string>& sentence,
                                                                   const std::vector<std::size_t>& conjunctions) {
  std::vector<char> is_conj(sentence.size(), 0);
  for (std::size_t p : conjunctions) {
    if (p >= sentence.size()) {
      throw ValidationError("split_multi_statement: conjunction position " + std::to_string(p) +
                            " outside sentence of length " + std::to_string(sentence.size()));
    }
    is_conj[p] = 1;
  }
  std::vector<std::vector<std::string>> segments;
  std::vector<std::string> cur;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (is_conj[i]) {
      if (!cur.empty()) segments.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(sentence[i]);
    }
  }
  if (!cur.empty()) segments.push_back(std::move(cur));
  return segments;
}

// A cue annotation over tokens [start, end).
struct CueSpan {
  Factor factor = Factor::kNegation;
  std::size_t start = 0;
  std::size_t end = 0;
};

// Statement-level labels: a factor is 1 iff at least one of its cues occurs.
inline std::pair<int, int> binarize_labels(std::size_t statement_length, const std::vector<CueSpan>& cues) {
  int neg = 0, unc = 0;
  for (const auto& c : cues) {
    if (c.start >= c.end || c.end > statement_length) {
      throw ValidationError("binarize_labels: cue span [" + std::to_string(c.start) + ", " + std::to_string(c.end) +
                            ") outside statement of length " + std::to_string(statement_length));
    }
    (c.factor == Factor::kNegation ? neg : unc) = 1;
  }
  return {neg, unc};
}

inline constexpr std::size_t kDefaultMaxLength = 15;

// Keeps statements with 1 <= T <= max_length, in order. Longer ones are
// dropped, never truncated.
inline std::vector<Statement> filter_by_length(const std::vector<Statement>& statements,
                                               std::size_t max_length = kDefaultMaxLength) {
  std::vector<Statement> out;
  for (const auto& s : statements) {
    if (!s.tokens.empty() && s.tokens.size() <= max_length) out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumReserved = 4;

  Vocabulary() { reset_reserved(); }

  // Reserved tokens plus every token with frequency >= min_frequency,
  // ordered by descending frequency then lexicographically.
  static Vocabulary build(const std::vector<Statement>& statements, int min_frequency = 1) {
    if (min_frequency < 1) throw ValidationError("build_vocabulary: min_frequency must be >= 1");
    std::map<std::string, long long> counts;
    for (const auto& s : statements) {
      for (const auto& t : s.tokens) ++counts[t];
    }
    std::vector<std::pair<std::string, long long>> kept;
    for (const auto& [tok, n] : counts) {
      if (n >= min_frequency && !is_reserved_name(tok)) kept.emplace_back(tok, n);
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (const auto& [tok, n] : kept) v.add(tok);
    return v;
  }

  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    if (tokens.size() < kNumReserved) throw ValidationError("vocabulary: missing reserved tokens");
    for (int i = 0; i < kNumReserved; ++i) {
      if (tokens[i] != v.itos_[i]) throw ValidationError("vocabulary: reserved token mismatch at " + std::to_string(i));
    }
    for (std::size_t i = kNumReserved; i < tokens.size(); ++i) v.add(tokens[i]);
    return v;
  }

  int size() const { return static_cast<int>(itos_.size()); }

  int index(const std::string& token) const {
    auto it = stoi_.find(token);
    return it == stoi_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return stoi_.count(token) != 0; }

  const std::string& token(int index) const { return itos_.at(static_cast<std::size_t>(index)); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(index(t));
    return ids;
  }

  // Drops PAD/BOS and stops at EOS.
  std::vector<std::string> decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    for (int id : ids) {
      if (id == kEos) break;
      if (id == kPad || id == kBos) continue;
      out.push_back(token(id));
    }
    return out;
  }

  const std::vector<std::string>& tokens() const { return itos_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.itos_ == b.itos_; }

 private:
  static bool is_reserved_name(const std::string& t) {
    return t == "<pad>" || t == "<bos>" || t == "<eos>" || t == "<unk>";
  }

  void reset_reserved() {
    itos_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
    stoi_.clear();
    for (int i = 0; i < kNumReserved; ++i) stoi_[itos_[i]] = i;
  }

  void add(const std::string& t) {
    if (stoi_.count(t)) throw ValidationError("vocabulary: duplicate token '" + t + "'");
    stoi_[t] = static_cast<int>(itos_.size());
    itos_.push_back(t);
  }

  std::vector<std::string> itos_;
  std::unordered_map<std::string, int> stoi_;
};

// ---------------------------------------------------------------------------
// Synthetic statement grammar
//
// Templates are whitespace-separated slots:
//   WORD        a lexicon category (uppercase) drawn uniformly
//   WORD?       optional slot, present with probability 1/2
//   NEG / UNC   a negation / uncertainty realization when the statement
//               carries that label, otherwise nothing
//   NEG/WORD    realization when labeled, otherwise a draw from WORD
//   literal     any lowercase token is emitted verbatim
//
// Realizations are short phrases; each must contain at least one cue token,
// and no lexicon entry or literal may be a cue token. This makes every
// label exactly recoverable from cue presence.

struct SyntheticGrammar {
  std::map<std::string, std::vector<std::string>> lexicon;
  std::vector<std::string> negation_cues;
  std::vector<std::string> uncertainty_cues;
  std::vector<std::string> negation_realizations;
  std::vector<std::string> uncertainty_realizations;
  std::vector<std::string> templates;
  double negation_rate = 0.25;
  double uncertainty_rate = 0.25;
  double train_fraction = 0.8;
  double dev_fraction = 0.1;
  std::uint64_t seed = 1;

  static SyntheticGrammar from_json(const nlohmann::json& j) {
    SyntheticGrammar g;
    try {
      g.lexicon = j.at("lexicon").get<std::map<std::string, std::vector<std::string>>>();
      g.negation_cues = j.at("negation_cues").get<std::vector<std::string>>();
      g.uncertainty_cues = j.at("uncertainty_cues").get<std::vector<std::string>>();
      g.negation_realizations = j.value("negation_realizations", g.negation_cues);
      g.uncertainty_realizations = j.value("uncertainty_realizations", g.uncertainty_cues);
      g.templates = j.at("templates").get<std::vector<std::string>>();
      g.negation_rate = j.value("negation_rate", g.negation_rate);
      g.uncertainty_rate = j.value("uncertainty_rate", g.uncertainty_rate);
      g.train_fraction = j.value("train_fraction", g.train_fraction);
      g.dev_fraction = j.value("dev_fraction", g.dev_fraction);
      g.seed = j.value("seed", g.seed);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("grammar config: ") + e.what());
    }
    g.validate();
    return g;
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"lexicon", lexicon},
                          {"negation_cues", negation_cues},
                          {"uncertainty_cues", uncertainty_cues},
                          {"negation_realizations", negation_realizations},
                          {"uncertainty_realizations", uncertainty_realizations},
                          {"templates", templates},
                          {"negation_rate", negation_rate},
                          {"uncertainty_rate", uncertainty_rate},
                          {"train_fraction", train_fraction},
                          {"dev_fraction", dev_fraction},
                          {"seed", seed}};
  }

  static SyntheticGrammar load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open grammar config " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("grammar config " + path.string() + ": " + e.what());
    }
    return from_json(j);
  }

  bool is_negation_cue(const std::string& t) const {
    return std::find(negation_cues.begin(), negation_cues.end(), t) != negation_cues.end();
  }
  bool is_uncertainty_cue(const std::string& t) const {
    return std::find(uncertainty_cues.begin(), uncertainty_cues.end(), t) != uncertainty_cues.end();
  }

  // Labels implied by scanning tokens against the cue sets.
  std::pair<int, int> cue_labels(const std::vector<std::string>& tokens) const {
    int n = 0, u = 0;
    for (const auto& t : tokens) {
      n |= is_negation_cue(t) ? 1 : 0;
      u |= is_uncertainty_cue(t) ? 1 : 0;
    }
    return {n, u};
  }

  void validate() const {
    if (templates.empty()) throw ValidationError("grammar: no templates");
    if (negation_rate < 0 || negation_rate > 1 || uncertainty_rate < 0 || uncertainty_rate > 1) {
      throw ValidationError("grammar: class rates must lie in [0, 1]");
    }
    if (train_fraction <= 0 || dev_fraction < 0 || train_fraction + dev_fraction > 1) {
      throw ValidationError("grammar: split fractions invalid");
    }
    auto is_cue = [&](const std::string& t) { return is_negation_cue(t) || is_uncertainty_cue(t); };
    for (const auto& [cat, words] : lexicon) {
      if (words.empty()) throw ValidationError("grammar: empty lexicon category " + cat);
      for (const auto& w : words) {
        if (is_cue(w)) throw ValidationError("grammar: lexicon entry '" + w + "' is a cue token");
      }
    }
    auto check_realizations = [&](const std::vector<std::string>& rs, bool negation) {
      for (const auto& r : rs) {
        bool has = false;
        for (const auto& t : tokenize(r)) {
          has = has || (negation ? is_negation_cue(t) : is_uncertainty_cue(t));
          if (negation ? is_uncertainty_cue(t) : is_negation_cue(t)) {
            throw ValidationError("grammar: realization '" + r + "' contains a cue of the other factor");
          }
        }
        if (!has) throw ValidationError("grammar: realization '" + r + "' contains no cue token");
      }
    };
    check_realizations(negation_realizations, true);
    check_realizations(uncertainty_realizations, false);
    for (const auto& t : templates) {
      std::istringstream in(t);
      std::string slot;
      while (in >> slot) {
        std::string base = slot;
        if (!base.empty() && base.back() == '?') base.pop_back();
        std::string alt;
        if (auto p = base.find('/'); p != std::string::npos) {
          alt = base.substr(p + 1);
          base = base.substr(0, p);
        }
        if (base == "NEG" || base == "UNC") {
          if (!alt.empty() && !lexicon.count(alt)) throw ValidationError("grammar: unknown category " + alt);
          if (base == "NEG" && negation_realizations.empty() && negation_rate > 0) {
            throw ValidationError("grammar: NEG slot without negation realizations");
          }
          continue;
        }
        if (is_upper(base)) {
          if (!lexicon.count(base)) throw ValidationError("grammar: unknown category " + base);
        } else if (is_cue(base)) {
          throw ValidationError("grammar: literal '" + base + "' is a cue token");
        }
      }
    }
  }

  static bool is_upper(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isupper(static_cast<unsigned char>(c)) || c == '_'; });
  }
};

namespace detail {

template <typename V>
const typename V::value_type& pick(const V& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

inline void append_phrase(std::vector<std::string>& out, const std::string& phrase) {
  for (auto& t : tokenize(phrase)) out.push_back(std::move(t));
}

}  // namespace detail

// One statement from the grammar with the requested labels.
inline std::vector<std::string> realize(const SyntheticGrammar& g, const std::string& tmpl, int neg, int unc,
                                        std::mt19937_64& rng) {
  std::vector<std::string> out;
  std::istringstream in(tmpl);
  std::string slot;
  std::bernoulli_distribution coin(0.5);
  while (in >> slot) {
    bool optional = false;
    if (!slot.empty() && slot.back() == '?') {
      optional = true;
      slot.pop_back();
    }
    if (optional && !coin(rng)) continue;
    std::string alt;
    if (auto p = slot.find('/'); p != std::string::npos) {
      alt = slot.substr(p + 1);
      slot = slot.substr(0, p);
    }
    if (slot == "NEG" || slot == "UNC") {
      const bool on = slot == "NEG" ? neg != 0 : unc != 0;
      const auto& rs = slot == "NEG" ? g.negation_realizations : g.uncertainty_realizations;
      if (on && !rs.empty()) {
        detail::append_phrase(out, detail::pick(rs, rng));
      } else if (!alt.empty()) {
        out.push_back(detail::pick(g.lexicon.at(alt), rng));
      }
    } else if (SyntheticGrammar::is_upper(slot)) {
      out.push_back(detail::pick(g.lexicon.at(slot), rng));
    } else {
      out.push_back(slot);
    }
  }
  return out;
}

// Generates n statements and partitions them into train/dev/test by the
// grammar's split fractions. Labels are drawn independently per factor and
// then re-derived from cue presence, so they always match the tokens.
inline Dataset generate_synthetic_corpus(const SyntheticGrammar& g, std::size_t n) {
  if (n < 1) throw ValidationError("generate_synthetic_corpus: n must be >= 1");
  g.validate();
  std::mt19937_64 rng(g.seed);
  std::bernoulli_distribution neg_coin(g.negation_rate);
  std::bernoulli_distribution unc_coin(g.uncertainty_rate);
  std::vector<Statement> all;
  all.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    int neg = neg_coin(rng) ? 1 : 0;
    int unc = unc_coin(rng) ? 1 : 0;
    if (g.uncertainty_realizations.empty()) unc = 0;
    if (g.negation_realizations.empty()) neg = 0;
    std::vector<std::string> toks;
    // A template without a slot for a requested factor is redrawn.
    for (int attempt = 0; attempt < 64; ++attempt) {
      toks = realize(g, detail::pick(g.templates, rng), neg, unc, rng);
      auto [cn, cu] = g.cue_labels(toks);
      if (cn == neg && cu == unc && !toks.empty()) break;
    }
    auto [cn, cu] = g.cue_labels(toks);
    Statement s;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "syn-%06zu", i);
    s.id = buf;
    s.tokens = std::move(toks);
    s.negation = cn;
    s.uncertainty = cu;
    s.source = LabelSource::kSynthetic;
    all.push_back(std::move(s));
  }
  Dataset d;
  const auto n_train = static_cast<std::size_t>(g.train_fraction * static_cast<double>(n) + 0.5);
  const auto n_dev = std::min(n - n_train, static_cast<std::size_t>(g.dev_fraction * static_cast<double>(n) + 0.5));
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? d.train : i < n_train + n_dev ? d.dev : d.test;
    dst.statements.push_back(std::move(all[i]));
  }
  return d;
}

// ---------------------------------------------------------------------------
// JSONL

inline nlohmann::ordered_json to_json(const Statement& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["tokens"] = s.tokens;
  j["negation"] = s.negation;
  j["uncertainty"] = s.uncertainty;
  j["source"] = to_string(s.source);
  return j;
}

inline Statement statement_from_json(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw SchemaError(line, "record is not an object");
  auto require = [&](const char* key) -> const nlohmann::json& {
    auto it = j.find(key);
    if (it == j.end()) throw SchemaError(line, std::string("missing required field \"") + key + "\"");
    return *it;
  };
  Statement s;
  const auto& id = require("id");
  if (!id.is_string()) throw SchemaError(line, "\"id\" must be a string");
  s.id = id.get<std::string>();
  const auto& toks = require("tokens");
  if (!toks.is_array()) throw SchemaError(line, "\"tokens\" must be an array");
  for (const auto& t : toks) {
    if (!t.is_string()) throw SchemaError(line, "\"tokens\" entries must be strings");
    s.tokens.push_back(t.get<std::string>());
  }
  if (s.tokens.empty()) throw SchemaError(line, "\"tokens\" must be non-empty");
  for (const char* key : {"negation", "uncertainty"}) {
    const auto& v = require(key);
    if (!v.is_number_integer() || (v.get<long long>() != 0 && v.get<long long>() != 1)) {
      throw SchemaError(line, std::string("\"") + key + "\" must be 0 or 1");
    }
    (std::string(key) == "negation" ? s.negation : s.uncertainty) = static_cast<int>(v.get<long long>());
  }
  const auto& src = require("source");
  if (!src.is_string()) throw SchemaError(line, "\"source\" must be a string");
  auto ls = parse_label_source(src.get<std::string>());
  if (!ls) throw SchemaError(line, "\"source\" must be gold, weak or synthetic");
  s.source = *ls;
  return s;
}

inline void write_jsonl(std::ostream& out, const std::vector<Statement>& statements) {
  for (const auto& s : statements) out << to_json(s).dump() << '\n';
}

inline std::vector<Statement> read_jsonl(std::istream& in) {
  std::vector<Statement> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(no, e.what());
    }
    out.push_back(statement_from_json(j, no));
  }
  return out;
}

inline void save_jsonl(const DatasetSplit& split, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_jsonl(out, split.statements);
}

inline DatasetSplit load_jsonl(const std::filesystem::path& path, SplitName name = SplitName::kTrain) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  DatasetSplit s;
  s.name = name;
  try {
    s.statements = read_jsonl(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  } catch (const SchemaError& e) {
    throw SchemaError(e.line(), path.string() + ": " + e.what());
  }
  return s;
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (auto n : {SplitName::kTrain, SplitName::kDev, SplitName::kTest}) {
    save_jsonl(d.split(n), dir / (to_string(n) + ".jsonl"));
  }
}

// Loads train/dev/test. Missing split files are an error unless optional.
inline Dataset load_dataset(const std::filesystem::path& dir, bool require_all = true) {
  Dataset d;
  for (auto n : {SplitName::kTrain, SplitName::kDev, SplitName::kTest}) {
    const auto p = dir / (to_string(n) + ".jsonl");
    if (!std::filesystem::exists(p)) {
      if (require_all) throw ValidationError("missing dataset split " + p.string());
      continue;
    }
    d.split(n) = load_jsonl(p, n);
  }
  std::set<std::string> seen;
  for (auto n : {SplitName::kTrain, SplitName::kDev, SplitName::kTest}) {
    for (const auto& s : d.split(n).statements) {
      if (!seen.insert(s.id).second) throw ValidationError("dataset: id '" + s.id + "' appears in more than one record");
    }
  }
  return d;
}

// FNV-1a over the canonical JSONL serialization of all splits.
inline std::string fingerprint(const Dataset& d) {
  std::uint64_t h = 1469598103934665603ull;
  auto feed = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (auto n : {SplitName::kTrain, SplitName::kDev, SplitName::kTest}) {
    feed(to_string(n));
    std::ostringstream os;
    write_jsonl(os, d.split(n).statements);
    feed(os.str());
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Raw annotated sentences

// One annotated input sentence. Cue spans index into `tokens`; `split` may
// be empty, in which case the sentence is assigned by a hash of its id.
struct RawSentence {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<std::size_t> conjunctions;
  std::vector<CueSpan> cues;
  std::string split;
};

inline RawSentence raw_sentence_from_json(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw SchemaError(line, "record is not an object");
  RawSentence r;
  try {
    if (!j.contains("id")) throw SchemaError(line, "missing required field \"id\"");
    r.id = j.at("id").get<std::string>();
    if (j.contains("tokens")) {
      r.tokens = j.at("tokens").get<std::vector<std::string>>();
      for (auto& t : r.tokens) {
        std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      }
    } else if (j.contains("text")) {
      r.tokens = tokenize(j.at("text").get<std::string>());
    } else {
      throw SchemaError(line, "record needs \"tokens\" or \"text\"");
    }
    r.conjunctions = j.value("conjunctions", std::vector<std::size_t>{});
    for (const auto& c : j.value("cues", nlohmann::json::array())) {
      auto f = parse_factor(c.at("factor").get<std::string>());
      if (!f) throw SchemaError(line, "unknown cue factor");
      r.cues.push_back({*f, c.at("start").get<std::size_t>(), c.at("end").get<std::size_t>()});
    }
    r.split = j.value("split", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(line, e.what());
  }
  if (!r.split.empty() && r.split != "train" && r.split != "dev" && r.split != "test") {
    throw SchemaError(line, "\"split\" must be train, dev or test");
  }
  return r;
}

inline std::vector<RawSentence> read_raw_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<RawSentence> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(no, path.string() + ": " + e.what());
    }
    out.push_back(raw_sentence_from_json(j, no));
  }
  return out;
}

namespace detail {

inline SplitName hashed_split(const std::string& id) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : id) {
    h ^= c;
    h *= 1099511628211ull;
  }
  const auto bucket = h % 10;
  return bucket < 8 ? SplitName::kTrain : bucket < 9 ? SplitName::kDev : SplitName::kTest;
}

}  // namespace detail

// Splits every sentence into statements, derives statement-level labels
// from the cues falling inside each segment and drops statements longer
// than `max_length`. Statement ids are "<sentence id>-<segment index>".
inline Dataset prepare_statements(const std::vector<RawSentence>& raw, std::size_t max_length = kDefaultMaxLength) {
  Dataset d;
  for (const auto& r : raw) {
    binarize_labels(r.tokens.size(), r.cues);  // validates spans
    auto segments = split_multi_statement(r.tokens, r.conjunctions);
    std::vector<char> is_conj(r.tokens.size(), 0);
    for (auto p : r.conjunctions) is_conj[p] = 1;
    // Recover each segment's [begin, end) in sentence coordinates.
    std::vector<std::pair<std::size_t, std::size_t>> bounds;
    for (std::size_t i = 0; i < r.tokens.size();) {
      if (is_conj[i]) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < r.tokens.size() && !is_conj[j]) ++j;
      bounds.emplace_back(i, j);
      i = j;
    }
    const SplitName split = r.split.empty() ? detail::hashed_split(r.id)
                            : r.split == "train" ? SplitName::kTrain
                            : r.split == "dev"   ? SplitName::kDev
                                                 : SplitName::kTest;
    std::vector<Statement> statements;
    for (std::size_t k = 0; k < segments.size(); ++k) {
      const auto [b, e] = bounds[k];
      std::vector<CueSpan> local;
      for (const auto& c : r.cues) {
        if (c.start < e && c.end > b) {
          local.push_back({c.factor, std::max(c.start, b) - b, std::min(c.end, e) - b});
        }
      }
      auto [neg, unc] = binarize_labels(segments[k].size(), local);
      Statement s;
      s.id = r.id + "-" + std::to_string(k);
      s.tokens = std::move(segments[k]);
      s.negation = neg;
      s.uncertainty = unc;
      s.source = LabelSource::kGold;
      statements.push_back(std::move(s));
    }
    for (auto& s : filter_by_length(statements, max_length)) d.split(split).statements.push_back(std::move(s));
  }
  return d;
}

}  // namespace negunc::corpus

#endif  // NEGUNC_CORPUS_HPP_
