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

#include "negunc/corpus.hpp"
#include "negunc/errors.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

namespace {

using namespace negunc::corpus;
using negunc::ParseError;
using negunc::SchemaError;
using negunc::ValidationError;
using Tokens = std::vector<std::string>;

Statement make(const std::string& id, const Tokens& toks, int n = 0, int u = 0) {
  return Statement{id, toks, n, u, LabelSource::kGold};
}

SyntheticGrammar repo_grammar() { return SyntheticGrammar::load(std::string(NEGUNC_SOURCE_DIR) + "/configs/synthetic_grammar.json"); }

TEST(Tokenize, LowercasesAndSplitsContractions) {
  EXPECT_EQ(tokenize("It DIDN'T work, it's Fine"), (Tokens{"it", "did", "n't", "work,", "it", "'s", "fine"}));
  EXPECT_EQ(tokenize("  "), Tokens{});
  EXPECT_EQ(tokenize("n't"), Tokens{"n't"});
}

TEST(SplitMultiStatement, Examples) {
  EXPECT_EQ(split_multi_statement({"a", "b", "and", "c", "d"}, {2}), (std::vector<Tokens>{{"a", "b"}, {"c", "d"}}));
  EXPECT_EQ(split_multi_statement({"a", "b", "c"}, {}), (std::vector<Tokens>{{"a", "b", "c"}}));
  EXPECT_EQ(split_multi_statement({"and", "a", "b"}, {0}), (std::vector<Tokens>{{"a", "b"}}));
  EXPECT_THROW(split_multi_statement({"a"}, {1}), ValidationError);
}

TEST(SplitMultiStatement, RejoiningWithConjunctionsReconstructsInput) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 20;
    Tokens sentence;
    std::vector<std::size_t> conj;
    for (std::size_t i = 0; i < n; ++i) {
      if (rng() % 4 == 0) {
        sentence.push_back("and");
        conj.push_back(i);
      } else {
        sentence.push_back("w" + std::to_string(rng() % 5));
      }
    }
    auto segs = split_multi_statement(sentence, conj);
    for (const auto& s : segs) ASSERT_FALSE(s.empty());
    // Walk the sentence: every non-conjunction run must be the next segment.
    Tokens rebuilt;
    std::size_t k = 0;
    for (std::size_t i = 0; i < n;) {
      if (sentence[i] == "and") {
        rebuilt.push_back("and");
        ++i;
        continue;
      }
      ASSERT_LT(k, segs.size());
      for (const auto& t : segs[k]) rebuilt.push_back(t);
      i += segs[k].size();
      ++k;
    }
    EXPECT_EQ(k, segs.size());
    EXPECT_EQ(rebuilt, sentence);
  }
}

TEST(BinarizeLabels, Examples) {
  EXPECT_EQ(binarize_labels(5, {{Factor::kNegation, 1, 2}}), std::make_pair(1, 0));
  EXPECT_EQ(binarize_labels(5, {}), std::make_pair(0, 0));
  EXPECT_EQ(binarize_labels(5, {{Factor::kUncertainty, 0, 1}, {Factor::kUncertainty, 3, 5}, {Factor::kNegation, 2, 3}}),
            std::make_pair(1, 1));
  EXPECT_THROW(binarize_labels(3, {{Factor::kNegation, 2, 4}}), ValidationError);
}

TEST(FilterByLength, Boundary) {
  Tokens t15(15, "x"), t16(16, "x");
  auto out = filter_by_length({make("a", t16), make("b", t15), make("c", {"y"})});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].id, "b");
  EXPECT_EQ(out[1].id, "c");
  EXPECT_TRUE(filter_by_length({}).empty());
}

TEST(Vocabulary, Examples) {
  auto v = Vocabulary::build({make("1", {"a", "b"}), make("2", {"a", "c"})}, 2);
  EXPECT_EQ(v.tokens(), (Tokens{"<pad>", "<bos>", "<eos>", "<unk>", "a"}));
  auto v2 = Vocabulary::build({make("1", {"a"})}, 1);
  EXPECT_EQ(v2.size(), 5);
  auto v3 = Vocabulary::build({make("1", {"b", "a"}), make("2", {"b", "a"})}, 1);
  EXPECT_EQ(v3.index("a"), 4);
  EXPECT_EQ(v3.index("b"), 5);
  EXPECT_EQ(v3.index("zzz"), Vocabulary::kUnk);
  EXPECT_THROW(Vocabulary::build({}, 0), ValidationError);
}

TEST(Vocabulary, FrequencyOrderBeatsLexicographic) {
  auto v = Vocabulary::build({make("1", {"z", "z", "a"})}, 1);
  EXPECT_EQ(v.index("z"), 4);
  EXPECT_EQ(v.index("a"), 5);
}

TEST(Vocabulary, EncodeDecodeIsIdentityOnRandomInVocabularySequences) {
  std::mt19937_64 rng(23);
  std::vector<Statement> st;
  for (int i = 0; i < 50; ++i) {
    Tokens t;
    for (int j = 0; j < 8; ++j) t.push_back("t" + std::to_string(rng() % 40));
    st.push_back(make(std::to_string(i), t));
  }
  auto v = Vocabulary::build(st, 1);
  for (int i = 0; i < v.size(); ++i) EXPECT_EQ(v.index(v.token(i)), i);
  for (const auto& s : st) EXPECT_EQ(v.decode(v.encode(s.tokens)), s.tokens);
  EXPECT_EQ(Vocabulary::from_tokens(v.tokens()), v);
  EXPECT_THROW(Vocabulary::from_tokens({"a", "b", "c", "d"}), ValidationError);
}

TEST(SyntheticCorpus, DeterministicUnderSeed) {
  auto g = repo_grammar();
  auto a = generate_synthetic_corpus(g, 500);
  auto b = generate_synthetic_corpus(g, 500);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  g.seed = 2;
  EXPECT_NE(generate_synthetic_corpus(g, 500).train, a.train);
}

TEST(SyntheticCorpus, ClassRatesSplitsAndCueConsistency) {
  auto g = repo_grammar();
  auto d = generate_synthetic_corpus(g, 20000);
  EXPECT_EQ(d.train.statements.size(), 16000u);
  EXPECT_EQ(d.dev.statements.size(), 2000u);
  EXPECT_EQ(d.test.statements.size(), 2000u);
  double neg = 0, unc = 0, n = 0;
  std::set<std::string> vocab;
  for (auto sp : {SplitName::kTrain, SplitName::kDev, SplitName::kTest}) {
    for (const auto& s : d.split(sp).statements) {
      auto [cn, cu] = g.cue_labels(s.tokens);
      ASSERT_EQ(cn, s.negation) << s.id;
      ASSERT_EQ(cu, s.uncertainty) << s.id;
      ASSERT_GE(s.tokens.size(), 1u);
      ASSERT_LE(s.tokens.size(), 15u);
      ASSERT_EQ(s.source, LabelSource::kSynthetic);
      neg += s.negation;
      unc += s.uncertainty;
      n += 1;
      vocab.insert(s.tokens.begin(), s.tokens.end());
    }
  }
  EXPECT_GE(neg / n, 0.23);
  EXPECT_LE(neg / n, 0.27);
  EXPECT_GE(unc / n, 0.23);
  EXPECT_LE(unc / n, 0.27);
  EXPECT_GE(vocab.size(), 80u);
  EXPECT_LE(vocab.size(), 110u);
}

TEST(SyntheticCorpus, EmptyUncertaintyCueSetGivesZeroLabels) {
  auto g = repo_grammar();
  g.uncertainty_cues.clear();
  g.uncertainty_realizations.clear();
  auto d = generate_synthetic_corpus(g, 300);
  for (const auto& s : d.train.statements) EXPECT_EQ(s.uncertainty, 0);
}

TEST(SyntheticGrammar, RejectsCueInLexiconAndZeroN) {
  auto j = repo_grammar().to_json();
  j["lexicon"]["ADV"].push_back("never");
  EXPECT_THROW(SyntheticGrammar::from_json(j), ValidationError);
  EXPECT_THROW(generate_synthetic_corpus(repo_grammar(), 0), ValidationError);
}

TEST(Jsonl, RoundTrip) {
  auto d = generate_synthetic_corpus(repo_grammar(), 200);
  d.train.statements[0].source = LabelSource::kWeak;
  d.train.statements[1].source = LabelSource::kGold;
  auto dir = negunc::testing::scratch_dir("jsonl");
  save_jsonl(d.train, dir / "train.jsonl");
  EXPECT_EQ(load_jsonl(dir / "train.jsonl"), d.train);
  save_dataset(d, dir / "ds");
  auto back = load_dataset(dir / "ds");
  EXPECT_EQ(back.dev, d.dev);
  EXPECT_EQ(fingerprint(back), fingerprint(d));
}

TEST(Jsonl, SchemaAndParseErrorsNameTheLine) {
  std::istringstream missing(
      "{\"id\":\"a\",\"tokens\":[\"x\"],\"negation\":0,\"uncertainty\":0,\"source\":\"gold\"}\n"
      "{\"id\":\"b\",\"tokens\":[\"x\"],\"uncertainty\":0,\"source\":\"gold\"}\n");
  try {
    read_jsonl(missing);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("negation"), std::string::npos);
  }
  std::istringstream bad_label("{\"id\":\"a\",\"tokens\":[\"x\"],\"negation\":2,\"uncertainty\":0,\"source\":\"gold\"}\n");
  EXPECT_THROW(read_jsonl(bad_label), SchemaError);
  std::istringstream malformed("\n{\"id\":\"a\",\"tokens\":[\"x\"]\n");
  try {
    read_jsonl(malformed);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Jsonl, DuplicateIdsAcrossSplitsRejected) {
  Dataset d;
  d.train.statements = {make("x", {"a"})};
  d.test.statements = {make("x", {"b"})};
  auto dir = negunc::testing::scratch_dir("dup");
  save_dataset(d, dir);
  EXPECT_THROW(load_dataset(dir), ValidationError);
}

TEST(Fingerprint, ChangesWithContent) {
  Dataset a;
  a.train.statements = {make("x", {"a"})};
  Dataset b = a;
  b.train.statements[0].negation = 1;
  EXPECT_NE(fingerprint(a), fingerprint(b));
  EXPECT_EQ(fingerprint(a).size(), 16u);
}

TEST(PrepareStatements, SplitsLabelsAndFilters) {
  RawSentence r;
  r.id = "s1";
  r.tokens = {"it", "did", "n't", "work", "but", "it", "might", "help"};
  r.conjunctions = {4};
  r.cues = {{Factor::kNegation, 2, 3}, {Factor::kUncertainty, 6, 7}};
  r.split = "dev";
  RawSentence longer;
  longer.id = "s2";
  longer.tokens = Tokens(16, "x");
  longer.split = "train";
  auto d = prepare_statements({r, longer});
  ASSERT_EQ(d.dev.statements.size(), 2u);
  EXPECT_TRUE(d.train.statements.empty());
  EXPECT_EQ(d.dev.statements[0].id, "s1-0");
  EXPECT_EQ(d.dev.statements[0].tokens, (Tokens{"it", "did", "n't", "work"}));
  EXPECT_EQ(d.dev.statements[0].negation, 1);
  EXPECT_EQ(d.dev.statements[0].uncertainty, 0);
  EXPECT_EQ(d.dev.statements[1].negation, 0);
  EXPECT_EQ(d.dev.statements[1].uncertainty, 1);
}

TEST(PrepareStatements, ReadsRawJsonl) {
  auto dir = negunc::testing::scratch_dir("raw");
  std::ofstream(dir / "raw.jsonl") << "{\"id\":\"r\",\"text\":\"I don't know\",\"cues\":[{\"factor\":\"negation\",\"start\":2,\"end\":3}]}\n"
                                   << "{\"tokens\":[\"a\"]}\n";
  EXPECT_THROW(read_raw_jsonl(dir / "raw.jsonl"), SchemaError);
  std::ofstream(dir / "ok.jsonl") << "{\"id\":\"r\",\"text\":\"I don't know\",\"cues\":[{\"factor\":\"negation\",\"start\":2,\"end\":3}]}\n";
  auto raw = read_raw_jsonl(dir / "ok.jsonl");
  ASSERT_EQ(raw.size(), 1u);
  EXPECT_EQ(raw[0].tokens, (Tokens{"i", "do", "n't", "know"}));
  auto d = prepare_statements(raw);
  std::size_t total = d.train.statements.size() + d.dev.statements.size() + d.test.statements.size();
  EXPECT_EQ(total, 1u);
}

}  // namespace
