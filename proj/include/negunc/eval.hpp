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


// Measurement suite over trained models: latent dumps, probes, kNN mutual
// information, MIG, correlation, self-BLEU, perplexity, two-pass
// consistency, controlled transfer, length regression and projections.
//
// Functions that need a model accept anything with
//   posterior(Sequences) -> vae::Posterior
//   generate(Eigen::MatrixXd z, int max_length) -> Sequences
//   dims() -> vae::ModelDims
// so simple doubles can stand in for the VAE.

#ifndef NEGUNC_EVAL_HPP_
#define NEGUNC_EVAL_HPP_

#include "json.hpp"
#include "negunc/corpus.hpp"
#include "negunc/errors.hpp"
#include "negunc/logistic.hpp"
#include "negunc/scores.hpp"
#include "negunc/vae.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace negunc::eval {

using corpus::Factor;
using vae::Sequences;
using vae::Space;

template <typename M>
concept LatentModel = requires(M& m, const Sequences& s, const Eigen::MatrixXd& z) {
  { m.posterior(s) } -> std::convertible_to<vae::Posterior>;
  { m.generate(z, 1) } -> std::convertible_to<Sequences>;
  { m.dims() } -> std::convertible_to<vae::ModelDims>;
};

inline constexpr std::array<Factor, 2> kFactors = {Factor::kNegation, Factor::kUncertainty};

inline std::size_t factor_index(Factor f) { return f == Factor::kNegation ? 0 : 1; }
inline const char* factor_key(Factor f) { return f == Factor::kNegation ? "n" : "u"; }
// The 1-D latent space supervised for a factor.
inline Space target_space(Factor f) { return f == Factor::kNegation ? Space::kNegation : Space::kUncertainty; }

// ---------------------------------------------------------------------------
// Latent dumps

// Posterior parameters of a split plus R reproducible resamples. Sample r
// is mu + sigma * eps_r with eps_r drawn from a generator seeded by
// (seed, r), so resamples are regenerated rather than stored.
struct LatentDump {
  std::vector<std::string> ids;
  std::array<std::vector<int>, 2> labels;  // negation, uncertainty
  std::vector<int> lengths;                // token counts
  vae::ModelDims dims;
  Eigen::MatrixXd mu;
  Eigen::MatrixXd sigma;
  int resamples = 30;
  std::uint64_t seed = 0;

  std::size_t size() const { return ids.size(); }
  const std::vector<int>& factor_labels(Factor f) const { return labels[factor_index(f)]; }

  Eigen::MatrixXd sample(int r) const {
    if (r < 0 || r >= resamples) throw ValidationError("LatentDump: resample index out of range");
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(r + 1)));
    std::normal_distribution<double> n01(0.0, 1.0);
    Eigen::MatrixXd eps(mu.rows(), mu.cols());
    for (Eigen::Index i = 0; i < eps.rows(); ++i) {
      for (Eigen::Index j = 0; j < eps.cols(); ++j) eps(i, j) = n01(rng);
    }
    return mu + sigma.cwiseProduct(eps);
  }

  Eigen::MatrixXd space_mu(Space s) const { return mu.middleCols(dims.latent_offset(s), dims.latent_dim(s)); }
  Eigen::MatrixXd space_sample(int r, Space s) const { return sample(r).middleCols(dims.latent_offset(s), dims.latent_dim(s)); }

  // All resamples of one space stacked: (R * n) x d, resample-major.
  Eigen::MatrixXd pooled(Space s) const {
    const Eigen::Index n = static_cast<Eigen::Index>(size());
    Eigen::MatrixXd out(n * resamples, dims.latent_dim(s));
    for (int r = 0; r < resamples; ++r) out.middleRows(r * n, n) = space_sample(r, s);
    return out;
  }

  std::vector<int> pooled_labels(Factor f) const {
    std::vector<int> out;
    out.reserve(size() * static_cast<std::size_t>(resamples));
    for (int r = 0; r < resamples; ++r) out.insert(out.end(), factor_labels(f).begin(), factor_labels(f).end());
    return out;
  }

  std::vector<int> pooled_lengths() const {
    std::vector<int> out;
    for (int r = 0; r < resamples; ++r) out.insert(out.end(), lengths.begin(), lengths.end());
    return out;
  }
};

inline std::pair<Sequences, std::vector<int>> encode_split(const corpus::Vocabulary& vocab,
                                                           const std::vector<corpus::Statement>& statements) {
  Sequences seqs;
  std::vector<int> lengths;
  for (const auto& s : statements) {
    seqs.push_back(vocab.encode(s.tokens));
    lengths.push_back(static_cast<int>(s.tokens.size()));
  }
  return {seqs, lengths};
}

template <LatentModel M>
LatentDump dump_latents(M& model, const corpus::Vocabulary& vocab, const std::vector<corpus::Statement>& statements,
                        int resamples = 30, std::uint64_t seed = 1) {
  if (resamples < 1) throw ValidationError("dump_latents: R must be >= 1");
  if (statements.empty()) throw ValidationError("dump_latents: split is empty");
  LatentDump d;
  d.dims = model.dims();
  d.resamples = resamples;
  d.seed = seed;
  for (const auto& s : statements) {
    d.ids.push_back(s.id);
    d.labels[0].push_back(s.negation);
    d.labels[1].push_back(s.uncertainty);
  }
  auto [seqs, lengths] = encode_split(vocab, statements);
  d.lengths = std::move(lengths);
  vae::Posterior p = model.posterior(seqs);
  d.mu = std::move(p.mu);
  d.sigma = std::move(p.sigma);
  return d;
}

// CSV: id, labels, then mu and sigma for every latent coordinate.
inline void write_dump_csv(const LatentDump& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "id,negation,uncertainty,length";
  for (Space s : vae::kSpaces) {
    for (int j = 0; j < d.dims.latent_dim(s); ++j) out << ",mu_" << vae::space_key(s) << j;
  }
  for (Space s : vae::kSpaces) {
    for (int j = 0; j < d.dims.latent_dim(s); ++j) out << ",sigma_" << vae::space_key(s) << j;
  }
  out << '\n';
  out.precision(9);
  for (std::size_t i = 0; i < d.size(); ++i) {
    out << d.ids[i] << ',' << d.labels[0][i] << ',' << d.labels[1][i] << ',' << d.lengths[i];
    for (Eigen::Index j = 0; j < d.mu.cols(); ++j) out << ',' << d.mu(static_cast<Eigen::Index>(i), j);
    for (Eigen::Index j = 0; j < d.sigma.cols(); ++j) out << ',' << d.sigma(static_cast<Eigen::Index>(i), j);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Probes

struct FittedProbe {
  Space space = Space::kNegation;
  Factor factor = Factor::kNegation;
  stats::LogisticModel model;
};

inline FittedProbe fit_probe(const LatentDump& train, Space s, Factor f) {
  return {s, f, stats::fit_logistic(train.pooled(s), train.pooled_labels(f))};
}

struct ProbeScores {
  PrfScores mean;
  double f1_sd = 0;
  std::size_t examples = 0;
  int resamples = 0;
};

// Macro P/R/F1 on every test resample, averaged.
inline ProbeScores score_probe(const FittedProbe& probe, const LatentDump& test) {
  const auto& y = test.factor_labels(probe.factor);
  const auto pos = std::count(y.begin(), y.end(), 1);
  if (pos == 0 || pos == static_cast<long>(y.size())) {
    throw ValidationError(std::string("probe: test labels for factor ") + factor_key(probe.factor) + " contain a single class");
  }
  ProbeScores out;
  out.examples = test.size();
  out.resamples = test.resamples;
  std::vector<double> f1s;
  for (int r = 0; r < test.resamples; ++r) {
    const PrfScores s = macro_prf(y, probe.model.predict(test.space_sample(r, probe.space)));
    out.mean.precision += s.precision;
    out.mean.recall += s.recall;
    out.mean.f1 += s.f1;
    f1s.push_back(s.f1);
  }
  const double R = static_cast<double>(test.resamples);
  out.mean.precision /= R;
  out.mean.recall /= R;
  out.mean.f1 /= R;
  double var = 0;
  for (double f : f1s) var += (f - out.mean.f1) * (f - out.mean.f1);
  out.f1_sd = test.resamples > 1 ? std::sqrt(var / (R - 1)) : 0.0;
  return out;
}

inline ProbeScores probe_informativeness(const LatentDump& train, const LatentDump& test, Space s, Factor f) {
  return score_probe(fit_probe(train, s, f), test);
}

// ---------------------------------------------------------------------------
// Mutual information

namespace detail {

// Digamma at positive integers: -gamma + H_{n-1}.
inline double digamma_int(long n) {
  if (n < 1) throw std::domain_error("digamma_int: argument must be >= 1");
  constexpr double kEulerGamma = 0.57721566490153286061;
  static thread_local std::vector<double> harmonic = {0.0};
  while (static_cast<long>(harmonic.size()) < n) {
    harmonic.push_back(harmonic.back() + 1.0 / static_cast<double>(harmonic.size()));
  }
  return -kEulerGamma + harmonic[static_cast<std::size_t>(n - 1)];
}

// Distance from sorted[pos] to its k-th nearest other element.
inline double kth_neighbor_distance(const std::vector<double>& sorted, std::size_t pos, int k) {
  std::size_t left = pos, right = pos;
  double d = 0;
  for (int step = 0; step < k; ++step) {
    const bool has_left = left > 0, has_right = right + 1 < sorted.size();
    const double dl = has_left ? sorted[pos] - sorted[left - 1] : std::numeric_limits<double>::infinity();
    const double dr = has_right ? sorted[right + 1] - sorted[pos] : std::numeric_limits<double>::infinity();
    if (dl <= dr) {
      d = dl;
      --left;
    } else {
      d = dr;
      ++right;
    }
  }
  return d;
}

}  // namespace detail

// kNN estimate of I(z; y) in nats for scalar z and binary y: within-class
// k-th neighbor radius, neighbor counts in the pooled sample, digamma
// correction. Clamped at 0.
inline double mi_continuous_discrete(const Eigen::VectorXd& z, const std::vector<int>& labels, int k_neighbors = 3) {
  const std::size_t n = labels.size();
  if (static_cast<std::size_t>(z.size()) != n) throw ValidationError("mutual information: sample/label count mismatch");
  if (n < 50) throw ValidationError("mutual information: need at least 50 samples");
  if (k_neighbors < 1) throw ValidationError("mutual information: k_neighbors must be >= 1");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < 2) throw ValidationError("mutual information: both classes must be present");
  if (z.maxCoeff() == z.minCoeff()) return 0.0;

  std::vector<double> radius(n, 0.0), k_used(n, 0.0), class_count(n, 0.0);
  std::vector<char> usable(n, 0);
  for (const auto& [label, idx] : by_class) {
    const std::size_t count = idx.size();
    if (count < 2) continue;
    const int k = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(k_neighbors), count - 1));
    std::vector<std::pair<double, std::size_t>> vals;
    vals.reserve(count);
    for (std::size_t i : idx) vals.emplace_back(z(static_cast<Eigen::Index>(i)), i);
    std::sort(vals.begin(), vals.end());
    std::vector<double> sorted(count);
    for (std::size_t p = 0; p < count; ++p) sorted[p] = vals[p].first;
    for (std::size_t p = 0; p < count; ++p) {
      const std::size_t i = vals[p].second;
      radius[i] = std::nextafter(detail::kth_neighbor_distance(sorted, p, k), 0.0);
      k_used[i] = k;
      class_count[i] = static_cast<double>(count);
      usable[i] = 1;
    }
  }
  std::vector<double> all;
  for (std::size_t i = 0; i < n; ++i) {
    if (usable[i]) all.push_back(z(static_cast<Eigen::Index>(i)));
  }
  std::sort(all.begin(), all.end());
  const long m = static_cast<long>(all.size());
  double sum_k = 0, sum_class = 0, sum_m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!usable[i]) continue;
    const double x = z(static_cast<Eigen::Index>(i));
    // Compare distances rather than shifted endpoints: x - r can round onto
    // the excluded neighbor.
    const double r = radius[i];
    const auto lo = std::partition_point(all.begin(), all.end(), [&](double a) { return a < x && x - a > r; });
    const auto hi = std::partition_point(all.begin(), all.end(), [&](double a) { return a <= x || a - x <= r; });
    sum_k += detail::digamma_int(static_cast<long>(k_used[i]));
    sum_class += detail::digamma_int(static_cast<long>(class_count[i]));
    sum_m += detail::digamma_int(std::max<long>(1, hi - lo));
  }
  const double cnt = static_cast<double>(m);
  const double mi = detail::digamma_int(m) + sum_k / cnt - sum_class / cnt - sum_m / cnt;
  return std::max(0.0, mi);
}

// Mean over resamples of the MI between every latent coordinate and a
// factor; one entry per coordinate of the full latent vector.
inline std::vector<double> mi_per_dimension(const LatentDump& d, Factor f, int k_neighbors = 3) {
  std::vector<double> mi(static_cast<std::size_t>(d.mu.cols()), 0.0);
  for (int r = 0; r < d.resamples; ++r) {
    const Eigen::MatrixXd z = d.sample(r);
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      mi[static_cast<std::size_t>(j)] += mi_continuous_discrete(z.col(j), d.factor_labels(f), k_neighbors);
    }
  }
  for (double& v : mi) v /= d.resamples;
  return mi;
}

// -sum_c p_c ln p_c over the label values present.
inline double label_entropy(const std::vector<int>& labels) {
  if (labels.empty()) throw ValidationError("label_entropy: no labels");
  std::map<int, std::size_t> counts;
  for (int y : labels) ++counts[y];
  double h = 0;
  for (const auto& [y, c] : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(labels.size());
    h -= p * std::log(p);
  }
  return h;
}

// Gap between the two largest MIs, normalized by the label entropy.
inline double mig(const std::vector<double>& mi, double entropy) {
  if (!(entropy > 0)) throw ValidationError("mig: label entropy must be positive");
  if (mi.size() < 2) throw ValidationError("mig: need at least two latent variables");
  std::vector<double> top(mi);
  std::partial_sort(top.begin(), top.begin() + 2, top.end(), std::greater<>());
  return std::clamp((top[0] - top[1]) / entropy, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Correlation

// Pearson correlation; nullopt when either series has zero variance.
inline std::optional<double> pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw ValidationError("pearson: series lengths differ");
  if (a.size() < 2) throw ValidationError("pearson: need at least two points");
  const Eigen::ArrayXd da = a.array() - a.mean(), db = b.array() - b.mean();
  const double va = da.square().sum(), vb = db.square().sum();
  if (va <= 0 || vb <= 0) return std::nullopt;
  return std::clamp((da * db).sum() / std::sqrt(va * vb), -1.0, 1.0);
}

struct CorrelationReport {
  std::optional<double> n_u;
  // Per-coordinate correlation of the content space with z_n and z_u.
  std::array<double, 2> content_mean = {0, 0};
  std::array<double, 2> content_sd = {0, 0};
  std::array<double, 2> content_mean_abs = {0, 0};
  std::array<std::size_t, 2> content_defined = {0, 0};
  std::vector<std::string> warnings;
};

// Correlations over the pooled resamples.
inline CorrelationReport pearson_invariance(const LatentDump& d) {
  if (d.size() * static_cast<std::size_t>(d.resamples) < 2) throw ValidationError("pearson_invariance: need at least two samples");
  const Eigen::MatrixXd zn = d.pooled(Space::kNegation), zu = d.pooled(Space::kUncertainty), zc = d.pooled(Space::kContent);
  CorrelationReport rep;
  rep.n_u = pearson(zn.col(0), zu.col(0));
  if (!rep.n_u) rep.warnings.push_back("rho(n,u) undefined: zero-variance latent");
  for (int k = 0; k < 2; ++k) {
    const Eigen::VectorXd ref = (k == 0 ? zn : zu).col(0);
    std::vector<double> rhos;
    for (Eigen::Index j = 0; j < zc.cols(); ++j) {
      if (auto r = pearson(zc.col(j), ref)) {
        rhos.push_back(*r);
      } else {
        rep.warnings.push_back("rho(c" + std::to_string(j) + "," + (k == 0 ? "n" : "u") + ") undefined: zero-variance latent");
      }
    }
    const auto ki = static_cast<std::size_t>(k);
    rep.content_defined[ki] = rhos.size();
    if (rhos.empty()) continue;
    const double mean = std::accumulate(rhos.begin(), rhos.end(), 0.0) / static_cast<double>(rhos.size());
    double var = 0, abs_sum = 0;
    for (double r : rhos) {
      var += (r - mean) * (r - mean);
      abs_sum += std::abs(r);
    }
    rep.content_mean[ki] = mean;
    rep.content_sd[ki] = rhos.size() > 1 ? std::sqrt(var / static_cast<double>(rhos.size() - 1)) : 0.0;
    rep.content_mean_abs[ki] = abs_sum / static_cast<double>(rhos.size());
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Generation quality

// Corpus BLEU-4 of hypotheses against single references, uniform weights,
// brevity penalty; a zero n-gram match count becomes (0 + 1) / (total + 1).
inline double self_bleu(const std::vector<std::vector<std::string>>& references,
                        const std::vector<std::vector<std::string>>& hypotheses) {
  if (references.size() != hypotheses.size()) throw ValidationError("self_bleu: corpora are not aligned");
  if (references.empty()) throw ValidationError("self_bleu: empty corpus");
  std::array<double, 4> match = {0, 0, 0, 0}, total = {0, 0, 0, 0};
  double ref_len = 0, hyp_len = 0;
  for (std::size_t s = 0; s < references.size(); ++s) {
    const auto& ref = references[s];
    const auto& hyp = hypotheses[s];
    ref_len += static_cast<double>(ref.size());
    hyp_len += static_cast<double>(hyp.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<std::vector<std::string>, int> ref_counts, hyp_counts;
      for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[{ref.begin() + static_cast<long>(i), ref.begin() + static_cast<long>(i + n)}];
      for (std::size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[{hyp.begin() + static_cast<long>(i), hyp.begin() + static_cast<long>(i + n)}];
      for (const auto& [gram, c] : hyp_counts) {
        const auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) match[n - 1] += std::min(c, it->second);
        total[n - 1] += c;
      }
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_p = 0;
  for (std::size_t n = 0; n < 4; ++n) {
    const double p = match[n] > 0 ? match[n] / total[n] : 1.0 / (total[n] + 1.0);
    log_p += 0.25 * std::log(p);
  }
  const double bp = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  return bp * std::exp(log_p);
}

struct LmScore {
  double nll = 0;  // total negative log-likelihood, nats
  std::size_t tokens = 0;
};

// A language model that scores token sequences.
class LmScorer {
 public:
  virtual ~LmScorer() = default;
  virtual LmScore score(const std::vector<std::string>& tokens) const = 0;
  virtual std::string name() const = 0;
};

inline double perplexity(const std::vector<std::vector<std::string>>& texts, const LmScorer& scorer) {
  double nll = 0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    LmScore s;
    try {
      s = scorer.score(texts[i]);
    } catch (const std::exception& e) {
      throw std::runtime_error("perplexity: scorer '" + scorer.name() + "' failed on text " + std::to_string(i) + ": " + e.what());
    }
    nll += s.nll;
    tokens += s.tokens;
  }
  if (tokens == 0) throw ValidationError("perplexity: nothing to score");
  return std::exp(nll / static_cast<double>(tokens));
}

// Interpolated Kneser-Ney trigram model with a fixed discount. Every
// sentence is scored with its end marker; unseen words fall through to a
// uniform floor over the training vocabulary plus one unknown slot.
class KneserNeyScorer : public LmScorer {
 public:
  explicit KneserNeyScorer(const std::vector<std::vector<std::string>>& corpus, double discount = 0.75) : d_(discount) {
    if (!(discount > 0 && discount < 1)) throw ValidationError("Kneser-Ney: discount must lie in (0, 1)");
    if (corpus.empty()) throw ValidationError("Kneser-Ney: empty training corpus");
    std::map<std::pair<int, int>, std::map<int, int>> tri;
    for (const auto& sent : corpus) {
      const auto ids = ids_for(sent, true);
      for (std::size_t i = 2; i < ids.size(); ++i) ++tri[{ids[i - 2], ids[i - 1]}][ids[i]];
    }
    std::map<std::pair<int, int>, std::set<int>> left_contexts;
    for (const auto& [ctx, nexts] : tri) {
      auto& node = trigram_[ctx];
      for (const auto& [w, c] : nexts) {
        node.total += c;
        ++node.types;
        node.counts[w] = c;
        left_contexts[{ctx.second, w}].insert(ctx.first);
      }
    }
    std::map<int, std::set<int>> unigram_left;
    for (const auto& [vw, lefts] : left_contexts) {
      auto& node = bigram_[vw.first];
      const int c = static_cast<int>(lefts.size());
      node.total += c;
      ++node.types;
      node.counts[vw.second] = c;
      unigram_left[vw.second].insert(vw.first);
    }
    for (const auto& [w, lefts] : unigram_left) {
      unigram_[w] = static_cast<int>(lefts.size());
      unigram_total_ += static_cast<int>(lefts.size());
    }
  }

  LmScore score(const std::vector<std::string>& tokens) const override {
    const auto ids = ids_for(tokens, false);
    LmScore s;
    for (std::size_t i = 2; i < ids.size(); ++i) {
      s.nll -= std::log(prob(ids[i - 2], ids[i - 1], ids[i]));
      ++s.tokens;
    }
    return s;
  }

  std::string name() const override { return "kneser-ney-trigram"; }

  double prob(int u, int v, int w) const {
    double p = p_unigram(w);
    if (auto it = bigram_.find(v); it != bigram_.end()) p = interpolate(it->second, w, p);
    if (auto it = trigram_.find({u, v}); it != trigram_.end()) p = interpolate(it->second, w, p);
    return p;
  }

  std::size_t vocabulary_size() const { return index_.size() + 1; }

 private:
  struct Node {
    std::unordered_map<int, int> counts;
    int total = 0;
    int types = 0;
  };

  static constexpr int kUnknown = -1;

  std::vector<int> ids_for(const std::vector<std::string>& tokens, bool grow) const {
    auto& self = const_cast<KneserNeyScorer&>(*this);
    std::vector<int> ids = {id_of("<s>", grow, self), id_of("<s>", grow, self)};
    for (const auto& t : tokens) ids.push_back(id_of(t, grow, self));
    ids.push_back(id_of("</s>", grow, self));
    return ids;
  }

  int id_of(const std::string& t, bool grow, KneserNeyScorer& self) const {
    if (auto it = index_.find(t); it != index_.end()) return it->second;
    if (!grow) return kUnknown;
    const int id = static_cast<int>(index_.size());
    self.index_[t] = id;
    return id;
  }

  double interpolate(const Node& node, int w, double lower) const {
    const auto it = node.counts.find(w);
    const double c = it == node.counts.end() ? 0.0 : static_cast<double>(it->second);
    return (std::max(c - d_, 0.0) + d_ * node.types * lower) / node.total;
  }

  double p_unigram(int w) const {
    const double uniform = 1.0 / static_cast<double>(vocabulary_size());
    const auto it = unigram_.find(w);
    const double c = it == unigram_.end() ? 0.0 : static_cast<double>(it->second);
    return (std::max(c - d_, 0.0) + d_ * static_cast<double>(unigram_.size()) * uniform) / unigram_total_;
  }

  double d_;
  std::unordered_map<std::string, int> index_;
  std::map<std::pair<int, int>, Node> trigram_;
  std::unordered_map<int, Node> bigram_;
  std::unordered_map<int, int> unigram_;
  int unigram_total_ = 0;
};

// ---------------------------------------------------------------------------
// Two-pass consistency and transfer

struct ConsistencyReport {
  std::array<PrfScores, 2> pass1;  // negation, uncertainty
  std::array<PrfScores, 2> pass2;
  std::size_t examples = 0;
  std::uint64_t seed = 0;
};

inline Eigen::MatrixXd sample_posterior(const vae::Posterior& p, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::MatrixXd z = p.mu;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) += p.sigma(i, j) * n01(rng);
  }
  return z;
}

inline std::vector<int> probe_predict(const FittedProbe& probe, const vae::ModelDims& dims, const Eigen::MatrixXd& z) {
  return probe.model.predict(z.middleCols(dims.latent_offset(probe.space), dims.latent_dim(probe.space)));
}

// Pass 1 probes the posterior means of the inputs. Pass 2 greedily decodes
// one posterior sample per input, re-encodes the output and probes its
// posterior means. Both are scored against the original gold labels.
template <LatentModel M>
ConsistencyReport consistency_two_pass(M& model, const Sequences& seqs, const std::array<std::vector<int>, 2>& gold,
                                       const std::array<FittedProbe, 2>& probes, int max_length, std::uint64_t seed) {
  if (seqs.empty()) throw ValidationError("consistency: no statements");
  const vae::ModelDims dims = model.dims();
  std::mt19937_64 rng(seed);
  const vae::Posterior p1 = model.posterior(seqs);
  const Sequences recon = model.generate(sample_posterior(p1, rng), max_length);
  const vae::Posterior p2 = model.posterior(recon);
  ConsistencyReport rep;
  rep.examples = seqs.size();
  rep.seed = seed;
  for (std::size_t k = 0; k < 2; ++k) {
    rep.pass1[k] = macro_prf(gold[k], probe_predict(probes[k], dims, p1.mu));
    rep.pass2[k] = macro_prf(gold[k], probe_predict(probes[k], dims, p2.mu));
  }
  return rep;
}

// Mean posterior mean of each 1-D target space per class, on train data.
struct ClassCentroids {
  // [factor][class] -> centroid of that factor's target space.
  std::array<std::array<Eigen::VectorXd, 2>, 2> value;

  const Eigen::VectorXd& at(Factor f, int cls) const { return value[factor_index(f)][static_cast<std::size_t>(cls)]; }
};

inline ClassCentroids class_centroids(const LatentDump& train) {
  ClassCentroids c;
  for (Factor f : kFactors) {
    const Eigen::MatrixXd z = train.space_mu(target_space(f));
    const auto& y = train.factor_labels(f);
    for (int cls = 0; cls < 2; ++cls) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(z.cols());
      double n = 0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] != cls) continue;
        sum += z.row(static_cast<Eigen::Index>(i)).transpose();
        n += 1;
      }
      if (n == 0) throw ValidationError("class_centroids: factor " + std::string(factor_key(f)) + " has no class " + std::to_string(cls));
      c.value[factor_index(f)][static_cast<std::size_t>(cls)] = sum / n;
    }
  }
  return c;
}

// Removal turns a present factor off (1 -> 0); addition turns it on.
enum class Direction { kRemove, kAdd };

inline int source_class(Direction d) { return d == Direction::kRemove ? 1 : 0; }
inline const char* direction_key(Direction d) { return d == Direction::kRemove ? "remove" : "add"; }

struct TransferOutcome {
  std::vector<int> tokens;
  bool success = false;
};

struct TransferReport {
  std::size_t attempted = 0;
  std::size_t succeeded = 0;
  std::size_t skipped = 0;  // gold label did not match the direction's source class
  double accuracy() const { return attempted ? static_cast<double>(succeeded) / static_cast<double>(attempted) : 0.0; }
};

// Overrides the factor's latent with the opposite-class centroid, keeps
// the other posterior means, decodes greedily and checks the re-encoded
// probe prediction. Statements whose gold label is not the source class
// are skipped.
template <LatentModel M>
std::pair<TransferReport, std::vector<std::optional<TransferOutcome>>> controlled_transfer(
    M& model, const ClassCentroids& centroids, const FittedProbe& probe, const Sequences& seqs,
    const std::vector<int>& gold, Factor factor, Direction direction, int max_length) {
  if (gold.size() != seqs.size()) throw ValidationError("transfer: label count mismatch");
  if (probe.factor != factor || probe.space != target_space(factor)) throw ValidationError("transfer: probe does not match the factor");
  const vae::ModelDims dims = model.dims();
  const int src = source_class(direction), dst = 1 - src;
  TransferReport rep;
  std::vector<std::optional<TransferOutcome>> outcomes(seqs.size());
  Sequences chosen;
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    if (gold[i] != src) {
      ++rep.skipped;
      continue;
    }
    chosen.push_back(seqs[i]);
    where.push_back(i);
  }
  if (chosen.empty()) return {rep, outcomes};
  Eigen::MatrixXd z = model.posterior(chosen).mu;
  const Space s = target_space(factor);
  const Eigen::RowVectorXd target = centroids.at(factor, dst).transpose();
  for (Eigen::Index i = 0; i < z.rows(); ++i) z.block(i, dims.latent_offset(s), 1, dims.latent_dim(s)) = target;
  const Sequences out = model.generate(z, max_length);
  const auto pred = probe_predict(probe, dims, model.posterior(out).mu);
  for (std::size_t j = 0; j < out.size(); ++j) {
    const bool ok = pred[j] == dst;
    outcomes[where[j]] = TransferOutcome{out[j], ok};
    ++rep.attempted;
    rep.succeeded += ok;
  }
  return {rep, outcomes};
}

// ---------------------------------------------------------------------------
// Length regression and projections

// R^2 of an OLS fit (with intercept) of y on the columns of x; the
// least-norm solution is used when the design is rank deficient.
inline double ols_r2(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw ValidationError("length regression: row count mismatch");
  if (x.rows() < x.cols() + 2) throw ValidationError("length regression: need at least dims + 2 samples");
  Eigen::MatrixXd design(x.rows(), x.cols() + 1);
  design << x, Eigen::VectorXd::Ones(x.rows());
  const Eigen::VectorXd beta = design.completeOrthogonalDecomposition().solve(y);
  const double ss_res = (y - design * beta).squaredNorm();
  const double ss_tot = (y.array() - y.mean()).square().sum();
  if (ss_tot <= 0) return ss_res <= 0 ? 1.0 : -std::numeric_limits<double>::infinity();
  return 1.0 - ss_res / ss_tot;
}

// Token count regressed on each space's pooled resamples.
inline std::array<double, 3> length_regression(const LatentDump& d) {
  const auto len = d.pooled_lengths();
  Eigen::VectorXd y(static_cast<Eigen::Index>(len.size()));
  for (std::size_t i = 0; i < len.size(); ++i) y(static_cast<Eigen::Index>(i)) = len[i];
  std::array<double, 3> r2{};
  for (Space s : vae::kSpaces) r2[vae::index_of(s)] = ols_r2(d.pooled(s), y);
  return r2;
}

// First two principal components of the rows of x (centered). The sign
// of each axis is fixed so its largest-magnitude loading is positive.
inline Eigen::MatrixXd pca_2d(const Eigen::MatrixXd& x) {
  if (x.rows() == 0) throw ValidationError("projection: empty input");
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  if (x.cols() == 1) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), 2);
    out.col(0) = centered.col(0);
    return out;
  }
  const Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(x.rows() - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  Eigen::MatrixXd axes(x.cols(), 2);
  for (int a = 0; a < 2; ++a) {
    Eigen::VectorXd v = eig.eigenvectors().col(x.cols() - 1 - a);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    axes.col(a) = v;
  }
  return centered * axes;
}

struct Histogram {
  double lo = 0, hi = 0;
  std::vector<std::size_t> counts;
};

inline Histogram histogram(const std::vector<double>& values, double lo, double hi, int bins) {
  if (bins < 1) throw ValidationError("histogram: bins must be >= 1");
  Histogram h{lo, hi, std::vector<std::size_t>(static_cast<std::size_t>(bins), 0)};
  const double width = hi > lo ? (hi - lo) / bins : 1.0;
  for (double v : values) {
    auto b = static_cast<long>(std::floor((v - lo) / width));
    b = std::clamp<long>(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

// Writes latents_1d.csv (posterior means of the 1-D spaces with labels),
// histograms.csv (per space and class, 30 shared bins) and
// projection_c.csv (2-D PCA of the content means).
inline void export_projection(const LatentDump& d, const std::filesystem::path& dir, int bins = 30) {
  if (d.size() == 0) throw ValidationError("projection: empty dump");
  std::filesystem::create_directories(dir);
  const Eigen::MatrixXd zn = d.space_mu(Space::kNegation), zu = d.space_mu(Space::kUncertainty);
  {
    std::ofstream out(dir / "latents_1d.csv");
    out.precision(9);
    out << "id,negation,uncertainty,z_n,z_u\n";
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      out << d.ids[i] << ',' << d.labels[0][i] << ',' << d.labels[1][i] << ',' << zn(r, 0) << ',' << zu(r, 0) << '\n';
    }
  }
  {
    std::ofstream out(dir / "histograms.csv");
    out.precision(9);
    out << "space,factor,class,bin,lo,hi,count\n";
    for (Factor f : kFactors) {
      const Eigen::MatrixXd z = d.space_mu(target_space(f));
      const double lo = z.col(0).minCoeff(), hi = z.col(0).maxCoeff();
      for (int cls = 0; cls < 2; ++cls) {
        std::vector<double> vals;
        for (std::size_t i = 0; i < d.size(); ++i) {
          if (d.factor_labels(f)[i] == cls) vals.push_back(z(static_cast<Eigen::Index>(i), 0));
        }
        const Histogram h = histogram(vals, lo, hi, bins);
        const double width = hi > lo ? (hi - lo) / bins : 1.0;
        for (int b = 0; b < bins; ++b) {
          out << vae::space_key(target_space(f)) << ',' << factor_key(f) << ',' << cls << ',' << b << ',' << lo + b * width << ','
              << lo + (b + 1) * width << ',' << h.counts[static_cast<std::size_t>(b)] << '\n';
        }
      }
    }
  }
  {
    const Eigen::MatrixXd p = pca_2d(d.space_mu(Space::kContent));
    std::ofstream out(dir / "projection_c.csv");
    out.precision(9);
    out << "id,negation,uncertainty,pc1,pc2\n";
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      out << d.ids[i] << ',' << d.labels[0][i] << ',' << d.labels[1][i] << ',' << p(r, 0) << ',' << p(r, 1) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Full evaluation

struct EvalOptions {
  int resamples = 30;
  std::uint64_t seed = 1;
  int k_neighbors = 3;
  std::size_t max_train_examples = 5000;  // train statements used to fit probes
  int max_length = 20;                    // greedy decoding limit
  bool generation = true;                 // BLEU, perplexity, consistency, transfer
};

struct EvalReport {
  nlohmann::ordered_json informativeness;
  nlohmann::ordered_json mig;
  nlohmann::ordered_json correlation;
  nlohmann::ordered_json length;
  nlohmann::ordered_json generation;
  nlohmann::ordered_json consistency;
  nlohmann::ordered_json transfer;

  std::vector<std::pair<std::string, const nlohmann::ordered_json*>> sections() const {
    return {{"informativeness", &informativeness}, {"mig", &mig},                 {"correlation", &correlation},
            {"length", &length},                   {"generation", &generation},   {"consistency", &consistency},
            {"transfer", &transfer}};
  }
};

inline nlohmann::ordered_json prf_json(const PrfScores& s) {
  return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
}

inline std::vector<std::vector<std::string>> detokenize(const corpus::Vocabulary& vocab, const Sequences& seqs) {
  std::vector<std::vector<std::string>> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(vocab.decode(s));
  return out;
}

template <LatentModel M>
EvalReport evaluate(M& model, const corpus::Vocabulary& vocab, const corpus::Dataset& data, const EvalOptions& opt,
                    const LmScorer* scorer = nullptr) {
  if (data.train.statements.empty() || data.test.statements.empty()) throw ValidationError("evaluate: train and test splits are required");
  std::vector<corpus::Statement> train_subset(
      data.train.statements.begin(),
      data.train.statements.begin() + static_cast<long>(std::min(opt.max_train_examples, data.train.statements.size())));
  const LatentDump train = dump_latents(model, vocab, train_subset, opt.resamples, opt.seed);
  const LatentDump test = dump_latents(model, vocab, data.test.statements, opt.resamples, opt.seed + 1);
  const vae::ModelDims dims = model.dims();
  EvalReport rep;

  // Probes and MI for every (latent space, factor).
  std::array<std::vector<double>, 2> mi_dims;
  for (Factor f : kFactors) mi_dims[factor_index(f)] = mi_per_dimension(test, f, opt.k_neighbors);
  std::array<FittedProbe, 2> target_probes;
  for (Space s : vae::kSpaces) {
    nlohmann::ordered_json by_factor;
    for (Factor f : kFactors) {
      const FittedProbe probe = fit_probe(train, s, f);
      if (s == target_space(f)) target_probes[factor_index(f)] = probe;
      const ProbeScores ps = score_probe(probe, test);
      const auto& mi = mi_dims[factor_index(f)];
      const auto begin = mi.begin() + dims.latent_offset(s);
      const double mi_max = *std::max_element(begin, begin + dims.latent_dim(s));
      nlohmann::ordered_json cell = prf_json(ps.mean);
      cell["f1_sd"] = ps.f1_sd;
      cell["mi"] = mi_max;
      by_factor[factor_key(f)] = cell;
    }
    rep.informativeness[vae::space_key(s)] = by_factor;
  }
  rep.informativeness["train_examples"] = train.size();
  rep.informativeness["test_examples"] = test.size();
  rep.informativeness["resamples"] = opt.resamples;

  for (Factor f : kFactors) {
    const double h = label_entropy(test.factor_labels(f));
    const auto& mi = mi_dims[factor_index(f)];
    rep.mig[factor_key(f)] = {{"mig", mig(mi, h)}, {"label_entropy", h}, {"mi_per_dimension", mi}};
  }
  rep.mig["k_neighbors"] = opt.k_neighbors;

  const CorrelationReport cr = pearson_invariance(test);
  rep.correlation["n_u"] = cr.n_u ? nlohmann::ordered_json(*cr.n_u) : nlohmann::ordered_json(nullptr);
  for (int k = 0; k < 2; ++k) {
    rep.correlation[k == 0 ? "c_n" : "c_u"] = {{"mean", cr.content_mean[static_cast<std::size_t>(k)]},
                                              {"sd", cr.content_sd[static_cast<std::size_t>(k)]},
                                              {"mean_abs", cr.content_mean_abs[static_cast<std::size_t>(k)]},
                                              {"dimensions", cr.content_defined[static_cast<std::size_t>(k)]}};
  }
  rep.correlation["warnings"] = cr.warnings;

  const auto r2 = length_regression(test);
  for (Space s : vae::kSpaces) rep.length[vae::space_key(s)] = {{"r2", r2[vae::index_of(s)]}};

  if (opt.generation) {
    auto [seqs, lengths] = encode_split(vocab, data.test.statements);
    const Sequences recon = model.generate(test.mu, opt.max_length);
    const auto refs = detokenize(vocab, seqs);
    const auto hyps = detokenize(vocab, recon);
    rep.generation["self_bleu"] = self_bleu(refs, hyps);
    std::unique_ptr<KneserNeyScorer> fallback;
    if (scorer == nullptr) {
      std::vector<std::vector<std::string>> lm_train;
      for (const auto& s : data.train.statements) lm_train.push_back(s.tokens);
      fallback = std::make_unique<KneserNeyScorer>(lm_train);
      scorer = fallback.get();
    }
    rep.generation["perplexity"] = perplexity(hyps, *scorer);
    rep.generation["perplexity_inputs"] = perplexity(refs, *scorer);
    rep.generation["scorer"] = scorer->name();

    const ConsistencyReport cons = consistency_two_pass(model, seqs, test.labels, target_probes, opt.max_length, opt.seed + 2);
    for (Factor f : kFactors) {
      rep.consistency[factor_key(f)] = {{"pass1", prf_json(cons.pass1[factor_index(f)])},
                                        {"pass2", prf_json(cons.pass2[factor_index(f)])}};
    }
    rep.consistency["examples"] = cons.examples;

    const ClassCentroids centroids = class_centroids(train);
    for (Factor f : kFactors) {
      nlohmann::ordered_json by_dir;
      for (Direction d : {Direction::kRemove, Direction::kAdd}) {
        const auto [tr, outcomes] = controlled_transfer(model, centroids, target_probes[factor_index(f)], seqs,
                                                        test.factor_labels(f), f, d, opt.max_length);
        by_dir[direction_key(d)] = {{"accuracy", tr.accuracy()}, {"attempted", tr.attempted}, {"succeeded", tr.succeeded},
                                    {"skipped", tr.skipped}};
      }
      nlohmann::ordered_json cent;
      for (int c = 0; c < 2; ++c) {
        const auto& v = centroids.at(f, c);
        cent[std::to_string(c)] = std::vector<double>(v.data(), v.data() + v.size());
      }
      by_dir["centroids"] = cent;
      rep.transfer[factor_key(f)] = by_dir;
    }
  }
  return rep;
}

}  // namespace negunc::eval

#endif  // NEGUNC_EVAL_HPP_
