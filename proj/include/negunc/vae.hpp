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

// The factored-latent sequence VAE.
//
//   tokens -> BiLSTM encoder -> summary [h_fwd ; h_bwd] of the top layer
//          -> three Gaussian heads (negation, uncertainty, content)
//          -> z = [z_n ; z_u ; z_c] -> affine init of every decoder layer's
//             (h, c) -> LSTM decoder predicting x_1 .. x_T, EOS from
//             BOS, x_1 .. x_T.
//
// Heads emit log-variances; sigma = exp(logvar / 2). Sampling uses
// z = mu + sigma * eps with eps ~ N(0, I).

#ifndef NEGUNC_VAE_HPP_
#define NEGUNC_VAE_HPP_

#include "negunc/autodiff.hpp"
#include "negunc/corpus.hpp"
#include "negunc/errors.hpp"
#include "negunc/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace negunc::vae {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;
using nn::Binding;
using nn::Rng;

enum class Space { kNegation = 0, kUncertainty = 1, kContent = 2 };

inline constexpr std::array<Space, 3> kSpaces = {Space::kNegation, Space::kUncertainty, Space::kContent};

inline const char* space_key(Space s) {
  switch (s) {
    case Space::kNegation: return "n";
    case Space::kUncertainty: return "u";
    case Space::kContent: return "c";
  }
  return "?";
}

inline std::size_t index_of(Space s) { return static_cast<std::size_t>(s); }

struct ModelDims {
  int vocab_size = 0;
  int embedding_dim = 256;
  int hidden_dim = 256;
  int layers = 2;
  std::array<int, 3> latent = {1, 1, 62};

  int latent_dim(Space s) const { return latent[index_of(s)]; }
  int total_latent() const { return latent[0] + latent[1] + latent[2]; }
  int latent_offset(Space s) const {
    int off = 0;
    for (std::size_t i = 0; i < index_of(s); ++i) off += latent[i];
    return off;
  }
  // Encoder summary: final states of both directions of the top layer.
  int summary_dim() const { return 2 * hidden_dim; }

  void validate() const {
    if (vocab_size <= corpus::Vocabulary::kNumReserved) throw ValidationError("model: vocabulary too small");
    if (embedding_dim < 1 || hidden_dim < 1 || layers < 1) throw ValidationError("model: dimensions must be positive");
    for (int d : latent) {
      if (d < 1) throw ValidationError("model: latent dimensions must be positive");
    }
  }
};

// Posterior parameters of one latent space for one example.
struct GaussianParams {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;
};

// KL(N(mu, sigma^2) || N(0, I)) for a diagonal Gaussian.
inline double kl_standard_normal(const GaussianParams& p) {
  if (p.mu.size() != p.sigma.size()) throw ValidationError("kl_standard_normal: mu/sigma size mismatch");
  double kl = 0;
  for (Eigen::Index i = 0; i < p.mu.size(); ++i) {
    const double s = p.sigma(i);
    if (!(s > 0.0)) throw ValidationError("kl_standard_normal: sigma must be positive");
    kl += 0.5 * (p.mu(i) * p.mu(i) + s * s - 1.0 - 2.0 * std::log(s));
  }
  return kl;
}

inline Eigen::VectorXd reparameterize(const GaussianParams& p, const Eigen::VectorXd& eps) {
  if (eps.size() != p.mu.size()) throw ValidationError("reparameterize: noise dimension mismatch");
  return p.mu + p.sigma.cwiseProduct(eps);
}

struct ForwardOptions {
  bool training = false;
  double word_dropout = 0.0;
  double hidden_dropout = 0.0;
  double teacher_forcing = 1.0;
};

inline ForwardOptions inference_options() { return ForwardOptions{}; }

using Sequences = std::vector<std::vector<int>>;

inline std::size_t max_length(const Sequences& seqs) {
  std::size_t m = 0;
  for (const auto& s : seqs) m = std::max(m, s.size());
  return m;
}

template <typename T>
Var<T> zeros(Tape<T>& tape, Eigen::Index rows, Eigen::Index cols) {
  return tape.constant(Matrix<T>::Zero(rows, cols));
}

namespace detail {

inline std::vector<int> apply_word_dropout(std::vector<int> ids, double p, Rng& rng) {
  if (p <= 0.0) return ids;
  std::bernoulli_distribution drop(p);
  for (int& id : ids) {
    if (id >= corpus::Vocabulary::kNumReserved || id == corpus::Vocabulary::kUnk) {
      if (drop(rng)) id = corpus::Vocabulary::kUnk;
    }
  }
  return ids;
}

}  // namespace detail

template <typename T>
struct Encoder {
  nn::Embedding<T> embedding;
  std::vector<std::array<nn::LstmLayer<T>, 2>> layers;  // [layer][direction]
  int hidden = 0;

  Encoder() = default;
  Encoder(const ModelDims& d, Rng& rng) : embedding("encoder.embedding", d.vocab_size, d.embedding_dim, rng), hidden(d.hidden_dim) {
    for (int l = 0; l < d.layers; ++l) {
      const int in = l == 0 ? d.embedding_dim : 2 * d.hidden_dim;
      const std::string base = "encoder.lstm" + std::to_string(l);
      layers.push_back({nn::LstmLayer<T>(base + ".fwd", in, d.hidden_dim, rng),
                        nn::LstmLayer<T>(base + ".bwd", in, d.hidden_dim, rng)});
    }
  }

  // Summary vector per sequence (B x 2H).
  Var<T> operator()(Tape<T>& tape, const Sequences& seqs, const ForwardOptions& opt, Rng& rng,
                    Binding b = Binding::kTrainable) {
    const auto batch = static_cast<Eigen::Index>(seqs.size());
    if (batch == 0) throw ValidationError("encode: empty batch");
    for (const auto& s : seqs) {
      if (s.empty()) throw ValidationError("encode: empty sequence");
    }
    const std::size_t steps = max_length(seqs);
    std::vector<std::vector<char>> masks(steps, std::vector<char>(seqs.size(), 0));
    std::vector<Var<T>> inputs;
    inputs.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      std::vector<int> ids(seqs.size(), corpus::Vocabulary::kPad);
      for (std::size_t i = 0; i < seqs.size(); ++i) {
        if (t < seqs[i].size()) {
          ids[i] = seqs[i][t];
          masks[t][i] = 1;
        }
      }
      if (opt.training) ids = detail::apply_word_dropout(std::move(ids), opt.word_dropout, rng);
      inputs.push_back(embedding(tape, ids, b));
    }
    Var<T> fwd_final, bwd_final;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (l > 0 && opt.training) {
        for (auto& x : inputs) x = nn::dropout(tape, x, static_cast<T>(opt.hidden_dropout), rng);
      }
      typename nn::LstmLayer<T>::State fs{zeros(tape, batch, hidden), zeros(tape, batch, hidden)};
      typename nn::LstmLayer<T>::State bs = fs;
      std::vector<Var<T>> fwd_out(steps), bwd_out(steps);
      for (std::size_t t = 0; t < steps; ++t) {
        fs = layers[l][0].step(tape, inputs[t], fs, &masks[t], b);
        fwd_out[t] = fs.h;
      }
      for (std::size_t r = steps; r-- > 0;) {
        bs = layers[l][1].step(tape, inputs[r], bs, &masks[r], b);
        bwd_out[r] = bs.h;
      }
      fwd_final = fs.h;
      bwd_final = bs.h;
      if (l + 1 < layers.size()) {
        for (std::size_t t = 0; t < steps; ++t) inputs[t] = ad::concat_cols<T>({fwd_out[t], bwd_out[t]});
      }
    }
    return ad::concat_cols<T>({fwd_final, bwd_final});
  }

  template <typename F>
  void visit(F&& f) {
    embedding.visit(f);
    for (auto& l : layers) {
      l[0].visit(f);
      l[1].visit(f);
    }
  }
};

template <typename T>
struct LatentHeads {
  std::array<nn::Linear<T>, 3> mu;
  std::array<nn::Linear<T>, 3> logvar;

  LatentHeads() = default;
  LatentHeads(const ModelDims& d, Rng& rng) {
    for (Space s : kSpaces) {
      const std::string base = std::string("heads.") + space_key(s);
      mu[index_of(s)] = nn::Linear<T>(base + ".mu", d.summary_dim(), d.latent_dim(s), rng);
      logvar[index_of(s)] = nn::Linear<T>(base + ".logvar", d.summary_dim(), d.latent_dim(s), rng);
    }
  }

  template <typename F>
  void visit(F&& f) {
    for (auto& l : mu) l.visit(f);
    for (auto& l : logvar) l.visit(f);
  }
};

// Per-step decoder outputs and aligned targets.
template <typename T>
struct DecodeOutput {
  std::vector<Var<T>> logits;          // T+1 steps, each B x V
  std::vector<std::vector<int>> targets;  // per step, per row
  std::vector<std::vector<T>> weights;    // 1 for real targets, 0 for padding
};

template <typename T>
struct Decoder {
  nn::Embedding<T> embedding;
  nn::Linear<T> init;
  std::vector<nn::LstmLayer<T>> layers;
  nn::Linear<T> output;
  int hidden = 0;

  Decoder() = default;
  Decoder(const ModelDims& d, Rng& rng)
      : embedding("decoder.embedding", d.vocab_size, d.embedding_dim, rng),
        init("decoder.init", d.total_latent(), 2 * d.layers * d.hidden_dim, rng),
        output("decoder.output", d.hidden_dim, d.vocab_size, rng),
        hidden(d.hidden_dim) {
    for (int l = 0; l < d.layers; ++l) {
      layers.emplace_back("decoder.lstm" + std::to_string(l), l == 0 ? d.embedding_dim : d.hidden_dim, d.hidden_dim, rng);
    }
  }

  std::vector<typename nn::LstmLayer<T>::State> initial_state(Tape<T>& tape, const Var<T>& z, Binding b) {
    Var<T> s = init(tape, z, b);
    std::vector<typename nn::LstmLayer<T>::State> st;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto off = static_cast<Eigen::Index>(2 * l * static_cast<std::size_t>(hidden));
      st.push_back({ad::slice_cols(s, off, hidden), ad::slice_cols(s, off + hidden, hidden)});
    }
    return st;
  }

  // One step from input ids; returns logits (B x V) and advances `state`.
  Var<T> step(Tape<T>& tape, const std::vector<int>& ids, std::vector<typename nn::LstmLayer<T>::State>& state,
              const ForwardOptions& opt, Rng& rng, Binding b) {
    Var<T> x = embedding(tape, ids, b);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (l > 0 && opt.training) x = nn::dropout(tape, x, static_cast<T>(opt.hidden_dropout), rng);
      state[l] = layers[l].step(tape, x, state[l], nullptr, b);
      x = state[l].h;
    }
    return output(tape, x, b);
  }

  // Teacher-forced / free-running decode against the target sequences.
  // Each row's input at step t > 0 is the gold token with probability
  // `teacher_forcing`, otherwise the argmax of the previous step.
  DecodeOutput<T> operator()(Tape<T>& tape, const Var<T>& z, const Sequences& seqs, const ForwardOptions& opt, Rng& rng,
                             Binding b = Binding::kTrainable) {
    const std::size_t batch = seqs.size();
    if (static_cast<std::size_t>(z.rows()) != batch) throw ValidationError("decode: latent batch size mismatch");
    const std::size_t steps = max_length(seqs) + 1;
    auto state = initial_state(tape, z, b);
    DecodeOutput<T> out;
    std::vector<int> prev(batch, corpus::Vocabulary::kBos);
    std::bernoulli_distribution use_gold(std::clamp(opt.teacher_forcing, 0.0, 1.0));
    for (std::size_t t = 0; t < steps; ++t) {
      std::vector<int> ids(batch);
      if (t == 0) {
        std::fill(ids.begin(), ids.end(), corpus::Vocabulary::kBos);
      } else {
        for (std::size_t i = 0; i < batch; ++i) {
          if (t - 1 >= seqs[i].size()) {
            ids[i] = corpus::Vocabulary::kPad;
            continue;
          }
          const bool gold = opt.teacher_forcing >= 1.0 || (opt.teacher_forcing > 0.0 && use_gold(rng));
          ids[i] = gold ? seqs[i][t - 1] : prev[i];
        }
        if (opt.training) ids = detail::apply_word_dropout(std::move(ids), opt.word_dropout, rng);
      }
      Var<T> logits = step(tape, ids, state, opt, rng, b);
      std::vector<int> tgt(batch, corpus::Vocabulary::kPad);
      std::vector<T> w(batch, T(0));
      for (std::size_t i = 0; i < batch; ++i) {
        if (t < seqs[i].size()) {
          tgt[i] = seqs[i][t];
          w[i] = T(1);
        } else if (t == seqs[i].size()) {
          tgt[i] = corpus::Vocabulary::kEos;
          w[i] = T(1);
        }
      }
      if (opt.teacher_forcing < 1.0) {
        const Matrix<T>& lv = logits.value();
        for (std::size_t i = 0; i < batch; ++i) {
          Eigen::Index arg;
          lv.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
          prev[i] = static_cast<int>(arg);
        }
      }
      out.logits.push_back(logits);
      out.targets.push_back(std::move(tgt));
      out.weights.push_back(std::move(w));
    }
    return out;
  }

  template <typename F>
  void visit(F&& f) {
    embedding.visit(f);
    init.visit(f);
    for (auto& l : layers) l.visit(f);
    output.visit(f);
  }
};

// Token NLL summed over time steps and averaged over the batch; padded
// positions contribute nothing.
template <typename T>
Var<T> reconstruction_loss(const DecodeOutput<T>& d) {
  if (d.logits.empty()) throw ValidationError("reconstruction_loss: no steps");
  if (d.targets.size() != d.logits.size() || d.weights.size() != d.logits.size()) {
    throw ValidationError("reconstruction_loss: logits and targets are not aligned");
  }
  const T batch = static_cast<T>(d.logits.front().rows());
  Var<T> total = ad::softmax_cross_entropy(d.logits[0], d.targets[0], d.weights[0]);
  for (std::size_t t = 1; t < d.logits.size(); ++t) {
    total = total + ad::softmax_cross_entropy(d.logits[t], d.targets[t], d.weights[t]);
  }
  return ad::scale(total, T(1) / batch);
}

// Batch mean of sum_d 0.5 (mu^2 + exp(logvar) - 1 - logvar).
template <typename T>
Var<T> kl_standard_normal(const Var<T>& mu, const Var<T>& logvar) {
  Var<T> terms = ad::add_scalar(ad::square(mu) + ad::exp(logvar) - logvar, T(-1));
  return ad::scale(ad::sum(terms), T(0.5) / static_cast<T>(mu.rows()));
}

template <typename T>
Var<T> reparameterize(const Var<T>& mu, const Var<T>& logvar, const Matrix<T>& eps) {
  if (eps.rows() != mu.rows() || eps.cols() != mu.cols()) throw ValidationError("reparameterize: noise shape mismatch");
  Var<T> sigma = ad::exp(ad::scale(logvar, T(0.5)));
  return mu + sigma * mu.tape()->constant(eps);
}

struct Betas {
  double negation = 0.005;
  double uncertainty = 0.005;
  double content = 0.01;

  double operator[](Space s) const {
    return s == Space::kNegation ? negation : s == Space::kUncertainty ? uncertainty : content;
  }
};

inline double elbo_loss(double rec, const std::array<double, 3>& kl, const Betas& beta) {
  if (beta.negation < 0 || beta.uncertainty < 0 || beta.content < 0) throw ValidationError("elbo_loss: beta must be >= 0");
  return rec + beta.negation * kl[0] + beta.uncertainty * kl[1] + beta.content * kl[2];
}

template <typename T>
Var<T> elbo_loss(const Var<T>& rec, const std::array<Var<T>, 3>& kl, const Betas& beta) {
  if (beta.negation < 0 || beta.uncertainty < 0 || beta.content < 0) throw ValidationError("elbo_loss: beta must be >= 0");
  Var<T> total = rec;
  for (Space s : kSpaces) total = total + ad::scale(kl[index_of(s)], static_cast<T>(beta[s]));
  return total;
}

template <typename T>
struct LatentForward {
  Var<T> summary;
  std::array<Var<T>, 3> mu;
  std::array<Var<T>, 3> logvar;
  std::array<Var<T>, 3> z;
  Var<T> z_all;  // [z_n ; z_u ; z_c]
};

// Posterior means and standard deviations for a batch (B x total_latent).
struct Posterior {
  Eigen::MatrixXd mu;
  Eigen::MatrixXd sigma;
};

template <typename T>
class SentenceVae {
 public:
  SentenceVae() = default;
  SentenceVae(const ModelDims& dims, Rng& rng) : dims_(dims) {
    dims_.validate();
    encoder_ = Encoder<T>(dims_, rng);
    heads_ = LatentHeads<T>(dims_, rng);
    decoder_ = Decoder<T>(dims_, rng);
  }

  const ModelDims& dims() const { return dims_; }

  Var<T> encode(Tape<T>& tape, const Sequences& seqs, const ForwardOptions& opt, Rng& rng,
                Binding b = Binding::kTrainable) {
    return encoder_(tape, seqs, opt, rng, b);
  }

  std::pair<Var<T>, Var<T>> latent_params(Tape<T>& tape, const Var<T>& summary, Space s,
                                          Binding b = Binding::kTrainable) {
    if (summary.cols() != dims_.summary_dim()) throw ValidationError("latent_params: summary dimension mismatch");
    return {heads_.mu[index_of(s)](tape, summary, b), heads_.logvar[index_of(s)](tape, summary, b)};
  }

  // Encoder + heads + sampling. `noise` (B x total_latent) overrides the
  // eps draw when given.
  LatentForward<T> forward(Tape<T>& tape, const Sequences& seqs, const ForwardOptions& opt, Rng& rng,
                           const Matrix<T>* noise = nullptr, Binding b = Binding::kTrainable) {
    LatentForward<T> f;
    f.summary = encode(tape, seqs, opt, rng, b);
    const auto batch = static_cast<Eigen::Index>(seqs.size());
    Matrix<T> eps;
    if (noise != nullptr) {
      if (noise->rows() != batch || noise->cols() != dims_.total_latent()) throw ValidationError("forward: noise shape mismatch");
      eps = *noise;
    } else {
      eps = nn::normal_matrix<T>(batch, dims_.total_latent(), T(1), rng);
    }
    std::vector<Var<T>> parts;
    for (Space s : kSpaces) {
      auto [mu, lv] = latent_params(tape, f.summary, s, b);
      f.mu[index_of(s)] = mu;
      f.logvar[index_of(s)] = lv;
      f.z[index_of(s)] = reparameterize(mu, lv, Matrix<T>(eps.middleCols(dims_.latent_offset(s), dims_.latent_dim(s))));
      parts.push_back(f.z[index_of(s)]);
    }
    f.z_all = ad::concat_cols(parts);
    return f;
  }

  DecodeOutput<T> decode(Tape<T>& tape, const Var<T>& z_all, const Sequences& targets, const ForwardOptions& opt, Rng& rng,
                         Binding b = Binding::kTrainable) {
    if (z_all.cols() != dims_.total_latent()) throw ValidationError("decode: latent dimension mismatch");
    return decoder_(tape, z_all, targets, opt, rng, b);
  }

  // Greedy decoding of each latent row until EOS or max_length tokens.
  Sequences generate(const Eigen::MatrixXd& z, int max_length) {
    if (max_length < 1) throw ValidationError("greedy_generate: max_length must be >= 1");
    if (z.cols() != dims_.total_latent()) throw ValidationError("greedy_generate: latent dimension mismatch");
    Sequences out(static_cast<std::size_t>(z.rows()));
    constexpr Eigen::Index kChunk = 512;
    Rng unused(0);
    const ForwardOptions opt = inference_options();
    for (Eigen::Index start = 0; start < z.rows(); start += kChunk) {
      const Eigen::Index n = std::min(kChunk, z.rows() - start);
      Tape<T> tape;
      Var<T> zv = tape.constant(z.middleRows(start, n).template cast<T>());
      auto state = decoder_.initial_state(tape, zv, Binding::kFrozen);
      std::vector<int> ids(static_cast<std::size_t>(n), corpus::Vocabulary::kBos);
      std::vector<char> done(static_cast<std::size_t>(n), 0);
      for (int t = 0; t < max_length; ++t) {
        Var<T> logits = decoder_.step(tape, ids, state, opt, unused, Binding::kFrozen);
        bool all_done = true;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (done[static_cast<std::size_t>(i)]) continue;
          Eigen::Index arg;
          logits.value().row(i).maxCoeff(&arg);
          ids[static_cast<std::size_t>(i)] = static_cast<int>(arg);
          if (arg == corpus::Vocabulary::kEos) {
            done[static_cast<std::size_t>(i)] = 1;
          } else {
            out[static_cast<std::size_t>(start + i)].push_back(static_cast<int>(arg));
            all_done = false;
          }
        }
        if (all_done) break;
      }
    }
    return out;
  }

  // Inference-mode posterior parameters, chunked over the input.
  Posterior posterior(const Sequences& seqs) {
    Posterior p;
    const auto n = static_cast<Eigen::Index>(seqs.size());
    p.mu.resize(n, dims_.total_latent());
    p.sigma.resize(n, dims_.total_latent());
    constexpr std::size_t kChunk = 512;
    Rng unused(0);
    for (std::size_t start = 0; start < seqs.size(); start += kChunk) {
      const std::size_t end = std::min(seqs.size(), start + kChunk);
      Sequences chunk(seqs.begin() + static_cast<std::ptrdiff_t>(start), seqs.begin() + static_cast<std::ptrdiff_t>(end));
      Tape<T> tape;
      Var<T> h = encode(tape, chunk, inference_options(), unused, Binding::kFrozen);
      for (Space s : kSpaces) {
        auto [mu, lv] = latent_params(tape, h, s, Binding::kFrozen);
        const auto rows = static_cast<Eigen::Index>(end - start);
        p.mu.block(static_cast<Eigen::Index>(start), dims_.latent_offset(s), rows, dims_.latent_dim(s)) =
            mu.value().template cast<double>();
        p.sigma.block(static_cast<Eigen::Index>(start), dims_.latent_offset(s), rows, dims_.latent_dim(s)) =
            (lv.value().template cast<double>().array() * 0.5).exp().matrix();
      }
    }
    return p;
  }

  template <typename F>
  void visit_encoder(F&& f) { encoder_.visit(f); }
  template <typename F>
  void visit_heads(F&& f) { heads_.visit(f); }
  template <typename F>
  void visit_decoder(F&& f) { decoder_.visit(f); }
  template <typename F>
  void visit(F&& f) {
    encoder_.visit(f);
    heads_.visit(f);
    decoder_.visit(f);
  }

  Encoder<T>& encoder() { return encoder_; }
  LatentHeads<T>& heads() { return heads_; }
  Decoder<T>& decoder() { return decoder_; }

 private:
  ModelDims dims_;
  Encoder<T> encoder_;
  LatentHeads<T> heads_;
  Decoder<T> decoder_;
};

}  // namespace negunc::vae

#endif  // NEGUNC_VAE_HPP_
