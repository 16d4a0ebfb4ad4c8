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

// Auxiliary disentanglement objectives.
//
// INF  supervised probes on the 1-D negation / uncertainty latents.
// ADV  adversaries predicting a factor from a non-target latent; the
//      classifier half trains the adversary on detached latents, the
//      entropy half trains the encoder against frozen adversaries.
// MIN  CLUB upper bound on the mutual information between every pair of
//      latent spaces, with a separately trained conditional Gaussian.

#ifndef NEGUNC_OBJECTIVES_HPP_
#define NEGUNC_OBJECTIVES_HPP_

#include "negunc/autodiff.hpp"
#include "negunc/errors.hpp"
#include "negunc/nn.hpp"
#include "negunc/vae.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace negunc::obj {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;
using nn::Binding;
using nn::Rng;
using vae::Space;

struct ObjectiveWeights {
  double inf = 1.0;
  double adv = 1.0;
  double min = 0.01;

  void validate() const {
    if (inf < 0 || adv < 0 || min < 0) throw ValidationError("objective weights must be >= 0");
  }
};

// Closed forms used by tests and reports.
inline double bce(double p, int y) {
  return y == 1 ? -std::log(p) : -std::log1p(-p);
}

inline double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log1p(-p);
}

inline double total_loss(double elbo, double inf, double adv_encoder_half, double min, const ObjectiveWeights& w) {
  w.validate();
  return elbo + w.inf * inf + w.adv * adv_encoder_half + w.min * min;
}

template <typename T>
Var<T> total_loss(const Var<T>& elbo, const Var<T>* inf, const Var<T>* adv_encoder_half, const Var<T>* min,
                  const ObjectiveWeights& w) {
  w.validate();
  Var<T> total = elbo;
  if (inf != nullptr) total = total + ad::scale(*inf, static_cast<T>(w.inf));
  if (adv_encoder_half != nullptr) total = total + ad::scale(*adv_encoder_half, static_cast<T>(w.adv));
  if (min != nullptr) total = total + ad::scale(*min, static_cast<T>(w.min));
  return total;
}

// psi: z^(k) (B x 1) -> logit.
template <typename T>
struct LatentProbe {
  nn::Linear<T> linear;

  LatentProbe() = default;
  LatentProbe(const std::string& name, Eigen::Index in, Rng& rng) : linear(name, in, 1, rng) {}

  Var<T> logits(Tape<T>& tape, const Var<T>& z, Binding b = Binding::kTrainable) { return linear(tape, z, b); }

  template <typename F>
  void visit(F&& f) {
    linear.visit(f);
  }
};

template <typename T>
Var<T> inf_loss(Tape<T>& tape, const Var<T>& z, const std::vector<int>& labels, LatentProbe<T>& probe,
                Binding b = Binding::kTrainable) {
  return ad::bce_with_logits(probe.logits(tape, z, b), labels);
}

struct AdversaryPair {
  Space latent;
  corpus::Factor factor;
};

inline constexpr std::array<AdversaryPair, 4> kAdversaryPairs = {{
    {Space::kNegation, corpus::Factor::kUncertainty},
    {Space::kUncertainty, corpus::Factor::kNegation},
    {Space::kContent, corpus::Factor::kNegation},
    {Space::kContent, corpus::Factor::kUncertainty},
}};

inline std::string pair_name(const AdversaryPair& p) {
  return std::string(vae::space_key(p.latent)) + "->" + (p.factor == corpus::Factor::kNegation ? "n" : "u");
}

// xi: one logistic classifier per (latent space, non-target factor).
template <typename T>
struct AdversaryBank {
  std::array<nn::Linear<T>, 4> classifiers;

  AdversaryBank() = default;
  AdversaryBank(const vae::ModelDims& d, Rng& rng) {
    for (std::size_t i = 0; i < kAdversaryPairs.size(); ++i) {
      const auto& p = kAdversaryPairs[i];
      classifiers[i] = nn::Linear<T>("adversary." + std::string(vae::space_key(p.latent)) + "_" +
                                         (p.factor == corpus::Factor::kNegation ? "n" : "u"),
                                     d.latent_dim(p.latent), 1, rng);
    }
  }

  template <typename F>
  void visit(F&& f) {
    for (auto& c : classifiers) c.visit(f);
  }
};

// BCE of the adversary on detached latents; only xi receives gradient.
template <typename T>
Var<T> adv_classifier_loss(Tape<T>& tape, const Var<T>& z, const std::vector<int>& labels, nn::Linear<T>& adversary) {
  return ad::bce_with_logits(adversary(tape, tape.detach(z), Binding::kTrainable), labels);
}

// Batch-mean binary entropy of a frozen adversary's predictions.
template <typename T>
Var<T> adv_entropy(Tape<T>& tape, const Var<T>& z, nn::Linear<T>& adversary) {
  return ad::binary_entropy_logits(adversary(tape, z, Binding::kFrozen));
}

template <typename T>
struct AdvTerms {
  Var<T> adversary_update;  // sum of classifier losses
  Var<T> encoder_update;    // minus the sum of entropies
};

inline std::size_t factor_slot(corpus::Factor f) { return f == corpus::Factor::kNegation ? 0 : 1; }

// Sum over the four pairs of the classifier loss on detached latents.
// `labels[0]` holds negation, `labels[1]` uncertainty.
template <typename T>
Var<T> adv_classifier_total(Tape<T>& tape, const std::array<Matrix<T>, 3>& latents,
                            const std::array<std::vector<int>, 2>& labels, AdversaryBank<T>& bank) {
  Var<T> total;
  for (std::size_t i = 0; i < kAdversaryPairs.size(); ++i) {
    const auto& p = kAdversaryPairs[i];
    Var<T> l = adv_classifier_loss(tape, tape.constant(latents[vae::index_of(p.latent)]), labels[factor_slot(p.factor)],
                                   bank.classifiers[i]);
    total = i == 0 ? l : total + l;
  }
  return total;
}

// Minus the sum over the four pairs of the frozen adversaries' entropies.
template <typename T>
Var<T> adv_encoder_half(Tape<T>& tape, const std::array<Var<T>, 3>& latents, AdversaryBank<T>& bank) {
  Var<T> total;
  for (std::size_t i = 0; i < kAdversaryPairs.size(); ++i) {
    Var<T> ent = adv_entropy(tape, latents[vae::index_of(kAdversaryPairs[i].latent)], bank.classifiers[i]);
    total = i == 0 ? -ent : total - ent;
  }
  return total;
}

// Both halves of the adversarial objective. The classifier half is built
// on `cls_tape`, the entropy half on the tape owning `latents`.
template <typename T>
AdvTerms<T> adv_total(Tape<T>& cls_tape, const std::array<Var<T>, 3>& latents, const std::array<std::vector<int>, 2>& labels,
                      AdversaryBank<T>& bank) {
  const std::array<Matrix<T>, 3> values = {latents[0].value(), latents[1].value(), latents[2].value()};
  return {adv_classifier_total(cls_tape, values, labels, bank), adv_encoder_half(*latents[0].tape(), latents, bank)};
}

// Conditional Gaussian q(x_i | x_j): two one-hidden-layer tanh networks.
template <typename T>
struct ClubNet {
  nn::Linear<T> mu_in, mu_out, lv_in, lv_out;

  ClubNet() = default;
  ClubNet(const std::string& name, Eigen::Index target_dim, Eigen::Index cond_dim, Eigen::Index hidden, Rng& rng)
      : mu_in(name + ".mu.0", cond_dim, hidden, rng),
        mu_out(name + ".mu.1", hidden, target_dim, rng),
        lv_in(name + ".logvar.0", cond_dim, hidden, rng),
        lv_out(name + ".logvar.1", hidden, target_dim, rng) {}

  std::pair<Var<T>, Var<T>> operator()(Tape<T>& tape, const Var<T>& cond, Binding b) {
    Var<T> mu = mu_out(tape, ad::tanh(mu_in(tape, cond, b)), b);
    Var<T> lv = ad::tanh(lv_out(tape, ad::tanh(lv_in(tape, cond, b)), b));
    return {mu, lv};
  }

  template <typename F>
  void visit(F&& f) {
    mu_in.visit(f);
    mu_out.visit(f);
    lv_in.visit(f);
    lv_out.visit(f);
  }
};

struct ClubPair {
  Space target;
  Space condition;
};

inline constexpr std::array<ClubPair, 3> kClubPairs = {{
    {Space::kNegation, Space::kUncertainty},
    {Space::kNegation, Space::kContent},
    {Space::kUncertainty, Space::kContent},
}};

template <typename T>
struct ClubBank {
  std::array<ClubNet<T>, 3> nets;

  ClubBank() = default;
  ClubBank(const vae::ModelDims& d, int hidden, Rng& rng) {
    for (std::size_t i = 0; i < kClubPairs.size(); ++i) {
      const auto& p = kClubPairs[i];
      nets[i] = ClubNet<T>(std::string("club.") + vae::space_key(p.target) + "_" + vae::space_key(p.condition),
                           d.latent_dim(p.target), d.latent_dim(p.condition), hidden, rng);
    }
  }

  template <typename F>
  void visit(F&& f) {
    for (auto& n : nets) n.visit(f);
  }
};

// CLUB estimate: mean log q(x_i | y_i) minus the mean over all B^2 pairs
// (x_j, y_i). The Gaussian normalizers cancel, and the cross term reduces
// to column moments of x:
//   mean_j (x_j - mu_i)^2 = E[x^2] - 2 mu_i E[x] + mu_i^2.
// `conditional(cond)` returns (mu, logvar) Vars shaped like `x`.
template <typename T, typename Conditional>
Var<T> club_upper_bound(const Var<T>& x, const Var<T>& cond, Conditional&& conditional) {
  if (x.rows() < 2) throw ValidationError("club_upper_bound: batch must hold at least 2 pairs");
  if (x.rows() != cond.rows()) throw ValidationError("club_upper_bound: unpaired samples");
  auto [mu, logvar] = conditional(cond);
  const T inv_b = T(1) / static_cast<T>(x.rows());
  Var<T> inv_var = ad::exp(-logvar);
  Var<T> positive = ad::sum(ad::square(x - mu) * inv_var);
  Var<T> ex = ad::col_mean(x);
  Var<T> ex2 = ad::col_mean(ad::square(x));
  Var<T> cross = ad::add_row(ad::square(mu) - ad::scale(ad::mul_row(mu, ex), T(2)), ex2);
  Var<T> negative = ad::sum(cross * inv_var);
  return ad::scale(negative - positive, T(0.5) * inv_b);
}

// Negative mean Gaussian log-likelihood of x under the net's conditional.
template <typename T>
Var<T> club_net_loss(Tape<T>& tape, const Var<T>& x, const Var<T>& cond, ClubNet<T>& net, Binding b = Binding::kTrainable) {
  if (x.rows() != cond.rows()) throw ValidationError("club_net_loss: unpaired samples");
  auto [mu, logvar] = net(tape, cond, b);
  const T half_log_2pi = static_cast<T>(0.5 * std::log(2.0 * std::numbers::pi));
  Var<T> nll = ad::scale(ad::square(x - mu) * ad::exp(-logvar) + logvar, T(0.5));
  return ad::add_scalar(ad::scale(ad::sum(nll), T(1) / static_cast<T>(x.rows())), half_log_2pi * static_cast<T>(x.cols()));
}

// Sum of CLUB bounds over the three latent pairs, nets frozen.
template <typename T>
Var<T> min_loss(Tape<T>& tape, const std::array<Var<T>, 3>& latents, ClubBank<T>& bank) {
  Var<T> total;
  for (std::size_t i = 0; i < kClubPairs.size(); ++i) {
    const auto& p = kClubPairs[i];
    auto& net = bank.nets[i];
    Var<T> bound = club_upper_bound(latents[vae::index_of(p.target)], latents[vae::index_of(p.condition)],
                                    [&](const Var<T>& c) { return net(tape, c, Binding::kFrozen); });
    total = i == 0 ? bound : total + bound;
  }
  return total;
}

// Sum of CLUB net likelihood losses on detached latents.
template <typename T>
Var<T> club_bank_loss(Tape<T>& tape, const std::array<Matrix<T>, 3>& latents, ClubBank<T>& bank) {
  Var<T> total;
  for (std::size_t i = 0; i < kClubPairs.size(); ++i) {
    const auto& p = kClubPairs[i];
    Var<T> l = club_net_loss(tape, tape.constant(latents[vae::index_of(p.target)]),
                             tape.constant(latents[vae::index_of(p.condition)]), bank.nets[i]);
    total = i == 0 ? l : total + l;
  }
  return total;
}

}  // namespace negunc::obj

#endif  // NEGUNC_OBJECTIVES_HPP_
