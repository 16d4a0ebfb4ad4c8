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

// A tiny model with every objective attached, for gradient checks and
// routing tests. Every loss builder is deterministic: noise and dropout
// masks come from generators re-seeded on each call.

#ifndef NEGUNC_TESTS_MICRO_MODEL_HPP_
#define NEGUNC_TESTS_MICRO_MODEL_HPP_

#include "negunc/nn.hpp"
#include "negunc/objectives.hpp"
#include "negunc/vae.hpp"

#include <array>
#include <map>
#include <string>
#include <vector>

namespace negunc::testing {

struct MicroModel {
  using T = double;
  vae::ModelDims dims;
  vae::SentenceVae<T> model;
  std::array<obj::LatentProbe<T>, 2> probes;
  obj::AdversaryBank<T> adversaries;
  obj::ClubBank<T> club;
  vae::Sequences seqs;
  std::array<std::vector<int>, 2> labels;
  vae::ForwardOptions options;
  std::uint64_t noise_seed = 77;

  explicit MicroModel(std::uint64_t seed = 1, bool training = true) {
    dims.vocab_size = 12;
    dims.embedding_dim = 6;
    dims.hidden_dim = 8;
    dims.layers = 2;
    nn::Rng rng(seed);
    model = vae::SentenceVae<T>(dims, rng);
    probes = {obj::LatentProbe<T>("probe.n", 1, rng), obj::LatentProbe<T>("probe.u", 1, rng)};
    adversaries = obj::AdversaryBank<T>(dims, rng);
    club = obj::ClubBank<T>(dims, 16, rng);
    // Spread the adversary and probe weights so their gradients are not tiny.
    for (auto& c : adversaries.classifiers) c.weight.value *= 3.0;
    seqs = {{4, 5, 6, 7, 8}, {9, 10, 11}};
    labels = {std::vector<int>{1, 0}, std::vector<int>{0, 1}};
    options.training = training;
    options.word_dropout = training ? 0.3 : 0.0;
    options.hidden_dropout = training ? 0.3 : 0.0;
    options.teacher_forcing = 1.0;
  }

  vae::LatentForward<T> forward(ad::Tape<T>& tape, nn::Rng& rng) { return model.forward(tape, seqs, options, rng); }

  ad::Var<T> elbo(ad::Tape<T>& tape) {
    nn::Rng rng(noise_seed);
    auto f = forward(tape, rng);
    auto d = model.decode(tape, f.z_all, seqs, options, rng);
    std::array<ad::Var<T>, 3> kl;
    for (vae::Space s : vae::kSpaces) kl[vae::index_of(s)] = vae::kl_standard_normal(f.mu[vae::index_of(s)], f.logvar[vae::index_of(s)]);
    return vae::elbo_loss(vae::reconstruction_loss(d), kl, vae::Betas{0.5, 0.5, 0.1});
  }

  ad::Var<T> inf(ad::Tape<T>& tape) {
    nn::Rng rng(noise_seed);
    auto f = forward(tape, rng);
    return obj::inf_loss(tape, f.z[0], labels[0], probes[0]) + obj::inf_loss(tape, f.z[1], labels[1], probes[1]);
  }

  ad::Var<T> adv_classifier(ad::Tape<T>& tape) {
    nn::Rng rng(noise_seed);
    auto f = forward(tape, rng);
    ad::Var<T> total;
    for (std::size_t i = 0; i < obj::kAdversaryPairs.size(); ++i) {
      const auto& p = obj::kAdversaryPairs[i];
      auto l = obj::adv_classifier_loss(tape, f.z[vae::index_of(p.latent)], labels[p.factor == corpus::Factor::kNegation ? 0 : 1],
                                        adversaries.classifiers[i]);
      total = i == 0 ? l : total + l;
    }
    return total;
  }

  ad::Var<T> adv_entropy_half(ad::Tape<T>& tape) {
    nn::Rng rng(noise_seed);
    auto f = forward(tape, rng);
    ad::Tape<T> scratch;
    return obj::adv_total(scratch, f.z, labels, adversaries).encoder_update;
  }

  ad::Var<T> min(ad::Tape<T>& tape) {
    nn::Rng rng(noise_seed);
    auto f = forward(tape, rng);
    return obj::min_loss(tape, f.z, club);
  }

  ad::Var<T> club_net(ad::Tape<T>& tape) {
    nn::Rng rng(noise_seed);
    auto f = forward(tape, rng);
    std::array<ad::Matrix<T>, 3> z = {f.z[0].value(), f.z[1].value(), f.z[2].value()};
    return obj::club_bank_loss(tape, z, club);
  }

  // Parameter groups by role.
  std::map<std::string, std::vector<ad::Parameter<T>*>> groups() {
    std::map<std::string, std::vector<ad::Parameter<T>*>> g;
    auto add = [&](const std::string& name) { return [&g, name](ad::Parameter<T>& p) { g[name].push_back(&p); }; };
    model.visit_encoder(add("encoder"));
    model.visit_heads(add("heads"));
    model.visit_decoder(add("decoder"));
    for (auto& p : probes) p.visit(add("probes"));
    adversaries.visit(add("adversaries"));
    club.visit(add("club"));
    return g;
  }

  std::vector<ad::Parameter<T>*> parameters(const std::vector<std::string>& names) {
    auto g = groups();
    std::vector<ad::Parameter<T>*> out;
    for (const auto& n : names) out.insert(out.end(), g.at(n).begin(), g.at(n).end());
    return out;
  }

  std::vector<ad::Parameter<T>*> all_parameters() {
    std::vector<ad::Parameter<T>*> out;
    for (auto& [name, ps] : groups()) out.insert(out.end(), ps.begin(), ps.end());
    return out;
  }
};

}  // namespace negunc::testing

#endif  // NEGUNC_TESTS_MICRO_MODEL_HPP_
