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

// Training loop with three optimizer groups:
//   main        encoder, latent heads, decoder, probes
//   adversary   adversarial classifiers
//   club        conditional Gaussians of the MI bound
// Each batch runs club -> adversary -> main, the latter two seeing the
// freshly updated estimator parameters as constants.
//
// Every stochastic choice (initialization, shuffling, eps, dropout, teacher
// forcing coins) is drawn from one generator seeded by the config.

#ifndef NEGUNC_TRAINER_HPP_
#define NEGUNC_TRAINER_HPP_

#include "json.hpp"
#include "negunc/autodiff.hpp"
#include "negunc/corpus.hpp"
#include "negunc/errors.hpp"
#include "negunc/logistic.hpp"
#include "negunc/nn.hpp"
#include "negunc/objectives.hpp"
#include "negunc/scores.hpp"
#include "negunc/vae.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace negunc::train {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;
using corpus::Factor;

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& term, const std::string& where)
      : std::runtime_error("non-finite loss term '" + term + "' " + where), term_(term) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

struct ObjectiveSet {
  bool inf = false;
  bool adv = false;
  bool min = false;

  // Accepts "elbo", "" or a comma-separated subset of inf, adv, min.
  static ObjectiveSet parse(const std::string& spec) {
    ObjectiveSet s;
    std::string item;
    std::istringstream in(spec);
    while (std::getline(in, item, ',')) {
      item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }), item.end());
      std::transform(item.begin(), item.end(), item.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (item.empty() || item == "elbo") continue;
      if (item == "inf") s.inf = true;
      else if (item == "adv") s.adv = true;
      else if (item == "min") s.min = true;
      else throw ValidationError("unknown objective '" + item + "' (expected inf, adv, min)");
    }
    return s;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> v;
    if (inf) v.push_back("inf");
    if (adv) v.push_back("adv");
    if (min) v.push_back("min");
    return v;
  }

  // Column label: ELBO, +INF, +INF+ADV, ...
  std::string label() const {
    if (!inf && !adv && !min) return "ELBO";
    std::string s;
    if (inf) s += "+INF";
    if (adv) s += "+ADV";
    if (min) s += "+MIN";
    return s;
  }

  friend bool operator==(const ObjectiveSet&, const ObjectiveSet&) = default;
};

struct TrainConfig {
  int epochs = 20;
  int batch_size = 128;
  double learning_rate = 3e-4;
  double adversary_learning_rate = 3e-4;
  double club_learning_rate = 5e-4;
  double teacher_forcing = 0.5;
  double word_dropout = 0.5;
  double hidden_dropout = 0.5;
  vae::Betas beta;
  obj::ObjectiveWeights lambda;
  ObjectiveSet objectives{true, true, true};
  std::uint64_t seed = 1;
  int embedding_dim = 256;
  int hidden_dim = 256;
  int layers = 2;
  std::array<int, 3> latent_dims = {1, 1, 62};
  int club_hidden = 64;
  int min_frequency = 1;
  double grad_clip = 0.0;  // 0 disables clipping
  int dev_probe_train_examples = 5000;

  void validate() const {
    if (epochs < 1) throw ValidationError("config: epochs must be >= 1");
    if (batch_size < 2) throw ValidationError("config: batch_size must be >= 2");
    if (!(learning_rate > 0) || !(adversary_learning_rate > 0) || !(club_learning_rate > 0)) {
      throw ValidationError("config: learning rates must be positive");
    }
    for (double p : {teacher_forcing, word_dropout}) {
      if (p < 0 || p > 1) throw ValidationError("config: probabilities must lie in [0, 1]");
    }
    if (hidden_dropout < 0 || hidden_dropout >= 1) throw ValidationError("config: hidden_dropout must lie in [0, 1)");
    if (beta.negation < 0 || beta.uncertainty < 0 || beta.content < 0) throw ValidationError("config: beta must be >= 0");
    lambda.validate();
    if (club_hidden < 1 || min_frequency < 1 || grad_clip < 0 || dev_probe_train_examples < 2) {
      throw ValidationError("config: club_hidden, min_frequency and dev_probe_train_examples must be positive");
    }
    model_dims(corpus::Vocabulary::kNumReserved + 1).validate();
  }

  vae::ModelDims model_dims(int vocab_size) const {
    vae::ModelDims d;
    d.vocab_size = vocab_size;
    d.embedding_dim = embedding_dim;
    d.hidden_dim = hidden_dim;
    d.layers = layers;
    d.latent = latent_dims;
    return d;
  }

  // Weights with disabled objectives zeroed.
  obj::ObjectiveWeights effective_lambda() const {
    return {objectives.inf ? lambda.inf : 0.0, objectives.adv ? lambda.adv : 0.0, objectives.min ? lambda.min : 0.0};
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["learning_rate"] = learning_rate;
    j["adversary_learning_rate"] = adversary_learning_rate;
    j["club_learning_rate"] = club_learning_rate;
    j["teacher_forcing"] = teacher_forcing;
    j["word_dropout"] = word_dropout;
    j["hidden_dropout"] = hidden_dropout;
    j["beta"] = {{"n", beta.negation}, {"u", beta.uncertainty}, {"c", beta.content}};
    j["lambda"] = {{"inf", lambda.inf}, {"adv", lambda.adv}, {"min", lambda.min}};
    j["objectives"] = objectives.names();
    j["seed"] = seed;
    j["embedding_dim"] = embedding_dim;
    j["hidden_dim"] = hidden_dim;
    j["layers"] = layers;
    j["latent_dims"] = latent_dims;
    j["club_hidden"] = club_hidden;
    j["min_frequency"] = min_frequency;
    j["grad_clip"] = grad_clip;
    j["dev_probe_train_examples"] = dev_probe_train_examples;
    return j;
  }

  // Unknown keys are rejected so typos do not silently fall back to
  // defaults; missing keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j) {
    static const std::set<std::string> kKeys = {
        "epochs", "batch_size", "learning_rate", "adversary_learning_rate", "club_learning_rate", "teacher_forcing",
        "word_dropout", "hidden_dropout", "beta", "lambda", "objectives", "seed", "embedding_dim", "hidden_dim", "layers",
        "latent_dims", "club_hidden", "min_frequency", "grad_clip", "dev_probe_train_examples"};
    if (!j.is_object()) throw ValidationError("config: expected a JSON object");
    for (const auto& [k, v] : j.items()) {
      if (!kKeys.count(k)) throw ValidationError("config: unknown key '" + k + "'");
    }
    TrainConfig c;
    try {
      c.epochs = j.value("epochs", c.epochs);
      c.batch_size = j.value("batch_size", c.batch_size);
      c.learning_rate = j.value("learning_rate", c.learning_rate);
      c.adversary_learning_rate = j.value("adversary_learning_rate", c.adversary_learning_rate);
      c.club_learning_rate = j.value("club_learning_rate", c.club_learning_rate);
      c.teacher_forcing = j.value("teacher_forcing", c.teacher_forcing);
      c.word_dropout = j.value("word_dropout", c.word_dropout);
      c.hidden_dropout = j.value("hidden_dropout", c.hidden_dropout);
      if (j.contains("beta")) {
        const auto& b = j.at("beta");
        c.beta.negation = b.value("n", c.beta.negation);
        c.beta.uncertainty = b.value("u", c.beta.uncertainty);
        c.beta.content = b.value("c", c.beta.content);
      }
      if (j.contains("lambda")) {
        const auto& l = j.at("lambda");
        c.lambda.inf = l.value("inf", c.lambda.inf);
        c.lambda.adv = l.value("adv", c.lambda.adv);
        c.lambda.min = l.value("min", c.lambda.min);
      }
      if (j.contains("objectives")) {
        const auto& o = j.at("objectives");
        std::string spec;
        if (o.is_string()) {
          spec = o.get<std::string>();
        } else {
          for (const auto& item : o) spec += item.get<std::string>() + ",";
        }
        c.objectives = ObjectiveSet::parse(spec);
      }
      c.seed = j.value("seed", c.seed);
      c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
      c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
      c.layers = j.value("layers", c.layers);
      if (j.contains("latent_dims")) c.latent_dims = j.at("latent_dims").get<std::array<int, 3>>();
      c.club_hidden = j.value("club_hidden", c.club_hidden);
      c.min_frequency = j.value("min_frequency", c.min_frequency);
      c.grad_clip = j.value("grad_clip", c.grad_clip);
      c.dev_probe_train_examples = j.value("dev_probe_train_examples", c.dev_probe_train_examples);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
  }

  static TrainConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("config " + path.string() + ": " + e.what());
    }
    return from_json(j);
  }

  // FNV-1a of the canonical JSON form.
  std::string hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : to_json().dump()) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

struct Example {
  std::vector<int> ids;
  int negation = 0;
  int uncertainty = 0;
};

inline std::vector<Example> encode_statements(const corpus::Vocabulary& vocab, const std::vector<corpus::Statement>& st) {
  std::vector<Example> out;
  out.reserve(st.size());
  for (const auto& s : st) out.push_back({vocab.encode(s.tokens), s.negation, s.uncertainty});
  return out;
}

struct Batch {
  vae::Sequences seqs;
  std::array<std::vector<int>, 2> labels;  // negation, uncertainty

  static Batch gather(const std::vector<Example>& data, const std::vector<std::size_t>& idx) {
    Batch b;
    for (std::size_t i : idx) {
      b.seqs.push_back(data[i].ids);
      b.labels[0].push_back(data[i].negation);
      b.labels[1].push_back(data[i].uncertainty);
    }
    return b;
  }
};

// Scalar components of one step. Terms of disabled objectives stay 0.
struct LossRecord {
  double total = 0, elbo = 0, reconstruction = 0;
  std::array<double, 3> kl = {0, 0, 0};
  double inf = 0, adv_classifier = 0, adv_encoder = 0, min = 0, club = 0;

  nlohmann::ordered_json to_json() const {
    return {{"total", total},       {"elbo", elbo}, {"reconstruction", reconstruction}, {"kl_n", kl[0]},
            {"kl_u", kl[1]},        {"kl_c", kl[2]}, {"inf", inf},                      {"adv_classifier", adv_classifier},
            {"adv_encoder", adv_encoder}, {"min", min}, {"club", club}};
  }

  LossRecord& operator+=(const LossRecord& o) {
    total += o.total;
    elbo += o.elbo;
    reconstruction += o.reconstruction;
    for (int i = 0; i < 3; ++i) kl[static_cast<std::size_t>(i)] += o.kl[static_cast<std::size_t>(i)];
    inf += o.inf;
    adv_classifier += o.adv_classifier;
    adv_encoder += o.adv_encoder;
    min += o.min;
    club += o.club;
    return *this;
  }

  LossRecord scaled(double s) const {
    LossRecord r = *this;
    r.total *= s;
    r.elbo *= s;
    r.reconstruction *= s;
    for (auto& k : r.kl) k *= s;
    r.inf *= s;
    r.adv_classifier *= s;
    r.adv_encoder *= s;
    r.min *= s;
    r.club *= s;
    return r;
  }
};

struct DevMetrics {
  std::array<PrfScores, 2> probe;  // negation, uncertainty
  double reconstruction = 0;
  std::array<double, 3> kl = {0, 0, 0};

  double selection_score() const { return 0.5 * (probe[0].f1 + probe[1].f1); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["probe_f1_n"] = probe[0].f1;
    j["probe_f1_u"] = probe[1].f1;
    j["probe_precision_n"] = probe[0].precision;
    j["probe_precision_u"] = probe[1].precision;
    j["probe_recall_n"] = probe[0].recall;
    j["probe_recall_u"] = probe[1].recall;
    j["reconstruction"] = reconstruction;
    j["kl_n"] = kl[0];
    j["kl_u"] = kl[1];
    j["kl_c"] = kl[2];
    j["selection_score"] = selection_score();
    return j;
  }
};

inline constexpr char kCheckpointMagic[] = "NEGUNC-CKPT\n";

template <typename T>
constexpr const char* scalar_name() {
  return std::is_same_v<T, float> ? "float32" : "float64";
}

namespace detail {

inline std::string rng_state(const nn::Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline void set_rng_state(nn::Rng& rng, const std::string& s) {
  std::istringstream is(s);
  is >> rng;
  if (!is) throw ValidationError("checkpoint: corrupt generator state");
}

inline void check_finite(double v, const char* term, const std::string& where) {
  if (!std::isfinite(v)) throw NonFiniteLoss(term, where);
}

}  // namespace detail

// Owns the model, the auxiliary networks and their optimizers. Optimizers
// hold pointers into the members, so a Trainer is pinned in memory.
template <typename T>
class Trainer {
 public:
  Trainer(TrainConfig config, corpus::Vocabulary vocab) : config_(std::move(config)), vocab_(std::move(vocab)), rng_(config_.seed) {
    config_.validate();
    const auto dims = config_.model_dims(vocab_.size());
    model_ = vae::SentenceVae<T>(dims, rng_);
    if (config_.objectives.inf) {
      probes_.emplace(std::array<obj::LatentProbe<T>, 2>{obj::LatentProbe<T>("probe.n", dims.latent_dim(vae::Space::kNegation), rng_),
                                                        obj::LatentProbe<T>("probe.u", dims.latent_dim(vae::Space::kUncertainty), rng_)});
    }
    if (config_.objectives.adv) adversaries_.emplace(dims, rng_);
    if (config_.objectives.min) club_.emplace(dims, config_.club_hidden, rng_);

    std::vector<Parameter<T>*> main;
    auto collect = [](std::vector<Parameter<T>*>& out) { return [&out](Parameter<T>& p) { out.push_back(&p); }; };
    model_.visit(collect(main));
    if (probes_) {
      for (auto& p : *probes_) p.visit(collect(main));
    }
    main_opt_ = nn::Adam<T>(main, config_.learning_rate);
    if (adversaries_) {
      std::vector<Parameter<T>*> ps;
      adversaries_->visit(collect(ps));
      adv_opt_.emplace(ps, config_.adversary_learning_rate);
    }
    if (club_) {
      std::vector<Parameter<T>*> ps;
      club_->visit(collect(ps));
      club_opt_.emplace(ps, config_.club_learning_rate);
    }
  }

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // Reseeds the stream used for shuffling, noise, dropout and teacher
  // forcing, and records the seed.
  void set_determinism(std::uint64_t seed) {
    config_.seed = seed;
    rng_.seed(seed);
  }

  // Extends or shortens the schedule, e.g. to continue a finished run.
  void set_epochs(int epochs) {
    if (epochs < 1) throw ValidationError("config: epochs must be >= 1");
    config_.epochs = epochs;
  }

  LossRecord train_step(const Batch& batch) {
    if (batch.seqs.size() < 2) throw ValidationError("train_step: batch must hold at least 2 statements");
    const std::string where = "at epoch " + std::to_string(epoch_ + 1) + " step " + std::to_string(step_ + 1);
    vae::ForwardOptions opt;
    opt.training = true;
    opt.word_dropout = config_.word_dropout;
    opt.hidden_dropout = config_.hidden_dropout;
    opt.teacher_forcing = config_.teacher_forcing;

    LossRecord rec;
    main_opt_.zero_grad();
    Tape<T> tape;
    auto f = model_.forward(tape, batch.seqs, opt, rng_);
    const std::array<Matrix<T>, 3> z = {f.z[0].value(), f.z[1].value(), f.z[2].value()};

    if (club_) {
      club_opt_->zero_grad();
      Tape<T> ct;
      Var<T> l = obj::club_bank_loss(ct, z, *club_);
      rec.club = static_cast<double>(l.scalar());
      detail::check_finite(rec.club, "club", where);
      ct.backward(l);
      club_opt_->step(config_.grad_clip);
    }
    if (adversaries_) {
      adv_opt_->zero_grad();
      Tape<T> at;
      Var<T> l = obj::adv_classifier_total(at, z, batch.labels, *adversaries_);
      rec.adv_classifier = static_cast<double>(l.scalar());
      detail::check_finite(rec.adv_classifier, "adv_classifier", where);
      at.backward(l);
      adv_opt_->step(config_.grad_clip);
    }

    auto decoded = model_.decode(tape, f.z_all, batch.seqs, opt, rng_);
    Var<T> rec_loss = vae::reconstruction_loss(decoded);
    std::array<Var<T>, 3> kl;
    for (vae::Space s : vae::kSpaces) {
      kl[vae::index_of(s)] = vae::kl_standard_normal(f.mu[vae::index_of(s)], f.logvar[vae::index_of(s)]);
    }
    Var<T> elbo = vae::elbo_loss(rec_loss, kl, config_.beta);
    rec.reconstruction = static_cast<double>(rec_loss.scalar());
    for (std::size_t i = 0; i < 3; ++i) rec.kl[i] = static_cast<double>(kl[i].scalar());
    rec.elbo = static_cast<double>(elbo.scalar());
    detail::check_finite(rec.reconstruction, "reconstruction", where);
    for (std::size_t i = 0; i < 3; ++i) detail::check_finite(rec.kl[i], i == 0 ? "kl_n" : i == 1 ? "kl_u" : "kl_c", where);

    std::optional<Var<T>> inf, adv, min;
    if (probes_) {
      inf = obj::inf_loss(tape, f.z[0], batch.labels[0], (*probes_)[0]) + obj::inf_loss(tape, f.z[1], batch.labels[1], (*probes_)[1]);
      rec.inf = static_cast<double>(inf->scalar());
      detail::check_finite(rec.inf, "inf", where);
    }
    if (adversaries_) {
      adv = obj::adv_encoder_half(tape, f.z, *adversaries_);
      rec.adv_encoder = static_cast<double>(adv->scalar());
      detail::check_finite(rec.adv_encoder, "adv_encoder", where);
    }
    if (club_) {
      min = obj::min_loss(tape, f.z, *club_);
      rec.min = static_cast<double>(min->scalar());
      detail::check_finite(rec.min, "min", where);
    }
    Var<T> total = obj::total_loss(elbo, inf ? &*inf : nullptr, adv ? &*adv : nullptr, min ? &*min : nullptr,
                                   config_.effective_lambda());
    rec.total = static_cast<double>(total.scalar());
    detail::check_finite(rec.total, "total", where);
    tape.backward(total);
    main_opt_.step(config_.grad_clip);
    ++step_;
    return rec;
  }

  // One pass over `data` in a freshly shuffled order. A trailing batch
  // smaller than 2 is skipped.
  LossRecord train_epoch(const std::vector<Example>& data, const std::function<void(const LossRecord&)>& on_step = {}) {
    if (data.size() < 2) throw ValidationError("train: training split needs at least 2 statements");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    LossRecord sum;
    std::size_t batches = 0;
    const auto bs = static_cast<std::size_t>(config_.batch_size);
    for (std::size_t start = 0; start + 2 <= order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
      LossRecord r = train_step(Batch::gather(data, idx));
      if (on_step) on_step(r);
      sum += r;
      ++batches;
    }
    return sum.scaled(1.0 / static_cast<double>(batches));
  }

  // Post-hoc probes on posterior means plus inference-mode ELBO terms. Uses
  // its own generator so evaluation never perturbs the training stream.
  DevMetrics evaluate_dev(const std::vector<Example>& train, const std::vector<Example>& dev) {
    if (dev.empty()) throw ValidationError("train: dev split is empty");
    const std::size_t n_fit = std::min(train.size(), static_cast<std::size_t>(config_.dev_probe_train_examples));
    vae::Sequences fit_seqs, dev_seqs;
    std::array<std::vector<int>, 2> fit_y, dev_y;
    for (std::size_t i = 0; i < n_fit; ++i) {
      fit_seqs.push_back(train[i].ids);
      fit_y[0].push_back(train[i].negation);
      fit_y[1].push_back(train[i].uncertainty);
    }
    for (const auto& e : dev) {
      dev_seqs.push_back(e.ids);
      dev_y[0].push_back(e.negation);
      dev_y[1].push_back(e.uncertainty);
    }
    const auto fit_post = model_.posterior(fit_seqs);
    const auto dev_post = model_.posterior(dev_seqs);
    DevMetrics m;
    const auto& dims = model_.dims();
    for (int k = 0; k < 2; ++k) {
      const vae::Space s = k == 0 ? vae::Space::kNegation : vae::Space::kUncertainty;
      const Eigen::MatrixXd xf = fit_post.mu.middleCols(dims.latent_offset(s), dims.latent_dim(s));
      const Eigen::MatrixXd xd = dev_post.mu.middleCols(dims.latent_offset(s), dims.latent_dim(s));
      const auto& yf = fit_y[static_cast<std::size_t>(k)];
      const bool both = std::count(yf.begin(), yf.end(), 1) > 0 && std::count(yf.begin(), yf.end(), 0) > 0;
      if (!both) continue;
      const auto probe = stats::fit_logistic(xf, yf);
      m.probe[static_cast<std::size_t>(k)] = macro_prf(dev_y[static_cast<std::size_t>(k)], probe.predict(xd));
    }
    nn::Rng eval_rng(config_.seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(epoch_ + 1)));
    double rec = 0;
    std::array<double, 3> kl = {0, 0, 0};
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < dev_seqs.size(); start += kChunk) {
      const std::size_t end = std::min(dev_seqs.size(), start + kChunk);
      vae::Sequences chunk(dev_seqs.begin() + static_cast<std::ptrdiff_t>(start), dev_seqs.begin() + static_cast<std::ptrdiff_t>(end));
      Tape<T> tape;
      auto f = model_.forward(tape, chunk, vae::inference_options(), eval_rng, nullptr, nn::Binding::kFrozen);
      auto d = model_.decode(tape, f.z_all, chunk, vae::inference_options(), eval_rng, nn::Binding::kFrozen);
      const double w = static_cast<double>(end - start);
      rec += w * static_cast<double>(vae::reconstruction_loss(d).scalar());
      for (std::size_t i = 0; i < 3; ++i) kl[i] += w * static_cast<double>(vae::kl_standard_normal(f.mu[i], f.logvar[i]).scalar());
    }
    m.reconstruction = rec / static_cast<double>(dev_seqs.size());
    for (std::size_t i = 0; i < 3; ++i) m.kl[i] = kl[i] / static_cast<double>(dev_seqs.size());
    return m;
  }

  struct FitOptions {
    std::function<void(const std::string&)> progress;  // one line per epoch
    bool log_steps = true;
  };

  // Trains from the current epoch up to config.epochs, writing
  // metrics.jsonl, last.ckpt and best.ckpt into `out_dir`.
  void fit(const corpus::Dataset& data, const std::filesystem::path& out_dir, const FitOptions& options = {}) {
    if (data.train.statements.size() < 2) throw ValidationError("train: training split is empty");
    if (data.dev.statements.empty()) throw ValidationError("train: dev split is empty");
    const auto train = encode_statements(vocab_, data.train.statements);
    const auto dev = encode_statements(vocab_, data.dev.statements);
    std::filesystem::create_directories(out_dir);
    std::ofstream log(out_dir / "metrics.jsonl", epoch_ == 0 ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("cannot write " + (out_dir / "metrics.jsonl").string());
    for (int epoch = epoch_ + 1; epoch <= config_.epochs; ++epoch) {
      const LossRecord mean = train_epoch(train, [&](const LossRecord& r) {
        if (!options.log_steps) return;
        nlohmann::ordered_json j;
        j["type"] = "step";
        j["epoch"] = epoch;
        j["step"] = step_;
        j["losses"] = r.to_json();
        log << j.dump() << '\n';
      });
      epoch_ = epoch;
      const DevMetrics dm = evaluate_dev(train, dev);
      nlohmann::ordered_json rec;
      rec["type"] = "epoch";
      rec["epoch"] = epoch;
      rec["step"] = step_;
      rec["losses"] = mean.to_json();
      rec["dev"] = dm.to_json();
      history_.push_back(rec);
      log << rec.dump() << '\n';
      log.flush();
      const bool improved = dm.selection_score() > best_score_;
      if (improved) {
        best_score_ = dm.selection_score();
        best_epoch_ = epoch;
      }
      save(out_dir / "last.ckpt");
      if (improved) save(out_dir / "best.ckpt");
      if (options.progress) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "epoch %d/%d loss %.4f rec %.4f dev F1 n %.3f u %.3f%s", epoch, config_.epochs,
                      mean.total, mean.reconstruction, dm.probe[0].f1, dm.probe[1].f1, improved ? " *" : "");
        options.progress(buf);
      }
    }
  }

  // -------------------------------------------------------------------------
  // Checkpoints: magic line, one-line JSON header, raw little-endian
  // payload of the tensors listed in the header.

  void save(const std::filesystem::path& path) const {
    auto& self = const_cast<Trainer&>(*this);
    std::vector<std::pair<std::string, const Matrix<T>*>> tensors;
    self.visit_all([&](const std::string&, Parameter<T>& p) { tensors.emplace_back(p.name, &p.value); });
    nlohmann::ordered_json optimizers;
    auto add_opt = [&](const std::string& name, nn::Adam<T>& opt) {
      optimizers[name] = {{"steps", opt.steps()}};
      for (std::size_t i = 0; i < opt.params().size(); ++i) {
        tensors.emplace_back("adam." + name + "/" + opt.params()[i]->name + ".m", &opt.state()[i].m);
        tensors.emplace_back("adam." + name + "/" + opt.params()[i]->name + ".v", &opt.state()[i].v);
      }
    };
    add_opt("main", self.main_opt_);
    if (self.adv_opt_) add_opt("adversary", *self.adv_opt_);
    if (self.club_opt_) add_opt("club", *self.club_opt_);

    nlohmann::ordered_json header;
    header["format"] = "negunc-checkpoint";
    header["version"] = 1;
    header["scalar"] = scalar_name<T>();
    header["config"] = config_.to_json();
    header["vocab"] = vocab_.tokens();
    header["seed"] = config_.seed;
    header["epoch"] = epoch_;
    header["step"] = step_;
    header["best_score"] = best_score_;
    header["best_epoch"] = best_epoch_;
    header["rng"] = detail::rng_state(rng_);
    header["history"] = history_;
    header["optimizers"] = optimizers;
    nlohmann::ordered_json index = nlohmann::ordered_json::array();
    std::size_t offset = 0;
    for (const auto& [name, m] : tensors) {
      index.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}, {"offset", offset}});
      offset += static_cast<std::size_t>(m->size());
    }
    header["tensors"] = index;
    header["payload_elements"] = offset;

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
      out << kCheckpointMagic << header.dump() << '\n';
      for (const auto& [name, m] : tensors) {
        out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(sizeof(T) * static_cast<std::size_t>(m->size())));
      }
      if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  }

  static std::unique_ptr<Trainer> load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint " + path.string());
    std::string magic(std::strlen(kCheckpointMagic), '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (magic != kCheckpointMagic) throw ValidationError(path.string() + " is not a checkpoint");
    std::string line;
    std::getline(in, line);
    nlohmann::json h;
    try {
      h = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("checkpoint header: " + std::string(e.what()));
    }
    if (h.value("version", 0) != 1) throw ValidationError("checkpoint: unsupported version");
    if (h.value("scalar", std::string()) != scalar_name<T>()) {
      throw ValidationError("checkpoint: stored as " + h.value("scalar", std::string("?")) + ", loader expects " + scalar_name<T>());
    }
    auto trainer = std::make_unique<Trainer>(TrainConfig::from_json(h.at("config")),
                                             corpus::Vocabulary::from_tokens(h.at("vocab").get<std::vector<std::string>>()));
    std::map<std::string, Matrix<T>*> slots;
    trainer->visit_all([&](const std::string&, Parameter<T>& p) { slots[p.name] = &p.value; });
    auto opt_slots = [&](const std::string& name, nn::Adam<T>& opt) {
      opt.set_steps(h.at("optimizers").at(name).at("steps").get<long long>());
      for (std::size_t i = 0; i < opt.params().size(); ++i) {
        slots["adam." + name + "/" + opt.params()[i]->name + ".m"] = &opt.state()[i].m;
        slots["adam." + name + "/" + opt.params()[i]->name + ".v"] = &opt.state()[i].v;
      }
    };
    try {
      opt_slots("main", trainer->main_opt_);
      if (trainer->adv_opt_) opt_slots("adversary", *trainer->adv_opt_);
      if (trainer->club_opt_) opt_slots("club", *trainer->club_opt_);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("checkpoint: optimizer state missing: " + std::string(e.what()));
    }
    const auto& index = h.at("tensors");
    if (index.size() != slots.size()) throw ValidationError("checkpoint: tensor count does not match the configured model");
    std::vector<T> payload(h.at("payload_elements").get<std::size_t>());
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(sizeof(T) * payload.size()));
    if (!in) throw ValidationError("checkpoint: truncated payload");
    for (const auto& t : index) {
      const auto name = t.at("name").get<std::string>();
      auto it = slots.find(name);
      if (it == slots.end()) throw ValidationError("checkpoint: unexpected tensor " + name);
      Matrix<T>& dst = *it->second;
      if (dst.rows() != t.at("rows").get<Eigen::Index>() || dst.cols() != t.at("cols").get<Eigen::Index>()) {
        throw ValidationError("checkpoint: shape mismatch for " + name);
      }
      std::memcpy(dst.data(), payload.data() + t.at("offset").get<std::size_t>(), sizeof(T) * static_cast<std::size_t>(dst.size()));
    }
    trainer->epoch_ = h.at("epoch").get<int>();
    trainer->step_ = h.at("step").get<long long>();
    trainer->best_score_ = h.at("best_score").get<double>();
    trainer->best_epoch_ = h.at("best_epoch").get<int>();
    trainer->history_ = h.at("history");
    detail::set_rng_state(trainer->rng_, h.at("rng").get<std::string>());
    return trainer;
  }

  // Visits every trainable tensor with its group name.
  template <typename F>
  void visit_all(F&& f) {
    auto wrap = [&f](const char* group) { return [&f, group](Parameter<T>& p) { f(group, p); }; };
    model_.visit_encoder(wrap("encoder"));
    model_.visit_heads(wrap("heads"));
    model_.visit_decoder(wrap("decoder"));
    if (probes_) {
      for (auto& p : *probes_) p.visit(wrap("probes"));
    }
    if (adversaries_) adversaries_->visit(wrap("adversaries"));
    if (club_) club_->visit(wrap("club"));
  }

  vae::SentenceVae<T>& model() { return model_; }
  const TrainConfig& config() const { return config_; }
  const corpus::Vocabulary& vocab() const { return vocab_; }
  int epoch() const { return epoch_; }
  long long step() const { return step_; }
  int best_epoch() const { return best_epoch_; }
  double best_score() const { return best_score_; }
  const nlohmann::ordered_json& history() const { return history_; }
  bool has_probes() const { return probes_.has_value(); }
  bool has_adversaries() const { return adversaries_.has_value(); }
  bool has_club() const { return club_.has_value(); }

 private:
  TrainConfig config_;
  corpus::Vocabulary vocab_;
  nn::Rng rng_;
  vae::SentenceVae<T> model_;
  std::optional<std::array<obj::LatentProbe<T>, 2>> probes_;
  std::optional<obj::AdversaryBank<T>> adversaries_;
  std::optional<obj::ClubBank<T>> club_;
  nn::Adam<T> main_opt_;
  std::optional<nn::Adam<T>> adv_opt_;
  std::optional<nn::Adam<T>> club_opt_;
  int epoch_ = 0;
  long long step_ = 0;
  double best_score_ = -1.0;
  int best_epoch_ = 0;
  nlohmann::ordered_json history_ = nlohmann::ordered_json::array();
};

// Header of a checkpoint without its payload.
inline nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  std::string magic(std::strlen(kCheckpointMagic), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (magic != kCheckpointMagic) throw ValidationError(path.string() + " is not a checkpoint");
  std::string line;
  std::getline(in, line);
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint header: " + std::string(e.what()));
  }
}

// Resolves "runs/x/best" to "runs/x/best.ckpt" when only the latter exists.
inline std::filesystem::path resolve_checkpoint(const std::filesystem::path& p) {
  if (std::filesystem::is_regular_file(p)) return p;
  const std::filesystem::path with_ext = p.string() + ".ckpt";
  if (std::filesystem::is_regular_file(with_ext)) return with_ext;
  if (std::filesystem::is_directory(p) && std::filesystem::is_regular_file(p / "best.ckpt")) return p / "best.ckpt";
  throw ValidationError("checkpoint not found: " + p.string());
}

}  // namespace negunc::train

#endif  // NEGUNC_TRAINER_HPP_
