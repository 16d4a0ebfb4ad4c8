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


// Command-line front end. run() returns the process exit code:
//   0 success, 1 invalid input or usage, 2 runtime failure.

#ifndef NEGUNC_CLI_HPP_
#define NEGUNC_CLI_HPP_

#include "CLI11.hpp"
#include "json.hpp"
#include "negunc/corpus.hpp"
#include "negunc/errors.hpp"
#include "negunc/eval.hpp"
#include "negunc/report.hpp"
#include "negunc/trainer.hpp"
#include "negunc/weaklabeler.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace negunc::cli {

namespace fs = std::filesystem;
using corpus::Factor;
using nlohmann::ordered_json;

inline constexpr char kOutRootEnv[] = "NEGUNC_OUT_ROOT";

// Relative output paths land under $NEGUNC_OUT_ROOT when it is set.
inline fs::path output_path(const std::string& out) {
  fs::path p(out);
  if (p.is_relative()) {
    if (const char* root = std::getenv(kOutRootEnv); root != nullptr && *root != '\0') p = fs::path(root) / p;
  }
  return p;
}

// Creates `dir`, refusing to reuse a non-empty one unless forced.
inline void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ValidationError("output path " + dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force) throw ValidationError("output directory " + dir.string() + " is not empty (use --force)");
  }
  fs::create_directories(dir);
}

inline void require_exists(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw ValidationError(std::string(what) + " not found: " + p.string());
}

inline void write_json(const fs::path& p, const ordered_json& j) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

inline ordered_json dataset_manifest(const corpus::Dataset& d) {
  return {{"fingerprint", corpus::fingerprint(d)},
          {"train", d.train.statements.size()},
          {"dev", d.dev.statements.size()},
          {"test", d.test.statements.size()}};
}

inline void save_dataset_dir(const corpus::Dataset& d, const fs::path& dir) {
  corpus::save_dataset(d, dir);
  write_json(dir / "manifest.json", dataset_manifest(d));
}

struct Options {
  // prepare-data / gen-synthetic
  std::string input, config, out, data, models, checkpoint, factor = "both", objectives, split = "test", direction = "remove";
  std::string precision = "float32";
  std::size_t n = 20000, max_length = corpus::kDefaultMaxLength, k = 20, limit = 0, max_train_examples = 5000;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, batch_size;
  std::optional<double> learning_rate;
  double alpha = 1.0;
  int resamples = 30, k_neighbors = 3, decode_length = 20;
  bool force = false, resume = false, no_generation = false, quiet = false;
  std::string merge_gold;
  std::vector<std::string> runs;
};

// ---------------------------------------------------------------------------
// Commands

inline int cmd_prepare_data(const Options& o, std::ostream& log) {
  require_exists(o.input, "input");
  const fs::path out = output_path(o.out);
  const auto raw = corpus::read_raw_jsonl(o.input);
  const auto data = corpus::prepare_statements(raw, o.max_length);
  prepare_output_dir(out, o.force);
  save_dataset_dir(data, out);
  log << "prepared " << data.train.statements.size() << "/" << data.dev.statements.size() << "/"
      << data.test.statements.size() << " statements into " << out.string() << '\n';
  return 0;
}

inline int cmd_gen_synthetic(const Options& o, std::ostream& log) {
  require_exists(o.config, "grammar config");
  auto grammar = corpus::SyntheticGrammar::load(o.config);
  if (o.seed) grammar.seed = *o.seed;
  if (o.n == 0) throw ValidationError("--n must be positive");
  const auto data = corpus::generate_synthetic_corpus(grammar, o.n);
  const fs::path out = output_path(o.out);
  prepare_output_dir(out, o.force);
  save_dataset_dir(data, out);
  log << "generated " << o.n << " statements (seed " << grammar.seed << ") into " << out.string() << '\n';
  return 0;
}

inline std::vector<Factor> factors_from(const std::string& s) {
  if (s == "both") return {Factor::kNegation, Factor::kUncertainty};
  auto f = corpus::parse_factor(s);
  if (!f) throw ValidationError("--factor must be negation, uncertainty or both");
  return {*f};
}

inline int cmd_train_weaklabeler(const Options& o, std::ostream& log) {
  require_exists(o.data, "dataset");
  const auto data = corpus::load_dataset(o.data, false);
  if (data.train.statements.empty()) throw ValidationError("weak labeler: training split is empty");
  const fs::path out = output_path(o.out);
  prepare_output_dir(out, o.force);
  ordered_json metrics;
  for (Factor f : factors_from(o.factor)) {
    const auto model = weak::fit(data.train.statements, f, o.k, o.alpha);
    weak::save_model(model, out / (corpus::to_string(f) + ".json"));
    ordered_json m = {{"k", o.k}, {"alpha", o.alpha}, {"features", model.features.tokens}};
    for (auto sn : {corpus::SplitName::kDev, corpus::SplitName::kTest}) {
      const auto& st = data.split(sn).statements;
      if (st.empty()) continue;
      const auto s = weak::evaluate(model, st);
      m[corpus::to_string(sn)] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
      log << corpus::to_string(f) << " " << corpus::to_string(sn) << " F1 " << s.f1 << '\n';
    }
    metrics[corpus::to_string(f)] = m;
  }
  metrics["data_fingerprint"] = corpus::fingerprint(data);
  write_json(out / "metrics.json", metrics);
  return 0;
}

inline int cmd_weak_label(const Options& o, std::ostream& log) {
  require_exists(o.models, "model directory");
  require_exists(o.input, "input");
  const auto neg = weak::load_model(fs::path(o.models) / "negation.json");
  const auto unc = weak::load_model(fs::path(o.models) / "uncertainty.json");
  corpus::Dataset data;
  if (fs::is_directory(o.input)) {
    data = corpus::load_dataset(o.input, false);
  } else {
    data = corpus::prepare_statements(corpus::read_raw_jsonl(o.input), o.max_length);
  }
  for (auto sn : {corpus::SplitName::kTrain, corpus::SplitName::kDev, corpus::SplitName::kTest}) {
    data.split(sn).statements = weak::weak_label_corpus(neg, unc, data.split(sn).statements);
  }
  if (!o.merge_gold.empty()) {
    require_exists(o.merge_gold, "gold dataset");
    auto gold = corpus::load_dataset(o.merge_gold);
    auto& train = gold.train.statements;
    train.insert(train.end(), data.train.statements.begin(), data.train.statements.end());
    data = std::move(gold);
  }
  const fs::path out = output_path(o.out);
  prepare_output_dir(out, o.force);
  save_dataset_dir(data, out);
  log << "labeled " << data.train.statements.size() + data.dev.statements.size() + data.test.statements.size()
      << " statements into " << out.string() << '\n';
  return 0;
}

inline train::TrainConfig effective_config(const Options& o) {
  train::TrainConfig c;
  if (!o.config.empty()) {
    require_exists(o.config, "train config");
    c = train::TrainConfig::load(o.config);
  }
  if (!o.objectives.empty()) c.objectives = train::ObjectiveSet::parse(o.objectives);
  if (o.seed) c.seed = *o.seed;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.batch_size) c.batch_size = *o.batch_size;
  if (o.learning_rate) c.learning_rate = *o.learning_rate;
  c.validate();
  return c;
}

template <typename T>
int train_with(const Options& o, const train::TrainConfig& cfg, const corpus::Dataset& data, const fs::path& out,
               std::ostream& log) {
  std::unique_ptr<train::Trainer<T>> trainer;
  if (o.resume && fs::exists(out / "last.ckpt")) {
    trainer = train::Trainer<T>::load(out / "last.ckpt");
    if (trainer->config().hash() != [&] {
          auto c = cfg;
          c.epochs = trainer->config().epochs;
          return c.hash();
        }()) {
      throw ValidationError("--resume: configuration differs from the checkpoint in " + out.string());
    }
    trainer->set_epochs(cfg.epochs);
    log << "resuming from epoch " << trainer->epoch() << '\n';
  } else {
    const auto vocab = corpus::Vocabulary::build(data.train.statements, cfg.min_frequency);
    trainer = std::make_unique<train::Trainer<T>>(cfg, vocab);
  }
  typename train::Trainer<T>::FitOptions fo;
  if (!o.quiet) fo.progress = [&log](const std::string& s) { log << s << '\n' << std::flush; };
  trainer->fit(data, out, fo);
  log << "best epoch " << trainer->best_epoch() << " (dev score " << trainer->best_score() << ")\n";
  return 0;
}

inline int cmd_train(const Options& o, std::ostream& log) {
  require_exists(o.data, "dataset");
  const auto cfg = effective_config(o);
  const auto data = corpus::load_dataset(o.data);
  const fs::path out = output_path(o.out);
  if (!(o.resume && fs::exists(out / "last.ckpt"))) prepare_output_dir(out, o.force);
  ordered_json manifest = {{"config_hash", cfg.hash()},
                           {"seed", cfg.seed},
                           {"objectives", cfg.objectives.label()},
                           {"precision", o.precision},
                           {"data", o.data},
                           {"data_fingerprint", corpus::fingerprint(data)}};
  write_json(out / "config.json", cfg.to_json());
  write_json(out / "manifest.json", manifest);
  if (o.precision == "float32") return train_with<float>(o, cfg, data, out, log);
  if (o.precision == "float64") return train_with<double>(o, cfg, data, out, log);
  throw ValidationError("--precision must be float32 or float64");
}

inline ordered_json eval_meta(const nlohmann::json& header, const fs::path& ckpt, const corpus::Dataset& data,
                              const eval::EvalOptions& opt) {
  const auto cfg = train::TrainConfig::from_json(header.at("config"));
  return {{"checkpoint", ckpt.string()},
          {"epoch", header.at("epoch")},
          {"objectives", cfg.objectives.label()},
          {"seed", cfg.seed},
          {"config_hash", cfg.hash()},
          {"data_fingerprint", corpus::fingerprint(data)},
          {"eval_seed", opt.seed},
          {"resamples", opt.resamples},
          {"k_neighbors", opt.k_neighbors}};
}

template <typename T>
int evaluate_with(const Options& o, const fs::path& ckpt, const nlohmann::json& header, const corpus::Dataset& data,
                  const fs::path& out, std::ostream& log) {
  auto trainer = train::Trainer<T>::load(ckpt);
  eval::EvalOptions opt;
  opt.resamples = o.resamples;
  opt.seed = o.seed.value_or(1);
  opt.k_neighbors = o.k_neighbors;
  opt.max_train_examples = o.max_train_examples;
  opt.max_length = o.decode_length;
  opt.generation = !o.no_generation;
  auto& model = trainer->model();
  const auto rep = eval::evaluate(model, trainer->vocab(), data, opt);
  const ordered_json meta = eval_meta(header, ckpt, data, opt);
  ordered_json summary;
  summary["meta"] = meta;
  for (const auto& [name, section] : rep.sections()) {
    ordered_json doc = *section;
    doc["meta"] = meta;
    write_json(out / (name + ".json"), doc);
    summary[name] = *section;
  }
  write_json(out / "summary.json", summary);
  const auto dump = eval::dump_latents(model, trainer->vocab(), data.test.statements, 1, opt.seed + 1);
  eval::write_dump_csv(dump, out / "latents_test.csv");
  eval::export_projection(dump, out / "projection");
  log << "n-latent F1 (negation) " << rep.informativeness["n"]["n"]["f1"].template get<double>() << ", u-latent F1 (uncertainty) "
      << rep.informativeness["u"]["u"]["f1"].template get<double>() << ", MIG n " << rep.mig["n"]["mig"].template get<double>()
      << " u " << rep.mig["u"]["mig"].template get<double>() << '\n';
  return 0;
}

inline int cmd_evaluate(const Options& o, std::ostream& log) {
  const fs::path ckpt = train::resolve_checkpoint(o.checkpoint);
  require_exists(o.data, "dataset");
  const auto data = corpus::load_dataset(o.data);
  const auto header = train::read_checkpoint_header(ckpt);
  const fs::path out = output_path(o.out);
  prepare_output_dir(out, o.force);
  const std::string scalar = header.value("scalar", std::string());
  if (scalar == "float32") return evaluate_with<float>(o, ckpt, header, data, out, log);
  if (scalar == "float64") return evaluate_with<double>(o, ckpt, header, data, out, log);
  throw ValidationError("checkpoint has unknown scalar type '" + scalar + "'");
}

template <typename T>
int transfer_with(const Options& o, const fs::path& ckpt, const corpus::Dataset& data, const fs::path& out, std::ostream& log) {
  auto trainer = train::Trainer<T>::load(ckpt);
  auto& model = trainer->model();
  const auto& vocab = trainer->vocab();
  const auto factors = factors_from(o.factor);
  if (o.direction != "remove" && o.direction != "add") throw ValidationError("--direction must be remove or add");
  const auto direction = o.direction == "remove" ? eval::Direction::kRemove : eval::Direction::kAdd;
  auto split = corpus::parse_split(o.split);
  if (!split) throw ValidationError("--split must be train, dev or test");
  std::vector<corpus::Statement> statements = data.split(*split).statements;
  if (o.limit > 0 && statements.size() > o.limit) statements.resize(o.limit);
  const std::uint64_t seed = o.seed.value_or(1);
  std::vector<corpus::Statement> train_subset(
      data.train.statements.begin(), data.train.statements.begin() + static_cast<long>(std::min(o.max_train_examples, data.train.statements.size())));
  const auto train_dump = eval::dump_latents(model, vocab, train_subset, o.resamples, seed);
  const auto centroids = eval::class_centroids(train_dump);
  auto [seqs, lengths] = eval::encode_split(vocab, statements);
  ordered_json summary;
  std::ofstream examples(out / "transfer.jsonl");
  for (Factor f : factors) {
    const auto probe = eval::fit_probe(train_dump, eval::target_space(f), f);
    std::vector<int> gold;
    for (const auto& s : statements) gold.push_back(s.label(f));
    const auto [rep, outcomes] = eval::controlled_transfer(model, centroids, probe, seqs, gold, f, direction, o.decode_length);
    for (std::size_t i = 0; i < statements.size(); ++i) {
      if (!outcomes[i]) continue;
      ordered_json j = {{"id", statements[i].id},
                        {"factor", corpus::to_string(f)},
                        {"direction", o.direction},
                        {"input", statements[i].tokens},
                        {"output", vocab.decode(outcomes[i]->tokens)},
                        {"success", outcomes[i]->success}};
      examples << j.dump() << '\n';
    }
    summary[eval::factor_key(f)] = {{"direction", o.direction}, {"accuracy", rep.accuracy()}, {"attempted", rep.attempted},
                                    {"succeeded", rep.succeeded}, {"skipped", rep.skipped}};
    log << corpus::to_string(f) << " " << o.direction << " accuracy " << rep.accuracy() << " (" << rep.attempted
        << " attempted, " << rep.skipped << " skipped)\n";
  }
  summary["seed"] = seed;
  summary["checkpoint"] = ckpt.string();
  summary["data_fingerprint"] = corpus::fingerprint(data);
  summary["config_hash"] = trainer->config().hash();
  write_json(out / "summary.json", summary);
  return 0;
}

inline int cmd_transfer(const Options& o, std::ostream& log) {
  const fs::path ckpt = train::resolve_checkpoint(o.checkpoint);
  require_exists(o.data, "dataset");
  const auto data = corpus::load_dataset(o.data);
  const auto header = train::read_checkpoint_header(ckpt);
  const fs::path out = output_path(o.out);
  prepare_output_dir(out, o.force);
  const std::string scalar = header.value("scalar", std::string());
  if (scalar == "float32") return transfer_with<float>(o, ckpt, data, out, log);
  if (scalar == "float64") return transfer_with<double>(o, ckpt, data, out, log);
  throw ValidationError("checkpoint has unknown scalar type '" + scalar + "'");
}

inline int cmd_report(const Options& o, std::ostream& log) {
  std::vector<report::RunSummary> runs;
  for (const auto& r : o.runs) runs.push_back(report::load_run(r));
  report::check_fingerprints(runs);
  const fs::path out = output_path(o.out);
  prepare_output_dir(out, o.force);
  const auto rep = report::write_report(runs, out);
  log << "compared " << runs.size() << " runs across " << rep.at("objectives").size() << " objective sets into " << out.string()
      << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"negunc: disentangled negation and uncertainty sentence VAE"};
  app.require_subcommand(1);
  Options o;

  auto* prep = app.add_subcommand("prepare-data", "Split and label cue-annotated sentences into statement datasets");
  prep->add_option("--input", o.input, "Raw sentences (JSONL)")->required();
  prep->add_option("--max-length", o.max_length, "Drop statements longer than this");

  auto* gen = app.add_subcommand("gen-synthetic", "Generate a synthetic statement corpus");
  gen->add_option("--config", o.config, "Grammar config (JSON)")->required();
  gen->add_option("--n", o.n, "Number of statements");

  auto* twl = app.add_subcommand("train-weaklabeler", "Fit naive Bayes weak labelers on a gold dataset");
  twl->add_option("--data", o.data, "Dataset directory")->required();
  twl->add_option("--factor", o.factor, "negation, uncertainty or both");
  twl->add_option("--k", o.k, "Number of selected features");
  twl->add_option("--alpha", o.alpha, "Additive smoothing");

  auto* wl = app.add_subcommand("weak-label", "Label statements with fitted weak labelers");
  wl->add_option("--models", o.models, "Directory with negation.json and uncertainty.json")->required();
  wl->add_option("--input", o.input, "Dataset directory or raw sentences (JSONL)")->required();
  wl->add_option("--merge-gold", o.merge_gold, "Append the weak training split to this gold dataset");
  wl->add_option("--max-length", o.max_length, "Drop statements longer than this");

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", o.config, "Training config (JSON)");
  tr->add_option("--data", o.data, "Dataset directory")->required();
  tr->add_option("--objectives", o.objectives, "Comma-separated subset of inf,adv,min, or elbo");
  tr->add_option("--epochs", o.epochs, "Override the number of epochs");
  tr->add_option("--batch-size", o.batch_size, "Override the batch size");
  tr->add_option("--learning-rate", o.learning_rate, "Override the main learning rate");
  tr->add_option("--precision", o.precision, "float32 or float64");
  tr->add_flag("--resume", o.resume, "Continue from last.ckpt in the output directory");
  tr->add_flag("--quiet", o.quiet, "No per-epoch progress");

  auto* ev = app.add_subcommand("evaluate", "Compute every evaluation report for a checkpoint");
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint file or run directory")->required();
  ev->add_option("--data", o.data, "Dataset directory")->required();
  ev->add_option("--resamples", o.resamples, "Latent resamples per statement");
  ev->add_option("--k-neighbors", o.k_neighbors, "Neighbors of the MI estimator");
  ev->add_option("--max-train-examples", o.max_train_examples, "Training statements used to fit probes");
  ev->add_option("--decode-length", o.decode_length, "Greedy decoding limit");
  ev->add_flag("--no-generation", o.no_generation, "Skip BLEU, perplexity, consistency and transfer");

  auto* tf = app.add_subcommand("transfer", "Flip a factor by overriding its latent");
  tf->add_option("--checkpoint", o.checkpoint, "Checkpoint file or run directory")->required();
  tf->add_option("--data", o.data, "Dataset directory")->required();
  tf->add_option("--factor", o.factor, "negation, uncertainty or both");
  tf->add_option("--direction", o.direction, "remove or add");
  tf->add_option("--split", o.split, "Split to transfer");
  tf->add_option("--limit", o.limit, "Use at most this many statements (0 = all)");
  tf->add_option("--resamples", o.resamples, "Latent resamples used to fit the probe");
  tf->add_option("--max-train-examples", o.max_train_examples, "Training statements used for centroids and probes");
  tf->add_option("--decode-length", o.decode_length, "Greedy decoding limit");

  auto* rp = app.add_subcommand("report", "Compare evaluated runs");
  rp->add_option("--runs", o.runs, "Evaluation output directories")->required()->expected(1, -1);

  for (auto* sub : {prep, gen, twl, wl, tr, ev, tf, rp}) {
    sub->add_option("--out", o.out, "Output directory")->required();
    sub->add_flag("--force", o.force, "Overwrite a non-empty output directory");
  }
  for (auto* sub : {gen, tr, ev, tf}) sub->add_option("--seed", o.seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  try {
    if (prep->parsed()) return cmd_prepare_data(o, out);
    if (gen->parsed()) return cmd_gen_synthetic(o, out);
    if (twl->parsed()) return cmd_train_weaklabeler(o, out);
    if (wl->parsed()) return cmd_weak_label(o, out);
    if (tr->parsed()) return cmd_train(o, out);
    if (ev->parsed()) return cmd_evaluate(o, out);
    if (tf->parsed()) return cmd_transfer(o, out);
    if (rp->parsed()) return cmd_report(o, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "runtime failure: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace negunc::cli

#endif  // NEGUNC_CLI_HPP_
