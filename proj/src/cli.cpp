#include "frn/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "frn/checkpoint.hpp"
#include "frn/dataset.hpp"
#include "frn/errors.hpp"
#include "frn/evaluation.hpp"
#include "frn/features.hpp"
#include "frn/grad_check.hpp"
#include "frn/manifest.hpp"
#include "frn/rng.hpp"
#include "frn/sampling.hpp"
#include "frn/synthetic.hpp"
#include "frn/training.hpp"
#include "frn/vocabulary.hpp"

namespace frn::cli {

namespace fs = std::filesystem;

namespace {

// Flag values for every subcommand. Defaults here are what --help shows.
struct Options {
  std::uint64_t seed = 0;
  std::string out;

  SyntheticConfig synthetic;

  std::vector<std::string> manifests;
  std::size_t vocab_max_size = 5000;
  std::size_t vocab_min_count = 2;

  std::string features;
  std::string train_manifest;
  std::string valid_manifest;
  std::string test_manifest;
  std::string vocab;
  ModelConfig model;
  TrainConfig train;

  std::string checkpoint;
  std::string manifest;
  std::string queries;
  std::size_t eval_batch = 256;

  double gc_step = 1e-4;
  double gc_tolerance = 1e-4;
};

struct Logger {
  std::ostream& err;
  void operator()(const std::string& line) const { err << "[frn] " << line << '\n'; }
};

fs::path prepare_out(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  fs::create_directories(out);
  return fs::path(out);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

// Resolved flags and config-file values for the run, beside its outputs. The
// section header lets the file be passed back through --config.
void write_run_config(const CLI::App& cmd, const fs::path& out_dir) {
  write_text(out_dir / "run_config.ini",
             "[" + cmd.get_name() + "]\n" + cmd.config_to_str(true, false));
}

ItemCatalog merged_catalog(std::initializer_list<const Manifest*> manifests) {
  ItemCatalog catalog;
  for (const Manifest* m : manifests) {
    if (m) merge_catalog(catalog, m->items);
  }
  return catalog;
}

void add_seed(CLI::App* cmd, Options& o) {
  cmd->add_option("--seed", o.seed, "Global seed; named sub-seeds derive from it");
}

void add_out(CLI::App* cmd, Options& o, bool required) {
  auto* opt = cmd->add_option("--out", o.out, "Output directory");
  if (required) opt->required();
}

CLI::Option* add_existing(CLI::App* cmd, const std::string& flag, std::string& target,
                          const std::string& help) {
  return cmd->add_option(flag, target, help)->check(CLI::ExistingFile);
}

// ---- subcommands -----------------------------------------------------------

int run_gen_synthetic(const CLI::App& app, Options& o, std::ostream& out, const Logger& log) {
  o.synthetic.seed = o.seed;
  o.synthetic.validate();
  const fs::path dir = prepare_out(o.out);
  const SyntheticDataset data = gen_synthetic(o.synthetic);
  write_features(data.items, dir / "features.frnf", o.synthetic.feature_dim);
  save_manifest(dir / "train.jsonl", data.train, data.catalog);
  save_manifest(dir / "valid.jsonl", data.valid, data.catalog);
  save_manifest(dir / "test.jsonl", data.test, data.catalog);

  std::vector<Outfit> test_positives;
  for (const Outfit& outfit : data.test) {
    if (outfit.label == 1) test_positives.push_back(outfit);
  }
  Rng fitb_rng(derive_seed(o.seed, "fitb"));
  const FitbBuild fitb = build_fitb(test_positives, data.catalog, fitb_rng);
  save_fitb(dir / "fitb_test.jsonl", fitb.queries);
  write_run_config(app, dir);
  log("wrote " + std::to_string(data.items.size()) + " items to " + dir.string());

  nlohmann::json j{{"items", data.items.size()},
                   {"train", data.train.size()},
                   {"valid", data.valid.size()},
                   {"test", data.test.size()},
                   {"fitb_queries", fitb.queries.size()},
                   {"fitb_skipped", fitb.skipped.size()},
                   {"oracle_accuracy", data.oracle_accuracy}};
  out << j.dump() << '\n';
  return kExitOk;
}

int run_build_vocab(const CLI::App& app, Options& o, std::ostream& out, const Logger& log) {
  ItemCatalog catalog;
  for (const auto& path : o.manifests) merge_catalog(catalog, load_manifest(path).items);
  std::vector<std::vector<std::string>> descriptions;
  for (const auto& [id, meta] : catalog) {
    if (meta.description) descriptions.push_back(*meta.description);
  }
  if (descriptions.empty()) throw InputError("build-vocab: no item descriptions in the manifests");
  const Vocabulary vocab = build_vocabulary(descriptions, o.vocab_max_size, o.vocab_min_count);
  const fs::path dir = prepare_out(o.out);
  save_vocabulary(vocab, dir / "vocab.txt");
  write_run_config(app, dir);
  log("vocabulary of " + std::to_string(vocab.size()) + " tokens from " +
      std::to_string(descriptions.size()) + " descriptions");
  out << nlohmann::json{{"vocab_size", vocab.size()}, {"descriptions", descriptions.size()}}.dump()
      << '\n';
  return kExitOk;
}

int run_train(const CLI::App& app, Options& o, std::ostream& out, const Logger& log) {
  o.train.seed = o.seed;
  o.train.validate();
  const FeatureStore store = read_features(o.features);
  const Manifest train_m = load_manifest(o.train_manifest);
  const Manifest valid_m = load_manifest(o.valid_manifest);
  std::unique_ptr<Manifest> test_m;
  if (!o.test_manifest.empty()) test_m = std::make_unique<Manifest>(load_manifest(o.test_manifest));
  const ItemCatalog catalog = merged_catalog({&train_m, &valid_m, test_m.get()});

  Vocabulary vocab;
  const bool vse = !o.vocab.empty();
  if (vse) vocab = load_vocabulary(o.vocab);
  ModelConfig mc = o.model;
  mc.feature_dim = store.dim();
  mc.vse_enabled = vse;
  mc.vocab_size = vse ? vocab.size() : 0;
  mc.validate();

  const ItemResolver resolver(store, &catalog, vse ? &vocab : nullptr);
  const ExampleSet train_set(resolver, train_m.outfits);
  const ExampleSet valid_set(resolver, valid_m.outfits);
  const fs::path dir = prepare_out(o.out);
  write_run_config(app, dir);
  log(std::string("training ") + (vse ? "FashionRN-VSE" : "FashionRN") + " on " +
      std::to_string(train_set.size()) + " outfits");

  const auto result = train<float>(mc, train_set, valid_set, o.train, [&](const EpochMetrics& m) {
    std::ostringstream line;
    line << "epoch " << m.epoch << " train_loss " << m.train_loss << " valid_loss "
         << m.valid_loss << " valid_auc " << m.valid_auc;
    log(line.str());
  });
  save_checkpoint(result.params, o.train, vocab, dir / "model.frnc");
  nlohmann::json report = to_json(result.report);
  write_text(dir / "train_report.json", report.dump(2) + "\n");

  nlohmann::json summary{{"best_epoch", result.report.best_epoch},
                         {"stopping_epoch", result.report.stopping_epoch},
                         {"best_valid_loss",
                          result.report.epochs[result.report.best_epoch - 1].valid_loss},
                         {"best_valid_auc",
                          result.report.epochs[result.report.best_epoch - 1].valid_auc}};
  if (test_m) {
    const ExampleSet test_set(resolver, test_m->outfits);
    summary["test_auc"] = eval_compat(result.params, test_set).auc;
  }
  out << summary.dump() << '\n';
  return kExitOk;
}

struct LoadedModel {
  Checkpoint<float> ckpt;
  FeatureStore store;
  ItemCatalog catalog;
  std::unique_ptr<ItemResolver> resolver;
};

// `with_text` false builds a visual-only resolver (embeddings need no text).
std::unique_ptr<LoadedModel> load_model(const Options& o, const Manifest* manifest,
                                        bool with_text = true) {
  auto m = std::make_unique<LoadedModel>(LoadedModel{load_checkpoint<float>(o.checkpoint),
                                                     read_features(o.features), {}, nullptr});
  if (m->ckpt.params.config.feature_dim != m->store.dim()) {
    throw DimensionError("checkpoint expects feature dim " +
                         std::to_string(m->ckpt.params.config.feature_dim) +
                         " but the feature file has " + std::to_string(m->store.dim()));
  }
  if (manifest) m->catalog = manifest->items;
  const bool text = with_text && m->ckpt.params.config.vse_enabled;
  if (text && !manifest) throw UsageError("a VSE checkpoint needs --manifest for descriptions");
  m->resolver = std::make_unique<ItemResolver>(m->store, &m->catalog, text ? &m->ckpt.vocab : nullptr);
  return m;
}

int run_eval_compat(const CLI::App& app, Options& o, std::ostream& out, const Logger& log) {
  const Manifest manifest = load_manifest(o.manifest);
  const auto model = load_model(o, &manifest);
  const ExampleSet set(*model->resolver, manifest.outfits);
  const EvalReport report = eval_compat(model->ckpt.params, set);
  const nlohmann::json j = to_json(report);
  if (!o.out.empty()) {
    const fs::path dir = prepare_out(o.out);
    write_text(dir / "eval_compat.json", j.dump(2) + "\n");
    write_run_config(app, dir);
  }
  log("scored " + std::to_string(set.size()) + " outfits");
  out << j.dump() << '\n';
  return kExitOk;
}

int run_eval_fitb(const CLI::App& app, Options& o, std::ostream& out, const Logger& log) {
  std::unique_ptr<Manifest> manifest;
  if (!o.manifest.empty()) manifest = std::make_unique<Manifest>(load_manifest(o.manifest));
  const auto model = load_model(o, manifest.get());
  const std::vector<FitbQuery> queries = load_fitb(o.queries);
  const FitbReport report = eval_fitb(model->ckpt.params, queries, *model->resolver, o.eval_batch);
  for (const auto& failure : report.failures) log("skipped query " + failure);
  if (!o.out.empty()) {
    const fs::path dir = prepare_out(o.out);
    write_text(dir / "eval_fitb.json", to_json(report, true).dump(2) + "\n");
    write_run_config(app, dir);
  }
  out << to_json(report).dump() << '\n';
  return kExitOk;
}

int run_score(const CLI::App&, Options& o, std::ostream& out, const Logger&) {
  const Manifest manifest = load_manifest(o.manifest);
  const auto model = load_model(o, &manifest);
  const ExampleSet set(*model->resolver, manifest.outfits);
  const auto scores = score_outfits(model->ckpt.params, set.inputs(), o.eval_batch);
  out.precision(9);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out << set.outfit(i).outfit_id << '\t' << scores[i].m_s << '\n';
  }
  return kExitOk;
}

int run_embed(const CLI::App& app, Options& o, std::ostream& out, const Logger& log) {
  std::unique_ptr<Manifest> manifest;
  if (!o.manifest.empty()) manifest = std::make_unique<Manifest>(load_manifest(o.manifest));
  const auto model = load_model(o, manifest.get(), false);

  std::vector<std::string> ids;
  if (manifest) {
    for (const auto& [id, meta] : manifest->items) ids.push_back(id);
  } else {
    for (const auto& rec : model->store.records()) ids.push_back(rec.item_id);
  }
  std::vector<ItemInput> items;
  items.reserve(ids.size());
  for (const auto& id : ids) items.push_back(model->resolver->resolve(id));

  const fs::path dir = prepare_out(o.out);
  const auto records = compute_embeddings(model->ckpt.params, items);
  write_features(records, dir / "embeddings.frnf", model->ckpt.params.config.projection_dim);
  std::vector<std::vector<double>> vectors;
  vectors.reserve(records.size());
  for (const auto& r : records) vectors.emplace_back(r.x.begin(), r.x.end());
  nlohmann::json j{{"items", records.size()}};
  if (vectors.size() >= 2) {
    const Pca2d pca = pca2d(vectors);
    write_coordinates(dir / "coords.tsv", ids, pca);
    j["explained_variance"] = pca.explained_variance;
    j["rank_deficient"] = pca.rank_deficient;
  } else {
    log("fewer than 2 items; no coordinate table written");
  }
  write_run_config(app, dir);
  out << j.dump() << '\n';
  return kExitOk;
}

int run_grad_check(const CLI::App&, Options& o, std::ostream& out, const Logger& log) {
  const ModelConfig mc = grad_check_config();
  Rng init_rng(derive_seed(o.seed, "init"));
  const auto params = init_params<double>(mc, init_rng);

  // Two 3-item outfits, one per label.
  Rng data_rng(derive_seed(o.seed, "grad-check-data"));
  std::vector<std::string> ids;
  std::vector<std::vector<float>> features;
  for (int i = 0; i < 6; ++i) {
    ids.push_back("item" + std::to_string(i));
    std::vector<float> x(mc.feature_dim);
    for (float& v : x) v = static_cast<float>(2.0 * uniform01(data_rng) - 1.0);
    features.push_back(std::move(x));
  }
  std::vector<std::vector<ItemInput>> outfits(2);
  for (int i = 0; i < 6; ++i) outfits[i / 3].push_back({ids[i], features[i], {}});
  const std::vector<int> labels{1, 0};

  const GradCheckReport report = grad_check(params, outfits, labels, o.gc_step, o.gc_tolerance);
  nlohmann::json j{{"max_rel_error", report.max_rel_error},
                   {"worst_parameter", report.worst_parameter},
                   {"checked", report.checked},
                   {"failures", report.failures.size()},
                   {"seconds", report.seconds},
                   {"passed", report.passed()}};
  for (const auto& f : report.failures) {
    log("mismatch in " + f.parameter + "[" + std::to_string(f.index) + "] analytic " +
        std::to_string(f.analytic) + " numeric " + std::to_string(f.numeric));
  }
  out << j.dump() << '\n';
  return report.passed() ? kExitOk : kExitInternal;
}

bool is_validation_error(const std::exception& e) {
  return dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InputError*>(&e) ||
         dynamic_cast<const ParameterError*>(&e) || dynamic_cast<const UsageError*>(&e) ||
         dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const ManifestError*>(&e) ||
         dynamic_cast<const FormatError*>(&e) || dynamic_cast<const IoError*>(&e) ||
         dynamic_cast<const SamplingError*>(&e);
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Set-compatibility scoring with relation networks", "frn"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "INI/TOML file of flag values; explicit flags win");
  app.require_subcommand(1);
  const Logger log{err};

  using Runner = int (*)(const CLI::App&, Options&, std::ostream&, const Logger&);
  std::vector<std::pair<CLI::App*, Runner>> commands;

  {
    auto* c = app.add_subcommand("gen-synthetic", "Generate a synthetic style dataset");
    add_seed(c, o);
    add_out(c, o, true);
    auto& s = o.synthetic;
    c->add_option("--styles", s.n_styles, "Number of styles");
    c->add_option("--dim", s.feature_dim, "Feature dimension");
    c->add_option("--categories", s.n_categories, "Number of categories");
    c->add_option("--sigma", s.sigma, "Item noise standard deviation");
    c->add_option("--items-per-cell", s.items_per_cell, "Items per (style, category)");
    c->add_option("--min-size", s.min_outfit_size, "Smallest outfit");
    c->add_option("--max-size", s.max_outfit_size, "Largest outfit");
    c->add_option("--n-train", s.n_train, "Training positives");
    c->add_option("--n-valid", s.n_valid, "Validation positives");
    c->add_option("--n-test", s.n_test, "Test positives");
    commands.emplace_back(c, run_gen_synthetic);
  }
  {
    auto* c = app.add_subcommand("build-vocab", "Build a description vocabulary");
    c->add_option("--manifest", o.manifests, "Manifest file(s) with descriptions")
        ->required()
        ->check(CLI::ExistingFile);
    add_out(c, o, true);
    c->add_option("--max-size", o.vocab_max_size, "Keep at most this many tokens");
    c->add_option("--min-count", o.vocab_min_count, "Drop tokens seen fewer times");
    commands.emplace_back(c, run_build_vocab);
  }
  {
    auto* c = app.add_subcommand("train", "Train a model; VSE when --vocab is given");
    add_seed(c, o);
    add_out(c, o, true);
    add_existing(c, "--features", o.features, "FRNF feature file")->required();
    add_existing(c, "--train", o.train_manifest, "Training manifest")->required();
    add_existing(c, "--valid", o.valid_manifest, "Validation manifest")->required();
    add_existing(c, "--test", o.test_manifest, "Optional test manifest, scored after training");
    add_existing(c, "--vocab", o.vocab, "Vocabulary file; enables the VSE variant");
    auto& m = o.model;
    c->add_option("--projection", m.projection_dim, "Item projection width");
    c->add_option("--g-layers", m.g_layers, "Widths of the pair network g")->delimiter(',');
    c->add_option("--f-layers", m.f_layers, "Widths of the set network f")->delimiter(',');
    c->add_option("--text-projection", m.text_projection_dim, "Description projection width");
    c->add_option("--dropout", m.dropout_rate, "Dropout rate after each g layer");
    auto& t = o.train;
    c->add_option("--lr", t.learning_rate, "Adam learning rate");
    c->add_option("--batch-size", t.batch_size, "Outfits per step");
    c->add_option("--max-epochs", t.max_epochs, "Epoch limit");
    c->add_option("--patience", t.patience, "Non-improving epochs before stopping");
    commands.emplace_back(c, run_train);
  }
  {
    auto* c = app.add_subcommand("eval-compat", "Compatibility AUC on a labeled manifest");
    add_out(c, o, false);
    add_existing(c, "--checkpoint", o.checkpoint, "Model checkpoint")->required();
    add_existing(c, "--features", o.features, "FRNF feature file")->required();
    add_existing(c, "--manifest", o.manifest, "Labeled outfits")->required();
    commands.emplace_back(c, run_eval_compat);
  }
  {
    auto* c = app.add_subcommand("eval-fitb", "Fill-in-the-blank accuracy");
    add_out(c, o, false);
    add_existing(c, "--checkpoint", o.checkpoint, "Model checkpoint")->required();
    add_existing(c, "--features", o.features, "FRNF feature file")->required();
    add_existing(c, "--queries", o.queries, "FITB query file")->required();
    add_existing(c, "--manifest", o.manifest, "Item descriptions (VSE checkpoints)");
    c->add_option("--batch-size", o.eval_batch, "Outfits per forward pass");
    commands.emplace_back(c, run_eval_fitb);
  }
  {
    auto* c = app.add_subcommand("score", "Print m_s for every outfit in a manifest");
    add_existing(c, "--checkpoint", o.checkpoint, "Model checkpoint")->required();
    add_existing(c, "--features", o.features, "FRNF feature file")->required();
    add_existing(c, "--manifest", o.manifest, "Outfits to score")->required();
    c->add_option("--batch-size", o.eval_batch, "Outfits per forward pass");
    commands.emplace_back(c, run_score);
  }
  {
    auto* c = app.add_subcommand("embed", "Export item embeddings and a 2D PCA table");
    add_out(c, o, true);
    add_existing(c, "--checkpoint", o.checkpoint, "Model checkpoint")->required();
    add_existing(c, "--features", o.features, "FRNF feature file")->required();
    add_existing(c, "--manifest", o.manifest, "Restrict to items in this manifest");
    commands.emplace_back(c, run_embed);
  }
  {
    auto* c = app.add_subcommand("grad-check", "Finite-difference gradient check");
    add_seed(c, o);
    c->add_option("--step", o.gc_step, "Central difference step");
    c->add_option("--tolerance", o.gc_tolerance, "Maximum relative error");
    commands.emplace_back(c, run_grad_check);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  for (const auto& [cmd, run] : commands) {
    if (!cmd->parsed()) continue;
    try {
      return run(*cmd, o, out, log);
    } catch (const std::exception& e) {
      err << "frn " << cmd->get_name() << ": " << e.what() << '\n';
      return is_validation_error(e) ? kExitUsage : kExitInternal;
    }
  }
  err << app.help();
  return kExitUsage;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace frn::cli
