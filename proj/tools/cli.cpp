#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>

#include "kinship/checkpoint.hpp"
#include "kinship/config_file.hpp"
#include "kinship/csv_io.hpp"
#include "kinship/error.hpp"
#include "kinship/gradcheck.hpp"
#include "kinship/metrics.hpp"
#include "kinship/synthetic.hpp"
#include "kinship/train.hpp"

namespace kinship::cli {

namespace fs = std::filesystem;

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// KINSHIP_SEED, when set, replaces the built-in default seed of 0.
std::uint64_t default_seed() {
  const char* env = std::getenv("KINSHIP_SEED");
  if (env == nullptr || *env == '\0') return 0;
  std::uint64_t seed = 0;
  const char* end = env + std::char_traits<char>::length(env);
  auto [ptr, ec] = std::from_chars(env, end, seed);
  if (ec != std::errc() || ptr != end) throw ConfigError(std::string("KINSHIP_SEED is not an unsigned integer: '") + env + "'");
  return seed;
}

std::vector<PredictionSet> read_submissions(const std::vector<std::string>& paths) {
  std::vector<PredictionSet> sets;
  for (const auto& p : paths) sets.push_back(parse_submission_csv(fs::path(p)));
  return sets;
}

// Writes to `path`, or to `out` when the path is empty.
void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open '" + path + "' for writing");
  file << text;
}

std::optional<double> auc_if_labeled(const PredictionSet& predictions, std::span<const ImagePair> pairs) {
  LabelSet labels;
  bool pos = false, neg = false;
  for (const auto& p : pairs) {
    if (p.label < 0) return std::nullopt;
    labels.add(p.pair_id, p.label);
    pos = pos || p.label == 1;
    neg = neg || p.label == 0;
  }
  if (!pos || !neg) return std::nullopt;
  return roc_auc(predictions, labels);
}

fs::path resolve(const fs::path& base, const std::string& value) {
  const fs::path p(value);
  return p.is_absolute() ? p : base / p;
}

struct GenArgs {
  SyntheticOptions options;
  std::string out;
};

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::string out;
  std::string data;
};

struct PredictArgs {
  std::string checkpoint;
  std::string pairs;
  std::string images;
  std::string out;
  std::string name;
  std::size_t threads = 0;
};

struct EnsembleArgs {
  std::vector<std::string> inputs;
  std::vector<double> weights;
  bool automatic = false;
  std::string labels;
  double lambda = 0.5;
  std::string out;
  std::string name = "ensemble";
};

struct TableArgs {
  std::vector<std::string> inputs;
  std::string labels;
  std::string format = "text";
  std::string out;
};

struct GradArgs {
  std::uint64_t seed = 0;
  std::size_t shapes = 10;
  double tolerance = 1e-4;
};

void cmd_gen(const GenArgs& a, std::ostream& out) {
  const SyntheticKinshipSet set = generate_synthetic(a.options);
  fs::create_directories(a.out);
  write_synthetic(set, a.out);
  std::size_t images = 0;
  for (const auto& p : set.persons) images += p.images.size();
  out << "wrote " << images << " images of " << set.persons.size() << " persons, " << set.relations.size()
      << " relations, " << set.holdout.size() << " holdout pairs to " << a.out << "\n";
}

void cmd_train(const TrainArgs& a, std::ostream& out) {
  KeyValueConfig kv = KeyValueConfig::load(a.config);
  kv.reject_unknown({"images", "relationships", "holdout", "checkpoint", "history", "threads", "model", "input",
                     "stages", "seed", "init_std", "norm_eps", "combinator", "head_hidden", "head_init_std",
                     "epochs", "batch_size", "learning_rate", "momentum", "negative_ratio", "pairs_per_relation",
                     "grad_clip", "weight_decay", "lr_schedule", "average_from"});
  if (a.seed) {
    kv.set("seed", std::to_string(*a.seed));
  } else if (!kv.has("seed")) {
    kv.set("seed", std::to_string(default_seed()));
  }
  if (a.epochs) kv.set("epochs", std::to_string(*a.epochs));
  if (!a.out.empty()) kv.set("checkpoint", fs::absolute(a.out).string());

  const fs::path base = a.data.empty() ? fs::path(a.config).parent_path() : fs::path(a.data);
  PersonImages images = load_person_images(resolve(base, kv.get("images")));
  std::vector<RelationshipRecord> relations = parse_relationship_csv(resolve(base, kv.get("relationships")));
  std::vector<ImagePair> holdout;
  if (kv.has("holdout")) {
    holdout = load_image_pairs(resolve(base, kv.get("holdout")), images);
    exclude_families(relations, images, families_in(holdout));
  }

  SiameseModel model(siamese_config_from(kv));
  const TrainConfig config = train_config_from(kv);
  out << "training " << model.config().backbone.name << " + " << to_string(model.config().combinator) << " ("
      << model.parameters().scalar_count() << " parameters) on " << relations.size() << " relations, "
      << config.epochs << " epochs\n";
  const TrainResult result = train(model, relations, images, config, holdout, [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << " loss " << fixed6(r.loss);
    if (!std::isnan(r.holdout_auc)) out << " holdout_auc " << fixed6(r.holdout_auc);
    out << "\n" << std::flush;
  });

  const fs::path checkpoint = resolve(base, kv.get("checkpoint"));
  if (checkpoint.has_parent_path()) fs::create_directories(checkpoint.parent_path());
  save_checkpoint(checkpoint, model);
  out << "checkpoint " << checkpoint.string() << "\n";
  if (kv.has("history")) {
    const fs::path history = resolve(base, kv.get("history"));
    std::ofstream file(history, std::ios::binary);
    if (!file) throw IoError("cannot open '" + history.string() + "' for writing");
    write_history_csv(file, result.history);
  }
}

void cmd_predict(const PredictArgs& a, std::ostream& out) {
  const SiameseModel model = load_checkpoint(fs::path(a.checkpoint));
  const PersonImages images = load_person_images(a.images);
  const std::vector<ImagePair> pairs = load_image_pairs(a.pairs, images);
  const std::string name = a.name.empty() ? fs::path(a.out).stem().string() : a.name;
  const PredictionSet predictions = predict(model, pairs, name, a.threads);
  write_submission_csv(fs::path(a.out), predictions);
  out << "wrote " << predictions.size() << " predictions to " << a.out << "\n";
  if (auto auc = auc_if_labeled(predictions, pairs)) out << "auc " << fixed6(*auc) << "\n";
}

void cmd_baseline(const PredictArgs& a, std::ostream& out) {
  const PersonImages images = load_person_images(a.images);
  const std::vector<ImagePair> pairs = load_image_pairs(a.pairs, images);
  const PredictionSet predictions = pixel_distance_baseline(pairs, a.name.empty() ? "pixel-baseline" : a.name);
  if (!a.out.empty()) {
    write_submission_csv(fs::path(a.out), predictions);
    out << "wrote " << predictions.size() << " predictions to " << a.out << "\n";
  }
  if (auto auc = auc_if_labeled(predictions, pairs)) out << "auc " << fixed6(*auc) << "\n";
}

void cmd_ensemble(const EnsembleArgs& a, std::ostream& out) {
  const auto sets = read_submissions(a.inputs);
  std::vector<double> weights;
  if (a.automatic) {
    if (!a.weights.empty()) throw ConfigError("--weights and --auto are mutually exclusive");
    if (a.labels.empty()) throw ConfigError("--auto needs --labels to measure member AUCs");
    weights = heuristic_weights(sets, parse_label_csv(fs::path(a.labels)), a.lambda);
  } else if (a.weights.empty()) {
    weights.assign(sets.size(), 1.0 / static_cast<double>(sets.size()));
  } else {
    weights = a.weights;
  }
  const PredictionSet fused = weighted_ensemble(sets, weights, a.name);
  write_submission_csv(fs::path(a.out), fused);
  double total = 0.0;
  for (double w : weights) total += w;
  for (std::size_t i = 0; i < sets.size(); ++i) out << "weight " << sets[i].name << " " << fixed6(weights[i] / total) << "\n";
  out << "wrote " << fused.size() << " predictions to " << a.out << "\n";
}

void cmd_corr(const TableArgs& a, std::ostream& out) {
  const auto sets = read_submissions(a.inputs);
  const CorrelationMatrix m = corr_matrix(sets);
  emit(a.format == "csv" ? format_csv(m) : format_text(m), a.out, out);
}

void cmd_auc(const TableArgs& a, std::ostream& out) {
  if (a.inputs.size() != 1) throw ConfigError("auc takes exactly one submission file");
  const PredictionSet predictions = parse_submission_csv(fs::path(a.inputs[0]));
  out << fixed6(roc_auc(predictions, parse_label_csv(fs::path(a.labels)))) << "\n";
}

void cmd_report(const TableArgs& a, std::ostream& out) {
  const auto sets = read_submissions(a.inputs);
  std::optional<LabelSet> labels;
  if (!a.labels.empty()) labels = parse_label_csv(fs::path(a.labels));
  const DiversityReport report = diversity_report(sets, labels ? &*labels : nullptr);
  emit(a.format == "csv" ? format_csv(report) : format_text(report), a.out, out);
}

bool cmd_gradcheck(const GradArgs& a, std::ostream& out) {
  const auto cases = run_gradient_suite(a.seed, a.shapes);
  std::vector<std::string> order;
  std::vector<std::pair<double, std::size_t>> worst;
  for (const auto& c : cases) {
    auto it = std::find(order.begin(), order.end(), c.op);
    if (it == order.end()) {
      order.push_back(c.op);
      worst.emplace_back(c.error, 1);
    } else {
      auto& w = worst[static_cast<std::size_t>(it - order.begin())];
      w.first = std::max(w.first, c.error);
      ++w.second;
    }
  }
  bool ok = true;
  char buf[160];
  for (std::size_t i = 0; i < order.size(); ++i) {
    const bool pass = worst[i].first < a.tolerance;
    ok = ok && pass;
    std::snprintf(buf, sizeof(buf), "%-16s shapes %2zu  max_rel_err %.3e  %s\n", order[i].c_str(), worst[i].second,
                  worst[i].first, pass ? "ok" : "FAIL");
    out << buf;
  }
  return ok;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Kinship verification toolkit: synthetic data, Siamese PVT training and ensemble metrics", "kinship"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::uint64_t seed = 0;
  GenArgs gen;
  TrainArgs tr;
  PredictArgs pred;
  PredictArgs base;
  EnsembleArgs ens;
  TableArgs corr, auc, report;
  GradArgs grad;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::size_t> train_epochs;

  auto* g = app.add_subcommand("gen", "Generate a synthetic kinship dataset");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--families", gen.options.families)->capture_default_str();
  g->add_option("--persons", gen.options.persons_per_family, "Persons per family")->capture_default_str();
  g->add_option("--images", gen.options.images_per_person, "Images per person")->capture_default_str();
  g->add_option("--size", gen.options.image_size, "Image height and width")->capture_default_str();
  g->add_option("--channels", gen.options.channels)->capture_default_str();
  g->add_option("--tile", gen.options.tile, "Period of the repeated pattern")->capture_default_str();
  g->add_option("--latent-dim", gen.options.latent_dim, "Kin-carrying dimensions")->capture_default_str();
  g->add_option("--nuisance-dim", gen.options.nuisance_dim, "Per-image nuisance dimensions")->capture_default_str();
  g->add_option("--snr", gen.options.signal_to_noise, "Family signal to person noise ratio")->capture_default_str();
  g->add_option("--nuisance", gen.options.nuisance_scale, "Per-image nuisance amplitude")->capture_default_str();
  g->add_option("--pixel-noise", gen.options.pixel_noise)->capture_default_str();
  g->add_option("--holdout-families", gen.options.holdout_families)->capture_default_str();
  g->add_option("--seed", seed, "Random seed (default: $KINSHIP_SEED or 0)");

  auto* t = app.add_subcommand("train", "Train a Siamese PVT from a config file");
  t->add_option("config", tr.config, "Training config (key = value)")->required();
  t->add_option("--seed", train_seed, "Override the config seed");
  t->add_option("--epochs", train_epochs, "Override the config epoch count");
  t->add_option("--out", tr.out, "Override the checkpoint path");
  t->add_option("--data", tr.data, "Resolve relative config paths here instead of the config's directory");

  auto* p = app.add_subcommand("predict", "Score a pair list with a checkpoint");
  p->add_option("--checkpoint", pred.checkpoint)->required();
  p->add_option("--pairs", pred.pairs, "CSV whose first column is img_pair")->required();
  p->add_option("--images", pred.images, "Image directory")->required();
  p->add_option("--out", pred.out, "Submission CSV to write")->required();
  p->add_option("--name", pred.name, "Model name (default: output file stem)");
  p->add_option("--threads", pred.threads, "Embedding workers, 0 = all cores")->capture_default_str();

  auto* b = app.add_subcommand("baseline", "Score a pair list by raw pixel distance");
  b->add_option("--pairs", base.pairs)->required();
  b->add_option("--images", base.images)->required();
  b->add_option("--out", base.out, "Submission CSV to write");

  auto* e = app.add_subcommand("ensemble", "Fuse submissions by a weighted sum");
  e->add_option("inputs", ens.inputs, "Submission CSVs")->required();
  e->add_option("--weights", ens.weights, "Comma-separated weights (default: equal)")->delimiter(',');
  e->add_flag("--auto", ens.automatic, "Derive weights from AUC and correlation");
  e->add_option("--labels", ens.labels, "Validation labels for --auto");
  e->add_option("--lambda", ens.lambda, "Correlation penalty for --auto")->capture_default_str();
  e->add_option("--out", ens.out)->required();
  e->add_option("--name", ens.name)->capture_default_str();

  auto* c = app.add_subcommand("corr", "Pearson correlation matrix of submissions");
  c->add_option("inputs", corr.inputs)->required();
  c->add_option("--format", corr.format)->check(CLI::IsMember({"text", "csv"}))->capture_default_str();
  c->add_option("--out", corr.out, "Write to a file instead of stdout");

  auto* a = app.add_subcommand("auc", "ROC-AUC of a submission against labels");
  a->add_option("input", auc.inputs)->required()->expected(1);
  a->add_option("--labels", auc.labels)->required();

  auto* r = app.add_subcommand("report", "Diversity report over submissions");
  r->add_option("inputs", report.inputs)->required();
  r->add_option("--labels", report.labels, "Adds per-model AUC");
  r->add_option("--format", report.format)->check(CLI::IsMember({"text", "csv"}))->capture_default_str();
  r->add_option("--out", report.out);

  auto* gc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  gc->add_option("--seed", grad.seed, "Random seed (default: $KINSHIP_SEED or 0)");
  gc->add_option("--shapes", grad.shapes, "Random shapes per op")->capture_default_str();
  gc->add_option("--tolerance", grad.tolerance)->capture_default_str();

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.emplace_back("kinship");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_storage) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& ex) {
    err << "error: usage: " << one_line(ex.what()) << "\n";
    const CLI::App* failed = &app;
    for (const auto* sub : app.get_subcommands()) failed = sub;
    err << failed->help();
    return 2;
  }

  try {
    if (g->parsed()) {
      gen.options.seed = g->count("--seed") > 0 ? seed : default_seed();
      cmd_gen(gen, out);
    } else if (t->parsed()) {
      tr.seed = train_seed;
      tr.epochs = train_epochs;
      cmd_train(tr, out);
    } else if (p->parsed()) {
      cmd_predict(pred, out);
    } else if (b->parsed()) {
      cmd_baseline(base, out);
    } else if (e->parsed()) {
      cmd_ensemble(ens, out);
    } else if (c->parsed()) {
      cmd_corr(corr, out);
    } else if (a->parsed()) {
      cmd_auc(auc, out);
    } else if (r->parsed()) {
      cmd_report(report, out);
    } else if (gc->parsed()) {
      if (gc->count("--seed") == 0) grad.seed = default_seed();
      if (!cmd_gradcheck(grad, out)) {
        err << "error: gradcheck: relative error at or above " << grad.tolerance << "\n";
        return 1;
      }
    }
  } catch (const Error& ex) {
    err << "error: " << ex.kind() << ": " << one_line(ex.what()) << "\n";
    return 1;
  } catch (const std::exception& ex) {
    err << "error: internal: " << one_line(ex.what()) << "\n";
    return 1;
  }
  out.flush();
  return 0;
}

}  // namespace kinship::cli
