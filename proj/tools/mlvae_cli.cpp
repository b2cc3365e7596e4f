#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mlvae/config.hpp"
#include "mlvae/errors.hpp"
#include "mlvae/evaluation.hpp"
#include "mlvae/training.hpp"

#ifndef MLVAE_REVISION
#define MLVAE_REVISION "unknown"
#endif

namespace fs = std::filesystem;
using namespace mlvae;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

/// Failure that maps to the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  fs::path out_dir = "runs";
  std::string config;
  std::vector<std::string> sets;
  std::string configs_dir = "configs";
};

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read '" + path.string() + "'");
  return nlohmann::json::parse(in);
}

RunConfig resolve_config(const Globals& g, const std::string& config_path, std::vector<std::string> extra = {}) {
  RunConfig config = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  std::vector<std::string> overrides = std::move(extra);
  overrides.insert(overrides.end(), g.sets.begin(), g.sets.end());
  if (g.seed) overrides.push_back("run.seed=" + std::to_string(*g.seed));
  apply_overrides(config, overrides);
  return config;
}

// ---------------------------------------------------------------- prepare

struct PrepareArgs {
  std::string dataset;
  std::string data_dir = "data/mnist";
  int k = 2;
  int groups_per_class = 10000;
  std::vector<double> train_angles{0.0, 22.5, -22.5, 45.0, -45.0};
};

nlohmann::ordered_json split_manifest(const DatasetSplits& splits) {
  const ImageStore& store = *splits.store;
  std::vector<Observation> model;
  for (const auto& grp : splits.model_train) model.insert(model.end(), grp.members.begin(), grp.members.end());
  nlohmann::ordered_json m;
  m["dataset"] = splits.params.dataset;
  m["group_size"] = splits.params.group_size;
  m["groups_per_class"] = splits.params.groups_per_class;
  m["seed"] = splits.params.seed;
  m["train_angles"] = splits.params.train_angles;
  m["groups"] = splits.model_train.size();
  m["classifier_train"] = splits.classifier_train.size();
  m["eval_test"] = splits.eval_test.size();
  m["hashes"] = {{"model_train", hex(split_hash(store, model))},
                 {"classifier_train", hex(split_hash(store, splits.classifier_train))},
                 {"eval_test", hex(split_hash(store, splits.eval_test))}};
  // Order-sensitive digest of the group contents, so regrouping changes it.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::int64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= static_cast<std::uint64_t>(v >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  for (const auto& grp : splits.model_train) {
    for (const auto& o : grp.members) {
      mix(store.source_ids[static_cast<std::size_t>(o.image)]);
      mix(static_cast<std::int64_t>(o.rotation_deg * 1000.0f));
    }
  }
  m["groups_hash"] = hex(h);
  return m;
}

int cmd_prepare(const Globals& g, const PrepareArgs& a) {
  RunConfig config;
  config.data.dataset = a.dataset;
  config.data.dir = a.data_dir;
  config.group_size = a.k;
  config.data.groups_per_class = a.groups_per_class;
  config.data.train_angles = a.train_angles;
  config.data.split_seed = g.seed.value_or(1);
  config.adversarial = a.k >= 2;
  config.validate();
  const DatasetSplits splits = prepare_splits(config);
  check_split_disjointness(splits);
  const auto manifest = split_manifest(splits);
  const fs::path dir = g.out_dir / "splits" / (a.dataset + "-k" + std::to_string(a.k) + "-seed" +
                                               std::to_string(config.data.split_seed));
  fs::create_directories(dir);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << (dir / "manifest.json").string() << " (" << manifest["groups"] << " groups, hash "
            << manifest["groups_hash"].get<std::string>() << ")\n";
  return 0;
}

// ---------------------------------------------------------------- train / eval

struct TrainArgs {
  std::string run_id;
  bool quiet = false;
};

fs::path run_dir(const Globals& g, const std::string& run_id) { return g.out_dir / run_id; }

void write_run_manifest(const fs::path& dir, const RunConfig& config, const std::string& run_id) {
  nlohmann::ordered_json m;
  m["run_id"] = run_id;
  m["revision"] = MLVAE_REVISION;
  m["seed"] = config.seed;
  m["artifact_dir"] = dir.string();
  m["config"] = to_toml(config);
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  write_text(dir / "config.toml", to_toml(config));
}

std::string run_training(const Globals& g, const RunConfig& config, std::string run_id, bool quiet) {
  if (run_id.empty()) run_id = config.name;
  const fs::path dir = run_dir(g, run_id);
  fs::create_directories(dir);
  write_run_manifest(dir, config, run_id);
  const DatasetSplits splits = prepare_splits(config);
  ModelBundle bundle(config);
  TrainOptions options;
  options.out_dir = dir;
  options.quiet = quiet;
  train(bundle, splits, options);
  std::cout << "run " << run_id << ": " << config.iterations << " iterations, checkpoint "
            << (dir / "model.ckpt").string() << "\n";
  return run_id;
}

int cmd_train(const Globals& g, const TrainArgs& a) {
  const RunConfig config = resolve_config(g, g.config);
  run_training(g, config, a.run_id, a.quiet);
  return 0;
}

struct EvalArgs {
  std::string run_id;
  std::string classifier;
  std::string checkpoint;
};

EvalReport run_eval(const Globals& g, const std::string& run_id, const std::string& classifier,
                    const std::string& checkpoint) {
  const fs::path dir = run_dir(g, run_id);
  const fs::path ckpt = checkpoint.empty() ? dir / "model.ckpt" : fs::path(checkpoint);
  if (!fs::exists(ckpt)) throw Error("no checkpoint for run '" + run_id + "' at " + ckpt.string());
  ModelBundle bundle = ModelBundle::load(ckpt);
  RunConfig config = bundle.config();
  std::vector<std::string> data_overrides;
  for (const auto& s : g.sets) {
    if (s.rfind("data.", 0) == 0 || s.rfind("eval.", 0) == 0) data_overrides.push_back(s);
  }
  apply_overrides(config, data_overrides);
  if (!classifier.empty()) config.eval.classifier = classifier;
  config.validate();

  const DatasetSplits splits = prepare_splits(config);
  EvalOptions options;
  options.classifier.kind = parse_classifier(config.eval.classifier);
  options.classifier.svm_c = config.eval.svm_c;
  options.classifier.svm_gamma = config.eval.svm_gamma;
  options.grid_size = config.eval.grid_size;
  options.traversal_steps = config.eval.traversal_steps;
  options.out_dir = dir;
  options.run_id = run_id;
  options.seed = g.seed.value_or(1);
  EvalReport report = evaluate(bundle.encoder(), bundle.decoder(), splits, options);
  const std::string name = options.classifier.kind == ClassifierKind::svm ? "report.json" : "report_logistic.json";
  write_text(dir / name, report.to_json().dump(2) + "\n");
  append_results_csv(g.out_dir / "results.csv", report);
  std::printf("%s: C(c)=%.2f%% C(s)=%.2f%% L_rec=%.2f\n", run_id.c_str(), 100 * report.content_accuracy,
              100 * report.style_accuracy, report.recon_nll);
  for (const auto& [variant, scores] : report.variants) {
    std::printf("  %-6s C(c)=%.2f%% C(s)=%.2f%%\n", variant.c_str(), 100 * scores.content_accuracy,
                100 * scores.style_accuracy);
  }
  return report;
}

int cmd_eval(const Globals& g, const EvalArgs& a) {
  run_eval(g, a.run_id, a.classifier, a.checkpoint);
  return 0;
}

// ---------------------------------------------------------------- table

struct Constituent {
  std::string run_id;
  std::string config;  // file name under the configs directory
  std::vector<std::string> overrides;
  bool required = true;
};

struct TableArgs {
  int table = 1;
  int k = 2;
  bool launch = false;
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::vector<Constituent> constituents(const TableArgs& a) {
  const std::string k = std::to_string(a.k);
  switch (a.table) {
    case 1:
      return {{"mnist_mlvae_k" + k, "mnist_mlvae_k2.toml", {"K=" + k, "run.name=mnist_mlvae_k" + k}},
              {"mnist_ad_k" + k, "mnist_ad_k2.toml", {"K=" + k, "run.name=mnist_ad_k" + k}}};
    case 2: {
      std::vector<Constituent> out;
      for (const char* beta : {"1.5", "2", "5", "10", "20"}) {
        const std::string b = beta;
        const bool required = b == "2" || b == "10";
        std::string id = "mnist_mlvae_beta" + b;
        for (auto& ch : id) ch = ch == '.' ? 'p' : ch;
        out.push_back({id, "mnist_mlvae_k2.toml", {"beta=" + b, "run.name=" + id}, required});
      }
      return out;
    }
    case 5:
      return {{"mnist_rot_mlvae", "mnist_rot_mlvae.toml", {}}, {"mnist_rot_ad", "mnist_rot_ad.toml", {}}};
    default:
      throw UsageError("table must be 1, 2 or 5");
  }
}

std::optional<EvalReport> load_report(const Globals& g, const std::string& run_id) {
  const fs::path path = run_dir(g, run_id) / "report.json";
  if (!fs::exists(path)) return std::nullopt;
  return EvalReport::from_json(read_json(path));
}

int cmd_table(const Globals& g, const TableArgs& a) {
  const auto parts = constituents(a);
  std::map<std::string, EvalReport> reports;
  std::vector<std::string> missing;
  for (const auto& c : parts) {
    auto report = load_report(g, c.run_id);
    if (!report && a.launch && c.required) {
      const RunConfig config = resolve_config(g, (fs::path(g.configs_dir) / c.config).string(), c.overrides);
      run_training(g, config, c.run_id, true);
      report = run_eval(g, c.run_id, "", "");
    }
    if (report) {
      reports.emplace(c.run_id, *report);
    } else if (c.required) {
      missing.push_back(c.run_id);
    }
  }
  if (!missing.empty()) {
    std::string names;
    for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
    throw Error("table " + std::to_string(a.table) + " is missing completed runs: " + names +
                " (train and eval them, or pass --launch)");
  }

  std::ostringstream csv;
  if (a.table == 1) {
    static const std::map<int, std::array<double, 6>> published{{2, {65.0, 89.2, 75.2, 97.6, 41.2, 78.2}},
                                                            {5, {92.9, 85.2, 76.0, 97.3, 40.2, 80.6}},
                                                            {10, {94.1, 85.9, 75.7, 96.3, 57.9, 79.5}}};
    const auto& base = reports.at(parts[0].run_id);
    const auto& ad = reports.at(parts[1].run_id);
    csv << "K,source,mlvae_Cc,mlvae_Cs,mlvae_Lrec,ad_Cc,ad_Cs,ad_Lrec\n";
    csv << a.k << ",reproduction," << fmt("%.1f", 100 * base.content_accuracy) << ','
        << fmt("%.1f", 100 * base.style_accuracy) << ',' << fmt("%.1f", base.recon_nll) << ','
        << fmt("%.1f", 100 * ad.content_accuracy) << ',' << fmt("%.1f", 100 * ad.style_accuracy) << ','
        << fmt("%.1f", ad.recon_nll) << '\n';
    if (const auto it = published.find(a.k); it != published.end()) {
      csv << a.k << ",published";
      for (double v : it->second) csv << ',' << fmt("%.1f", v);
      csv << '\n';
    }
  } else if (a.table == 2) {
    static const std::map<std::string, std::array<double, 3>> published{{"1.5", {87.6, 77.4, 80.4}},
                                                                    {"2", {93.5, 55.5, 85.2}},
                                                                    {"5", {95.6, 30.9, 106.8}},
                                                                    {"10", {94.3, 20.3, 128.7}},
                                                                    {"20", {94.5, 29.2, 141.3}}};
    csv << "beta,source,Cc,Cs,Lrec\n";
    for (const auto& c : parts) {
      const std::string beta = c.overrides[0].substr(5);
      if (const auto it = reports.find(c.run_id); it != reports.end()) {
        csv << beta << ",reproduction," << fmt("%.1f", 100 * it->second.content_accuracy) << ','
            << fmt("%.1f", 100 * it->second.style_accuracy) << ',' << fmt("%.1f", it->second.recon_nll) << '\n';
      }
      const auto& p = published.at(beta);
      csv << beta << ",published," << fmt("%.1f", p[0]) << ',' << fmt("%.1f", p[1]) << ',' << fmt("%.1f", p[2])
          << '\n';
    }
  } else {
    static const std::map<std::string, std::array<double, 2>> published{
        {"theta", {52.2, 95.1}}, {"pm55", {41.9, 85.7}}, {"pm65", {29.3, 71.0}}};
    const auto& base = reports.at("mnist_rot_mlvae");
    const auto& ad = reports.at("mnist_rot_ad");
    csv << "test_angles,mlvae_Cc,ad_Cc,published_mlvae_Cc,published_ad_Cc\n";
    for (const char* v : {"theta", "pm55", "pm65"}) {
      csv << v << ',' << fmt("%.1f", 100 * base.variants.at(v).content_accuracy) << ','
          << fmt("%.1f", 100 * ad.variants.at(v).content_accuracy) << ',' << fmt("%.1f", published.at(v)[0]) << ','
          << fmt("%.1f", published.at(v)[1]) << '\n';
    }
  }
  fs::create_directories(g.out_dir);
  const fs::path out = g.out_dir / ("table" + std::to_string(a.table) + ".csv");
  write_text(out, csv.str());
  std::cout << csv.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-level VAE with adversarial disentanglement"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Run seed (overrides run.seed; split seed for prepare)");
  app.add_option("--out-dir", g.out_dir, "Artifact root directory")->capture_default_str();
  app.add_option("--config", g.config, "TOML run configuration");
  app.add_option("--set", g.sets, "Config override key=value (repeatable)");
  app.add_option("--configs-dir", g.configs_dir, "Directory of named configs used by table")->capture_default_str();

  PrepareArgs prepare;
  auto* prep = app.add_subcommand("prepare", "Build and record dataset splits");
  prep->add_option("dataset", prepare.dataset, "mnist or mnist-rot")->required()->check(CLI::IsMember({"mnist", "mnist-rot"}));
  prep->add_option("--data-dir", prepare.data_dir, "Directory with the raw IDX files")->capture_default_str();
  prep->add_option("--k", prepare.k, "Group size")->capture_default_str();
  prep->add_option("--groups-per-class", prepare.groups_per_class)->capture_default_str();
  prep->add_option("--train-angles", prepare.train_angles, "Rotation angles for mnist-rot")->delimiter(',');

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a config");
  train_cmd->add_option("--run-id", train_args.run_id, "Run directory name (default: run.name)");
  train_cmd->add_flag("--quiet", train_args.quiet, "Do not echo metrics rows");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained run");
  eval_cmd->add_option("run_id", eval_args.run_id)->required();
  eval_cmd->add_option("--classifier", eval_args.classifier)->check(CLI::IsMember({"svm", "logistic"}));
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint path (default: <run>/model.ckpt)");

  TableArgs table_args;
  auto* table_cmd = app.add_subcommand("table", "Assemble a results table from run reports");
  table_cmd->add_option("table", table_args.table)->required()->check(CLI::IsMember({1, 2, 5}));
  table_cmd->add_option("--k", table_args.k, "Group size (table 1)")->capture_default_str();
  table_cmd->add_flag("--launch", table_args.launch, "Train and evaluate missing runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (*prep) return cmd_prepare(g, prepare);
    if (*train_cmd) return cmd_train(g, train_args);
    if (*eval_cmd) return cmd_eval(g, eval_args);
    return cmd_table(g, table_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}
