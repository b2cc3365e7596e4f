#include "mlvae/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>

#include "mlvae/errors.hpp"
#include "mlvae/objectives.hpp"

namespace mlvae {

LambdaState update_lambda(const LambdaState& state, double current_mi) {
  if (!(state.target_mi > 0.0)) throw ConfigError("lambda controller needs target_mi > 0");
  LambdaState next = state;
  next.value = std::max(0.0, state.value + state.step_size * (current_mi / state.target_mi - 1.0));
  return next;
}

// ---------------------------------------------------------------- ModelBundle

ModelBundle::ModelBundle(const RunConfig& config) : config_(std::make_unique<RunConfig>(config)) {
  config_->validate();
  std::mt19937_64 rng(config_->seed);
  encoder_ = std::make_unique<Encoder>(config_->network, rng);
  decoder_ = std::make_unique<Decoder>(config_->network, rng);
  critic_ = std::make_unique<StatisticsNetwork>(config_->network, rng);
  model_opt_ = std::make_unique<nn::Adam>(model_parameters(), config_->optimizer);
  nn::AdamOptions critic_options = config_->optimizer;
  critic_options.learning_rate = config_->critic_learning_rate;
  critic_opt_ = std::make_unique<nn::Adam>(critic_parameters(), critic_options);
  lambda = {config_->lambda_init, config_->target_mi, config_->lambda_step};
}

void ModelBundle::set_iterations(std::int64_t iterations) {
  RunConfig next = *config_;
  next.iterations = iterations;
  next.validate();
  *config_ = next;
}

std::vector<nn::Parameter*> ModelBundle::model_parameters() {
  auto params = encoder_->parameters();
  for (auto* p : decoder_->parameters()) params.push_back(p);
  return params;
}

std::vector<nn::Parameter*> ModelBundle::critic_parameters() { return critic_->parameters(); }

namespace {

void add_optimizer(TensorArchive& archive, const std::string& prefix, nn::Adam& opt) {
  const auto& params = opt.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    archive.add(prefix + ".m." + params[i]->name, opt.first_moments()[i]);
    archive.add(prefix + ".v." + params[i]->name, opt.second_moments()[i]);
  }
}

void load_optimizer(const TensorArchive& archive, const std::string& prefix, nn::Adam& opt) {
  const auto& params = opt.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    archive.read_into(prefix + ".m." + params[i]->name, opt.first_moments()[i]);
    archive.read_into(prefix + ".v." + params[i]->name, opt.second_moments()[i]);
  }
}

std::string exact_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

TensorArchive ModelBundle::to_archive() {
  TensorArchive archive;
  for (auto* p : model_parameters()) archive.add(p->name, p->value);
  for (auto* p : critic_parameters()) archive.add(p->name, p->value);
  add_optimizer(archive, "adam.model", *model_opt_);
  add_optimizer(archive, "adam.critic", *critic_opt_);
  archive.metadata["format"] = "mlvae-checkpoint-1";
  archive.metadata["config"] = to_toml(*config_);
  archive.metadata["lambda"] = exact_double(lambda.value);
  archive.metadata["iteration"] = std::to_string(iteration);
  archive.metadata["adam.model.steps"] = std::to_string(model_opt_->steps());
  archive.metadata["adam.critic.steps"] = std::to_string(critic_opt_->steps());
  return archive;
}

void ModelBundle::save(const std::filesystem::path& path) { write_archive(path, to_archive()); }

ModelBundle ModelBundle::load(const std::filesystem::path& path) {
  const TensorArchive archive = read_archive(path);
  if (!archive.metadata.contains("format") || archive.meta("format") != "mlvae-checkpoint-1") {
    throw FormatError("'" + path.string() + "' is not a model checkpoint", 8);
  }
  ModelBundle bundle(parse_run_config(archive.meta("config"), path.string() + " [config]"));
  for (auto* p : bundle.model_parameters()) archive.read_into(p->name, p->value);
  for (auto* p : bundle.critic_parameters()) archive.read_into(p->name, p->value);
  load_optimizer(archive, "adam.model", *bundle.model_opt_);
  load_optimizer(archive, "adam.critic", *bundle.critic_opt_);
  bundle.lambda.value = std::stod(archive.meta("lambda"));
  bundle.iteration = std::stoll(archive.meta("iteration"));
  bundle.model_opt_->set_steps(std::stoll(archive.meta("adam.model.steps")));
  bundle.critic_opt_->set_steps(std::stoll(archive.meta("adam.critic.steps")));
  return bundle;
}

// ---------------------------------------------------------------- metrics

std::string format_metrics_row(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f", static_cast<long long>(r.iteration),
                r.recon, r.style_kl, r.content_kl, r.elbo, r.mi, r.lambda, r.wall_time_s);
  return buf;
}

// ---------------------------------------------------------------- train

DatasetSplits prepare_splits(const RunConfig& config) {
  const LabeledImages train_images = load_mnist(config.data.dir, "train");
  const LabeledImages test_images = load_mnist(config.data.dir, "t10k");
  const SplitParams params = config.split_params();
  return config.data.dataset == "mnist-rot" ? build_mnist_rot(train_images, test_images, params)
                                            : build_mnist_splits(train_images, test_images, params);
}

namespace {

struct Interval {
  double recon = 0, style_kl = 0, content_kl = 0, elbo = 0, mi = 0;
  std::int64_t n = 0;

  void add(const AdversarialValue& v) {
    recon += v.mean_terms.recon;
    style_kl += v.mean_terms.style_kl;
    content_kl += v.mean_terms.content_kl;
    elbo += v.elbo;
    mi += v.mi;
    ++n;
  }
};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::int64_t start) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(start)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

TrainResult train(ModelBundle& bundle, const DatasetSplits& splits, const TrainOptions& options) {
  const RunConfig& cfg = bundle.config();
  TrainResult result;
  if (bundle.iteration >= cfg.iterations) return result;

  const bool write_files = !options.out_dir.empty();
  std::ofstream metrics;
  if (write_files) {
    std::filesystem::create_directories(options.out_dir);
    const auto path = options.out_dir / "metrics.csv";
    const bool fresh = bundle.iteration == 0 || !std::filesystem::exists(path);
    metrics.open(path, fresh ? std::ios::trunc : std::ios::app);
    if (!metrics) throw Error("cannot write metrics file '" + path.string() + "'");
    if (fresh) metrics << kMetricsHeader << '\n';
  }

  BatchIterator batches(splits, cfg.batch_groups, derive_seed(cfg.seed, 1, bundle.iteration));
  NoiseSource noise(derive_seed(cfg.seed, 2, bundle.iteration));
  const ElboOptions elbo_options = cfg.elbo_options();
  Encoder& encoder = bundle.encoder();
  Decoder& decoder = bundle.decoder();
  StatisticsNetwork& critic = bundle.critic();
  nn::Adam& model_opt = bundle.model_optimizer();
  nn::Adam& critic_opt = bundle.critic_optimizer();

  const auto start = std::chrono::steady_clock::now();
  Interval interval;

  auto diverge = [&](const std::string& why) {
    std::string dump;
    if (write_files) {
      dump = (options.out_dir / "diverged.ckpt").string();
      bundle.save(dump);
    }
    throw TrainingDiverged("training diverged at iteration " + std::to_string(bundle.iteration + 1) + ": " + why +
                               (dump.empty() ? "" : "; state written to " + dump),
                           dump);
  };

  while (bundle.iteration < cfg.iterations) {
    const GroupBatch batch = batches.next();
    model_opt.zero_grad();
    AdversarialValue value;
    try {
      if (cfg.adversarial) {
        value = adversarial_objective(batch, encoder, decoder, critic, bundle.lambda.value, elbo_options, noise, true);
      } else {
        const ElboPass pass =
            elbo_forward(batch.pixels, batch.groups, batch.group_size, encoder, decoder, elbo_options, noise);
        value.elbo = pass.objective();
        value.mean_terms = pass.mean_terms();
        value.mi = std::numeric_limits<double>::quiet_NaN();
        value.value = value.elbo;
        encoder.backward(pass.encoded, elbo_backward(pass, batch.pixels, decoder));
      }
    } catch (const InvalidDistribution& e) {
      diverge(e.what());
    }
    if (!std::isfinite(value.value) || (cfg.adversarial && !std::isfinite(value.mi))) diverge("non-finite loss");
    model_opt.step();

    if (cfg.adversarial) {
      bundle.lambda = update_lambda(bundle.lambda, value.mi);
      result.mi_trace.push_back(value.mi);
      result.lambda_trace.push_back(bundle.lambda.value);
      for (int step = 0; step < cfg.critic_steps; ++step) {
        critic_opt.zero_grad();
        const GroupBatch fresh = batches.next();
        double mi = 0.0;
        try {
          mi = critic_objective(fresh, encoder, critic, noise, true);
        } catch (const InvalidDistribution& e) {
          diverge(e.what());
        }
        if (!std::isfinite(mi)) diverge("non-finite critic objective");
        critic_opt.step();
      }
    }
    ++bundle.iteration;
    interval.add(value);

    if (bundle.iteration % cfg.log_every == 0 || bundle.iteration == cfg.iterations) {
      const auto n = static_cast<double>(interval.n);
      MetricsRow row;
      row.iteration = bundle.iteration;
      row.recon = interval.recon / n;
      row.style_kl = interval.style_kl / n;
      row.content_kl = interval.content_kl / n;
      row.elbo = interval.elbo / n;
      row.mi = interval.mi / n;
      row.lambda = bundle.lambda.value;
      row.wall_time_s =
          cfg.deterministic ? 0.0 : std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      interval = {};
      result.rows.push_back(row);
      if (write_files) metrics << format_metrics_row(row) << '\n' << std::flush;
      if (!options.quiet) std::cerr << format_metrics_row(row) << '\n';
      if (options.on_row) options.on_row(row);
    }
    if (write_files && cfg.checkpoint_every > 0 && bundle.iteration % cfg.checkpoint_every == 0 &&
        bundle.iteration != cfg.iterations) {
      bundle.save(options.out_dir / "checkpoint.ckpt");
    }
  }
  if (write_files) {
    const auto path = options.out_dir / "model.ckpt";
    bundle.save(path);
    result.final_checkpoint = path;
  }
  return result;
}

}  // namespace mlvae
