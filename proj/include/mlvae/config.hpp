#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlvae/data.hpp"
#include "mlvae/networks.hpp"
#include "mlvae/nn.hpp"
#include "mlvae/objectives.hpp"

namespace mlvae {

struct DataConfig {
  std::string dataset = "mnist";  // mnist | mnist-rot
  std::string dir = "data/mnist";
  int groups_per_class = 10000;
  std::uint64_t split_seed = 1;
  Index model_pool = 45000;
  Index classifier_pool = 5000;
  std::vector<double> train_angles{0.0, 22.5, -22.5, 45.0, -45.0};  // mnist-rot only
};

struct EvalConfig {
  std::string classifier = "svm";  // svm | logistic
  double svm_c = 1.0;
  double svm_gamma = 0.0;  // <= 0 selects 1 / (features * variance)
  int grid_size = 8;
  int traversal_steps = 8;
};

/// Everything needed to reproduce one training run.
struct RunConfig {
  std::string name = "run";
  std::uint64_t seed = 1;
  bool deterministic = false;
  std::int64_t log_every = 100;
  std::int64_t checkpoint_every = 5000;

  NetworkConfig network;

  int group_size = 2;  // K
  double beta = 1.0;
  Accumulation accumulation = Accumulation::product;
  bool adversarial = true;
  double target_mi = 0.2;
  double lambda_step = 0.1;
  double lambda_init = 0.0;

  std::int64_t iterations = 50000;  // it
  Index batch_groups = 64;          // N_B
  int critic_steps = 5;             // it_T
  nn::AdamOptions optimizer{};
  double critic_learning_rate = 1e-4;

  DataConfig data;
  EvalConfig eval;

  void validate() const;
  ElboOptions elbo_options() const { return {accumulation, beta}; }
  SplitParams split_params() const;
};

/// Parses a TOML document. Unknown sections/keys and type mismatches raise
/// ConfigError naming the offending field.
RunConfig parse_run_config(std::string_view toml_text, std::string_view source = "config");
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies `key=value` overrides. Keys are dotted (`training.lr`), a bare
/// field name that is unique across sections (`beta`), or a short alias
/// (`d_c`, `d_s`, `K`, `N_B`, `it`, `it_T`). Values use TOML syntax; an
/// unparsable value is taken as a string.
void apply_overrides(RunConfig& config, std::span<const std::string> overrides);

/// Canonical TOML rendering; parse_run_config(to_toml(c)) reproduces c.
std::string to_toml(const RunConfig& config);

/// All dotted field names, in rendering order.
std::vector<std::string> config_keys();

}  // namespace mlvae
