#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mlvae/checkpoint.hpp"
#include "mlvae/config.hpp"
#include "mlvae/data.hpp"
#include "mlvae/networks.hpp"
#include "mlvae/nn.hpp"

namespace mlvae {

struct LambdaState {
  double value = 0.0;
  double target_mi = 0.2;  // I*
  double step_size = 0.1;  // alpha
};

/// value <- max(0, value + alpha * (L_psi / I* - 1)).
LambdaState update_lambda(const LambdaState& state, double current_mi);

/// Networks, optimizer state and lambda of one run. Parameter addresses are
/// stable for the bundle's lifetime (the optimizers hold pointers to them).
class ModelBundle {
 public:
  explicit ModelBundle(const RunConfig& config);
  ModelBundle(const ModelBundle&) = delete;
  ModelBundle& operator=(const ModelBundle&) = delete;
  ModelBundle(ModelBundle&&) = default;
  ModelBundle& operator=(ModelBundle&&) = default;

  const RunConfig& config() const { return *config_; }
  /// Changes the iteration budget; the next train() call runs up to it.
  void set_iterations(std::int64_t iterations);
  Encoder& encoder() { return *encoder_; }
  Decoder& decoder() { return *decoder_; }
  StatisticsNetwork& critic() { return *critic_; }
  nn::Adam& model_optimizer() { return *model_opt_; }
  nn::Adam& critic_optimizer() { return *critic_opt_; }

  LambdaState lambda;
  std::int64_t iteration = 0;

  /// Encoder and decoder parameters (theta, phi), then the critic's (psi).
  std::vector<nn::Parameter*> model_parameters();
  std::vector<nn::Parameter*> critic_parameters();

  TensorArchive to_archive();
  void save(const std::filesystem::path& path);
  static ModelBundle load(const std::filesystem::path& path);

 private:
  std::unique_ptr<RunConfig> config_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<Decoder> decoder_;
  std::unique_ptr<StatisticsNetwork> critic_;
  std::unique_ptr<nn::Adam> model_opt_;
  std::unique_ptr<nn::Adam> critic_opt_;
};

struct MetricsRow {
  std::int64_t iteration = 0;
  double recon = 0.0;
  double style_kl = 0.0;
  double content_kl = 0.0;
  double elbo = 0.0;
  double mi = 0.0;  // NaN when no critic is trained
  double lambda = 0.0;
  double wall_time_s = 0.0;
};

inline constexpr const char* kMetricsHeader = "iteration,recon,style_kl,content_kl,elbo,L_psi,lambda,wall_time_s";
std::string format_metrics_row(const MetricsRow& row);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no files are written
  bool quiet = true;
  /// Called after every logged row.
  std::function<void(const MetricsRow&)> on_row;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  /// Per-iteration L_psi estimates (adversarial runs only).
  std::vector<double> mi_trace;
  std::vector<double> lambda_trace;
  std::optional<std::filesystem::path> final_checkpoint;
};

/// Loads the raw dataset named by the config and builds its splits.
DatasetSplits prepare_splits(const RunConfig& config);

/// Runs iterations bundle.iteration + 1 .. config.iterations. Every iteration
/// takes one encoder/decoder step on -ELBO + lambda * L_psi with the critic
/// frozen, updates lambda from that batch's L_psi, then takes it_T critic
/// steps on fresh batches. With adversarial = false only the ELBO step runs.
/// A non-finite loss writes `diverged.ckpt` and throws TrainingDiverged.
TrainResult train(ModelBundle& bundle, const DatasetSplits& splits, const TrainOptions& options = {});

}  // namespace mlvae
