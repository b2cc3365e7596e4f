#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlvae/data.hpp"
#include "mlvae/image.hpp"
#include "mlvae/networks.hpp"

namespace mlvae {

using Eigen::MatrixXd;

/// Posterior means of single observations (no group accumulation).
struct Latents {
  MatrixXd content;
  MatrixXd style;
  std::vector<int> labels;

  Index size() const { return content.rows(); }
};

Latents extract_latents(Encoder& encoder, const Matrix& pixels, std::vector<int> labels, Index batch_size = 500);
Latents extract_latents(Encoder& encoder, const DatasetSplits& splits, std::span<const Observation> observations,
                        Index batch_size = 500);

// ------------------------------------------------------------------ classifiers

enum class ClassifierKind { svm, logistic };
ClassifierKind parse_classifier(std::string_view name);
std::string_view to_string(ClassifierKind kind);

struct ClassifierOptions {
  ClassifierKind kind = ClassifierKind::svm;
  double svm_c = 1.0;
  double svm_gamma = 0.0;  // <= 0: 1 / (features * variance of all training entries)
  int logistic_iterations = 500;
  double logistic_l2 = 1e-4;
};

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::vector<int> predict(const MatrixXd& features) const = 0;
};

/// Fits on rows of `features`. Needs at least two distinct labels.
std::unique_ptr<Classifier> fit_classifier(const MatrixXd& features, std::span<const int> labels,
                                           const ClassifierOptions& options);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

double downstream_accuracy(const MatrixXd& train_features, std::span<const int> train_labels,
                           const MatrixXd& test_features, std::span<const int> test_labels,
                           const ClassifierOptions& options);

// ------------------------------------------------------------------ reconstruction

/// Mean per-sample Bernoulli negative log-likelihood of the reconstructions
/// decoded from posterior means. Independent of row order.
double reconstruction_error(Encoder& encoder, Decoder& decoder, const Matrix& pixels, Index batch_size = 500);

// ------------------------------------------------------------------ image grids

/// Decoded image tiles (sigmoid of the logits), row-major.
struct ImageGrid {
  Index rows = 0, cols = 0;
  Index height = 0, width = 0;
  Matrix tiles;  // rows * cols tiles, one per row of the matrix

  RgbImage render(Index gap = 2) const;
};

/// (m + 1) x (n + 1) grid: the top row holds the column inputs, the left
/// column the row inputs, and cell (i, j) decodes the content of column
/// input j with the style of row input i. The corner tile is blank.
ImageGrid swap_grid(Encoder& encoder, Decoder& decoder, const Matrix& row_images, const Matrix& col_images);

/// Mean over columns of the majority-class share among the interior cells,
/// where each cell is classified from its re-encoded content mean.
double column_purity(const ImageGrid& grid, Encoder& encoder, const Classifier& content_classifier);

/// steps x steps grid: the column index interpolates content and the row
/// index interpolates style, linearly between the posterior means of a and b.
ImageGrid latent_traversal(Encoder& encoder, Decoder& decoder, std::span<const Real> image_a,
                           std::span<const Real> image_b, int steps);

// ------------------------------------------------------------------ report

struct VariantScores {
  double content_accuracy = 0.0;
  double style_accuracy = 0.0;
};

struct EvalReport {
  std::string run_id;
  std::string dataset;
  std::string classifier;
  double content_accuracy = 0.0;  // C(c) on the evaluation split
  double style_accuracy = 0.0;    // C(s)
  double recon_nll = 0.0;         // L_rec, nats per sample
  std::map<std::string, VariantScores> variants;
  double swap_column_purity = -1.0;
  std::map<std::string, std::string> split_hashes;
  std::map<std::string, std::string> artifact_paths;

  nlohmann::ordered_json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

/// Throws StateError if any two of the model, classifier and evaluation
/// splits share a source image or a split hash.
void check_split_disjointness(const DatasetSplits& splits);

struct EvalOptions {
  ClassifierOptions classifier;
  int grid_size = 8;
  int traversal_steps = 8;
  std::filesystem::path out_dir;  // empty: no artifacts are written
  std::string run_id = "run";
  std::uint64_t seed = 1;         // picks the grid and traversal images
};

EvalReport evaluate(Encoder& encoder, Decoder& decoder, const DatasetSplits& splits, const EvalOptions& options);

/// Appends one line keyed by run id, writing the header for a new file.
void append_results_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace mlvae
