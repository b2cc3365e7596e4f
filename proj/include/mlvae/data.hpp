#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mlvae/tensor.hpp"

namespace mlvae {

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;

/// 8-bit grayscale images with labels, as stored in the IDX container.
struct LabeledImages {
  Index rows = 0;
  Index cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major per image
  std::vector<int> labels;

  Index count() const { return static_cast<Index>(labels.size()); }
  std::span<const std::uint8_t> image(Index i) const {
    return {pixels.data() + i * rows * cols, static_cast<std::size_t>(rows * cols)};
  }
  /// Pixel scaled to [0, 1].
  Real pixel(Index i, Index r, Index c) const {
    return static_cast<Real>(pixels[static_cast<std::size_t>((i * rows + r) * cols + c)]) / Real(255);
  }
};

struct IdxImages {
  Index rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;
  Index count = 0;
};

/// Parses one IDX file. Magic 2051 yields images; 2049 yields labels (rows = cols = 0).
IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<int> read_idx_labels(const std::filesystem::path& path);

/// Loads an image file and its label file and checks that the counts agree.
LabeledImages load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Loads `train` or `t10k` from a directory holding the standard MNIST file names.
LabeledImages load_mnist(const std::filesystem::path& dir, const std::string& split);

/// Zero-pads every image to `size` x `size`, centered.
LabeledImages pad_images(const LabeledImages& src, Index size);

/// Bilinear rotation about the image center, counter-clockwise in degrees, zero fill.
std::vector<Real> rotate_bilinear(std::span<const Real> image, Index height, Index width, double degrees);

// ------------------------------------------------------------------ grouped observations

/// Observation metadata. Pixels live in the ImageStore and are materialized on demand.
struct Observation {
  std::int32_t image = 0;     // index into the ImageStore
  std::int32_t class_id = 0;  // used for grouping and evaluation only
  float rotation_deg = 0.0f;
};

struct ObservationGroup {
  std::int64_t group_id = 0;
  std::vector<Observation> members;
};

/// Padded images shared by every split. `source_id` identifies the original
/// image (train index, or 1'000'000 + test index) for disjointness checks.
struct ImageStore {
  Index height = 32, width = 32, channels = 1;
  std::vector<std::uint8_t> pixels;
  std::vector<std::int64_t> source_ids;

  Index size() const { return static_cast<Index>(source_ids.size()); }
  Index pixels_per_image() const { return height * width * channels; }
  /// Writes the observation (rotated if requested) into `out`, scaled to [0, 1].
  void render(const Observation& obs, std::span<Real> out) const;
};

inline constexpr std::int64_t kTestSourceOffset = 1'000'000;

struct NamedObservations {
  std::string name;
  std::vector<Observation> observations;
};

struct SplitParams {
  std::string dataset = "mnist";
  int group_size = 2;
  int groups_per_class = 10000;
  std::uint64_t seed = 1;
  Index model_pool = 45000;
  Index classifier_pool = 5000;
  std::vector<double> train_angles;  // empty for plain MNIST
};

struct DatasetSplits {
  std::shared_ptr<const ImageStore> store;
  std::vector<ObservationGroup> model_train;
  std::vector<Observation> classifier_train;
  std::vector<Observation> eval_test;
  std::vector<NamedObservations> eval_variants;  // includes eval_test under its own name
  SplitParams params;

  Matrix materialize(std::span<const Observation> obs) const;
  std::vector<int> labels(std::span<const Observation> obs) const;
};

/// MNIST protocol: groups of K same-class images from the model pool, the
/// held-out classifier pool, and the test set for evaluation, all padded.
DatasetSplits build_mnist_splits(const LabeledImages& train, const LabeledImages& test,
                                 const SplitParams& params);

/// MNIST-ROT: every member, classifier and test image gets its own angle,
/// drawn uniformly from the relevant angle set.
DatasetSplits build_mnist_rot(const LabeledImages& train, const LabeledImages& test,
                              const SplitParams& params);

/// Standard MNIST-ROT evaluation angle sets.
std::vector<std::pair<std::string, std::vector<double>>> mnist_rot_eval_angle_sets(
    const std::vector<double>& train_angles);

/// Stable FNV-1a hash of the source ids behind a list of observations.
std::uint64_t split_hash(const ImageStore& store, std::span<const Observation> obs);

// ------------------------------------------------------------------ batching

/// A mini-batch of groups. Pixel rows are group-major: row b*K + i is member i of group b.
struct GroupBatch {
  Matrix pixels;
  Index groups = 0;
  Index group_size = 0;
  std::vector<int> class_ids;
  std::vector<std::int64_t> group_ids;

  Index row(Index group, Index member) const { return group * group_size + member; }
};

GroupBatch make_batch(const DatasetSplits& splits, std::span<const std::size_t> group_indices);

/// Endless stream of shuffled batches of N_B groups; reshuffles every epoch,
/// drops the ragged tail, and is fully determined by the seed.
class BatchIterator {
 public:
  BatchIterator(const DatasetSplits& splits, Index batch_groups, std::uint64_t seed);

  GroupBatch next();
  Index batches_per_epoch() const;
  std::int64_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  const DatasetSplits* splits_;
  Index batch_groups_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::int64_t epoch_ = 0;
};

}  // namespace mlvae
