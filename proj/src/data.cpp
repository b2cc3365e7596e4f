#include "mlvae/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>

#include "mlvae/errors.hpp"

namespace mlvae {
namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    throw FormatError(path.string() + ": truncated IDX header", bytes.size());
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void check_magic(std::uint32_t magic, std::uint32_t expected, const std::filesystem::path& path) {
  if (magic != expected) {
    throw FormatError(path.string() + ": IDX magic " + std::to_string(magic) + ", expected " +
                          std::to_string(expected),
                      0);
  }
}

void check_payload(const std::vector<std::uint8_t>& bytes, std::size_t header, std::size_t payload,
                   const std::filesystem::path& path) {
  if (bytes.size() < header + payload) {
    throw FormatError(path.string() + ": payload truncated, expected " + std::to_string(payload) +
                          " bytes after the header",
                      bytes.size());
  }
}

std::int32_t pick(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::int32_t>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
}

struct PaddedStore {
  std::shared_ptr<ImageStore> store;
  Index test_offset = 0;  // store index of the first test image
};

// Pads the first `train_count` training images and every test image into one store.
PaddedStore make_store(const LabeledImages& train, Index train_count, const LabeledImages& test) {
  constexpr Index kSide = 32;
  if (train.rows > kSide || train.cols > kSide || test.rows > kSide || test.cols > kSide) {
    throw ArgumentError("images larger than 32x32 cannot be padded");
  }
  auto store = std::make_shared<ImageStore>();
  store->height = kSide;
  store->width = kSide;
  store->channels = 1;
  const Index n = train_count + test.count();
  store->pixels.assign(static_cast<std::size_t>(n * kSide * kSide), 0);
  store->source_ids.resize(static_cast<std::size_t>(n));

  auto copy_into = [&](const LabeledImages& src, Index i, Index slot) {
    const Index top = (kSide - src.rows) / 2, left = (kSide - src.cols) / 2;
    auto img = src.image(i);
    for (Index r = 0; r < src.rows; ++r) {
      std::copy_n(img.data() + r * src.cols, src.cols,
                  store->pixels.data() + slot * kSide * kSide + (top + r) * kSide + left);
    }
  };
  for (Index i = 0; i < train_count; ++i) {
    copy_into(train, i, i);
    store->source_ids[static_cast<std::size_t>(i)] = i;
  }
  for (Index i = 0; i < test.count(); ++i) {
    copy_into(test, i, train_count + i);
    store->source_ids[static_cast<std::size_t>(train_count + i)] = kTestSourceOffset + i;
  }
  return {store, train_count};
}

struct Pools {
  std::vector<std::int32_t> model;
  std::vector<std::int32_t> classifier;
};

Pools partition_pools(const SplitParams& p, std::mt19937_64& rng) {
  std::vector<std::int32_t> idx(static_cast<std::size_t>(p.model_pool + p.classifier_pool));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  Pools pools;
  pools.model.assign(idx.begin(), idx.begin() + p.model_pool);
  pools.classifier.assign(idx.begin() + p.model_pool, idx.end());
  std::sort(pools.model.begin(), pools.model.end());
  std::sort(pools.classifier.begin(), pools.classifier.end());
  return pools;
}

void validate_params(const SplitParams& p, const LabeledImages& train) {
  if (p.group_size < 2) throw ArgumentError("group size K must be >= 2");
  if (p.groups_per_class < 1) throw ArgumentError("groups per class must be >= 1");
  if (p.model_pool < 1 || p.classifier_pool < 1) throw ArgumentError("split pool sizes must be positive");
  if (train.count() < p.model_pool + p.classifier_pool) {
    throw ArgumentError("need " + std::to_string(p.model_pool + p.classifier_pool) +
                        " training images, got " + std::to_string(train.count()));
  }
}

// Groups are drawn class by class: without replacement inside a group, with
// replacement across groups.
template <typename AngleFn>
std::vector<ObservationGroup> form_groups(const LabeledImages& train, const std::vector<std::int32_t>& pool,
                                          const SplitParams& p, std::mt19937_64& rng, AngleFn angle) {
  std::map<int, std::vector<std::int32_t>> by_class;
  for (auto i : pool) by_class[train.labels[static_cast<std::size_t>(i)]].push_back(i);

  const auto k = static_cast<std::size_t>(p.group_size);
  for (const auto& [cls, members] : by_class) {
    if (members.size() < k) {
      throw ArgumentError("class " + std::to_string(cls) + " has " + std::to_string(members.size()) +
                          " images, cannot form a group of " + std::to_string(k));
    }
  }

  std::vector<ObservationGroup> groups;
  groups.reserve(by_class.size() * static_cast<std::size_t>(p.groups_per_class));
  std::int64_t next_id = 0;
  for (auto& [cls, members] : by_class) {
    for (int g = 0; g < p.groups_per_class; ++g) {
      ObservationGroup group{next_id++, {}};
      for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(pick(rng, members.size() - i));
        std::swap(members[i], members[j]);
        group.members.push_back({members[i], cls, angle()});
      }
      groups.push_back(std::move(group));
    }
  }
  return groups;
}

}  // namespace

// ------------------------------------------------------------------ IDX

IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  check_magic(read_be32(bytes, 0, path), kIdxImageMagic, path);
  IdxImages out;
  out.count = read_be32(bytes, 4, path);
  out.rows = read_be32(bytes, 8, path);
  out.cols = read_be32(bytes, 12, path);
  const auto payload = static_cast<std::size_t>(out.count * out.rows * out.cols);
  check_payload(bytes, 16, payload, path);
  out.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
  return out;
}

std::vector<int> read_idx_labels(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  check_magic(read_be32(bytes, 0, path), kIdxLabelMagic, path);
  const std::size_t count = read_be32(bytes, 4, path);
  check_payload(bytes, 8, count, path);
  return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

LabeledImages load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  auto imgs = read_idx_images(images);
  auto lbls = read_idx_labels(labels);
  if (static_cast<Index>(lbls.size()) != imgs.count) {
    throw FormatError("image/label count mismatch: " + std::to_string(imgs.count) + " images vs " +
                          std::to_string(lbls.size()) + " labels in " + labels.string(),
                      4);
  }
  return {imgs.rows, imgs.cols, std::move(imgs.pixels), std::move(lbls)};
}

LabeledImages load_mnist(const std::filesystem::path& dir, const std::string& split) {
  const auto images = dir / (split + "-images-idx3-ubyte");
  const auto labels = dir / (split + "-labels-idx1-ubyte");
  for (const auto& f : {images, labels}) {
    if (!std::filesystem::exists(f)) {
      throw ArgumentError("missing MNIST file " + f.string() +
                          " (expected train-images-idx3-ubyte, train-labels-idx1-ubyte, "
                          "t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte)");
    }
  }
  return load_idx(images, labels);
}

LabeledImages pad_images(const LabeledImages& src, Index size) {
  if (src.rows > size || src.cols > size) throw ArgumentError("pad target smaller than the images");
  LabeledImages out{size, size, std::vector<std::uint8_t>(static_cast<std::size_t>(src.count() * size * size), 0),
                    src.labels};
  const Index top = (size - src.rows) / 2, left = (size - src.cols) / 2;
  for (Index i = 0; i < src.count(); ++i) {
    auto img = src.image(i);
    for (Index r = 0; r < src.rows; ++r) {
      std::copy_n(img.data() + r * src.cols, src.cols,
                  out.pixels.data() + (i * size + top + r) * size + left);
    }
  }
  return out;
}

std::vector<Real> rotate_bilinear(std::span<const Real> image, Index height, Index width, double degrees) {
  if (static_cast<Index>(image.size()) != height * width) throw ShapeError("rotate: image size mismatch");
  std::vector<Real> out(image.begin(), image.end());
  if (degrees == 0.0) return out;

  const double theta = degrees * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double cy = 0.5 * static_cast<double>(height - 1), cx = 0.5 * static_cast<double>(width - 1);
  auto at = [&](Index y, Index x) -> double {
    if (y < 0 || y >= height || x < 0 || x >= width) return 0.0;
    return image[static_cast<std::size_t>(y * width + x)];
  };
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      // Inverse map: rotate the destination coordinate back by -theta (y axis points down).
      const double u = static_cast<double>(x) - cx, v = cy - static_cast<double>(y);
      const double su = u * cos_t + v * sin_t;
      const double sv = -u * sin_t + v * cos_t;
      const double sx = cx + su, sy = cy - sv;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const auto x0 = static_cast<Index>(fx), y0 = static_cast<Index>(fy);
      const double ax = sx - fx, ay = sy - fy;
      const double value = (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) +
                           ay * ((1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
      out[static_cast<std::size_t>(y * width + x)] = static_cast<Real>(value);
    }
  }
  return out;
}

// ------------------------------------------------------------------ store / splits

void ImageStore::render(const Observation& obs, std::span<Real> out) const {
  const Index n = pixels_per_image();
  if (static_cast<Index>(out.size()) != n) throw ShapeError("render: output buffer size mismatch");
  if (obs.image < 0 || obs.image >= size()) throw ArgumentError("render: image index out of range");
  const std::uint8_t* src = pixels.data() + static_cast<Index>(obs.image) * n;
  for (Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = static_cast<Real>(src[i]) / Real(255);
  if (obs.rotation_deg != 0.0f) {
    if (channels != 1) throw ArgumentError("rotation is only supported for single-channel images");
    auto rotated = rotate_bilinear(out, height, width, obs.rotation_deg);
    std::copy(rotated.begin(), rotated.end(), out.begin());
  }
}

Matrix DatasetSplits::materialize(std::span<const Observation> obs) const {
  Matrix m(static_cast<Index>(obs.size()), store->pixels_per_image());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    store->render(obs[i], {m.row(static_cast<Index>(i)).data(), static_cast<std::size_t>(m.cols())});
  }
  return m;
}

std::vector<int> DatasetSplits::labels(std::span<const Observation> obs) const {
  std::vector<int> out;
  out.reserve(obs.size());
  for (const auto& o : obs) out.push_back(o.class_id);
  return out;
}

DatasetSplits build_mnist_splits(const LabeledImages& train, const LabeledImages& test,
                                 const SplitParams& params) {
  validate_params(params, train);
  std::mt19937_64 rng(params.seed);
  const Pools pools = partition_pools(params, rng);
  auto [store, test_offset] = make_store(train, params.model_pool + params.classifier_pool, test);

  DatasetSplits splits;
  splits.params = params;
  splits.params.train_angles.clear();
  splits.model_train = form_groups(train, pools.model, params, rng, [] { return 0.0f; });
  for (auto i : pools.classifier) splits.classifier_train.push_back({i, train.labels[static_cast<std::size_t>(i)], 0.0f});
  for (Index i = 0; i < test.count(); ++i) {
    splits.eval_test.push_back({static_cast<std::int32_t>(test_offset + i), test.labels[static_cast<std::size_t>(i)], 0.0f});
  }
  splits.eval_variants.push_back({"test", splits.eval_test});
  splits.store = std::move(store);
  return splits;
}

std::vector<std::pair<std::string, std::vector<double>>> mnist_rot_eval_angle_sets(
    const std::vector<double>& train_angles) {
  return {{"theta", train_angles}, {"pm55", {55.0, -55.0}}, {"pm65", {65.0, -65.0}}};
}

DatasetSplits build_mnist_rot(const LabeledImages& train, const LabeledImages& test,
                              const SplitParams& params) {
  if (params.train_angles.empty()) throw ArgumentError("MNIST-ROT needs a nonempty angle set");
  validate_params(params, train);
  std::mt19937_64 rng(params.seed);
  const Pools pools = partition_pools(params, rng);
  auto [store, test_offset] = make_store(train, params.model_pool + params.classifier_pool, test);

  const auto& angles = params.train_angles;
  auto draw = [&rng](const std::vector<double>& set) {
    return static_cast<float>(set[static_cast<std::size_t>(pick(rng, set.size()))]);
  };

  DatasetSplits splits;
  splits.params = params;
  splits.params.dataset = "mnist-rot";
  splits.model_train = form_groups(train, pools.model, params, rng, [&] { return draw(angles); });
  for (auto i : pools.classifier) {
    splits.classifier_train.push_back({i, train.labels[static_cast<std::size_t>(i)], draw(angles)});
  }
  for (const auto& [name, set] : mnist_rot_eval_angle_sets(angles)) {
    NamedObservations variant{name, {}};
    for (Index i = 0; i < test.count(); ++i) {
      variant.observations.push_back(
          {static_cast<std::int32_t>(test_offset + i), test.labels[static_cast<std::size_t>(i)], draw(set)});
    }
    splits.eval_variants.push_back(std::move(variant));
  }
  splits.eval_test = splits.eval_variants.front().observations;
  splits.store = std::move(store);
  return splits;
}

std::uint64_t split_hash(const ImageStore& store, std::span<const Observation> obs) {
  std::vector<std::int64_t> ids;
  ids.reserve(obs.size());
  for (const auto& o : obs) ids.push_back(store.source_ids[static_cast<std::size_t>(o.image)]);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::uint64_t h = 1469598103934665603ull;
  for (auto id : ids) {
    for (int b = 0; b < 8; ++b) {
      h ^= static_cast<std::uint64_t>(id >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

// ------------------------------------------------------------------ batching

GroupBatch make_batch(const DatasetSplits& splits, std::span<const std::size_t> group_indices) {
  if (group_indices.empty()) throw ArgumentError("a batch needs at least one group");
  GroupBatch batch;
  batch.groups = static_cast<Index>(group_indices.size());
  batch.group_size = static_cast<Index>(splits.model_train[group_indices.front()].members.size());
  batch.pixels.resize(batch.groups * batch.group_size, splits.store->pixels_per_image());
  for (Index b = 0; b < batch.groups; ++b) {
    const auto& group = splits.model_train[group_indices[static_cast<std::size_t>(b)]];
    if (static_cast<Index>(group.members.size()) != batch.group_size) {
      throw ArgumentError("all groups in a batch must have the same size");
    }
    for (Index i = 0; i < batch.group_size; ++i) {
      auto row = batch.pixels.row(batch.row(b, i));
      splits.store->render(group.members[static_cast<std::size_t>(i)],
                           {row.data(), static_cast<std::size_t>(row.size())});
    }
    batch.class_ids.push_back(group.members.front().class_id);
    batch.group_ids.push_back(group.group_id);
  }
  return batch;
}

BatchIterator::BatchIterator(const DatasetSplits& splits, Index batch_groups, std::uint64_t seed)
    : splits_(&splits), batch_groups_(batch_groups), rng_(seed) {
  if (batch_groups < 2) {
    throw ConfigError("batch_groups (N_B) must be >= 2 to form cross-group pairs, got " +
                      std::to_string(batch_groups));
  }
  if (static_cast<Index>(splits.model_train.size()) < batch_groups) {
    throw ConfigError("dataset has fewer groups than one batch");
  }
  order_.resize(splits.model_train.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void BatchIterator::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

Index BatchIterator::batches_per_epoch() const {
  return static_cast<Index>(order_.size()) / batch_groups_;
}

GroupBatch BatchIterator::next() {
  const auto n = static_cast<std::size_t>(batch_groups_);
  if (cursor_ + n > order_.size()) {
    reshuffle();
    ++epoch_;
  }
  std::span<const std::size_t> idx(order_.data() + cursor_, n);
  cursor_ += n;
  return make_batch(*splits_, idx);
}

}  // namespace mlvae
