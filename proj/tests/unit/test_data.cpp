#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "fixtures.hpp"
#include "mlvae/data.hpp"
#include "mlvae/errors.hpp"

using namespace mlvae;
namespace fs = std::filesystem;

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

fs::path temp_file(const std::string& name, const std::vector<std::uint8_t>& bytes) {
  const fs::path dir = fs::temp_directory_path() / "mlvae_test_data";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                            static_cast<std::streamsize>(bytes.size()));
  return p;
}

std::vector<std::uint8_t> image_file(std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                                     std::uint32_t magic = kIdxImageMagic) {
  std::vector<std::uint8_t> b;
  put_be32(b, magic);
  put_be32(b, count);
  put_be32(b, rows);
  put_be32(b, cols);
  for (std::uint32_t i = 0; i < count * rows * cols; ++i) b.push_back(static_cast<std::uint8_t>(i % 251));
  return b;
}

std::vector<std::uint8_t> label_file(const std::vector<int>& labels) {
  std::vector<std::uint8_t> b;
  put_be32(b, kIdxLabelMagic);
  put_be32(b, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) b.push_back(static_cast<std::uint8_t>(l));
  return b;
}

/// Synthetic MNIST-shaped source: `per_class` 28x28 images for each of 10 classes.
LabeledImages fake_mnist(int per_class, std::uint64_t seed) {
  LabeledImages li;
  li.rows = 28;
  li.cols = 28;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < 10 * per_class; ++i) {
    li.labels.push_back(i % 10);
    for (int p = 0; p < 28 * 28; ++p) li.pixels.push_back(static_cast<std::uint8_t>(rng() % 256));
  }
  return li;
}

}  // namespace

TEST_CASE("IDX files round trip") {
  const auto images = temp_file("ok-images", image_file(3, 2, 4));
  const auto labels = temp_file("ok-labels", label_file({7, 1, 9}));
  const LabeledImages li = load_idx(images, labels);
  CHECK(li.count() == 3);
  CHECK(li.rows == 2);
  CHECK(li.cols == 4);
  CHECK(li.labels[2] == 9);
  CHECK(li.image(1)[0] == 8);
  CHECK(li.pixel(1, 0, 1) == doctest::Approx(9.0 / 255.0));
}

TEST_CASE("IDX errors report byte offsets") {
  const auto labels = temp_file("labels3", label_file({1, 2, 3}));
  SUBCASE("wrong magic") {
    const auto bad = temp_file("bad-magic", image_file(3, 2, 2, 1234));
    try {
      load_idx(bad, labels);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 0);
    }
  }
  SUBCASE("truncated payload") {
    auto bytes = image_file(3, 2, 2);
    bytes.resize(bytes.size() - 5);
    const auto bad = temp_file("truncated", bytes);
    try {
      load_idx(bad, labels);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == bytes.size());
    }
  }
  SUBCASE("count mismatch") {
    const auto images = temp_file("four", image_file(4, 2, 2));
    try {
      load_idx(images, labels);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 4);
    }
  }
  SUBCASE("missing files name the expected paths") {
    try {
      load_mnist(fs::temp_directory_path() / "mlvae_no_such_dir", "train");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("train-images-idx3-ubyte") != std::string::npos);
    }
  }
}

TEST_CASE("padding centers images") {
  LabeledImages li{2, 2, {1, 2, 3, 4}, {5}};
  const auto padded = pad_images(li, 4);
  CHECK(padded.rows == 4);
  CHECK(padded.image(0)[5] == 1);
  CHECK(padded.image(0)[10] == 4);
  CHECK(padded.image(0)[0] == 0);
  CHECK_THROWS_AS(pad_images(li, 1), ArgumentError);
}

TEST_CASE("bilinear rotation") {
  std::vector<Real> img(5 * 5, 0.0f);
  img[0 * 5 + 2] = 1.0f;  // top center
  CHECK(rotate_bilinear(img, 5, 5, 0.0) == img);
  const auto ccw = rotate_bilinear(img, 5, 5, 90.0);
  CHECK(ccw[2 * 5 + 0] == doctest::Approx(1.0));  // moves to the left center
  CHECK(ccw[0 * 5 + 2] == doctest::Approx(0.0).epsilon(1e-6));
  const auto back = rotate_bilinear(ccw, 5, 5, -90.0);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(back[i] == doctest::Approx(img[i]).epsilon(1e-5));
  CHECK_THROWS_AS(rotate_bilinear(img, 4, 5, 10.0), ShapeError);
}

TEST_CASE("MNIST splits follow the grouping protocol") {
  const auto train = fake_mnist(30, 1);
  const auto test = fake_mnist(5, 2);
  SplitParams p;
  p.group_size = 3;
  p.groups_per_class = 7;
  p.model_pool = 200;
  p.classifier_pool = 50;
  const auto splits = build_mnist_splits(train, test, p);
  CHECK(splits.model_train.size() == 70);
  CHECK(splits.classifier_train.size() == 50);
  CHECK(splits.eval_test.size() == 50);
  CHECK(splits.store->height == 32);

  std::set<std::int64_t> model_ids, classifier_ids, test_ids;
  for (const auto& g : splits.model_train) {
    REQUIRE(g.members.size() == 3);
    std::set<std::int32_t> distinct;
    for (const auto& m : g.members) {
      CHECK(m.class_id == g.members[0].class_id);
      CHECK(train.labels[static_cast<std::size_t>(splits.store->source_ids[static_cast<std::size_t>(m.image)])] ==
            m.class_id);
      distinct.insert(m.image);
      model_ids.insert(splits.store->source_ids[static_cast<std::size_t>(m.image)]);
    }
    CHECK(distinct.size() == 3);
  }
  for (const auto& o : splits.classifier_train) classifier_ids.insert(splits.store->source_ids[static_cast<std::size_t>(o.image)]);
  for (const auto& o : splits.eval_test) test_ids.insert(splits.store->source_ids[static_cast<std::size_t>(o.image)]);
  for (auto id : classifier_ids) CHECK_FALSE(model_ids.contains(id));
  for (auto id : test_ids) CHECK(id >= kTestSourceOffset);

  const auto again = build_mnist_splits(train, test, p);
  CHECK(split_hash(*again.store, again.classifier_train) == split_hash(*splits.store, splits.classifier_train));
  CHECK(again.model_train[13].members[1].image == splits.model_train[13].members[1].image);

  p.seed = 2;
  const auto other = build_mnist_splits(train, test, p);
  CHECK(split_hash(*other.store, other.classifier_train) != split_hash(*splits.store, splits.classifier_train));

  SplitParams bad = p;
  bad.group_size = 1;
  CHECK_THROWS_AS(build_mnist_splits(train, test, bad), ArgumentError);
  bad = p;
  bad.model_pool = 10000;
  CHECK_THROWS_AS(build_mnist_splits(train, test, bad), ArgumentError);
}

TEST_CASE("MNIST-ROT draws angles from the configured sets") {
  const auto train = fake_mnist(30, 3);
  const auto test = fake_mnist(5, 4);
  SplitParams p;
  p.group_size = 2;
  p.groups_per_class = 5;
  p.model_pool = 200;
  p.classifier_pool = 50;
  p.train_angles = {0.0, 22.5, -22.5, 45.0, -45.0};
  const auto splits = build_mnist_rot(train, test, p);
  const std::set<float> allowed{0.0f, 22.5f, -22.5f, 45.0f, -45.0f};
  for (const auto& g : splits.model_train) {
    for (const auto& m : g.members) CHECK(allowed.contains(m.rotation_deg));
  }
  REQUIRE(splits.eval_variants.size() == 3);
  CHECK(splits.eval_variants[1].name == "pm55");
  for (const auto& o : splits.eval_variants[2].observations) CHECK(std::fabs(o.rotation_deg) == 65.0f);
  const Matrix x = splits.materialize(splits.eval_variants[1].observations);
  CHECK(x.rows() == 50);
  CHECK(x.maxCoeff() <= 1.0f);
  p.train_angles.clear();
  CHECK_THROWS_AS(build_mnist_rot(train, test, p), ArgumentError);
}

TEST_CASE("batches are group-major and the iterator is deterministic") {
  const auto splits = testing::synthetic_splits(3, 10, 4, 2);
  std::vector<std::size_t> idx{0, 5, 11};
  const GroupBatch batch = make_batch(splits, idx);
  CHECK(batch.groups == 3);
  CHECK(batch.group_size == 2);
  CHECK(batch.pixels.rows() == 6);
  CHECK(batch.class_ids[1] == splits.model_train[5].members[0].class_id);
  const Matrix member = splits.materialize(std::span(&splits.model_train[5].members[1], 1));
  CHECK(batch.pixels.row(batch.row(1, 1)) == member.row(0));

  BatchIterator a(splits, 5, 9), b(splits, 5, 9);
  CHECK(a.batches_per_epoch() == 2);
  for (int i = 0; i < 5; ++i) CHECK(a.next().group_ids == b.next().group_ids);
  CHECK(a.epoch() >= 1);
  CHECK_THROWS_AS(BatchIterator(splits, 1, 0), ConfigError);
  CHECK_THROWS_AS(BatchIterator(splits, 13, 0), ConfigError);
}
