#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "mlvae/checkpoint.hpp"
#include "mlvae/errors.hpp"
#include "mlvae/training.hpp"

using namespace mlvae;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mlvae_test_ckpt";
  fs::create_directories(dir);
  return dir / name;
}
}  // namespace

TEST_CASE("tensor archives round trip") {
  TensorArchive a;
  Matrix m(2, 3);
  m << 1.5f, -2.0f, 3.25f, 0.1f, 1e-7f, -1e30f;
  a.add("w", m);
  NamedTensor wide{"d", "F64", {3}, {0.1, 1.0 / 3.0, -7.0}};
  a.tensors.push_back(wide);
  a.metadata["note"] = "hello";
  const auto path = scratch("rt.ckpt");
  write_archive(path, a);

  const TensorArchive b = read_archive(path);
  CHECK(b.meta("note") == "hello");
  Matrix back = Matrix::Zero(2, 3);
  b.read_into("w", back);
  CHECK(back == m);
  CHECK(b.at("d").values == wide.values);
  Matrix wrong(3, 2);
  CHECK_THROWS_AS(b.read_into("w", wrong), ShapeError);
  CHECK_THROWS_AS(b.at("missing"), ArgumentError);
  CHECK_THROWS_AS(a.add("w", m), ArgumentError);

  std::ifstream in(path, std::ios::binary);
  std::uint64_t header = 0;
  in.read(reinterpret_cast<char*>(&header), 8);
  std::string json(header, '\0');
  in.read(json.data(), static_cast<std::streamsize>(header));
  CHECK(json.find("\"__metadata__\"") != std::string::npos);
  CHECK(json.find("\"data_offsets\"") != std::string::npos);
}

TEST_CASE("malformed archives raise format errors") {
  const auto path = scratch("bad.ckpt");
  std::ofstream(path, std::ios::binary) << "abc";
  CHECK_THROWS_AS(read_archive(path), FormatError);
  {
    std::ofstream out(path, std::ios::binary);
    const std::uint64_t n = 1000;
    out.write(reinterpret_cast<const char*>(&n), 8);
    out << "{}";
  }
  CHECK_THROWS_AS(read_archive(path), FormatError);
  {
    std::ofstream out(path, std::ios::binary);
    const std::string h = R"({"w":{"dtype":"F32","shape":[4],"data_offsets":[0,16]}})";
    const std::uint64_t n = h.size();
    out.write(reinterpret_cast<const char*>(&n), 8);
    out << h << "short";
  }
  CHECK_THROWS_AS(read_archive(path), FormatError);
}

TEST_CASE("model bundles reproduce forward outputs after a reload") {
  RunConfig cfg = testing::small_run(6);
  cfg.network = testing::small_conv();
  const auto splits = testing::synthetic_splits();
  ModelBundle bundle(cfg);
  train(bundle, splits);
  const auto path = scratch("bundle.ckpt");
  bundle.save(path);

  ModelBundle loaded = ModelBundle::load(path);
  CHECK(loaded.iteration == 6);
  CHECK(loaded.lambda.value == bundle.lambda.value);
  CHECK(loaded.model_optimizer().steps() == bundle.model_optimizer().steps());
  CHECK(to_toml(loaded.config()) == to_toml(cfg));

  const Matrix probe = splits.materialize(splits.eval_test);
  const auto a = bundle.encoder().forward(probe);
  const auto b = loaded.encoder().forward(probe);
  CHECK(a.content_mean == b.content_mean);
  CHECK(a.style_log_var == b.style_log_var);
  Matrix z(probe.rows(), 5);
  z << a.content_mean, a.style_mean;
  CHECK(bundle.decoder().forward(z) == loaded.decoder().forward(z));
  const Vector s1 = bundle.critic().forward(probe, a.style_mean);
  CHECK(s1 == loaded.critic().forward(probe, a.style_mean));
  CHECK(loaded.model_optimizer().first_moments()[0] == bundle.model_optimizer().first_moments()[0]);
}
