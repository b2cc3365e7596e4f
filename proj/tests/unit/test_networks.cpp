#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "mlvae/errors.hpp"
#include "mlvae/networks.hpp"

using namespace mlvae;

namespace {
Matrix random_images(Index n, Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Matrix m(n, d);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}
}  // namespace

TEST_CASE("default configuration encodes 32x32 inputs into (2, 14) posteriors") {
  std::mt19937_64 rng(1);
  NetworkConfig cfg;
  Encoder enc(cfg, rng);
  const auto out = enc.forward(random_images(3, 1024, 2));
  CHECK(out.rows() == 3);
  CHECK(out.content_mean.cols() == 2);
  CHECK(out.style_mean.cols() == 14);
  Decoder dec(cfg, rng);
  CHECK(dec.decode(Matrix::Zero(1, 2), Matrix::Zero(1, 14)).cols() == 1024);
}

TEST_CASE("encoder is deterministic, order preserving and checks shapes") {
  for (const auto& cfg : {testing::small_mlp(), testing::small_conv()}) {
    std::mt19937_64 rng(3);
    Encoder enc(cfg, rng);
    const Matrix x = random_images(4, 64, 4);
    const auto a = enc.forward(x);
    const auto b = enc.forward(x);
    CHECK(a.style_mean == b.style_mean);
    Matrix swapped = x;
    swapped.row(0).swap(swapped.row(3));
    const auto c = enc.forward(swapped);
    CHECK(c.content_mean.row(0) == a.content_mean.row(3));
    Matrix dup(2, 64);
    dup << x.row(1), x.row(1);
    const auto d = enc.forward(dup);
    CHECK(d.style_log_var.row(0) == d.style_log_var.row(1));
    CHECK_THROWS_AS(enc.forward(Matrix::Zero(1, 63)), ShapeError);
  }
}

TEST_CASE("encoder log-variances are clamped and masked") {
  std::mt19937_64 rng(5);
  auto cfg = testing::small_mlp();
  cfg.log_var_range = {-0.01, 0.01};
  Encoder enc(cfg, rng);
  const auto out = enc.forward(random_images(8, 64, 6));
  CHECK(out.style_log_var.maxCoeff() <= 0.01f);
  CHECK(out.style_log_var.minCoeff() >= -0.01f);
  CHECK(out.style_active.minCoeff() == 0.0f);
  CHECK(out.content(0).dim() == 2);
}

TEST_CASE("decoder handles zero and swapped latents and checks widths") {
  std::mt19937_64 rng(7);
  for (const auto& cfg : {testing::small_mlp(), testing::small_conv()}) {
    Decoder dec(cfg, rng);
    const Matrix out = dec.decode(Matrix::Zero(2, 2), Matrix::Zero(2, 3));
    CHECK(out.cols() == 64);
    CHECK(out.allFinite());
    CHECK_THROWS_AS(dec.forward(Matrix::Zero(1, 4)), ShapeError);
    CHECK_THROWS_AS(dec.decode(Matrix::Zero(1, 3), Matrix::Zero(1, 3)), ShapeError);
  }
}

TEST_CASE("statistics network scores batches and honors freezing") {
  std::mt19937_64 rng(9);
  const auto cfg = testing::small_conv();
  StatisticsNetwork critic(cfg, rng);
  const Matrix x = random_images(5, 64, 10);
  const Matrix s = random_images(5, 3, 11);
  const Vector scores = critic.forward(x, s);
  CHECK(scores.size() == 5);
  CHECK(scores.allFinite());
  CHECK_THROWS_AS(critic.forward(x, Matrix::Zero(5, 2)), ShapeError);

  auto params = critic.parameters();
  nn::zero_grads(params);
  critic.set_frozen(true);
  critic.forward(x, s);
  const Matrix gs = critic.backward(Vector::Ones(5));
  CHECK(gs.rows() == 5);
  CHECK(gs.cols() == 3);
  for (auto* p : params) CHECK(p->grad.cwiseAbs().sum() == 0.0f);
  critic.set_frozen(false);
  critic.forward(x, s);
  critic.backward(Vector::Ones(5));
  double total = 0.0;
  for (auto* p : params) total += p->grad.cwiseAbs().sum();
  CHECK(total > 0.0);
}

TEST_CASE("network configuration validation") {
  NetworkConfig cfg;
  cfg.height = 30;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = NetworkConfig{};
  cfg.content_dim = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = NetworkConfig{};
  cfg.architecture = Architecture::mlp;
  cfg.hidden.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(parse_architecture("mlp") == Architecture::mlp);
  CHECK_THROWS_AS(parse_architecture("resnet"), ConfigError);
}
