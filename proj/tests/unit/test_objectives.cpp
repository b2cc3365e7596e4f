#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "fixtures.hpp"
#include "mlvae/errors.hpp"
#include "mlvae/exact_sum.hpp"
#include "mlvae/objectives.hpp"

using namespace mlvae;

namespace {

struct Nets {
  std::mt19937_64 rng;
  Encoder encoder;
  Decoder decoder;
  StatisticsNetwork critic;
  explicit Nets(const NetworkConfig& cfg, std::uint64_t seed = 1)
      : rng(seed), encoder(cfg, rng), decoder(cfg, rng), critic(cfg, rng) {}
};

double grad_norm(const std::vector<nn::Parameter*>& params) {
  double total = 0.0;
  for (auto* p : params) total += p->grad.cwiseAbs().sum();
  return total;
}

}  // namespace

TEST_CASE("Bernoulli log-likelihood") {
  std::vector<Real> x(1024), logits(1024, 0.0f);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<Real>(i % 2);
  CHECK(bernoulli_log_likelihood(x, logits) == doctest::Approx(-1024 * std::numbers::ln2));
  std::vector<Real> y{1.0f, 0.0f}, l{30.0f, -30.0f};
  CHECK(bernoulli_log_likelihood(y, l) == doctest::Approx(0.0).epsilon(1e-9));
  std::vector<Real> big{1000.0f}, one{0.0f};
  CHECK(bernoulli_log_likelihood(one, big) == doctest::Approx(-1000.0));
  CHECK_THROWS_AS(bernoulli_log_likelihood(y, std::vector<Real>{0.0f}), ShapeError);
}

TEST_CASE("group ELBO terms") {
  Nets nets(testing::small_mlp());
  const auto splits = testing::synthetic_splits();
  const Matrix members = splits.materialize(splits.model_train[0].members);
  NoiseSource noise(3);
  const ElboTerms t = group_elbo(members, nets.encoder, nets.decoder, {}, noise);
  CHECK(t.style_kl >= 0.0);
  CHECK(t.content_kl >= 0.0);
  CHECK(t.objective == doctest::Approx(t.recon - t.style_kl - t.content_kl));
  CHECK_THROWS_AS(group_elbo(Matrix(0, 64), nets.encoder, nets.decoder, {}, noise), ArgumentError);

  NoiseSource n1(4), n2(4);
  ElboOptions heavy{Accumulation::product, 3.0};
  const ElboTerms a = group_elbo(members, nets.encoder, nets.decoder, {}, n1);
  const ElboTerms b = group_elbo(members, nets.encoder, nets.decoder, heavy, n2);
  CHECK(b.style_kl == a.style_kl);
  CHECK(b.objective == doctest::Approx(a.objective - 2.0 * a.style_kl));
}

TEST_CASE("posteriors equal to the prior have zero KL terms") {
  Nets nets(testing::small_mlp());
  for (auto* p : nets.encoder.parameters()) {
    if (p->name.find("head") != std::string::npos) p->value.setZero();
  }
  const auto splits = testing::synthetic_splits();
  NoiseSource noise(1);
  const ElboTerms t = group_elbo(splits.materialize(splits.model_train[0].members), nets.encoder, nets.decoder,
                                 {Accumulation::average, 1.0}, noise);
  CHECK(t.style_kl == 0.0);
  CHECK(t.content_kl == 0.0);
}

TEST_CASE("pair indices satisfy the sampler's structure") {
  NoiseSource noise(11);
  for (int t = 0; t < 200; ++t) {
    const Index groups = 2 + t % 7, k = 2 + t % 4;
    const PairIndices idx = draw_pair_indices(groups, k, noise);
    REQUIRE(idx.joint.size() == static_cast<std::size_t>(groups));
    REQUIRE(idx.marginal.size() == static_cast<std::size_t>(groups));
    for (Index b = 0; b < groups; ++b) {
      const auto& j = idx.joint[static_cast<std::size_t>(b)];
      CHECK(j.x_group == b);
      CHECK(j.s_group == b);
      CHECK(j.x_member != j.s_member);
      const auto& m = idx.marginal[static_cast<std::size_t>(b)];
      CHECK(m.x_group == b);
      CHECK(m.s_group == (b + 1) % groups);
      CHECK(m.x_member < k);
      CHECK(m.s_member < k);
    }
  }
  CHECK_THROWS_AS(draw_pair_indices(1, 2, noise), ConfigError);
  CHECK_THROWS_AS(draw_pair_indices(4, 1, noise), ConfigError);
}

TEST_CASE("sampled pairs carry the indexed pixels") {
  Nets nets(testing::small_mlp());
  const auto splits = testing::synthetic_splits();
  std::vector<std::size_t> ids{0, 7, 14, 21};
  const GroupBatch batch = make_batch(splits, ids);
  NoiseSource noise(2);
  const PairSets pairs = sample_pairs(batch, nets.encoder, noise);
  CHECK(pairs.size() == 4);
  for (Index b = 0; b < 4; ++b) {
    const auto& j = pairs.indices.joint[static_cast<std::size_t>(b)];
    CHECK(pairs.joint_x.row(b) == batch.pixels.row(batch.row(j.x_group, j.x_member)));
    const auto& m = pairs.indices.marginal[static_cast<std::size_t>(b)];
    CHECK(pairs.marginal_x.row(b) == batch.pixels.row(batch.row(m.x_group, m.x_member)));
  }
}

TEST_CASE("Donsker-Varadhan bound") {
  const std::vector<double> same{0.3, 0.3, 0.3};
  CHECK(dv_bound(same, same) == doctest::Approx(0.0));
  const std::vector<double> joint{2.0, 4.0}, marginal{0.0, std::log(3.0)};
  CHECK(dv_bound(joint, marginal) == doctest::Approx(3.0 - std::log(2.0)));
  const std::vector<double> huge{1000.0, 1001.0};
  CHECK(std::isfinite(dv_bound(huge, huge)));
  CHECK(dv_bound(huge, huge) == doctest::Approx(1000.5 - (1000.0 + std::log((1.0 + std::exp(1.0)) / 2.0))));
  CHECK_THROWS_AS(dv_bound({}, same), ArgumentError);

  const std::vector<double> m2{0.4, -1.3, 2.2};
  const DvGrad g = dv_bound_grad(joint, m2);
  const double h = 1e-6;
  for (std::size_t i = 0; i < m2.size(); ++i) {
    auto up = m2, down = m2;
    up[i] += h;
    down[i] -= h;
    CHECK(g.marginal[i] == doctest::Approx((dv_bound(joint, up) - dv_bound(joint, down)) / (2 * h)).epsilon(1e-6));
  }
  CHECK(g.joint[0] == doctest::Approx(0.5));
}

TEST_CASE("adversarial objective with lambda zero equals the ELBO") {
  Nets nets(testing::small_mlp());
  const auto splits = testing::synthetic_splits();
  std::vector<std::size_t> ids{1, 8, 15, 22, 3};
  const GroupBatch batch = make_batch(splits, ids);
  NoiseSource a(5), b(5);
  const double elbo = dataset_objective(batch, nets.encoder, nets.decoder, {}, a);
  const AdversarialValue v = adversarial_objective(batch, nets.encoder, nets.decoder, nets.critic, 0.0, {}, b, false);
  CHECK(v.value == elbo);
  CHECK(v.elbo == elbo);
  NoiseSource c(5);
  CHECK_THROWS_AS(adversarial_objective(batch, nets.encoder, nets.decoder, nets.critic, -0.1, {}, c, false),
                  StateError);
}

TEST_CASE("adversarial step leaves the critic alone; critic step leaves the encoder alone") {
  Nets nets(testing::small_mlp());
  const auto splits = testing::synthetic_splits();
  std::vector<std::size_t> ids{2, 9, 16, 23};
  const GroupBatch batch = make_batch(splits, ids);
  auto model = nets.encoder.parameters();
  for (auto* p : nets.decoder.parameters()) model.push_back(p);
  const auto critic = nets.critic.parameters();
  nn::zero_grads(model);
  nn::zero_grads(critic);

  NoiseSource noise(6);
  adversarial_objective(batch, nets.encoder, nets.decoder, nets.critic, 2.5, {}, noise, true);
  CHECK(grad_norm(critic) == 0.0);
  CHECK(grad_norm(model) > 0.0);
  CHECK_FALSE(nets.critic.frozen());

  nn::zero_grads(model);
  const double mi = critic_objective(batch, nets.encoder, nets.critic, noise, true);
  CHECK(std::isfinite(mi));
  CHECK(grad_norm(model) == 0.0);
  CHECK(grad_norm(critic) > 0.0);
}

TEST_CASE("MI penalty gradient flows only through the style posteriors") {
  Nets nets(testing::small_mlp());
  const auto splits = testing::synthetic_splits();
  std::vector<std::size_t> ids{0, 10, 20};
  const GroupBatch batch = make_batch(splits, ids);
  const EncoderBatch encoded = nets.encoder.forward(batch.pixels);
  NoiseSource noise(8);
  const PairSets pairs = sample_pairs(batch, encoded, noise);
  EncoderGrad grad = EncoderGrad::zeros(encoded.rows(), 2, 3);
  pairs_backward(pairs, encoded, Matrix::Ones(3, 3), Matrix::Ones(3, 3), grad);
  CHECK(grad.content_mean.cwiseAbs().sum() == 0.0f);
  CHECK(grad.style_mean.sum() == doctest::Approx(18.0));
}
