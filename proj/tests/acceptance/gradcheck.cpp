#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "mlvae/objectives.hpp"

static_assert(sizeof(mlvae::Real) == sizeof(double), "gradient checks need the double-precision build");

using namespace mlvae;

namespace {

constexpr double kStep = 1e-6;
constexpr double kTolerance = 1e-3;
constexpr int kProbesPerTensor = 3;

struct Nets {
  std::mt19937_64 rng;
  Encoder encoder;
  Decoder decoder;
  StatisticsNetwork critic;
  explicit Nets(const NetworkConfig& cfg) : rng(11), encoder(cfg, rng), decoder(cfg, rng), critic(cfg, rng) {}
};

struct Outcome {
  int probes = 0;
  double worst = 0.0;
};

/// `loss` returns the scalar whose gradient `backprop` accumulates into the parameters.
Outcome check(const std::vector<nn::Parameter*>& params, const std::function<double()>& loss,
              const std::function<void()>& backprop, std::uint64_t seed) {
  for (auto* p : params) p->grad.setZero();
  backprop();
  std::mt19937_64 pick(seed);
  Outcome out;
  for (auto* p : params) {
    std::uniform_int_distribution<Index> r(0, p->value.rows() - 1), c(0, p->value.cols() - 1);
    for (int k = 0; k < kProbesPerTensor; ++k) {
      const Index i = r(pick), j = c(pick);
      const double saved = p->value(i, j);
      p->value(i, j) = saved + kStep;
      const double up = loss();
      p->value(i, j) = saved - kStep;
      const double down = loss();
      p->value(i, j) = saved;
      const double numeric = (up - down) / (2.0 * kStep);
      const double analytic = p->grad(i, j);
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      const double rel = std::abs(numeric - analytic) / scale;
      if (rel > out.worst) out.worst = rel;
      ++out.probes;
      if (rel > kTolerance) {
        std::printf("  mismatch %s(%lld,%lld): analytic %.9g numeric %.9g\n", p->name.c_str(),
                    static_cast<long long>(i), static_cast<long long>(j), analytic, numeric);
      }
    }
  }
  return out;
}

std::vector<nn::Parameter*> join(std::vector<nn::Parameter*> a, const std::vector<nn::Parameter*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

bool report(const std::string& name, const Outcome& o) {
  const bool ok = o.worst < kTolerance;
  std::printf("%s %s: %d probes, worst relative error %.3g\n", ok ? "ok  " : "FAIL", name.c_str(), o.probes, o.worst);
  return ok;
}

}  // namespace

int main() {
  const auto splits = testing::synthetic_splits(3, 10, 4, 3, 8, 5);
  std::vector<std::size_t> groups{0, 5, 9};
  const GroupBatch batch = make_batch(splits, groups);
  bool all = true;

  for (auto [label, cfg] : {std::pair{"mlp", testing::small_mlp()}, std::pair{"conv", testing::small_conv()}}) {
    for (auto accumulation : {Accumulation::product, Accumulation::average}) {
      Nets n(cfg);
      const ElboOptions opts{accumulation, 1.7};
      const auto model = join(n.encoder.parameters(), n.decoder.parameters());
      const std::string tag = std::string(label) + "/" + std::string(to_string(accumulation));

      auto elbo_loss = [&] {
        NoiseSource noise(3);
        return -elbo_forward(batch.pixels, batch.groups, batch.group_size, n.encoder, n.decoder, opts, noise)
                    .objective();
      };
      auto elbo_backprop = [&] {
        NoiseSource noise(3);
        const ElboPass pass =
            elbo_forward(batch.pixels, batch.groups, batch.group_size, n.encoder, n.decoder, opts, noise);
        n.encoder.backward(pass.encoded, elbo_backward(pass, batch.pixels, n.decoder));
      };
      all &= report(tag + " -ELBO", check(model, elbo_loss, elbo_backprop, 1));

      const double lambda = 2.5;
      auto adv_loss = [&] {
        NoiseSource noise(4);
        return -adversarial_objective(batch, n.encoder, n.decoder, n.critic, lambda, opts, noise, false).value;
      };
      auto adv_backprop = [&] {
        NoiseSource noise(4);
        adversarial_objective(batch, n.encoder, n.decoder, n.critic, lambda, opts, noise, true);
      };
      all &= report(tag + " -ELBO + lambda * L_psi", check(model, adv_loss, adv_backprop, 2));

      auto critic_loss = [&] {
        NoiseSource noise(5);
        return -critic_objective(batch, n.encoder, n.critic, noise, false);
      };
      auto critic_backprop = [&] {
        NoiseSource noise(5);
        critic_objective(batch, n.encoder, n.critic, noise, true);
      };
      all &= report(tag + " -L_psi", check(n.critic.parameters(), critic_loss, critic_backprop, 3));
    }
  }
  return all ? 0 : 1;
}
