#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "mlvae/errors.hpp"
#include "mlvae/gaussian.hpp"

using namespace mlvae;

namespace {

DiagonalGaussian g1(double m, double lv) { return {VectorXd::Constant(1, m), VectorXd::Constant(1, lv)}; }

DiagonalGaussian random_gaussian(std::mt19937_64& rng, Eigen::Index dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  VectorXd m(dim), lv(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    m[i] = n(rng);
    lv[i] = 0.8 * n(rng);
  }
  return {m, lv};
}

}  // namespace

TEST_CASE("DiagonalGaussian validates its parameters") {
  CHECK_THROWS_AS(DiagonalGaussian(VectorXd::Zero(2), VectorXd::Zero(3)), ShapeError);
  CHECK_THROWS_AS(DiagonalGaussian(VectorXd::Zero(0), VectorXd::Zero(0)), ShapeError);
  VectorXd bad = VectorXd::Zero(2);
  bad[1] = std::nan("");
  CHECK_THROWS_AS(DiagonalGaussian(bad, VectorXd::Zero(2)), InvalidDistribution);
  CHECK_THROWS_AS(DiagonalGaussian(VectorXd::Zero(2), VectorXd::Constant(2, INFINITY)), InvalidDistribution);
}

TEST_CASE("log-variances are clamped into range") {
  const DiagonalGaussian q(VectorXd::Zero(3), (VectorXd(3) << -50.0, 0.5, 40.0).finished());
  CHECK(q.log_var()[0] == -10.0);
  CHECK(q.log_var()[1] == 0.5);
  CHECK(q.log_var()[2] == 10.0);
  const DiagonalGaussian wide(VectorXd::Zero(1), VectorXd::Constant(1, -50.0),
                              {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()});
  CHECK(wide.log_var()[0] == -50.0);
}

TEST_CASE("KL to the standard normal") {
  CHECK(kl_to_standard_normal(DiagonalGaussian::standard_normal(5)) == 0.0);
  CHECK(kl_to_standard_normal(g1(1.0, 0.0)) == doctest::Approx(0.5));
  CHECK(kl_to_standard_normal(g1(0.0, std::log(2.0))) == doctest::Approx(0.5 * (2.0 - 1.0 - std::log(2.0))));

  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto q = random_gaussian(rng, 4);
    CHECK(kl_to_standard_normal(q) >= 0.0);
    const GaussianGrad g = kl_to_standard_normal_grad(q);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < 4; ++i) {
      VectorXd m = q.mean();
      m[i] += h;
      const double up = kl_to_standard_normal({m, q.log_var()});
      m[i] -= 2 * h;
      const double down = kl_to_standard_normal({m, q.log_var()});
      CHECK(g.mean[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
      VectorXd lv = q.log_var();
      lv[i] += h;
      const double up2 = kl_to_standard_normal({q.mean(), lv});
      lv[i] -= 2 * h;
      const double down2 = kl_to_standard_normal({q.mean(), lv});
      CHECK(g.log_var[i] == doctest::Approx((up2 - down2) / (2 * h)).epsilon(1e-6));
    }
  }
}

TEST_CASE("rsample is the reparameterized draw") {
  const DiagonalGaussian q((VectorXd(2) << 1.0, -2.0).finished(), (VectorXd(2) << 0.0, std::log(4.0)).finished());
  CHECK(rsample(q, VectorXd::Zero(2)) == q.mean());
  const VectorXd s = rsample(q, (VectorXd(2) << 1.0, 1.0).finished());
  CHECK(s[0] == doctest::Approx(2.0));
  CHECK(s[1] == doctest::Approx(0.0));
  CHECK_THROWS_AS(rsample(q, VectorXd::Zero(3)), ShapeError);

  const VectorXd noise = (VectorXd(2) << 0.3, -1.2).finished();
  const VectorXd gs = (VectorXd(2) << 0.7, 2.0).finished();
  const GaussianGrad g = rsample_grad(q, noise, gs);
  CHECK(g.mean == gs);
  CHECK(g.log_var[1] == doctest::Approx(2.0 * 0.5 * 2.0 * -1.2));
}

TEST_CASE("log_density of the standard normal at the origin") {
  const auto q = DiagonalGaussian::standard_normal(3);
  CHECK(log_density(q, VectorXd::Zero(3)) == doctest::Approx(-1.5 * std::log(2.0 * std::numbers::pi)));
}

TEST_CASE("product accumulation") {
  SUBCASE("single member is returned unchanged") {
    std::vector<DiagonalGaussian> one{g1(0.4, -0.3)};
    const auto p = accumulate_product(one);
    CHECK(p.mean() == one[0].mean());
    CHECK(p.log_var() == one[0].log_var());
  }
  SUBCASE("two standard normals halve the variance") {
    std::vector<DiagonalGaussian> two{g1(0.0, 0.0), g1(0.0, 0.0)};
    const auto p = accumulate_product(two);
    CHECK(p.mean()[0] == 0.0);
    CHECK(p.variance()[0] == doctest::Approx(0.5));
  }
  SUBCASE("precision-weighted mean, order independent") {
    std::vector<DiagonalGaussian> a{g1(1.0, 0.0), g1(3.0, std::log(3.0))};
    const auto p = accumulate_product(a);
    CHECK(p.precision()[0] == doctest::Approx(1.0 + 1.0 / 3.0));
    CHECK(p.mean()[0] == doctest::Approx((1.0 + 3.0 / 3.0) / (4.0 / 3.0)));
    std::vector<DiagonalGaussian> b{a[1], a[0]};
    CHECK(accumulate_product(b).mean()[0] == doctest::Approx(p.mean()[0]));
  }
  SUBCASE("errors") {
    std::vector<DiagonalGaussian> none;
    CHECK_THROWS_AS(accumulate_product(none), ArgumentError);
    std::vector<DiagonalGaussian> mixed{DiagonalGaussian::standard_normal(2), DiagonalGaussian::standard_normal(3)};
    CHECK_THROWS_AS(accumulate_product(mixed), ShapeError);
  }
}

TEST_CASE("average accumulation") {
  std::vector<DiagonalGaussian> a{g1(1.0, -1.0), g1(3.0, 1.0)};
  const auto p = accumulate_average(a);
  CHECK(p.mean()[0] == doctest::Approx(2.0));
  CHECK(p.log_var()[0] == doctest::Approx(0.0));
  CHECK(accumulate(Accumulation::average, a).mean()[0] == doctest::Approx(2.0));
  CHECK(parse_accumulation("product") == Accumulation::product);
  CHECK(to_string(Accumulation::average) == "average");
  CHECK_THROWS_AS(parse_accumulation("median"), ConfigError);
}

TEST_CASE("accumulate_grad matches finite differences") {
  std::mt19937_64 rng(5);
  for (Accumulation strategy : {Accumulation::product, Accumulation::average}) {
    std::vector<DiagonalGaussian> members{random_gaussian(rng, 3), random_gaussian(rng, 3), random_gaussian(rng, 3)};
    const VectorXd wm = (VectorXd(3) << 0.3, -1.1, 0.8).finished();
    const VectorXd wl = (VectorXd(3) << -0.4, 0.9, 0.2).finished();
    auto loss = [&](const std::vector<DiagonalGaussian>& ms) {
      const auto p = accumulate(strategy, ms);
      return wm.dot(p.mean()) + wl.dot(p.log_var());
    };
    const auto grads = accumulate_grad(strategy, members, {wm, wl});
    const double h = 1e-6;
    for (std::size_t k = 0; k < members.size(); ++k) {
      for (Eigen::Index i = 0; i < 3; ++i) {
        for (int which = 0; which < 2; ++which) {
          auto bump = [&](double delta) {
            auto ms = members;
            VectorXd m = ms[k].mean(), lv = ms[k].log_var();
            (which == 0 ? m : lv)[i] += delta;
            ms[k] = DiagonalGaussian(m, lv);
            return loss(ms);
          };
          const double fd = (bump(h) - bump(-h)) / (2 * h);
          const double analytic = which == 0 ? grads[k].mean[i] : grads[k].log_var[i];
          CHECK(analytic == doctest::Approx(fd).epsilon(1e-5));
        }
      }
    }
  }
}
