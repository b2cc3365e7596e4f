#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "mlvae/exact_sum.hpp"

using mlvae::ExactSum;
using mlvae::exact_sum;

namespace {
using Wide = boost::multiprecision::number<boost::multiprecision::cpp_bin_float<4000, boost::multiprecision::digit_base_2>>;

double reference_sum(const std::vector<double>& xs) {
  Wide total = 0;
  for (double x : xs) total += Wide(x);
  return total.convert_to<double>();
}
}  // namespace

TEST_CASE("exact_sum recovers values lost to cancellation") {
  CHECK(exact_sum(std::vector<double>{1e100, 1.0, -1e100}) == 1.0);
  CHECK(exact_sum(std::vector<double>{0.1, 0.2, 0.3, -0.6}) == reference_sum({0.1, 0.2, 0.3, -0.6}));
  CHECK(exact_sum(std::vector<double>{}) == 0.0);
}

TEST_CASE("exact_sum is correctly rounded and order independent") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> mant(-1.0, 1.0);
  std::uniform_int_distribution<int> expo(-60, 60);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> xs(1 + trial % 37);
    for (auto& x : xs) x = std::ldexp(mant(rng), expo(rng));
    const double expected = reference_sum(xs);
    CHECK(exact_sum(xs) == expected);
    std::shuffle(xs.begin(), xs.end(), rng);
    CHECK(exact_sum(xs) == expected);
  }
}

TEST_CASE("exact_sum rounds halfway cases to even") {
  const double ulp_half = std::ldexp(1.0, -53);
  CHECK(exact_sum(std::vector<double>{1.0, ulp_half}) == 1.0);
  CHECK(exact_sum(std::vector<double>{1.0, ulp_half, std::ldexp(1.0, -200)}) == std::nextafter(1.0, 2.0));
}

TEST_CASE("exact_sum propagates infinities and nans") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(exact_sum(std::vector<double>{1.0, inf}) == inf);
  CHECK(std::isnan(exact_sum(std::vector<double>{inf, -inf})));
  CHECK(std::isnan(exact_sum(std::vector<double>{1.0, std::nan("")})));
  ExactSum s;
  s.add(2.0);
  s.add(-inf);
  CHECK(s.value() == -inf);
}
