#pragma once

#include <span>
#include <vector>

namespace mlvae {

/// Correctly rounded floating-point summation (Shewchuk partials with the
/// final half-even correction). The result depends only on the multiset of
/// inputs, never on their order or grouping.
class ExactSum {
 public:
  void add(double x);
  void add(std::span<const double> xs) {
    for (double x : xs) add(x);
  }
  double value() const;

 private:
  std::vector<double> partials_;
  double special_ = 0.0;  // accumulates inf/nan so they propagate
  bool has_special_ = false;
};

double exact_sum(std::span<const double> xs);

}  // namespace mlvae
