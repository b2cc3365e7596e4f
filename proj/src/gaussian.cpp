#include "mlvae/gaussian.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mlvae/errors.hpp"
#include "mlvae/exact_sum.hpp"

namespace mlvae {
namespace {

// Derived posteriors (pooled content) may legitimately leave the encoder's clamp range.
constexpr LogVarRange kUnclamped{-std::numeric_limits<double>::infinity(),
                                 std::numeric_limits<double>::infinity()};

void check_members(std::span<const DiagonalGaussian> posteriors) {
  if (posteriors.empty()) throw ArgumentError("accumulation needs at least one posterior");
  const auto d = posteriors.front().dim();
  for (const auto& q : posteriors) {
    if (q.dim() != d) throw ShapeError("accumulated posteriors must share one dimension");
  }
}

}  // namespace

DiagonalGaussian::DiagonalGaussian(VectorXd mean, VectorXd log_var, LogVarRange range)
    : mean_(std::move(mean)), log_var_(std::move(log_var)) {
  if (mean_.size() != log_var_.size()) {
    throw ShapeError("mean has " + std::to_string(mean_.size()) + " entries, log_var has " +
                     std::to_string(log_var_.size()));
  }
  if (mean_.size() < 1) throw ShapeError("a Gaussian needs dimension >= 1");
  if (!mean_.allFinite() || !log_var_.allFinite()) {
    throw InvalidDistribution("Gaussian parameters must be finite");
  }
  log_var_ = log_var_.cwiseMax(range.min).cwiseMin(range.max);
}

DiagonalGaussian DiagonalGaussian::standard_normal(Eigen::Index dim) {
  return {VectorXd::Zero(dim), VectorXd::Zero(dim)};
}

VectorXd kl_terms(const DiagonalGaussian& q) {
  const auto& m = q.mean().array();
  const auto& lv = q.log_var().array();
  return (0.5 * (lv.exp() + m * m - 1.0 - lv)).matrix();
}

double kl_to_standard_normal(const DiagonalGaussian& q) {
  const VectorXd terms = kl_terms(q);
  // Each term is >= 0 analytically; rounding can leave -0-ish dust near the optimum.
  return std::max(0.0, exact_sum({terms.data(), static_cast<std::size_t>(terms.size())}));
}

GaussianGrad kl_to_standard_normal_grad(const DiagonalGaussian& q) {
  return {q.mean(), (0.5 * (q.log_var().array().exp() - 1.0)).matrix()};
}

VectorXd rsample(const DiagonalGaussian& q, const VectorXd& noise) {
  if (noise.size() != q.dim()) {
    throw ShapeError("noise has " + std::to_string(noise.size()) + " entries, distribution has " +
                     std::to_string(q.dim()));
  }
  return (q.mean().array() + (0.5 * q.log_var().array()).exp() * noise.array()).matrix();
}

GaussianGrad rsample_grad(const DiagonalGaussian& q, const VectorXd& noise, const VectorXd& grad_sample) {
  if (noise.size() != q.dim() || grad_sample.size() != q.dim()) {
    throw ShapeError("rsample_grad: dimension mismatch");
  }
  const auto sigma = (0.5 * q.log_var().array()).exp();
  return {grad_sample, (grad_sample.array() * 0.5 * sigma * noise.array()).matrix()};
}

double log_density(const DiagonalGaussian& q, const VectorXd& x) {
  if (x.size() != q.dim()) throw ShapeError("log_density: dimension mismatch");
  const auto diff = x.array() - q.mean().array();
  const auto lv = q.log_var().array();
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  return -0.5 * (log_two_pi * static_cast<double>(q.dim()) + lv.sum() + (diff * diff * (-lv).exp()).sum());
}

Accumulation parse_accumulation(std::string_view name) {
  if (name == "product") return Accumulation::product;
  if (name == "average") return Accumulation::average;
  throw ConfigError("accumulation must be 'product' or 'average', got '" + std::string(name) + "'");
}

std::string_view to_string(Accumulation a) {
  return a == Accumulation::product ? "product" : "average";
}

DiagonalGaussian accumulate_product(std::span<const DiagonalGaussian> posteriors) {
  check_members(posteriors);
  if (posteriors.size() == 1) return posteriors.front();

  const auto d = posteriors.front().dim();
  VectorXd precision = VectorXd::Zero(d);
  VectorXd weighted_mean = VectorXd::Zero(d);
  for (const auto& q : posteriors) {
    const VectorXd w = q.precision();
    precision += w;
    weighted_mean += (q.mean().array() * w.array()).matrix();
  }
  VectorXd mean = (weighted_mean.array() / precision.array()).matrix();
  VectorXd log_var = (-precision.array().log()).matrix();
  return {std::move(mean), std::move(log_var), kUnclamped};
}

DiagonalGaussian accumulate_average(std::span<const DiagonalGaussian> posteriors) {
  check_members(posteriors);
  if (posteriors.size() == 1) return posteriors.front();

  const auto d = posteriors.front().dim();
  VectorXd mean = VectorXd::Zero(d);
  VectorXd log_var = VectorXd::Zero(d);
  for (const auto& q : posteriors) {
    mean += q.mean();
    log_var += q.log_var();
  }
  const double k = static_cast<double>(posteriors.size());
  return {mean / k, log_var / k, kUnclamped};
}

DiagonalGaussian accumulate(Accumulation strategy, std::span<const DiagonalGaussian> posteriors) {
  return strategy == Accumulation::product ? accumulate_product(posteriors)
                                           : accumulate_average(posteriors);
}

std::vector<GaussianGrad> accumulate_grad(Accumulation strategy,
                                          std::span<const DiagonalGaussian> posteriors,
                                          const GaussianGrad& grad_output) {
  check_members(posteriors);
  std::vector<GaussianGrad> grads;
  grads.reserve(posteriors.size());
  if (posteriors.size() == 1) {
    grads.push_back(grad_output);
    return grads;
  }

  if (strategy == Accumulation::average) {
    const double inv_k = 1.0 / static_cast<double>(posteriors.size());
    for (std::size_t i = 0; i < posteriors.size(); ++i) {
      grads.push_back({grad_output.mean * inv_k, grad_output.log_var * inv_k});
    }
    return grads;
  }

  // With w_i = exp(-lv_i), P = sum w_i, M = sum m_i w_i / P, LV = -log P:
  //   dM/dm_i = w_i / P,  dM/dlv_i = -w_i (m_i - M) / P,  dLV/dlv_i = w_i / P.
  const DiagonalGaussian pooled = accumulate_product(posteriors);
  const VectorXd inv_precision = pooled.variance();
  for (const auto& q : posteriors) {
    const VectorXd share = (q.precision().array() * inv_precision.array()).matrix();
    GaussianGrad g;
    g.mean = (grad_output.mean.array() * share.array()).matrix();
    g.log_var = (share.array() * (grad_output.log_var.array() -
                                  grad_output.mean.array() * (q.mean() - pooled.mean()).array()))
                    .matrix();
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace mlvae
