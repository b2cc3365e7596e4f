#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mlvae {

using Eigen::VectorXd;

struct LogVarRange {
  double min = -10.0;
  double max = 10.0;
};

/// Diagonal Gaussian N(mean, diag(exp(log_var))). Log-variances are clamped
/// into `LogVarRange` on construction so that precisions stay representable.
class DiagonalGaussian {
 public:
  DiagonalGaussian(VectorXd mean, VectorXd log_var, LogVarRange range = {});

  static DiagonalGaussian standard_normal(Eigen::Index dim);

  Eigen::Index dim() const noexcept { return mean_.size(); }
  const VectorXd& mean() const noexcept { return mean_; }
  const VectorXd& log_var() const noexcept { return log_var_; }
  VectorXd variance() const { return log_var_.array().exp().matrix(); }
  VectorXd precision() const { return (-log_var_.array()).exp().matrix(); }

 private:
  VectorXd mean_;
  VectorXd log_var_;
};

/// Gradient of a scalar with respect to a Gaussian's (mean, log_var).
struct GaussianGrad {
  VectorXd mean;
  VectorXd log_var;

  static GaussianGrad zeros(Eigen::Index dim) {
    return {VectorXd::Zero(dim), VectorXd::Zero(dim)};
  }
  GaussianGrad& operator+=(const GaussianGrad& other) {
    mean += other.mean;
    log_var += other.log_var;
    return *this;
  }
};

/// Per-dimension KL contributions 0.5 (exp(lv) + mu^2 - 1 - lv).
VectorXd kl_terms(const DiagonalGaussian& q);

/// KL(q || N(0, I)), summed with exact rounding.
double kl_to_standard_normal(const DiagonalGaussian& q);
GaussianGrad kl_to_standard_normal_grad(const DiagonalGaussian& q);

/// Reparameterized draw mean + exp(0.5 log_var) * noise.
VectorXd rsample(const DiagonalGaussian& q, const VectorXd& noise);
/// Pulls d(loss)/d(sample) back onto (mean, log_var).
GaussianGrad rsample_grad(const DiagonalGaussian& q, const VectorXd& noise, const VectorXd& grad_sample);

double log_density(const DiagonalGaussian& q, const VectorXd& x);

enum class Accumulation { product, average };

Accumulation parse_accumulation(std::string_view name);
std::string_view to_string(Accumulation a);

/// Normalized product of the member densities (precision-weighted pooling).
DiagonalGaussian accumulate_product(std::span<const DiagonalGaussian> posteriors);

/// Stand-in for the "simplified" accumulation: mean of means and mean of log-variances.
DiagonalGaussian accumulate_average(std::span<const DiagonalGaussian> posteriors);

DiagonalGaussian accumulate(Accumulation strategy, std::span<const DiagonalGaussian> posteriors);

/// Vector-Jacobian product of `accumulate`: maps the gradient on the pooled
/// posterior back onto each member posterior.
std::vector<GaussianGrad> accumulate_grad(Accumulation strategy,
                                          std::span<const DiagonalGaussian> posteriors,
                                          const GaussianGrad& grad_output);

}  // namespace mlvae
