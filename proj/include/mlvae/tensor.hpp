#pragma once

#include <Eigen/Dense>

namespace mlvae {

// Network arithmetic runs in single precision; the MLVAE_DOUBLE build (used by
// the finite-difference gradient checks) switches everything to double.
#ifdef MLVAE_DOUBLE
using Real = double;
#else
using Real = float;
#endif

using Index = Eigen::Index;

/// Batch-major matrix: one observation (or latent vector) per row.
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using RowVector = Eigen::Matrix<Real, 1, Eigen::Dynamic>;

}  // namespace mlvae
