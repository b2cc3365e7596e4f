#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mlvae/data.hpp"
#include "mlvae/gaussian.hpp"
#include "mlvae/networks.hpp"

namespace mlvae {

/// The single source of randomness for one training/evaluation stream.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed) : rng_(seed) {}

  VectorXd normal(Index n);
  Index uniform_index(Index n);
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// ------------------------------------------------------------------ likelihood

/// Sum over pixels of x log sigmoid(l) + (1 - x) log(1 - sigmoid(l)).
double bernoulli_log_likelihood(std::span<const Real> x, std::span<const Real> logits);

/// d/dlogits of the Bernoulli log-likelihood, row by row: x - sigmoid(l).
Matrix bernoulli_log_likelihood_grad(const Matrix& x, const Matrix& logits);

Matrix sigmoid(const Matrix& logits);

// ------------------------------------------------------------------ ELBO

struct ElboOptions {
  Accumulation accumulation = Accumulation::product;
  double beta = 1.0;
};

/// Group ELBO terms. `objective` = recon - beta * style_kl - content_kl,
/// summed with exact rounding over the individual per-member and
/// per-dimension contributions.
struct ElboTerms {
  double recon = 0.0;       // sum_i log p(x_i | c, s_i)
  double style_kl = 0.0;    // sum_i KL(q(s_i|x_i) || p(s))
  double content_kl = 0.0;  // KL(q(c|x) || p(c))
  double beta = 1.0;
  double objective = 0.0;
};

/// Forward state of the ELBO on a batch, kept for the backward pass.
struct ElboPass {
  EncoderBatch encoded;
  std::vector<DiagonalGaussian> content;  // pooled posterior per group
  std::vector<VectorXd> content_noise;    // per group
  std::vector<VectorXd> style_noise;      // per member row
  Matrix latents;                         // per member row: [c_group; s_i]
  Matrix logits;
  std::vector<ElboTerms> terms;           // per group
  Index groups = 0;
  Index group_size = 0;
  ElboOptions options;

  double objective() const;  // mean of group objectives
  ElboTerms mean_terms() const;
};

ElboPass elbo_forward(const Matrix& pixels, Index groups, Index group_size, Encoder& encoder,
                      Decoder& decoder, const ElboOptions& options, NoiseSource& noise);

/// Backpropagates `-weight * objective()` into the decoder parameters and
/// returns its gradient with respect to the encoder outputs.
EncoderGrad elbo_backward(const ElboPass& pass, const Matrix& pixels, Decoder& decoder, double weight = 1.0);

/// ELBO of one group given its K member rows.
ElboTerms group_elbo(const Matrix& members, Encoder& encoder, Decoder& decoder, const ElboOptions& options,
                     NoiseSource& noise);

/// Mean group ELBO over a batch.
double dataset_objective(const GroupBatch& batch, Encoder& encoder, Decoder& decoder,
                         const ElboOptions& options, NoiseSource& noise);

// ------------------------------------------------------------------ pair sampling

struct PairIndex {
  Index x_group = 0, x_member = 0;
  Index s_group = 0, s_member = 0;
};

/// Index part of the pair sampler: for every group b one same-group pair
/// (i != j) and one pair against the next group (b + 1 mod N_B).
struct PairIndices {
  std::vector<PairIndex> joint;     // R
  std::vector<PairIndex> marginal;  // R-bar
};

PairIndices draw_pair_indices(Index groups, Index group_size, NoiseSource& noise);

struct PairSets {
  PairIndices indices;
  Matrix joint_x, joint_s;
  Matrix marginal_x, marginal_s;
  std::vector<VectorXd> joint_noise, marginal_noise;

  Index size() const { return joint_x.rows(); }
};

/// Draws R and R-bar from a batch whose encoder outputs are already known.
PairSets sample_pairs(const GroupBatch& batch, const EncoderBatch& encoded, NoiseSource& noise);
PairSets sample_pairs(const GroupBatch& batch, Encoder& encoder, NoiseSource& noise);

/// Adds the pull-back of d(loss)/d(style samples) onto the source members' style posteriors.
void pairs_backward(const PairSets& pairs, const EncoderBatch& encoded, const Matrix& grad_joint_s,
                    const Matrix& grad_marginal_s, EncoderGrad& grad);

// ------------------------------------------------------------------ mutual information

/// Donsker-Varadhan bound: mean(joint) - log mean exp(marginal), stabilized.
double dv_bound(std::span<const double> joint_scores, std::span<const double> marginal_scores);

struct DvGrad {
  std::vector<double> joint;
  std::vector<double> marginal;
};
DvGrad dv_bound_grad(std::span<const double> joint_scores, std::span<const double> marginal_scores);

struct CriticScores {
  std::vector<double> joint;
  std::vector<double> marginal;
};

/// Scores R then R-bar in one critic pass (the critic caches it for backward).
CriticScores score_pairs(const PairSets& pairs, StatisticsNetwork& critic);

/// L_psi(R, R-bar) for the current critic.
double dv_mi_loss(const PairSets& pairs, StatisticsNetwork& critic);

// ------------------------------------------------------------------ combined objectives

struct AdversarialValue {
  double elbo = 0.0;  // mean group objective
  double mi = 0.0;    // L_psi on the batch pairs (0 when lambda is not applied)
  double value = 0.0; // elbo - lambda * mi
  ElboTerms mean_terms;
};

/// elbo - lambda * L_psi. When `backprop` is set, accumulates the gradient of
/// the negated value into encoder and decoder parameters; the critic is
/// frozen throughout, so its parameter gradients are left untouched.
AdversarialValue adversarial_objective(const GroupBatch& batch, Encoder& encoder, Decoder& decoder,
                                       StatisticsNetwork& critic, double lambda, const ElboOptions& options,
                                       NoiseSource& noise, bool backprop);

/// One critic objective evaluation on a batch: returns L_psi and, when
/// `backprop` is set, accumulates d(-L_psi)/d(psi). Encoder parameters are untouched.
double critic_objective(const GroupBatch& batch, Encoder& encoder, StatisticsNetwork& critic,
                        NoiseSource& noise, bool backprop);

}  // namespace mlvae
