#include "mlvae/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mlvae/errors.hpp"
#include "mlvae/exact_sum.hpp"

namespace mlvae {
namespace {

VectorXd to_double(const Eigen::Ref<const RowVector>& row) { return row.transpose().cast<double>(); }

std::span<const Real> row_span(const Matrix& m, Index r) {
  return {m.row(r).data(), static_cast<std::size_t>(m.cols())};
}

void add_row(Matrix& m, Index r, const VectorXd& v) { m.row(r) += v.transpose().cast<Real>(); }

// Restores the critic's frozen flag when the adversarial step finishes.
class FreezeGuard {
 public:
  explicit FreezeGuard(StatisticsNetwork& critic) : critic_(critic), was_(critic.frozen()) {
    critic_.set_frozen(true);
  }
  ~FreezeGuard() { critic_.set_frozen(was_); }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  StatisticsNetwork& critic_;
  bool was_;
};

}  // namespace

VectorXd NoiseSource::normal(Index n) {
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal_(rng_);
  return v;
}

Index NoiseSource::uniform_index(Index n) {
  return std::uniform_int_distribution<Index>(0, n - 1)(rng_);
}

// ------------------------------------------------------------------ likelihood

double bernoulli_log_likelihood(std::span<const Real> x, std::span<const Real> logits) {
  if (x.size() != logits.size()) throw ShapeError("likelihood: observation/logit size mismatch");
  double sum = 0.0;
  for (std::size_t p = 0; p < x.size(); ++p) {
    const double l = logits[p];
    const double softplus = std::max(l, 0.0) + std::log1p(std::exp(-std::fabs(l)));
    sum += static_cast<double>(x[p]) * l - softplus;
  }
  return sum;
}

Matrix sigmoid(const Matrix& logits) {
  return (Real(1) / (Real(1) + (-logits.array()).exp())).matrix();
}

Matrix bernoulli_log_likelihood_grad(const Matrix& x, const Matrix& logits) { return x - sigmoid(logits); }

// ------------------------------------------------------------------ ELBO

double ElboPass::objective() const {
  double sum = 0.0;
  for (const auto& t : terms) sum += t.objective;
  return sum / static_cast<double>(terms.size());
}

ElboTerms ElboPass::mean_terms() const {
  ElboTerms m;
  m.beta = options.beta;
  for (const auto& t : terms) {
    m.recon += t.recon;
    m.style_kl += t.style_kl;
    m.content_kl += t.content_kl;
    m.objective += t.objective;
  }
  const auto n = static_cast<double>(terms.size());
  m.recon /= n;
  m.style_kl /= n;
  m.content_kl /= n;
  m.objective /= n;
  return m;
}

ElboPass elbo_forward(const Matrix& pixels, Index groups, Index group_size, Encoder& encoder,
                      Decoder& decoder, const ElboOptions& options, NoiseSource& noise) {
  if (groups < 1 || group_size < 1) throw ArgumentError("ELBO needs at least one group of size >= 1");
  if (pixels.rows() != groups * group_size) throw ShapeError("ELBO: pixel rows != groups * group size");
  if (options.beta < 0.0 || !std::isfinite(options.beta)) throw ArgumentError("beta must be finite and >= 0");

  const auto& cfg = encoder.config();
  const Index dc = cfg.content_dim, ds = cfg.style_dim;

  ElboPass pass;
  pass.groups = groups;
  pass.group_size = group_size;
  pass.options = options;
  pass.encoded = encoder.forward(pixels);
  pass.latents.resize(pixels.rows(), dc + ds);

  std::vector<DiagonalGaussian> members;
  for (Index b = 0; b < groups; ++b) {
    members.clear();
    for (Index i = 0; i < group_size; ++i) members.push_back(pass.encoded.content(b * group_size + i));
    pass.content.push_back(accumulate(options.accumulation, members));
    pass.content_noise.push_back(noise.normal(dc));
    const VectorXd c = rsample(pass.content.back(), pass.content_noise.back());
    for (Index i = 0; i < group_size; ++i) {
      const Index row = b * group_size + i;
      pass.style_noise.push_back(noise.normal(ds));
      const VectorXd s = rsample(pass.encoded.style(row), pass.style_noise.back());
      pass.latents.row(row).head(dc) = c.transpose().cast<Real>();
      pass.latents.row(row).tail(ds) = s.transpose().cast<Real>();
    }
  }
  pass.logits = decoder.forward(pass.latents);

  for (Index b = 0; b < groups; ++b) {
    ElboTerms t;
    t.beta = options.beta;
    ExactSum objective, style_kl;
    for (Index i = 0; i < group_size; ++i) {
      const Index row = b * group_size + i;
      const double recon = bernoulli_log_likelihood(row_span(pixels, row), row_span(pass.logits, row));
      t.recon += recon;
      objective.add(recon);
      const VectorXd kl = kl_terms(pass.encoded.style(row));
      for (double v : kl) {
        style_kl.add(v);
        objective.add(-options.beta * v);
      }
    }
    const VectorXd ckl = kl_terms(pass.content[static_cast<std::size_t>(b)]);
    for (double v : ckl) objective.add(-v);
    t.style_kl = std::max(0.0, style_kl.value());
    t.content_kl = kl_to_standard_normal(pass.content[static_cast<std::size_t>(b)]);
    t.objective = objective.value();
    pass.terms.push_back(t);
  }
  return pass;
}

EncoderGrad elbo_backward(const ElboPass& pass, const Matrix& pixels, Decoder& decoder, double weight) {
  const auto& cfg = decoder.config();
  const Index dc = cfg.content_dim, ds = cfg.style_dim;
  const Index k = pass.group_size;
  const double w = weight / static_cast<double>(pass.groups);

  const Matrix grad_logits = static_cast<Real>(-w) * bernoulli_log_likelihood_grad(pixels, pass.logits);
  const Matrix grad_latents = decoder.backward(grad_logits);

  EncoderGrad grad = EncoderGrad::zeros(pixels.rows(), dc, ds);
  std::vector<DiagonalGaussian> members;
  for (Index b = 0; b < pass.groups; ++b) {
    const auto& pooled = pass.content[static_cast<std::size_t>(b)];
    VectorXd grad_c = VectorXd::Zero(dc);
    members.clear();
    for (Index i = 0; i < k; ++i) {
      const Index row = b * k + i;
      grad_c += to_double(grad_latents.row(row).head(dc));
      members.push_back(pass.encoded.content(row));

      const DiagonalGaussian q_s = pass.encoded.style(row);
      GaussianGrad gs = rsample_grad(q_s, pass.style_noise[static_cast<std::size_t>(row)],
                                     to_double(grad_latents.row(row).tail(ds)));
      const GaussianGrad kl = kl_to_standard_normal_grad(q_s);
      gs.mean += w * pass.options.beta * kl.mean;
      gs.log_var += w * pass.options.beta * kl.log_var;
      add_row(grad.style_mean, row, gs.mean);
      add_row(grad.style_log_var, row, gs.log_var);
    }
    GaussianGrad gp = rsample_grad(pooled, pass.content_noise[static_cast<std::size_t>(b)], grad_c);
    const GaussianGrad kl = kl_to_standard_normal_grad(pooled);
    gp.mean += w * kl.mean;
    gp.log_var += w * kl.log_var;
    const auto member_grads = accumulate_grad(pass.options.accumulation, members, gp);
    for (Index i = 0; i < k; ++i) {
      add_row(grad.content_mean, b * k + i, member_grads[static_cast<std::size_t>(i)].mean);
      add_row(grad.content_log_var, b * k + i, member_grads[static_cast<std::size_t>(i)].log_var);
    }
  }
  return grad;
}

ElboTerms group_elbo(const Matrix& members, Encoder& encoder, Decoder& decoder, const ElboOptions& options,
                     NoiseSource& noise) {
  if (members.rows() < 1) throw ArgumentError("group_elbo: empty group");
  return elbo_forward(members, 1, members.rows(), encoder, decoder, options, noise).terms.front();
}

double dataset_objective(const GroupBatch& batch, Encoder& encoder, Decoder& decoder,
                         const ElboOptions& options, NoiseSource& noise) {
  return elbo_forward(batch.pixels, batch.groups, batch.group_size, encoder, decoder, options, noise)
      .objective();
}

// ------------------------------------------------------------------ pair sampling

PairIndices draw_pair_indices(Index groups, Index group_size, NoiseSource& noise) {
  if (groups < 2) throw ConfigError("pair sampling needs N_B >= 2 groups per batch");
  if (group_size < 2) throw ConfigError("pair sampling needs group size K >= 2");
  PairIndices out;
  out.joint.reserve(static_cast<std::size_t>(groups));
  out.marginal.reserve(static_cast<std::size_t>(groups));
  for (Index b = 0; b < groups; ++b) {
    const Index i = noise.uniform_index(group_size);
    Index j = noise.uniform_index(group_size - 1);
    if (j >= i) ++j;
    out.joint.push_back({b, i, b, j});

    const Index m = (b + 1) % groups;  // next group
    const Index k = noise.uniform_index(group_size);
    const Index l = noise.uniform_index(group_size);
    out.marginal.push_back({b, k, m, l});
  }
  return out;
}

PairSets sample_pairs(const GroupBatch& batch, const EncoderBatch& encoded, NoiseSource& noise) {
  if (encoded.rows() != batch.pixels.rows()) throw ShapeError("sample_pairs: encoder rows != batch rows");
  PairSets pairs;
  pairs.indices = draw_pair_indices(batch.groups, batch.group_size, noise);
  const Index n = batch.groups;
  const Index d = batch.pixels.cols();
  const Index ds = encoded.style_mean.cols();
  pairs.joint_x.resize(n, d);
  pairs.marginal_x.resize(n, d);
  pairs.joint_s.resize(n, ds);
  pairs.marginal_s.resize(n, ds);

  auto fill = [&](const PairIndex& p, Index slot, Matrix& xs, Matrix& ss, std::vector<VectorXd>& noises) {
    xs.row(slot) = batch.pixels.row(batch.row(p.x_group, p.x_member));
    noises.push_back(noise.normal(ds));
    const VectorXd s = rsample(encoded.style(batch.row(p.s_group, p.s_member)), noises.back());
    ss.row(slot) = s.transpose().cast<Real>();
  };
  for (Index b = 0; b < n; ++b) {
    fill(pairs.indices.joint[static_cast<std::size_t>(b)], b, pairs.joint_x, pairs.joint_s, pairs.joint_noise);
    fill(pairs.indices.marginal[static_cast<std::size_t>(b)], b, pairs.marginal_x, pairs.marginal_s,
         pairs.marginal_noise);
  }
  return pairs;
}

PairSets sample_pairs(const GroupBatch& batch, Encoder& encoder, NoiseSource& noise) {
  return sample_pairs(batch, encoder.forward(batch.pixels), noise);
}

void pairs_backward(const PairSets& pairs, const EncoderBatch& encoded, const Matrix& grad_joint_s,
                    const Matrix& grad_marginal_s, EncoderGrad& grad) {
  const Index k = encoded.rows() / static_cast<Index>(pairs.indices.joint.size());
  auto pull = [&](const std::vector<PairIndex>& idx, const std::vector<VectorXd>& noises, const Matrix& g) {
    for (std::size_t p = 0; p < idx.size(); ++p) {
      const Index row = idx[p].s_group * k + idx[p].s_member;
      const GaussianGrad gs = rsample_grad(encoded.style(row), noises[p], to_double(g.row(static_cast<Index>(p))));
      add_row(grad.style_mean, row, gs.mean);
      add_row(grad.style_log_var, row, gs.log_var);
    }
  };
  pull(pairs.indices.joint, pairs.joint_noise, grad_joint_s);
  pull(pairs.indices.marginal, pairs.marginal_noise, grad_marginal_s);
}

// ------------------------------------------------------------------ mutual information

double dv_bound(std::span<const double> joint_scores, std::span<const double> marginal_scores) {
  if (joint_scores.empty() || marginal_scores.empty()) {
    throw ArgumentError("the Donsker-Varadhan bound needs nonempty R and R-bar");
  }
  const double mean_joint = std::accumulate(joint_scores.begin(), joint_scores.end(), 0.0) /
                            static_cast<double>(joint_scores.size());
  const double peak = *std::max_element(marginal_scores.begin(), marginal_scores.end());
  double acc = 0.0;
  for (double t : marginal_scores) acc += std::exp(t - peak);
  const double log_mean_exp = peak + std::log(acc / static_cast<double>(marginal_scores.size()));
  return mean_joint - log_mean_exp;
}

DvGrad dv_bound_grad(std::span<const double> joint_scores, std::span<const double> marginal_scores) {
  if (joint_scores.empty() || marginal_scores.empty()) {
    throw ArgumentError("the Donsker-Varadhan bound needs nonempty R and R-bar");
  }
  DvGrad g;
  g.joint.assign(joint_scores.size(), 1.0 / static_cast<double>(joint_scores.size()));
  const double peak = *std::max_element(marginal_scores.begin(), marginal_scores.end());
  double total = 0.0;
  g.marginal.resize(marginal_scores.size());
  for (std::size_t i = 0; i < marginal_scores.size(); ++i) {
    g.marginal[i] = std::exp(marginal_scores[i] - peak);
    total += g.marginal[i];
  }
  for (double& v : g.marginal) v = -v / total;
  return g;
}

CriticScores score_pairs(const PairSets& pairs, StatisticsNetwork& critic) {
  const Index n = pairs.joint_x.rows(), m = pairs.marginal_x.rows();
  Matrix x(n + m, pairs.joint_x.cols());
  x << pairs.joint_x, pairs.marginal_x;
  Matrix s(n + m, pairs.joint_s.cols());
  s << pairs.joint_s, pairs.marginal_s;
  const Vector scores = critic.forward(x, s);
  CriticScores out;
  out.joint.resize(static_cast<std::size_t>(n));
  out.marginal.resize(static_cast<std::size_t>(m));
  for (Index i = 0; i < n; ++i) out.joint[static_cast<std::size_t>(i)] = scores[i];
  for (Index i = 0; i < m; ++i) out.marginal[static_cast<std::size_t>(i)] = scores[n + i];
  return out;
}

double dv_mi_loss(const PairSets& pairs, StatisticsNetwork& critic) {
  if (pairs.joint_x.rows() == 0 || pairs.marginal_x.rows() == 0) {
    throw ArgumentError("dv_mi_loss: empty pair sets");
  }
  const auto scores = score_pairs(pairs, critic);
  return dv_bound(scores.joint, scores.marginal);
}

namespace {
Vector stack_grad(const DvGrad& g, double scale) {
  Vector v(static_cast<Index>(g.joint.size() + g.marginal.size()));
  Index i = 0;
  for (double x : g.joint) v[i++] = static_cast<Real>(scale * x);
  for (double x : g.marginal) v[i++] = static_cast<Real>(scale * x);
  return v;
}
}  // namespace

// ------------------------------------------------------------------ combined objectives

AdversarialValue adversarial_objective(const GroupBatch& batch, Encoder& encoder, Decoder& decoder,
                                       StatisticsNetwork& critic, double lambda, const ElboOptions& options,
                                       NoiseSource& noise, bool backprop) {
  if (!(lambda >= 0.0)) throw StateError("lambda must be >= 0, got " + std::to_string(lambda));
  FreezeGuard guard(critic);

  const ElboPass pass = elbo_forward(batch.pixels, batch.groups, batch.group_size, encoder, decoder, options, noise);
  const PairSets pairs = sample_pairs(batch, pass.encoded, noise);
  const CriticScores scores = score_pairs(pairs, critic);

  AdversarialValue out;
  out.elbo = pass.objective();
  out.mean_terms = pass.mean_terms();
  out.mi = dv_bound(scores.joint, scores.marginal);
  out.value = out.elbo - lambda * out.mi;
  if (!backprop) return out;

  EncoderGrad grad = elbo_backward(pass, batch.pixels, decoder);
  if (lambda > 0.0) {
    const Matrix grad_s = critic.backward(stack_grad(dv_bound_grad(scores.joint, scores.marginal), lambda));
    const Index n = pairs.joint_s.rows();
    pairs_backward(pairs, pass.encoded, grad_s.topRows(n), grad_s.bottomRows(grad_s.rows() - n), grad);
  }
  encoder.backward(pass.encoded, grad);
  return out;
}

double critic_objective(const GroupBatch& batch, Encoder& encoder, StatisticsNetwork& critic,
                        NoiseSource& noise, bool backprop) {
  const EncoderBatch encoded = encoder.forward(batch.pixels);
  const PairSets pairs = sample_pairs(batch, encoded, noise);
  const CriticScores scores = score_pairs(pairs, critic);
  const double mi = dv_bound(scores.joint, scores.marginal);
  if (backprop) critic.backward(stack_grad(dv_bound_grad(scores.joint, scores.marginal), -1.0));
  return mi;
}

}  // namespace mlvae
