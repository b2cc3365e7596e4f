#pragma once

#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "mlvae/gaussian.hpp"
#include "mlvae/nn.hpp"
#include "mlvae/tensor.hpp"

namespace mlvae {

enum class Architecture { conv, mlp };

Architecture parse_architecture(std::string_view name);
std::string_view to_string(Architecture a);

struct NetworkConfig {
  Architecture architecture = Architecture::conv;
  Index height = 32;
  Index width = 32;
  Index channels = 1;
  Index content_dim = 2;
  Index style_dim = 14;
  std::vector<Index> conv_channels{32, 64, 128};  // stride-2, 4x4 stages
  std::vector<Index> hidden{512};                 // MLP trunk widths
  Index critic_feature_dim = 128;
  Index critic_hidden = 256;
  LogVarRange log_var_range{};

  Index input_dim() const { return height * width * channels; }
  Index latent_dim() const { return content_dim + style_dim; }
  void validate() const;
};

struct EncoderOutput {
  DiagonalGaussian content;
  DiagonalGaussian style;
};

/// Encoder outputs for a batch, one row per observation. Log-variances are
/// already clamped; the *_active masks hold 1 where the clamp was inactive.
struct EncoderBatch {
  Matrix content_mean, content_log_var;
  Matrix style_mean, style_log_var;
  Matrix content_active, style_active;

  Index rows() const { return content_mean.rows(); }
  DiagonalGaussian content(Index row) const;
  DiagonalGaussian style(Index row) const;
  EncoderOutput at(Index row) const { return {content(row), style(row)}; }
};

/// d(loss)/d(encoder outputs), same layout as EncoderBatch.
struct EncoderGrad {
  Matrix content_mean, content_log_var;
  Matrix style_mean, style_log_var;

  static EncoderGrad zeros(Index rows, Index content_dim, Index style_dim);
};

class Encoder {
 public:
  Encoder(const NetworkConfig& config, std::mt19937_64& rng);

  EncoderBatch forward(const Matrix& x);
  void backward(const EncoderBatch& out, const EncoderGrad& grad);
  EncoderOutput encode(std::span<const Real> pixels);

  std::vector<nn::Parameter*> parameters();
  const NetworkConfig& config() const { return config_; }

 private:
  NetworkConfig config_;
  nn::Sequential trunk_;
  nn::Linear content_head_;
  nn::Linear style_head_;
};

class Decoder {
 public:
  Decoder(const NetworkConfig& config, std::mt19937_64& rng);

  /// Rows of [c; s] latents -> rows of Bernoulli logits in observation layout.
  Matrix forward(const Matrix& latents);
  /// Returns d(loss)/d(latents).
  Matrix backward(const Matrix& grad_logits);
  Matrix decode(const Matrix& content, const Matrix& style);

  std::vector<nn::Parameter*> parameters();
  const NetworkConfig& config() const { return config_; }

 private:
  NetworkConfig config_;
  nn::Sequential net_;
};

/// Critic T(x, s): embeds x to a low-dimensional feature, concatenates s and
/// scores the pair with a small MLP.
class StatisticsNetwork {
 public:
  StatisticsNetwork(const NetworkConfig& config, std::mt19937_64& rng);

  Vector forward(const Matrix& x, const Matrix& s);
  /// Returns d(loss)/d(s). Parameter gradients accumulate only while unfrozen.
  Matrix backward(const Vector& grad_scores);

  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }

  std::vector<nn::Parameter*> parameters();
  const NetworkConfig& config() const { return config_; }

 private:
  NetworkConfig config_;
  nn::Sequential embed_;
  nn::Sequential head_;
  bool frozen_ = false;
};

}  // namespace mlvae
