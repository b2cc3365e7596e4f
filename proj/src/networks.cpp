#include "mlvae/networks.hpp"

#include <string>

#include "mlvae/errors.hpp"

namespace mlvae {
namespace {

VectorXd row_to_vector(const Matrix& m, Index row) {
  return m.row(row).transpose().cast<double>();
}

// Conv trunk: stride-2 stages; returns the flattened feature width.
Index build_conv_trunk(nn::Sequential& seq, const std::string& prefix, const NetworkConfig& c,
                       std::mt19937_64& rng) {
  Index h = c.height, w = c.width, ch = c.channels;
  for (std::size_t i = 0; i < c.conv_channels.size(); ++i) {
    nn::ConvGeometry g{h, w, ch, c.conv_channels[i]};
    seq.add<nn::Conv2d>(prefix + ".conv" + std::to_string(i), g, rng);
    seq.add<nn::Relu>();
    h = g.out_height();
    w = g.out_width();
    ch = g.out_channels;
  }
  return h * w * ch;
}

Index build_mlp_trunk(nn::Sequential& seq, const std::string& prefix, const NetworkConfig& c,
                      std::mt19937_64& rng) {
  Index width = c.input_dim();
  for (std::size_t i = 0; i < c.hidden.size(); ++i) {
    seq.add<nn::Linear>(prefix + ".fc" + std::to_string(i), width, c.hidden[i], rng);
    seq.add<nn::Relu>();
    width = c.hidden[i];
  }
  return width;
}

Index build_trunk(nn::Sequential& seq, const std::string& prefix, const NetworkConfig& c,
                  std::mt19937_64& rng) {
  return c.architecture == Architecture::conv ? build_conv_trunk(seq, prefix, c, rng)
                                              : build_mlp_trunk(seq, prefix, c, rng);
}

// Clamp log-variances in place and record which entries stayed differentiable.
void clamp_log_var(Matrix& lv, Matrix& active, const LogVarRange& range) {
  active = ((lv.array() >= Real(range.min)) && (lv.array() <= Real(range.max))).cast<Real>().matrix();
  lv = lv.cwiseMax(Real(range.min)).cwiseMin(Real(range.max));
}

void check_finite_rows(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw InvalidDistribution(std::string(what) + " produced non-finite values");
}

}  // namespace

Architecture parse_architecture(std::string_view name) {
  if (name == "conv") return Architecture::conv;
  if (name == "mlp") return Architecture::mlp;
  throw ConfigError("architecture must be 'conv' or 'mlp', got '" + std::string(name) + "'");
}

std::string_view to_string(Architecture a) { return a == Architecture::conv ? "conv" : "mlp"; }

void NetworkConfig::validate() const {
  if (height < 1 || width < 1 || channels < 1) throw ConfigError("observation shape must be positive");
  if (content_dim < 1 || style_dim < 1) throw ConfigError("latent dims d_c and d_s must be >= 1");
  if (architecture == Architecture::conv) {
    if (conv_channels.empty()) throw ConfigError("conv architecture needs at least one stage");
    const Index factor = Index(1) << conv_channels.size();
    if (height % factor != 0 || width % factor != 0) {
      throw ConfigError("conv architecture needs height/width divisible by " + std::to_string(factor));
    }
  } else if (hidden.empty()) {
    throw ConfigError("mlp architecture needs at least one hidden layer");
  }
  if (critic_feature_dim < 1 || critic_hidden < 1) throw ConfigError("critic widths must be >= 1");
  if (!(log_var_range.min < log_var_range.max)) throw ConfigError("log_var range is empty");
}

// ---------------------------------------------------------------- EncoderBatch

DiagonalGaussian EncoderBatch::content(Index row) const {
  return {row_to_vector(content_mean, row), row_to_vector(content_log_var, row)};
}

DiagonalGaussian EncoderBatch::style(Index row) const {
  return {row_to_vector(style_mean, row), row_to_vector(style_log_var, row)};
}

EncoderGrad EncoderGrad::zeros(Index rows, Index content_dim, Index style_dim) {
  return {Matrix::Zero(rows, content_dim), Matrix::Zero(rows, content_dim),
          Matrix::Zero(rows, style_dim), Matrix::Zero(rows, style_dim)};
}

// ---------------------------------------------------------------- Encoder

namespace {
Index encoder_feature_width(const NetworkConfig& c) {
  if (c.architecture == Architecture::mlp) return c.hidden.back();
  const Index factor = Index(1) << c.conv_channels.size();
  return (c.height / factor) * (c.width / factor) * c.conv_channels.back();
}
}  // namespace

Encoder::Encoder(const NetworkConfig& config, std::mt19937_64& rng)
    : config_((config.validate(), config)),
      content_head_("encoder.content_head", encoder_feature_width(config), 2 * config.content_dim, rng),
      style_head_("encoder.style_head", encoder_feature_width(config), 2 * config.style_dim, rng) {
  build_trunk(trunk_, "encoder.trunk", config_, rng);
}

EncoderBatch Encoder::forward(const Matrix& x) {
  if (x.cols() != config_.input_dim()) {
    throw ShapeError("encoder expects " + std::to_string(config_.input_dim()) + " inputs, got " +
                     std::to_string(x.cols()));
  }
  const Matrix h = trunk_.forward(x);
  const Matrix c = content_head_.forward(h);
  const Matrix s = style_head_.forward(h);
  const Index dc = config_.content_dim, ds = config_.style_dim;

  EncoderBatch out;
  out.content_mean = c.leftCols(dc);
  out.content_log_var = c.rightCols(dc);
  out.style_mean = s.leftCols(ds);
  out.style_log_var = s.rightCols(ds);
  check_finite_rows(out.content_mean, "encoder");
  check_finite_rows(out.content_log_var, "encoder");
  check_finite_rows(out.style_mean, "encoder");
  check_finite_rows(out.style_log_var, "encoder");
  clamp_log_var(out.content_log_var, out.content_active, config_.log_var_range);
  clamp_log_var(out.style_log_var, out.style_active, config_.log_var_range);
  return out;
}

void Encoder::backward(const EncoderBatch& out, const EncoderGrad& grad) {
  const Index n = out.rows();
  const Index dc = config_.content_dim, ds = config_.style_dim;
  Matrix gc(n, 2 * dc);
  gc << grad.content_mean, grad.content_log_var.cwiseProduct(out.content_active);
  Matrix gs(n, 2 * ds);
  gs << grad.style_mean, grad.style_log_var.cwiseProduct(out.style_active);
  Matrix gh = content_head_.backward(gc, true);
  gh += style_head_.backward(gs, true);
  trunk_.backward(gh, false);
}

EncoderOutput Encoder::encode(std::span<const Real> pixels) {
  const Matrix x = Eigen::Map<const Matrix>(pixels.data(), 1, static_cast<Index>(pixels.size()));
  return forward(x).at(0);
}

std::vector<nn::Parameter*> Encoder::parameters() {
  auto params = nn::collect_parameters(trunk_);
  content_head_.collect(params);
  style_head_.collect(params);
  return params;
}

// ---------------------------------------------------------------- Decoder

Decoder::Decoder(const NetworkConfig& config, std::mt19937_64& rng) : config_((config.validate(), config)) {
  const Index latent = config_.latent_dim();
  if (config_.architecture == Architecture::mlp) {
    Index width = latent;
    for (std::size_t i = config_.hidden.size(); i-- > 0;) {
      net_.add<nn::Linear>("decoder.fc" + std::to_string(config_.hidden.size() - 1 - i), width,
                           config_.hidden[i], rng);
      net_.add<nn::Relu>();
      width = config_.hidden[i];
    }
    net_.add<nn::Linear>("decoder.out", width, config_.input_dim(), rng);
    return;
  }

  // Mirror of the conv trunk: project to the smallest feature map, then upsample.
  const auto& chans = config_.conv_channels;
  const Index stages = static_cast<Index>(chans.size());
  const Index factor = Index(1) << stages;
  const Index h0 = config_.height / factor, w0 = config_.width / factor;
  net_.add<nn::Linear>("decoder.project", latent, h0 * w0 * chans.back(), rng);
  net_.add<nn::Relu>();
  Index h = h0, w = w0;
  for (Index i = stages; i-- > 0;) {
    const Index out_ch = i == 0 ? config_.channels : chans[static_cast<std::size_t>(i - 1)];
    // Geometry of the conv whose input is this stage's output.
    nn::ConvGeometry g{2 * h, 2 * w, out_ch, chans[static_cast<std::size_t>(i)]};
    net_.add<nn::ConvTranspose2d>("decoder.deconv" + std::to_string(stages - 1 - i), g, rng);
    if (i > 0) net_.add<nn::Relu>();
    h *= 2;
    w *= 2;
  }
}

Matrix Decoder::forward(const Matrix& latents) {
  if (latents.cols() != config_.latent_dim()) {
    throw ShapeError("decoder expects latents of width " + std::to_string(config_.latent_dim()) +
                     ", got " + std::to_string(latents.cols()));
  }
  return net_.forward(latents);
}

Matrix Decoder::backward(const Matrix& grad_logits) { return net_.backward(grad_logits, true); }

Matrix Decoder::decode(const Matrix& content, const Matrix& style) {
  if (content.cols() != config_.content_dim || style.cols() != config_.style_dim ||
      content.rows() != style.rows()) {
    throw ShapeError("decode: content/style shapes do not match the configuration");
  }
  Matrix z(content.rows(), config_.latent_dim());
  z << content, style;
  return forward(z);
}

std::vector<nn::Parameter*> Decoder::parameters() { return nn::collect_parameters(net_); }

// ---------------------------------------------------------------- StatisticsNetwork

StatisticsNetwork::StatisticsNetwork(const NetworkConfig& config, std::mt19937_64& rng)
    : config_((config.validate(), config)) {
  const Index trunk_width = build_trunk(embed_, "critic.trunk", config_, rng);
  embed_.add<nn::Linear>("critic.embed", trunk_width, config_.critic_feature_dim, rng);
  embed_.add<nn::Relu>();
  head_.add<nn::Linear>("critic.fc0", config_.critic_feature_dim + config_.style_dim,
                        config_.critic_hidden, rng);
  head_.add<nn::Relu>();
  head_.add<nn::Linear>("critic.out", config_.critic_hidden, 1, rng);
}

Vector StatisticsNetwork::forward(const Matrix& x, const Matrix& s) {
  if (x.cols() != config_.input_dim() || s.cols() != config_.style_dim || x.rows() != s.rows()) {
    throw ShapeError("statistics network: (x, s) shapes do not match the configuration");
  }
  const Matrix e = embed_.forward(x);
  Matrix z(x.rows(), e.cols() + s.cols());
  z << e, s;
  return head_.forward(z).col(0);
}

Matrix StatisticsNetwork::backward(const Vector& grad_scores) {
  const Matrix g = grad_scores;
  const Matrix gz = head_.backward(g, true);
  if (!frozen_) embed_.backward(gz.leftCols(config_.critic_feature_dim), false);
  return gz.rightCols(config_.style_dim);
}

void StatisticsNetwork::set_frozen(bool frozen) {
  frozen_ = frozen;
  embed_.set_frozen(frozen);
  head_.set_frozen(frozen);
}

std::vector<nn::Parameter*> StatisticsNetwork::parameters() {
  auto params = nn::collect_parameters(embed_);
  head_.collect(params);
  return params;
}

}  // namespace mlvae
