#include "mlvae/nn.hpp"

#include <cmath>

#include "mlvae/errors.hpp"

namespace mlvae::nn {
namespace {

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

void fill_uniform(Matrix& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Real>(dist(rng));
}

Parameter make_param(std::string name, Index rows, Index cols, double bound, std::mt19937_64& rng) {
  Parameter p{std::move(name), Matrix(rows, cols), Matrix::Zero(rows, cols)};
  fill_uniform(p.value, bound, rng);
  return p;
}

void check_cols(const Matrix& x, Index expected, const char* layer) {
  if (x.cols() != expected) {
    throw ShapeError(std::string(layer) + ": expected " + std::to_string(expected) +
                     " input features, got " + std::to_string(x.cols()));
  }
}

}  // namespace

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, Index in, Index out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = make_param(name + ".weight", in, out, bound, rng);
  bias_ = make_param(name + ".bias", 1, out, bound, rng);
}

Matrix Linear::forward(const Matrix& x) {
  check_cols(x, in_features(), "Linear");
  input_ = x;
  Matrix y = x * weight_.value;
  y.rowwise() += bias_.value.row(0);
  return y;
}

Matrix Linear::backward(const Matrix& grad_out, bool need_input_grad) {
  if (!frozen_) {
    weight_.grad.noalias() += input_.transpose() * grad_out;
    bias_.grad += grad_out.colwise().sum();
  }
  if (!need_input_grad) return {};
  return grad_out * weight_.value.transpose();
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------- Relu

Matrix Relu::forward(const Matrix& x) {
  mask_ = (x.array() > Real(0)).cast<Real>().matrix();
  return x.cwiseMax(Real(0));
}

Matrix Relu::backward(const Matrix& grad_out, bool need_input_grad) {
  if (!need_input_grad) return {};
  return grad_out.cwiseProduct(mask_);
}

// ---------------------------------------------------------------- im2col

Matrix im2col(const Matrix& images, const ConvGeometry& g) {
  const Index batch = images.rows();
  const Index oh = g.out_height(), ow = g.out_width(), c = g.in_channels, k = g.kernel;
  check_cols(images, g.in_height * g.in_width * c, "im2col");
  Matrix cols = Matrix::Zero(batch * oh * ow, g.patch_size());
  for (Index b = 0; b < batch; ++b) {
    const Real* img = images.row(b).data();
    for (Index y = 0; y < oh; ++y) {
      for (Index x = 0; x < ow; ++x) {
        Real* dst = cols.row((b * oh + y) * ow + x).data();
        for (Index ky = 0; ky < k; ++ky) {
          const Index iy = y * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.in_height) continue;
          for (Index kx = 0; kx < k; ++kx) {
            const Index ix = x * g.stride - g.padding + kx;
            if (ix < 0 || ix >= g.in_width) continue;
            const Real* src = img + (iy * g.in_width + ix) * c;
            std::copy(src, src + c, dst + (ky * k + kx) * c);
          }
        }
      }
    }
  }
  return cols;
}

Matrix col2im(const Matrix& columns, Index batch, const ConvGeometry& g) {
  const Index oh = g.out_height(), ow = g.out_width(), c = g.in_channels, k = g.kernel;
  Matrix images = Matrix::Zero(batch, g.in_height * g.in_width * c);
  for (Index b = 0; b < batch; ++b) {
    Real* img = images.row(b).data();
    for (Index y = 0; y < oh; ++y) {
      for (Index x = 0; x < ow; ++x) {
        const Real* src = columns.row((b * oh + y) * ow + x).data();
        for (Index ky = 0; ky < k; ++ky) {
          const Index iy = y * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.in_height) continue;
          for (Index kx = 0; kx < k; ++kx) {
            const Index ix = x * g.stride - g.padding + kx;
            if (ix < 0 || ix >= g.in_width) continue;
            Real* dst = img + (iy * g.in_width + ix) * c;
            const Real* s = src + (ky * k + kx) * c;
            for (Index ch = 0; ch < c; ++ch) dst[ch] += s[ch];
          }
        }
      }
    }
  }
  return images;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, ConvGeometry geometry, std::mt19937_64& rng) : geom_(geometry) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(geom_.patch_size()));
  weight_ = make_param(name + ".weight", geom_.patch_size(), geom_.out_channels, bound, rng);
  bias_ = make_param(name + ".bias", 1, geom_.out_channels, bound, rng);
}

Matrix Conv2d::forward(const Matrix& x) {
  batch_ = x.rows();
  columns_ = im2col(x, geom_);
  Matrix y = columns_ * weight_.value;
  y.rowwise() += bias_.value.row(0);
  const Index per_image = geom_.out_height() * geom_.out_width() * geom_.out_channels;
  return ConstMap(y.data(), batch_, per_image);
}

Matrix Conv2d::backward(const Matrix& grad_out, bool need_input_grad) {
  const ConstMap g(grad_out.data(), columns_.rows(), geom_.out_channels);
  if (!frozen_) {
    weight_.grad.noalias() += columns_.transpose() * g;
    bias_.grad += g.colwise().sum();
  }
  if (!need_input_grad) return {};
  const Matrix dcols = g * weight_.value.transpose();
  return col2im(dcols, batch_, geom_);
}

void Conv2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(std::string name, ConvGeometry geometry, std::mt19937_64& rng)
    : geom_(geometry) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(geom_.patch_size()));
  weight_ = make_param(name + ".weight", geom_.out_channels, geom_.patch_size(), bound, rng);
  bias_ = make_param(name + ".bias", 1, geom_.in_channels, bound, rng);
}

Matrix ConvTranspose2d::forward(const Matrix& x) {
  const Index positions = geom_.out_height() * geom_.out_width();
  check_cols(x, positions * geom_.out_channels, "ConvTranspose2d");
  input_ = x;
  const ConstMap xs(x.data(), x.rows() * positions, geom_.out_channels);
  const Matrix cols = xs * weight_.value;
  Matrix y = col2im(cols, x.rows(), geom_);
  const Index pixels = geom_.in_height * geom_.in_width;
  MutMap ym(y.data(), x.rows() * pixels, geom_.in_channels);
  ym.rowwise() += bias_.value.row(0);
  return y;
}

Matrix ConvTranspose2d::backward(const Matrix& grad_out, bool need_input_grad) {
  const Index batch = input_.rows();
  const Index positions = geom_.out_height() * geom_.out_width();
  const Matrix dcols = im2col(grad_out, geom_);
  const ConstMap xs(input_.data(), batch * positions, geom_.out_channels);
  if (!frozen_) {
    weight_.grad.noalias() += xs.transpose() * dcols;
    const ConstMap gm(grad_out.data(), batch * geom_.in_height * geom_.in_width, geom_.in_channels);
    bias_.grad += gm.colwise().sum();
  }
  if (!need_input_grad) return {};
  const Matrix dx = dcols * weight_.value.transpose();
  return ConstMap(dx.data(), batch, positions * geom_.out_channels);
}

void ConvTranspose2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------- Sequential

Matrix Sequential::forward(const Matrix& x) {
  Matrix h = x;
  for (auto& layer : layers_) h = layer->forward(h);
  return h;
}

Matrix Sequential::backward(const Matrix& grad_out, bool need_input_grad) {
  Matrix g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool need = need_input_grad || i > 0;
    g = layers_[i]->backward(g, need);
  }
  return g;
}

void Sequential::collect(std::vector<Parameter*>& out) {
  for (auto& layer : layers_) layer->collect(out);
}

void Sequential::set_frozen(bool frozen) {
  frozen_ = frozen;
  for (auto& layer : layers_) layer->set_frozen(frozen);
}

// ---------------------------------------------------------------- Adam

Adam::Adam(std::vector<Parameter*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::zero_grad() { zero_grads(params_); }

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(options_.beta1, t);
  const double bc2 = 1.0 - std::pow(options_.beta2, t);
  const auto lr = static_cast<Real>(options_.learning_rate * std::sqrt(bc2) / bc1);
  const auto b1 = static_cast<Real>(options_.beta1);
  const auto b2 = static_cast<Real>(options_.beta2);
  const auto eps = static_cast<Real>(options_.epsilon * std::sqrt(bc2));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    m_[i] = b1 * m_[i] + (Real(1) - b1) * p.grad;
    v_[i] = b2 * v_[i] + (Real(1) - b2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * m_[i].array() / (v_[i].array().sqrt() + eps);
  }
}

std::vector<Parameter*> collect_parameters(Layer& layer) {
  std::vector<Parameter*> out;
  layer.collect(out);
  return out;
}

void zero_grads(std::span<Parameter* const> params) {
  for (auto* p : params) p->grad.setZero();
}

}  // namespace mlvae::nn
