#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mlvae/tensor.hpp"

namespace mlvae::nn {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// A differentiable layer over batch-major matrices. `forward` caches what
/// `backward` needs, so each backward must follow its own forward.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Matrix forward(const Matrix& x) = 0;

  /// Accumulates parameter gradients (unless frozen) and returns dL/dx when
  /// `need_input_grad` is set; otherwise the returned matrix may be empty.
  virtual Matrix backward(const Matrix& grad_out, bool need_input_grad) = 0;

  virtual void collect(std::vector<Parameter*>& out) { (void)out; }

  /// Frozen layers still propagate input gradients but never touch their
  /// parameter gradients.
  virtual void set_frozen(bool frozen) { frozen_ = frozen; }
  bool frozen() const noexcept { return frozen_; }

 protected:
  bool frozen_ = false;
};

class Linear final : public Layer {
 public:
  Linear(std::string name, Index in, Index out, std::mt19937_64& rng);

  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out, bool need_input_grad) override;
  void collect(std::vector<Parameter*>& out) override;

  Index in_features() const { return weight_.value.rows(); }
  Index out_features() const { return weight_.value.cols(); }

 private:
  Parameter weight_;  // in x out
  Parameter bias_;    // 1 x out
  Matrix input_;
};

class Relu final : public Layer {
 public:
  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out, bool need_input_grad) override;

 private:
  Matrix mask_;
};

/// Square-kernel convolution geometry over channels-last (H, W, C) rows.
struct ConvGeometry {
  Index in_height = 0, in_width = 0, in_channels = 0;
  Index out_channels = 0;
  Index kernel = 4, stride = 2, padding = 1;

  Index out_height() const { return (in_height + 2 * padding - kernel) / stride + 1; }
  Index out_width() const { return (in_width + 2 * padding - kernel) / stride + 1; }
  Index patch_size() const { return kernel * kernel * in_channels; }
};

class Conv2d final : public Layer {
 public:
  Conv2d(std::string name, ConvGeometry geometry, std::mt19937_64& rng);

  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out, bool need_input_grad) override;
  void collect(std::vector<Parameter*>& out) override;

  const ConvGeometry& geometry() const { return geom_; }

 private:
  ConvGeometry geom_;
  Parameter weight_;  // patch_size x out_channels
  Parameter bias_;
  Matrix columns_;
  Index batch_ = 0;
};

/// Transposed convolution: the adjoint of a Conv2d whose *input* has this
/// layer's output shape. `geometry` describes that underlying convolution.
class ConvTranspose2d final : public Layer {
 public:
  ConvTranspose2d(std::string name, ConvGeometry geometry, std::mt19937_64& rng);

  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out, bool need_input_grad) override;
  void collect(std::vector<Parameter*>& out) override;

 private:
  ConvGeometry geom_;
  Parameter weight_;  // in_channels(of this layer) x patch_size(of the adjoint conv)
  Parameter bias_;    // 1 x geom_.in_channels
  Matrix input_;
};

class Sequential final : public Layer {
 public:
  Sequential() = default;
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out, bool need_input_grad) override;
  void collect(std::vector<Parameter*>& out) override;
  void set_frozen(bool frozen) override;

  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// im2col helpers shared by the convolution layers (exposed for tests).
Matrix im2col(const Matrix& images, const ConvGeometry& g);
Matrix col2im(const Matrix& columns, Index batch, const ConvGeometry& g);

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamOptions options);

  void zero_grad();
  void step();

  const AdamOptions& options() const { return options_; }
  std::int64_t steps() const { return steps_; }
  void set_steps(std::int64_t steps) { steps_ = steps; }
  const std::vector<Parameter*>& parameters() const { return params_; }
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }

 private:
  std::vector<Parameter*> params_;
  AdamOptions options_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t steps_ = 0;
};

std::vector<Parameter*> collect_parameters(Layer& layer);
void zero_grads(std::span<Parameter* const> params);

}  // namespace mlvae::nn
