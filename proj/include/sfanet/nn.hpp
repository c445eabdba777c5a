#pragma once

#include "sfanet/core.hpp"

#include <random>
#include <string>
#include <vector>

namespace sfanet::nn {

using Rng = std::mt19937_64;

/// A trainable tensor and its accumulated gradient.
struct Param {
  std::string name;
  matrix_t value;
  matrix_t grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(matrix_t::Zero(rows, cols)), grad(matrix_t::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

using ParamList = std::vector<Param*>;

/// Uniform Glorot initialisation.
void glorot(Param& p, int fan_in, int fan_out, Rng& rng);

// ---------------------------------------------------------------------------

/// Row-wise affine map: Y = X W^T + b, X is (n x in).
class Linear {
 public:
  struct Cache {
    matrix_t input;
  };

  Linear() = default;
  Linear(const std::string& name, int in, int out);

  int in_features() const { return static_cast<int>(weight_.value.cols()); }
  int out_features() const { return static_cast<int>(weight_.value.rows()); }

  matrix_t forward(const matrix_t& x, Cache* cache) const;
  /// Accumulates parameter gradients and returns dL/dX.
  matrix_t backward(const Cache& cache, const matrix_t& dy);

  void init(Rng& rng);
  void zero();
  void collect(ParamList& out);

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  const Param& bias() const { return bias_; }

 private:
  Param weight_;  // out x in
  Param bias_;    // 1 x out
};

// ---------------------------------------------------------------------------
// Exact (erf) GELU.

matrix_t gelu(const matrix_t& x);
/// dL/dx given the pre-activation x and dL/dy.
matrix_t gelu_backward(const matrix_t& x, const matrix_t& dy);

/// Inverted dropout. With `rng == nullptr` it is the identity and `mask` is left empty.
matrix_t dropout(const matrix_t& x, double rate, Rng* rng, matrix_t* mask);

// ---------------------------------------------------------------------------

/// Multi-channel 2-D map stored as (h*w) x channels, pixels in row-major order.
struct FeatureMap {
  int height = 0;
  int width = 0;
  matrix_t data;

  int channels() const { return static_cast<int>(data.cols()); }
};

/// 3x3 convolution, zero padding 1, configurable stride.
class Conv2d {
 public:
  struct Cache {
    int in_h = 0, in_w = 0;
    matrix_t cols;  // (out_h*out_w) x (in_ch*9)
  };

  Conv2d() = default;
  Conv2d(const std::string& name, int in_ch, int out_ch, int stride = 1);

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }
  int out_size(int in) const { return (in - 1) / stride_ + 1; }

  FeatureMap forward(const FeatureMap& x, Cache* cache) const;
  /// Parameter gradients only; the encoder input is never trained.
  void backward(const Cache& cache, const matrix_t& dy);

  void init(Rng& rng);
  void collect(ParamList& out);

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  matrix_t im2col(const FeatureMap& x) const;

  int in_ch_ = 0, out_ch_ = 0, stride_ = 1;
  Param weight_;  // out_ch x (in_ch*9)
  Param bias_;    // 1 x out_ch
};

// ---------------------------------------------------------------------------

/// Scaled dot-product self-attention over the rows of X (tokens x dim).
class MultiHeadSelfAttention {
 public:
  struct Cache {
    Linear::Cache q_in, k_in, v_in, o_in;
    matrix_t q, k, v;
    std::vector<matrix_t> weights;  // per head, tokens x tokens
  };

  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(const std::string& name, int dim, int heads);

  int dim() const { return dim_; }
  int heads() const { return heads_; }

  matrix_t forward(const matrix_t& x, Cache* cache) const;
  matrix_t backward(const Cache& cache, const matrix_t& dy);

  void init(Rng& rng);
  /// Identity projections with zero biases.
  void set_identity();
  void collect(ParamList& out);

 private:
  int dim_ = 0, heads_ = 1;
  Linear q_, k_, v_, o_;
};

/// Row-wise numerically stable softmax.
matrix_t softmax_rows(const matrix_t& s);

// ---------------------------------------------------------------------------

/// Feature vector -> logit. Hidden width 0 gives a purely linear head.
class ClassificationHead {
 public:
  struct Cache {
    Linear::Cache l1, l2;
    matrix_t pre;
    matrix_t mask;
  };

  ClassificationHead() = default;
  ClassificationHead(const std::string& name, int in, int hidden, double dropout_rate);

  int input_dim() const { return in_; }
  int hidden_dim() const { return hidden_; }

  /// x is 1 x in.
  double forward(const matrix_t& x, Cache* cache, Rng* rng) const;
  matrix_t backward(const Cache& cache, double dlogit);

  void init(Rng& rng);
  void zero();
  void collect(ParamList& out);

  Linear& output_layer() { return hidden_ > 0 ? l2_ : l1_; }

 private:
  int in_ = 0, hidden_ = 0;
  double dropout_ = 0.0;
  Linear l1_, l2_;
};

/// Hidden width used when a config leaves it automatic: ceil(in/2).
inline int auto_hidden(int in) { return (in + 1) / 2; }

}  // namespace sfanet::nn
