#include "sfanet/nn.hpp"

#include <cmath>
#include <numbers>

namespace sfanet::nn {

void glorot(Param& p, int fan_in, int fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value(i) = dist(rng);
}

// ---------------------------------------------------------------------------

Linear::Linear(const std::string& name, int in, int out)
    : weight_(name + ".weight", out, in), bias_(name + ".bias", 1, out) {
  if (in <= 0 || out <= 0) throw ConfigError(name + ": linear layer dims must be positive");
}

matrix_t Linear::forward(const matrix_t& x, Cache* cache) const {
  if (x.cols() != weight_.value.cols())
    throw ConfigError(weight_.name + ": expected input width " +
                      std::to_string(weight_.value.cols()) + ", got " + std::to_string(x.cols()));
  if (cache) cache->input = x;
  matrix_t y = x * weight_.value.transpose();
  y.rowwise() += bias_.value.row(0);
  return y;
}

matrix_t Linear::backward(const Cache& cache, const matrix_t& dy) {
  weight_.grad.noalias() += dy.transpose() * cache.input;
  bias_.grad.row(0) += dy.colwise().sum();
  return dy * weight_.value;
}

void Linear::init(Rng& rng) {
  glorot(weight_, in_features(), out_features(), rng);
  bias_.value.setZero();
}

void Linear::zero() {
  weight_.value.setZero();
  bias_.value.setZero();
}

void Linear::collect(ParamList& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------------------

matrix_t gelu(const matrix_t& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2)); });
}

matrix_t gelu_backward(const matrix_t& x, const matrix_t& dy) {
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  const matrix_t d = x.unaryExpr([inv_sqrt_2pi](double v) {
    const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2));
    return cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
  });
  return d.cwiseProduct(dy);
}

matrix_t dropout(const matrix_t& x, double rate, Rng* rng, matrix_t* mask) {
  if (rng == nullptr || rate <= 0.0) {
    if (mask) mask->resize(0, 0);
    return x;
  }
  std::bernoulli_distribution keep(1.0 - rate);
  matrix_t m(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = keep(*rng) ? 1.0 / (1.0 - rate) : 0.0;
  matrix_t y = x.cwiseProduct(m);
  if (mask) *mask = std::move(m);
  return y;
}

// ---------------------------------------------------------------------------

Conv2d::Conv2d(const std::string& name, int in_ch, int out_ch, int stride)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      stride_(stride),
      weight_(name + ".weight", out_ch, in_ch * 9),
      bias_(name + ".bias", 1, out_ch) {
  if (in_ch <= 0 || out_ch <= 0 || stride <= 0)
    throw ConfigError(name + ": conv channels and stride must be positive");
}

matrix_t Conv2d::im2col(const FeatureMap& x) const {
  const int oh = out_size(x.height);
  const int ow = out_size(x.width);
  matrix_t cols = matrix_t::Zero(static_cast<Eigen::Index>(oh) * ow, in_ch_ * 9);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const Eigen::Index row = static_cast<Eigen::Index>(oy) * ow + ox;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride_ + ky - 1;
        if (iy < 0 || iy >= x.height) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride_ + kx - 1;
          if (ix < 0 || ix >= x.width) continue;
          const Eigen::Index src = static_cast<Eigen::Index>(iy) * x.width + ix;
          for (int c = 0; c < in_ch_; ++c) cols(row, c * 9 + ky * 3 + kx) = x.data(src, c);
        }
      }
    }
  }
  return cols;
}

FeatureMap Conv2d::forward(const FeatureMap& x, Cache* cache) const {
  if (x.channels() != in_ch_)
    throw ConfigError(weight_.name + ": expected " + std::to_string(in_ch_) + " input channels");
  FeatureMap y;
  y.height = out_size(x.height);
  y.width = out_size(x.width);
  matrix_t cols = im2col(x);
  y.data = cols * weight_.value.transpose();
  y.data.rowwise() += bias_.value.row(0);
  if (cache) {
    cache->in_h = x.height;
    cache->in_w = x.width;
    cache->cols = std::move(cols);
  }
  return y;
}

void Conv2d::backward(const Cache& cache, const matrix_t& dy) {
  weight_.grad.noalias() += dy.transpose() * cache.cols;
  bias_.grad.row(0) += dy.colwise().sum();
}

void Conv2d::init(Rng& rng) {
  glorot(weight_, in_ch_ * 9, out_ch_ * 9, rng);
  bias_.value.setZero();
}

void Conv2d::collect(ParamList& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------------------

matrix_t softmax_rows(const matrix_t& s) {
  matrix_t out(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double m = s.row(r).maxCoeff();
    out.row(r) = (s.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

MultiHeadSelfAttention::MultiHeadSelfAttention(const std::string& name, int dim, int heads)
    : dim_(dim),
      heads_(heads),
      q_(name + ".q", dim, dim),
      k_(name + ".k", dim, dim),
      v_(name + ".v", dim, dim),
      o_(name + ".out", dim, dim) {
  if (heads <= 0 || dim % heads != 0)
    throw ConfigError(name + ": attention heads (" + std::to_string(heads) +
                      ") must divide the fused dim (" + std::to_string(dim) + ")");
}

matrix_t MultiHeadSelfAttention::forward(const matrix_t& x, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  c.q = q_.forward(x, cache ? &c.q_in : nullptr);
  c.k = k_.forward(x, cache ? &c.k_in : nullptr);
  c.v = v_.forward(x, cache ? &c.v_in : nullptr);
  const int dh = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  c.weights.assign(static_cast<std::size_t>(heads_), matrix_t());
  matrix_t attended(x.rows(), dim_);
  for (int h = 0; h < heads_; ++h) {
    const auto qh = c.q.middleCols(h * dh, dh);
    const auto kh = c.k.middleCols(h * dh, dh);
    const auto vh = c.v.middleCols(h * dh, dh);
    matrix_t a = softmax_rows((qh * kh.transpose()) * scale);
    attended.middleCols(h * dh, dh) = a * vh;
    c.weights[static_cast<std::size_t>(h)] = std::move(a);
  }
  return o_.forward(attended, cache ? &c.o_in : nullptr);
}

matrix_t MultiHeadSelfAttention::backward(const Cache& c, const matrix_t& dy) {
  const matrix_t d_att = o_.backward(c.o_in, dy);
  const int dh = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  matrix_t dq(c.q.rows(), dim_), dk(c.k.rows(), dim_), dv(c.v.rows(), dim_);
  for (int h = 0; h < heads_; ++h) {
    const matrix_t& a = c.weights[static_cast<std::size_t>(h)];
    const auto d_oh = d_att.middleCols(h * dh, dh);
    const matrix_t da = d_oh * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh) = a.transpose() * d_oh;
    const vector_t inner = da.cwiseProduct(a).rowwise().sum();
    const matrix_t ds = (a.array() * (da.colwise() - inner).array()).matrix() * scale;
    dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh);
  }
  return q_.backward(c.q_in, dq) + k_.backward(c.k_in, dk) + v_.backward(c.v_in, dv);
}

void MultiHeadSelfAttention::init(Rng& rng) {
  q_.init(rng);
  k_.init(rng);
  v_.init(rng);
  o_.init(rng);
}

void MultiHeadSelfAttention::set_identity() {
  for (Linear* l : {&q_, &k_, &v_, &o_}) {
    l->weight().value.setIdentity();
    l->bias().value.setZero();
  }
}

void MultiHeadSelfAttention::collect(ParamList& out) {
  q_.collect(out);
  k_.collect(out);
  v_.collect(out);
  o_.collect(out);
}

// ---------------------------------------------------------------------------

ClassificationHead::ClassificationHead(const std::string& name, int in, int hidden,
                                       double dropout_rate)
    : in_(in), hidden_(hidden), dropout_(dropout_rate) {
  if (hidden < 0) throw ConfigError(name + ": negative hidden width");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError(name + ": dropout must be in [0,1)");
  if (hidden > 0) {
    l1_ = Linear(name + ".fc1", in, hidden);
    l2_ = Linear(name + ".fc2", hidden, 1);
  } else {
    l1_ = Linear(name + ".fc", in, 1);
  }
}

double ClassificationHead::forward(const matrix_t& x, Cache* cache, Rng* rng) const {
  if (hidden_ == 0) return l1_.forward(x, cache ? &cache->l1 : nullptr)(0, 0);
  matrix_t pre = l1_.forward(x, cache ? &cache->l1 : nullptr);
  matrix_t h = dropout(gelu(pre), dropout_, rng, cache ? &cache->mask : nullptr);
  if (cache) cache->pre = std::move(pre);
  return l2_.forward(h, cache ? &cache->l2 : nullptr)(0, 0);
}

matrix_t ClassificationHead::backward(const Cache& cache, double dlogit) {
  const matrix_t dy = matrix_t::Constant(1, 1, dlogit);
  if (hidden_ == 0) return l1_.backward(cache.l1, dy);
  matrix_t dh = l2_.backward(cache.l2, dy);
  if (cache.mask.size() > 0) dh = dh.cwiseProduct(cache.mask);
  return l1_.backward(cache.l1, gelu_backward(cache.pre, dh));
}

void ClassificationHead::init(Rng& rng) {
  l1_.init(rng);
  if (hidden_ > 0) l2_.init(rng);
}

void ClassificationHead::zero() {
  l1_.zero();
  if (hidden_ > 0) l2_.zero();
}

void ClassificationHead::collect(ParamList& out) {
  l1_.collect(out);
  if (hidden_ > 0) l2_.collect(out);
}

}  // namespace sfanet::nn
