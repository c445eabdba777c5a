#include "gradcheck.hpp"
#include "sfanet/nn.hpp"

#include <doctest.h>

#include <cmath>

using namespace sfanet;
using gradcheck::rel;

namespace {

matrix_t randn(Eigen::Index r, Eigen::Index c, nn::Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  matrix_t m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  return m;
}

double dot(const matrix_t& a, const matrix_t& b) { return a.cwiseProduct(b).sum(); }

}  // namespace

TEST_CASE("linear forward is X W^T + b") {
  nn::Linear l("l", 2, 3);
  l.weight().value << 1, 2, 3, 4, 5, 6;
  l.bias().value << 0.5, -0.5, 1;
  const matrix_t x = (matrix_t(1, 2) << 1, -1).finished();
  const matrix_t y = l.forward(x, nullptr);
  CHECK(y(0, 0) == doctest::Approx(-0.5));
  CHECK(y(0, 1) == doctest::Approx(-1.5));
  CHECK(y(0, 2) == doctest::Approx(0.0));
}

TEST_CASE("linear gradients") {
  nn::Rng rng(1);
  nn::Linear l("l", 4, 3);
  l.init(rng);
  matrix_t x = randn(5, 4, rng);
  const matrix_t r = randn(5, 3, rng);
  nn::Linear::Cache c;
  l.forward(x, &c);
  for (auto* p : std::vector<nn::Param*>{&l.weight(), &l.bias()}) p->zero_grad();
  const matrix_t dx = l.backward(c, r);
  nn::ParamList ps;
  l.collect(ps);
  auto loss = [&] { return dot(l.forward(x, nullptr), r); };
  gradcheck::check_params(ps, loss);
  CHECK(rel(dx, gradcheck::numeric(x, loss)) < 1e-6);
}

TEST_CASE("gelu uses the exact erf form") {
  const matrix_t x = (matrix_t(1, 3) << -1.0, 0.0, 2.0).finished();
  const matrix_t y = nn::gelu(x);
  CHECK(y(0, 0) == doctest::Approx(-1.0 * 0.5 * (1 + std::erf(-1 / std::sqrt(2.0)))));
  CHECK(y(0, 1) == 0.0);
  CHECK(y(0, 2) == doctest::Approx(2.0 * 0.5 * (1 + std::erf(2 / std::sqrt(2.0)))));
  nn::Rng rng(2);
  matrix_t z = randn(3, 4, rng);
  const matrix_t r = randn(3, 4, rng);
  auto loss = [&] { return dot(nn::gelu(z), r); };
  CHECK(rel(nn::gelu_backward(z, r), gradcheck::numeric(z, loss)) < 1e-7);
}

TEST_CASE("dropout") {
  nn::Rng rng(3);
  const matrix_t x = matrix_t::Ones(200, 50);
  matrix_t mask;
  CHECK(nn::dropout(x, 0.5, nullptr, &mask) == x);
  CHECK(mask.size() == 0);
  const matrix_t y = nn::dropout(x, 0.5, &rng, &mask);
  CHECK(mask.size() == x.size());
  // Inverted scaling keeps the expectation.
  CHECK(y.mean() == doctest::Approx(1.0).epsilon(0.05));
  CHECK(((y.array() == 0.0) || (y.array() == 2.0)).all());
}

TEST_CASE("conv2d matches a direct convolution and its gradients") {
  nn::Rng rng(4);
  nn::Conv2d conv("c", 2, 3);
  conv.init(rng);
  nn::FeatureMap x{5, 4, randn(20, 2, rng)};
  const nn::FeatureMap y = conv.forward(x, nullptr);
  CHECK(y.height == 5);
  CHECK(y.width == 4);
  // Direct sum with zero padding; weight column index is ci*9 + ky*3 + kx.
  for (int oc = 0; oc < 3; ++oc)
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 4; ++c) {
        double s = conv.bias().value(0, oc);
        for (int ci = 0; ci < 2; ++ci)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int rr = r + ky - 1, cc = c + kx - 1;
              if (rr < 0 || rr >= 5 || cc < 0 || cc >= 4) continue;
              s += conv.weight().value(oc, ci * 9 + ky * 3 + kx) * x.data(rr * 4 + cc, ci);
            }
        CHECK(y.data(r * 4 + c, oc) == doctest::Approx(s).epsilon(1e-12));
      }

  const matrix_t R = randn(20, 3, rng);
  nn::Conv2d::Cache cache;
  conv.forward(x, &cache);
  conv.weight().zero_grad();
  conv.bias().zero_grad();
  conv.backward(cache, R);
  nn::ParamList ps;
  conv.collect(ps);
  gradcheck::check_params(ps, [&] { return dot(conv.forward(x, nullptr).data, R); });

  nn::Conv2d strided("s", 1, 1, 2);
  CHECK(strided.out_size(5) == 3);
}

TEST_CASE("attention with identity projections, hand computed") {
  nn::MultiHeadSelfAttention att("a", 2, 1);
  att.set_identity();
  const matrix_t x = matrix_t::Identity(2, 2);
  const matrix_t y = att.forward(x, nullptr);
  // scores = X X^T / sqrt(2); softmax of [1/sqrt2, 0]
  const double e = std::exp(1.0 / std::sqrt(2.0));
  CHECK(y(0, 0) == doctest::Approx(e / (e + 1)));
  CHECK(y(0, 1) == doctest::Approx(1 / (e + 1)));
  CHECK(y(1, 0) == doctest::Approx(1 / (e + 1)));
  CHECK(y(1, 1) == doctest::Approx(e / (e + 1)));
}

TEST_CASE("attention rejects heads that do not divide the width") {
  CHECK_THROWS_AS(nn::MultiHeadSelfAttention("a", 5, 2), ConfigError);
}

TEST_CASE("attention gradients") {
  for (int heads : {1, 2}) {
    nn::Rng rng(5 + heads);
    nn::MultiHeadSelfAttention att("a", 4, heads);
    att.init(rng);
    matrix_t x = randn(3, 4, rng);
    const matrix_t R = randn(3, 4, rng);
    nn::MultiHeadSelfAttention::Cache c;
    att.forward(x, &c);
    nn::ParamList ps;
    att.collect(ps);
    for (auto* p : ps) p->zero_grad();
    const matrix_t dx = att.backward(c, R);
    auto loss = [&] { return dot(att.forward(x, nullptr), R); };
    gradcheck::check_params(ps, loss);
    CHECK(rel(dx, gradcheck::numeric(x, loss)) < 1e-4);
  }
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
  nn::Rng rng(6);
  const matrix_t s = randn(4, 5, rng, 10.0);
  const matrix_t a = nn::softmax_rows(s);
  CHECK((a.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK((nn::softmax_rows((s.array() + 100.0).matrix()) - a).norm() < 1e-12);
}

TEST_CASE("classification head gradients") {
  for (int hidden : {0, 3}) {
    nn::Rng rng(7 + hidden);
    nn::ClassificationHead head("h", 5, hidden, 0.0);
    head.init(rng);
    CHECK(head.hidden_dim() == hidden);
    matrix_t x = randn(1, 5, rng);
    nn::ClassificationHead::Cache c;
    head.forward(x, &c, nullptr);
    nn::ParamList ps;
    head.collect(ps);
    for (auto* p : ps) p->zero_grad();
    const matrix_t dx = head.backward(c, 1.0);
    auto loss = [&] { return head.forward(x, nullptr, nullptr); };
    gradcheck::check_params(ps, loss);
    CHECK(rel(dx, gradcheck::numeric(x, loss)) < 1e-5);
  }
}

TEST_CASE("head with dropout: gradients follow the cached mask") {
  nn::Rng rng(9);
  nn::ClassificationHead head("h", 6, 8, 0.5);
  head.init(rng);
  const matrix_t x = randn(1, 6, rng);
  nn::Rng drop(11);
  nn::ClassificationHead::Cache c;
  head.forward(x, &c, &drop);
  nn::ParamList ps;
  head.collect(ps);
  for (auto* p : ps) p->zero_grad();
  head.backward(c, 1.0);
  // Replay the same mask for each perturbed evaluation.
  gradcheck::check_params(ps, [&] {
    nn::Rng again(11);
    return head.forward(x, nullptr, &again);
  });
  CHECK(nn::auto_hidden(5) == 3);
  CHECK(nn::auto_hidden(6) == 3);
}

TEST_CASE("zeroed head outputs a zero logit") {
  nn::Rng rng(10);
  nn::ClassificationHead head("h", 4, 2, 0.1);
  head.init(rng);
  head.zero();
  CHECK(head.forward(randn(1, 4, rng), nullptr, nullptr) == 0.0);
}
