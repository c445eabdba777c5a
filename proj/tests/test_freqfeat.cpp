#include "oracles.hpp"
#include "sfanet/freqfeat.hpp"

#include <doctest.h>

using namespace sfanet;

namespace {

matrix_t random_grid(Eigen::Index h, Eigen::Index w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  matrix_t m(h, w);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
  return m;
}

double rel_err(const oracle::cgrid& a, const oracle::cgrid& b) {
  return (a - b).norm() / std::max(1e-300, b.norm());
}

}  // namespace

TEST_CASE("fft2 matches the direct DFT") {
  for (int n : {4, 5, 6, 8, 12, 16, 31}) {
    const matrix_t f = random_grid(n, n + (n % 3), std::uint64_t(n));
    CHECK(rel_err(freq::fft2(f), oracle::dft2(f)) < 1e-9);
  }
}

TEST_CASE("Parseval and conjugate symmetry for sizes 4 to 64") {
  for (int n = 4; n <= 64; n += (n < 16 ? 1 : 6)) {
    const matrix_t f = random_grid(n, n, std::uint64_t(100 + n));
    const auto X = freq::fft2(f);
    const double lhs = f.squaredNorm();
    const double rhs = X.squaredNorm() / double(n * n);
    CHECK(std::abs(lhs - rhs) / lhs < 1e-9);
    double worst = 0.0;
    for (int u = 0; u < n; ++u)
      for (int v = 0; v < n; ++v)
        worst = std::max(worst, std::abs(X((n - u) % n, (n - v) % n) - std::conj(X(u, v))));
    CHECK(worst / X.cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("constant and impulse images") {
  for (int n : {4, 7, 16, 64}) {
    const matrix_t c = matrix_t::Constant(n, n, 0.25);
    const auto s = freq::fft_magnitude_phase(c);
    CHECK(s.magnitude(0, 0) == doctest::Approx(0.25 * n * n).epsilon(1e-12));
    double rest = 0.0;
    for (int i = 0; i < n * n; ++i)
      if (i) rest = std::max(rest, s.magnitude(i));
    CHECK(rest < 1e-9 * n * n);

    matrix_t d = matrix_t::Zero(n, n);
    d(0, 0) = 1.0;
    const auto si = freq::fft_magnitude_phase(d);
    CHECK((si.magnitude.array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(si.phase.cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("phase lies in (-pi, pi]") {
  matrix_t f = matrix_t::Zero(4, 4);
  f(0, 0) = -1.0;  // spectrum is -1 everywhere
  const auto s = freq::fft_magnitude_phase(f);
  CHECK((s.phase.array() == std::numbers::pi).all());
  const auto r = freq::fft_magnitude_phase(random_grid(9, 9, 4));
  CHECK(r.phase.maxCoeff() <= std::numbers::pi);
  CHECK(r.phase.minCoeff() > -std::numbers::pi);
}

TEST_CASE("patch tiling equivalence") {
  for (auto [n, p] : {std::pair{8, 4}, {16, 4}, {16, 8}, {32, 8}, {64, 16}, {64, 32}, {12, 4}}) {
    const matrix_t img = random_grid(n, n, std::uint64_t(n * 31 + p));
    const auto tiles = freq::tile(img, p);
    CHECK(tiles.size() == std::size_t((n / p) * (n / p)));
    CHECK(freq::reassemble(tiles, n / p, n / p) == img);
    const auto ps = freq::per_patch_spectra(img, p);
    CHECK(ps.grid_rows == n / p);
    REQUIRE(ps.size() == tiles.size());
    for (std::size_t k = 0; k < tiles.size(); ++k) {
      const auto ref = oracle::dft2(tiles[k]);
      const matrix_t mag = ref.cwiseAbs();
      CHECK((ps.patches[k].magnitude - mag).norm() / mag.norm() < 1e-9);
    }
  }
}

TEST_CASE("tiling and input validation") {
  const matrix_t img = random_grid(10, 10, 1);
  CHECK_THROWS_AS(freq::tile(img, 4), ConfigError);
  CHECK_THROWS_AS(freq::tile(img, 0), ConfigError);
  matrix_t bad = img;
  bad(3, 3) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(freq::fft2(bad), InvalidInput);
  CHECK_THROWS_AS(freq::fft2(matrix_t(0, 0)), InvalidInput);
}

TEST_CASE("log compression") {
  const matrix_t m = (matrix_t(1, 3) << 0.0, 1.0, std::exp(2.0) - 1.0).finished();
  const matrix_t l = freq::log_compress(m);
  CHECK(l(0, 0) == 0.0);
  CHECK(l(0, 1) == doctest::Approx(std::log(2.0)));
  CHECK(l(0, 2) == doctest::Approx(2.0));
}
