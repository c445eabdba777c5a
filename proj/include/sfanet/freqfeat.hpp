#pragma once

#include "sfanet/core.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

namespace sfanet::freq {

template <typename Scalar>
using Grid = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using ComplexGrid = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

/// Polar form of a 2-D DFT. Phase lies in (-pi, pi].
template <typename Scalar>
struct FrequencySpectrum {
  Grid<Scalar> magnitude;
  Grid<Scalar> phase;

  Eigen::Index rows() const { return magnitude.rows(); }
  Eigen::Index cols() const { return magnitude.cols(); }
};

/// Row-major tiling of an image into p x p spectra.
template <typename Scalar>
struct PatchSpectra {
  int patch_size = 0;
  int grid_rows = 0;
  int grid_cols = 0;
  std::vector<FrequencySpectrum<Scalar>> patches;

  std::size_t size() const { return patches.size(); }
};

/// Unnormalized forward transform: X[u,v] = sum_{x,y} f[x,y] exp(-2 pi i (ux/H + vy/W)).
template <typename Derived>
ComplexGrid<typename Derived::Scalar> fft2(const Eigen::MatrixBase<Derived>& image) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index h = image.rows();
  const Eigen::Index w = image.cols();
  if (h < 1 || w < 1) throw InvalidInput("fft2: empty grid");
  if (!image.allFinite()) throw InvalidInput("fft2: non-finite input values");

  Eigen::FFT<Scalar> fft;
  ComplexGrid<Scalar> out(h, w);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> row_in(w);
  Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> row_out(w);
  for (Eigen::Index r = 0; r < h; ++r) {
    row_in = image.row(r).transpose();
    fft.fwd(row_out, row_in);
    out.row(r) = row_out.transpose();
  }
  Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> col_in(h), col_out(h);
  for (Eigen::Index c = 0; c < w; ++c) {
    col_in = out.col(c);
    fft.fwd(col_out, col_in);
    out.col(c) = col_out;
  }
  return out;
}

template <typename Derived>
FrequencySpectrum<typename Derived::Scalar> fft_magnitude_phase(
    const Eigen::MatrixBase<Derived>& image) {
  using Scalar = typename Derived::Scalar;
  const auto spec = fft2(image);
  FrequencySpectrum<Scalar> out;
  out.magnitude = spec.cwiseAbs();
  out.phase.resize(spec.rows(), spec.cols());
  for (Eigen::Index i = 0; i < spec.size(); ++i) {
    Scalar a = std::arg(spec(i));
    if (a <= -std::numbers::pi_v<Scalar>) a = std::numbers::pi_v<Scalar>;
    out.phase(i) = a;
  }
  return out;
}

inline void check_tiling(Eigen::Index h, Eigen::Index w, int p) {
  if (p <= 0 || h % p != 0 || w % p != 0)
    throw ConfigError("patch size must divide the image: H=" + std::to_string(h) +
                      " W=" + std::to_string(w) + " p=" + std::to_string(p));
}

/// Tiles in row-major order.
template <typename Derived>
std::vector<Grid<typename Derived::Scalar>> tile(const Eigen::MatrixBase<Derived>& image, int p) {
  check_tiling(image.rows(), image.cols(), p);
  std::vector<Grid<typename Derived::Scalar>> tiles;
  tiles.reserve(static_cast<std::size_t>((image.rows() / p) * (image.cols() / p)));
  for (Eigen::Index r = 0; r < image.rows(); r += p)
    for (Eigen::Index c = 0; c < image.cols(); c += p) tiles.emplace_back(image.block(r, c, p, p));
  return tiles;
}

/// Inverse of `tile`.
template <typename Scalar>
Grid<Scalar> reassemble(const std::vector<Grid<Scalar>>& tiles, int grid_rows, int grid_cols) {
  if (tiles.size() != static_cast<std::size_t>(grid_rows) * grid_cols || tiles.empty())
    throw ConfigError("reassemble: tile count does not match grid");
  const auto p = tiles.front().rows();
  Grid<Scalar> out(grid_rows * p, grid_cols * p);
  for (int k = 0; k < static_cast<int>(tiles.size()); ++k)
    out.block((k / grid_cols) * p, (k % grid_cols) * p, p, p) = tiles[static_cast<std::size_t>(k)];
  return out;
}

template <typename Derived>
PatchSpectra<typename Derived::Scalar> per_patch_spectra(const Eigen::MatrixBase<Derived>& image,
                                                         int patch_size) {
  PatchSpectra<typename Derived::Scalar> out;
  const auto tiles = tile(image, patch_size);
  out.patch_size = patch_size;
  out.grid_rows = static_cast<int>(image.rows() / patch_size);
  out.grid_cols = static_cast<int>(image.cols() / patch_size);
  out.patches.reserve(tiles.size());
  for (const auto& t : tiles) out.patches.push_back(fft_magnitude_phase(t));
  return out;
}

/// log(1 + m), the default compression applied before the frequency encoder.
template <typename Derived>
Grid<typename Derived::Scalar> log_compress(const Eigen::MatrixBase<Derived>& magnitude) {
  return magnitude.array().log1p().matrix();
}

}  // namespace sfanet::freq
