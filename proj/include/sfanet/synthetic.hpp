#pragma once

#include "sfanet/core.hpp"
#include "sfanet/datapipe.hpp"

#include <filesystem>
#include <random>
#include <vector>

namespace sfanet::synthetic {

/// Real = box-blurred uniform noise. Fake = another such image plus a
/// +-amplitude pixel checkerboard (energy at the Nyquist corner).
struct CorpusSpec {
  int real = 400;
  int fake = 400;
  int size = 64;
  int blur_radius = 2;
  int amplitude = 10;
  std::uint64_t seed = 1;
  /// Fraction of images whose mouth region is flattened, so a texture-based
  /// face-parts stub reports the lips missing.
  double occluded_fraction = 0.0;
};

Image smoothed_noise(int size, int radius, std::mt19937_64& rng);
Image add_checkerboard(const Image& image, int amplitude);
/// Flat fill over the canonical lip boxes.
Image occlude_mouth(const Image& image);

/// In-memory samples, reals first, ids real_0000.. / fake_0000..
std::vector<ImageSample> make_corpus(const CorpusSpec& spec);

/// Writes `<dir>/images/*.ppm` and returns a manifest with paths relative to `dir`.
Manifest write_corpus(const std::filesystem::path& dir, const CorpusSpec& spec);

}  // namespace sfanet::synthetic
