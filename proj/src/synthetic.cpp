#include "sfanet/synthetic.hpp"

#include "sfanet/faceparts.hpp"

#include <algorithm>
#include <cstdio>

namespace sfanet::synthetic {

Image smoothed_noise(int size, int radius, std::mt19937_64& rng) {
  if (size < 1 || radius < 0) throw ConfigError("bad synthetic image geometry");
  matrix_t noise(size, size);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise(i) = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  // Box blur with wrap-around so every pixel averages the same number of samples.
  matrix_t out = matrix_t::Zero(size, size);
  const int w = 2 * radius + 1;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      double s = 0.0;
      for (int dr = -radius; dr <= radius; ++dr)
        for (int dc = -radius; dc <= radius; ++dc)
          s += noise((r + dr + size) % size, (c + dc + size) % size);
      out(r, c) = s / (w * w);
    }
  return Image::from_gray(out);
}

Image add_checkerboard(const Image& image, int amplitude) {
  Image out = image;
  for (int ch = 0; ch < 3; ++ch) {
    Plane& p = out.channel(ch);
    for (Eigen::Index r = 0; r < p.rows(); ++r)
      for (Eigen::Index c = 0; c < p.cols(); ++c) {
        const int sign = ((r + c) % 2 == 0) ? 1 : -1;
        p(r, c) = static_cast<std::uint8_t>(std::clamp(static_cast<int>(p(r, c)) + sign * amplitude, 0, 255));
      }
  }
  return out;
}

Image occlude_mouth(const Image& image) {
  Image out = image;
  const CanonicalLayout layout;
  for (auto part : {FacePart::upper_lip, FacePart::lower_lip}) {
    const Plane m = layout.mask(part, image.height(), image.width());
    for (int ch = 0; ch < 3; ++ch)
      out.channel(ch) = (m.array() != 0).select(Plane::Constant(m.rows(), m.cols(), 128), out.channel(ch));
  }
  return out;
}

std::vector<ImageSample> make_corpus(const CorpusSpec& spec) {
  if (spec.real < 0 || spec.fake < 0 || spec.real + spec.fake == 0) throw ConfigError("empty synthetic corpus");
  if (spec.amplitude < 0 || spec.amplitude > 127) throw ConfigError("checkerboard amplitude must lie in [0,127]");
  std::mt19937_64 rng(spec.seed);
  std::vector<ImageSample> out;
  auto add = [&](Label label, int i) {
    Image img = smoothed_noise(spec.size, spec.blur_radius, rng);
    if (label == Label::fake) img = add_checkerboard(img, spec.amplitude);
    if (static_cast<double>(rng() >> 11) * 0x1.0p-53 < spec.occluded_fraction) img = occlude_mouth(img);
    char id[32];
    std::snprintf(id, sizeof id, "%s_%04d", label == Label::real ? "real" : "fake", i);
    ImageSample s;
    s.id = id;
    s.path = std::filesystem::path("images") / (s.id + ".ppm");
    s.pixels = std::move(img);
    s.label = label;
    s.origin = "synthetic";
    out.push_back(std::move(s));
  };
  for (int i = 0; i < spec.real; ++i) add(Label::real, i);
  for (int i = 0; i < spec.fake; ++i) add(Label::fake, i);
  return out;
}

Manifest write_corpus(const std::filesystem::path& dir, const CorpusSpec& spec) {
  auto samples = make_corpus(spec);
  std::filesystem::create_directories(dir / "images");
  for (auto& s : samples) {
    write_ppm(dir / s.path, *s.pixels);
    s.pixels.reset();
  }
  return make_manifest(std::move(samples), dir);
}

}  // namespace sfanet::synthetic
