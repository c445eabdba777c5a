#include "sfanet/faceparts.hpp"

#include <cmath>

namespace sfanet {

std::string_view to_string(FacePart p) noexcept {
  switch (p) {
    case FacePart::left_eyebrow: return "left_eyebrow";
    case FacePart::right_eyebrow: return "right_eyebrow";
    case FacePart::left_eye: return "left_eye";
    case FacePart::right_eye: return "right_eye";
    case FacePart::upper_lip: return "upper_lip";
    case FacePart::lower_lip: return "lower_lip";
  }
  return "unknown";
}

void FacePartsReport::set(FacePart p, bool is_present, std::optional<Plane> m) {
  presence[static_cast<std::size_t>(p)] = is_present;
  masks[static_cast<std::size_t>(p)] = std::move(m);
}

bool FacePartsReport::gate() const {
  for (bool b : presence)
    if (!b) return false;
  return true;
}

void FacePartsReport::normalize() {
  for (std::size_t i = 0; i < presence.size(); ++i)
    if (presence[i] && masks[i] && (masks[i]->array() == 0).all()) presence[i] = false;
}

FacePartsReport FacePartsReport::all_absent(std::string source, std::string error) {
  FacePartsReport r;
  r.source = std::move(source);
  r.error = std::move(error);
  return r;
}

FacePartsReport detect_parts(const FacePartsProvider& provider, const ImageSample& sample) {
  try {
    FacePartsReport r = provider.parse(sample);
    r.normalize();
    return r;
  } catch (const std::exception& e) {
    return FacePartsReport::all_absent(provider.name(), e.what());
  }
}

Plane CanonicalLayout::mask(FacePart p, int height, int width) const {
  const auto& b = boxes[static_cast<std::size_t>(p)];
  const double sy = height / 256.0;
  const double sx = width / 256.0;
  const int r0 = static_cast<int>(std::floor(b.row0 * sy));
  const int r1 = std::max(r0, static_cast<int>(std::floor(b.row1 * sy)));
  const int c0 = static_cast<int>(std::floor(b.col0 * sx));
  const int c1 = std::max(c0, static_cast<int>(std::floor(b.col1 * sx)));
  Plane m = Plane::Zero(height, width);
  m.block(r0, c0, r1 - r0 + 1, c1 - c0 + 1).setConstant(1);
  return m;
}

StubPartsProvider::StubPartsProvider(std::array<bool, kFacePartCount> presence, bool with_masks)
    : presence_(presence), with_masks_(with_masks) {}

StubPartsProvider StubPartsProvider::missing(FacePart p) {
  std::array<bool, kFacePartCount> flags{true, true, true, true, true, true};
  flags[static_cast<std::size_t>(p)] = false;
  return StubPartsProvider(flags);
}

FacePartsReport StubPartsProvider::parse(const ImageSample& sample) const {
  FacePartsReport r;
  r.source = name();
  int h = 256, w = 256;
  if (with_masks_) {
    const Image img = sample.load();
    h = img.height();
    w = img.width();
  }
  for (int i = 0; i < kFacePartCount; ++i) {
    const auto part = static_cast<FacePart>(i);
    std::optional<Plane> m;
    if (with_masks_) {
      m = presence_[static_cast<std::size_t>(i)] ? layout_.mask(part, h, w) : Plane(Plane::Zero(h, w));
    }
    r.set(part, presence_[static_cast<std::size_t>(i)], std::move(m));
  }
  return r;
}

FacePartsReport FailingPartsProvider::parse(const ImageSample& sample) const {
  throw Error("face parser failed on " + sample.id);
}

FacePartsReport TextureGateProvider::parse(const ImageSample& sample) const {
  const Image img = sample.load();
  const matrix_t lum = img.luminance();
  FacePartsReport r;
  r.source = name();
  for (int i = 0; i < kFacePartCount; ++i) {
    const auto part = static_cast<FacePart>(i);
    Plane m = layout_.mask(part, img.height(), img.width());
    double sum = 0.0, sq = 0.0;
    long n = 0;
    for (Eigen::Index y = 0; y < m.rows(); ++y)
      for (Eigen::Index x = 0; x < m.cols(); ++x)
        if (m(y, x)) {
          sum += lum(y, x);
          sq += lum(y, x) * lum(y, x);
          ++n;
        }
    const double mean = sum / static_cast<double>(n);
    const double sd = std::sqrt(std::max(0.0, sq / static_cast<double>(n) - mean * mean));
    const bool present = sd >= min_std_;
    if (!present) m.setZero();
    r.set(part, present, std::move(m));
  }
  return r;
}

FacePartsReport report_from_label_map(const Plane& labels, std::string source) {
  // CelebAMask-HQ ids used by common face parsers.
  constexpr std::array<int, kFacePartCount> ids = {2, 3, 4, 5, 12, 13};
  FacePartsReport r;
  r.source = std::move(source);
  for (int i = 0; i < kFacePartCount; ++i) {
    Plane m = (labels.array() == static_cast<std::uint8_t>(ids[static_cast<std::size_t>(i)]))
                  .cast<std::uint8_t>()
                  .matrix();
    const bool present = (m.array() != 0).any();
    r.set(static_cast<FacePart>(i), present, std::move(m));
  }
  return r;
}

FacePartsReport LabelMapPartsProvider::parse(const ImageSample& sample) const {
  return report_from_label_map(read_pgm(dir_ / (sample.id + ".pgm")), name());
}

}  // namespace sfanet
