#pragma once

#include "sfanet/core.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>

namespace sfanet {

/// The six parts the gate checks.
enum class FacePart : std::uint8_t {
  left_eyebrow,
  right_eyebrow,
  left_eye,
  right_eye,
  upper_lip,
  lower_lip,
};

inline constexpr int kFacePartCount = 6;

std::string_view to_string(FacePart p) noexcept;

struct FacePartsReport {
  std::array<bool, kFacePartCount> presence{};
  /// Optional binary masks (non-zero = part pixel), image-sized.
  std::array<std::optional<Plane>, kFacePartCount> masks;
  std::string source;
  /// Set when the provider failed and the report was synthesised as all-absent.
  std::optional<std::string> error;

  bool present(FacePart p) const { return presence[static_cast<std::size_t>(p)]; }
  const std::optional<Plane>& mask(FacePart p) const { return masks[static_cast<std::size_t>(p)]; }
  void set(FacePart p, bool present, std::optional<Plane> mask = std::nullopt);

  /// All six parts present.
  bool gate() const;

  /// A present flag whose mask has no positive pixel is cleared.
  void normalize();

  static FacePartsReport all_absent(std::string source, std::string error);
};

/// Image -> report. Implementations must be deterministic per image.
class FacePartsProvider {
 public:
  virtual ~FacePartsProvider() = default;
  virtual std::string name() const = 0;
  virtual FacePartsReport parse(const ImageSample& sample) const = 0;
};

/// Never throws: provider failures become an all-absent report carrying the error.
FacePartsReport detect_parts(const FacePartsProvider& provider, const ImageSample& sample);

/// Rectangular masks at canonical positions on a 256x256 face crop, scaled to
/// the image size. Mask rows/cols below are for 256x256.
struct CanonicalLayout {
  struct Box {
    int row0, col0, row1, col1;
  };
  std::array<Box, kFacePartCount> boxes{{
      {60, 60, 75, 115},     // left eyebrow
      {60, 141, 75, 196},    // right eyebrow
      {85, 70, 110, 110},    // left eye
      {85, 146, 110, 186},   // right eye
      {170, 98, 184, 158},   // upper lip
      {185, 98, 200, 158},   // lower lip
  }};

  Plane mask(FacePart p, int height, int width) const;
};

/// Fixed presence flags with canonical-layout masks (or none).
class StubPartsProvider final : public FacePartsProvider {
 public:
  explicit StubPartsProvider(std::array<bool, kFacePartCount> presence = {true, true, true, true, true, true},
                             bool with_masks = true);

  static StubPartsProvider all_present() { return StubPartsProvider(); }
  static StubPartsProvider missing(FacePart p);

  std::string name() const override { return "stub"; }
  FacePartsReport parse(const ImageSample& sample) const override;

 private:
  std::array<bool, kFacePartCount> presence_;
  bool with_masks_;
  CanonicalLayout layout_;
};

/// Always throws; exercises the fail-closed path.
class FailingPartsProvider final : public FacePartsProvider {
 public:
  std::string name() const override { return "failing"; }
  FacePartsReport parse(const ImageSample& sample) const override;
};

/// Content-driven stub: canonical regions, a part counts as present when its
/// region is textured (luminance std above a floor). Featureless regions read
/// as missing, so flat or heavily blurred faces route to the fallback path.
class TextureGateProvider final : public FacePartsProvider {
 public:
  explicit TextureGateProvider(double min_std = 0.02) : min_std_(min_std) {}
  std::string name() const override { return "texture_stub"; }
  FacePartsReport parse(const ImageSample& sample) const override;

 private:
  double min_std_;
  CanonicalLayout layout_;
};

/// Report from a face-parsing label map using the 19-class CelebAMask-HQ ids
/// (2/3 brows, 4/5 eyes, 12/13 lips).
FacePartsReport report_from_label_map(const Plane& labels, std::string source);

/// Adapter for an external face parser: reads `<dir>/<sample id>.pgm` label maps.
class LabelMapPartsProvider final : public FacePartsProvider {
 public:
  explicit LabelMapPartsProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::string name() const override { return "label_maps"; }
  FacePartsReport parse(const ImageSample& sample) const override;

 private:
  std::filesystem::path dir_;
};

}  // namespace sfanet
