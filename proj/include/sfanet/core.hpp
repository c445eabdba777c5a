#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sfanet {

/** Scalar type used by every trainable component. */
using scalar_t = double;

using vector_t = Eigen::Matrix<scalar_t, Eigen::Dynamic, 1>;
using row_vector_t = Eigen::Matrix<scalar_t, 1, Eigen::Dynamic>;
using matrix_t = Eigen::Matrix<scalar_t, Eigen::Dynamic, Eigen::Dynamic>;

// ---------------------------------------------------------------------------
// Errors

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad configuration: dimensions, hyperparameters, unknown keys.
struct ConfigError : Error {
  using Error::Error;
};

/// Input data violates a precondition (non-finite values, bad scores).
struct InvalidInput : Error {
  using Error::Error;
};

/// Object used in the wrong state (e.g. a model with no weights).
struct StateError : Error {
  using Error::Error;
};

/// Manifest / file ingestion failure.
struct IngestError : Error {
  using Error::Error;
};

/// Two inputs that must agree do not (masks vs image, clusters vs manifest).
struct ConsistencyError : Error {
  using Error::Error;
};

/// Inference failure inside a multi-model pipeline.
struct PipelineError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Labels and scores

/// Ground truth. Numeric encoding: real -> 1, fake -> 0.
enum class Label : std::uint8_t { fake = 0, real = 1 };

constexpr int encode(Label l) noexcept { return l == Label::real ? 1 : 0; }
Label decode_label(int v);

std::string_view to_string(Label l) noexcept;
std::optional<Label> parse_label(std::string_view s) noexcept;

/// Model output in [0,1]; higher means more likely real.
class Score {
 public:
  explicit Score(double v);
  double value() const noexcept { return value_; }
  friend bool operator==(Score, Score) = default;

 private:
  double value_;
};

/// Thresholding rule: fake iff score < threshold.
class DecisionPolicy {
 public:
  static constexpr double kDefaultThreshold = 0.3;
  /// Threshold used by the single-model validation tables.
  static constexpr double kNeutralThreshold = 0.5;

  DecisionPolicy() = default;
  explicit DecisionPolicy(double threshold);

  static DecisionPolicy neutral() { return DecisionPolicy(kNeutralThreshold); }

  double threshold() const noexcept { return threshold_; }

 private:
  double threshold_ = kDefaultThreshold;
};

/// Ties resolve to real.
inline Label decide(Score s, const DecisionPolicy& policy) noexcept {
  return s.value() < policy.threshold() ? Label::fake : Label::real;
}

// ---------------------------------------------------------------------------
// Categories

enum class RaceGroup : std::uint8_t { white, other };
enum class EmotionGroup : std::uint8_t { happy, negative, neutral, scared };

struct Category {
  RaceGroup race = RaceGroup::other;
  EmotionGroup emotion = EmotionGroup::neutral;

  static constexpr int kCount = 8;

  /// Dense index in [0, 8): race-major, emotion-minor, "other" before "white".
  int index() const noexcept;
  static Category from_index(int i);

  friend bool operator==(const Category&, const Category&) = default;
};

std::string to_string(const Category& c);
std::optional<Category> parse_category(std::string_view s) noexcept;

// ---------------------------------------------------------------------------
// Images

/// One 8-bit plane, row-major so that raw buffers map directly.
using Plane = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// H x W x 3 image with 8-bit channels.
class Image {
 public:
  Image() = default;
  Image(int height, int width);
  Image(Plane r, Plane g, Plane b);

  /// Same value in all channels.
  static Image filled(int height, int width, std::uint8_t value);
  /// Replicate a [0,1] grayscale grid into three channels, rounding to 8 bits.
  static Image from_gray(const matrix_t& gray01);

  int height() const noexcept { return static_cast<int>(channels_[0].rows()); }
  int width() const noexcept { return static_cast<int>(channels_[0].cols()); }
  bool empty() const noexcept { return channels_[0].size() == 0; }

  const Plane& channel(int c) const { return channels_.at(static_cast<std::size_t>(c)); }
  Plane& channel(int c) { return channels_.at(static_cast<std::size_t>(c)); }

  /// ITU-R 601 luminance scaled to [0,1].
  matrix_t luminance() const;

  /// Inclusive row/col bounds; must lie inside the image.
  Image crop(int row0, int col0, int row1, int col1) const;
  /// Bilinear resample to the requested size.
  Image resized(int height, int width) const;

  friend bool operator==(const Image& a, const Image& b);

 private:
  std::array<Plane, 3> channels_;
};

/// Binary PPM (P6) or PGM (P5) reader; PGM is replicated into three channels.
Image read_pnm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);
/// Single-channel 8-bit map (P5), e.g. a face-parsing label map.
Plane read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Plane& plane);

struct ImageSample {
  std::string id;
  std::filesystem::path path;
  std::optional<Image> pixels;
  std::optional<Label> label;
  std::string origin;
  std::optional<Category> category;

  /// Pixels if present, otherwise read from `path`.
  Image load() const;
};

/// Sigmoid that never returns exactly 0 or 1.
double clamped_sigmoid(double logit) noexcept;

/// 64-bit FNV-1a, used for config and manifest checksums.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;
std::string hex64(std::uint64_t v);

/// Write via a temporary sibling file and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace sfanet
