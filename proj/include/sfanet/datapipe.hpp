#pragma once

#include "sfanet/core.hpp"
#include "sfanet/faceparts.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace sfanet {

// ---------------------------------------------------------------------------
// Minimal CSV (RFC 4180 quoting, LF records).

std::vector<std::vector<std::string>> parse_csv(std::string_view text);
std::string csv_field(std::string_view s);

// ---------------------------------------------------------------------------
// Manifest: id,path,label,origin,category

inline constexpr std::string_view kManifestHeader = "id,path,label,origin,category";

struct Manifest {
  std::vector<ImageSample> samples;
  long real = 0;
  long fake = 0;
  long unlabeled = 0;
  /// Hex FNV-1a of the canonical CSV listing.
  std::string checksum;
  /// Relative sample paths resolve against this directory.
  std::filesystem::path root;

  std::size_t size() const { return samples.size(); }
  /// Recompute counts and checksum from `samples`.
  void refresh();
  /// Pixels, loading relative paths from `root`.
  Image image(const ImageSample& s) const;
};

Manifest make_manifest(std::vector<ImageSample> samples, std::filesystem::path root = {});
std::string manifest_csv(const Manifest& m);
Manifest parse_manifest(std::string_view text, std::filesystem::path root = {});
Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

/// Every labelled sample of `label`, in manifest order.
std::vector<std::size_t> indices_with_label(const Manifest& m, Label label);

// ---------------------------------------------------------------------------
// Attribute categorisation

struct RawAttributes {
  std::string race;
  std::string emotion;
};

class AttributePredictor {
 public:
  virtual ~AttributePredictor() = default;
  virtual std::string name() const = 0;
  virtual RawAttributes predict(const ImageSample& sample, const Image& image) const = 0;
};

/// Adapter for externally computed attributes: CSV `id,race,emotion`
/// (e.g. the dominant race/emotion columns of a face-attribute analyser).
class AttributeTablePredictor final : public AttributePredictor {
 public:
  explicit AttributeTablePredictor(const std::filesystem::path& table);
  std::string name() const override { return "attribute_table"; }
  RawAttributes predict(const ImageSample& sample, const Image& image) const override;

 private:
  std::unordered_map<std::string, RawAttributes> rows_;
};

/// Deterministic stand-in: race from mean luminance, emotion from a pixel hash.
class StubAttributePredictor final : public AttributePredictor {
 public:
  std::string name() const override { return "stub"; }
  RawAttributes predict(const ImageSample& sample, const Image& image) const override;
};

/// Raw emotion label -> group. The default groups angry/sad/disgust as negative
/// and fear/surprise as scared.
struct EmotionGrouping {
  std::map<std::string, EmotionGroup> table;
  static EmotionGrouping standard();
};

/// nullopt is the "uncategorized" marker (unknown emotion).
std::optional<Category> categorize_raw(const RawAttributes& raw,
                                       const EmotionGrouping& grouping = EmotionGrouping::standard());

/// Predictor failures yield nullopt.
std::optional<Category> categorize(const AttributePredictor& predictor, const ImageSample& sample,
                                   const Image& image,
                                   const EmotionGrouping& grouping = EmotionGrouping::standard());

/// Per-category totals for a train and a validation manifest.
struct CategoryReport {
  std::array<long, Category::kCount> train{};
  std::array<long, Category::kCount> validation{};
  std::array<long, Category::kCount> train_real{}, train_fake{};
  std::array<long, Category::kCount> validation_real{}, validation_fake{};
  long uncategorized_train = 0;
  long uncategorized_validation = 0;
};

CategoryReport category_report(const Manifest& train, const Manifest* validation);
std::string category_report_csv(const CategoryReport& r);

// ---------------------------------------------------------------------------
// Embeddings and clustering

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual vector_t embed(const ImageSample& sample, const Image& image) const = 0;
};

/// Area-averaged luminance thumbnail, flattened row-major.
class DownsampleEmbedder final : public Embedder {
 public:
  explicit DownsampleEmbedder(int side = 8) : side_(side) {}
  std::string name() const override { return "downsample"; }
  int dim() const override { return side_ * side_; }
  vector_t embed(const ImageSample& sample, const Image& image) const override;

 private:
  int side_;
};

/// Adapter for external embeddings: CSV `id,e0,e1,...`.
class EmbeddingTableEmbedder final : public Embedder {
 public:
  explicit EmbeddingTableEmbedder(const std::filesystem::path& table);
  std::string name() const override { return "embedding_table"; }
  int dim() const override { return dim_; }
  vector_t embed(const ImageSample& sample, const Image& image) const override;

 private:
  int dim_ = 0;
  std::unordered_map<std::string, vector_t> rows_;
};

struct Embedding {
  std::string id;
  vector_t vector;
};

struct ClusterAssignment {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> ids;
  std::vector<int> cluster;  // aligned with ids
  matrix_t centroids;        // k x E
  /// Sum of squared distances after each assignment step.
  std::vector<double> objective_history;
  int iterations = 0;

  /// -1 when absent. Linear scan.
  int cluster_of(const std::string& id) const;
  std::vector<long> sizes() const;
};

struct KMeansOptions {
  int max_iterations = 300;
};

/// Lloyd's algorithm with k-means++ seeding; empty clusters are re-seeded from the
/// point farthest from its centroid.
ClusterAssignment cluster_fakes(std::span<const Embedding> embeddings, int k, std::uint64_t seed,
                                const KMeansOptions& options = {});

/// Sum of squared distances from each point to its assigned centroid.
double kmeans_objective(std::span<const Embedding> embeddings, const std::vector<int>& cluster,
                        const matrix_t& centroids);

std::string cluster_csv(const ClusterAssignment& a);
ClusterAssignment parse_cluster_csv(std::string_view text);

// ---------------------------------------------------------------------------
// Folds

struct Fold {
  int index = 0;  // 1-based, follows cluster index + 1
  std::vector<std::size_t> members;  // manifest indices: all reals, then cluster fakes
  std::size_t real_count = 0;
};

std::vector<Fold> build_folds(const Manifest& manifest, const ClusterAssignment& assignment);

// ---------------------------------------------------------------------------
// Crops

struct CropBox {
  int row0 = 0, col0 = 0, row1 = 0, col1 = 0;  // inclusive
  int height() const { return row1 - row0 + 1; }
  int width() const { return col1 - col0 + 1; }
  friend bool operator==(const CropBox&, const CropBox&) = default;
};

struct CropResult {
  enum class Kind { dual_crop, full_image };
  Kind kind = Kind::full_image;
  std::optional<Image> eyes_crop;
  std::optional<Image> lips_crop;
  std::optional<CropBox> eyes_box;
  std::optional<CropBox> lips_box;
};

struct CropGeometry {
  /// Padding on each side as a fraction of the tight box extent.
  double pad_fraction = 0.10;
  /// Lip box is extended downward by this many of its own heights.
  double chin_extension = 1.0;
};

/// Tight box of all non-zero mask pixels; nullopt when the masks are empty.
std::optional<CropBox> mask_union_box(std::span<const Plane* const> masks);

CropResult extract_crops(const Image& image, const FacePartsReport& report,
                         const CropGeometry& geometry = {});

}  // namespace sfanet
