#pragma once

#include "sfanet/core.hpp"
#include "sfanet/freqfeat.hpp"
#include "sfanet/nn.hpp"

#include <any>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sfanet {

using Spectrum = freq::FrequencySpectrum<scalar_t>;

// ---------------------------------------------------------------------------
// Spatial extractors

/// How an extractor lays out its features.
enum class FeatureLayout { per_patch, global };

/// Image -> (P x S) features. Global extractors report P = 1.
class SpatialExtractor {
 public:
  virtual ~SpatialExtractor() = default;

  virtual std::string preset() const = 0;
  /// Expected square input side.
  virtual int resolution() const = 0;
  virtual int grid_rows() const = 0;
  virtual int grid_cols() const = 0;
  virtual FeatureLayout layout() const = 0;
  virtual int spatial_dim() const = 0;

  int num_patches() const { return layout() == FeatureLayout::global ? 1 : grid_rows() * grid_cols(); }

  /// P x S feature matrix for one image of the declared resolution.
  virtual matrix_t extract(const Image& image) const = 0;
};

/// Per-patch luminance statistics: mean, or mean and population std.
/// Global layout flattens the patch grid row-major into one vector.
class PatchStatsExtractor final : public SpatialExtractor {
 public:
  enum class Stats { mean, mean_std };

  PatchStatsExtractor(int resolution, int patch_size, Stats stats, FeatureLayout layout);

  std::string preset() const override;
  int resolution() const override { return resolution_; }
  int grid_rows() const override { return resolution_ / patch_; }
  int grid_cols() const override { return resolution_ / patch_; }
  FeatureLayout layout() const override { return layout_; }
  int spatial_dim() const override;
  matrix_t extract(const Image& image) const override;

 private:
  int resolution_, patch_;
  Stats stats_;
  FeatureLayout layout_;
};

/// Fixed random projection of each patch's luminance followed by tanh; a frozen
/// stand-in for a pretrained patch backbone with arbitrary declared dims.
class ProjectionExtractor final : public SpatialExtractor {
 public:
  ProjectionExtractor(int resolution, int patch_size, int dim, std::uint64_t seed,
                      FeatureLayout layout);

  std::string preset() const override { return "projection"; }
  int resolution() const override { return resolution_; }
  int grid_rows() const override { return resolution_ / patch_; }
  int grid_cols() const override { return resolution_ / patch_; }
  FeatureLayout layout() const override { return layout_; }
  int spatial_dim() const override;
  matrix_t extract(const Image& image) const override;

 private:
  int resolution_, patch_, dim_;
  FeatureLayout layout_;
  matrix_t projection_;  // dim x (patch*patch)
};

/// Batch form with the shape contract checked: B entries of P x S.
std::vector<matrix_t> spatial_features(const SpatialExtractor& extractor,
                                       std::span<const Image> batch);

// ---------------------------------------------------------------------------
// Frequency encoders

/// Spectra -> (count x Fq) features.
class FrequencyEncoder {
 public:
  virtual ~FrequencyEncoder() = default;

  virtual int output_dim() const = 0;
  /// Expected square spectrum side.
  virtual int input_size() const = 0;

  virtual matrix_t forward(std::span<const Spectrum> spectra, std::any* cache) const = 0;
  virtual void backward(const std::any& cache, const matrix_t& d_out) = 0;
  virtual void init(nn::Rng&) {}
  virtual void collect(nn::ParamList&) {}

 protected:
  void check_input(std::span<const Spectrum> spectra) const;
};

/// Parameter-free encoder: mean of log(1 + magnitude). Fq = 1.
class LogMeanEncoder final : public FrequencyEncoder {
 public:
  explicit LogMeanEncoder(int input_size) : size_(input_size) {}

  int output_dim() const override { return 1; }
  int input_size() const override { return size_; }
  matrix_t forward(std::span<const Spectrum> spectra, std::any* cache) const override;
  void backward(const std::any&, const matrix_t&) override {}

 private:
  int size_;
};

/// Small trainable CNN over the stacked [magnitude, phase / pi] planes:
/// conv3x3 -> GELU -> mean+max pool over a G x G grid of cells -> linear.
/// The grid keeps the DC corner from masking isolated high-frequency peaks.
class ConvFrequencyEncoder final : public FrequencyEncoder {
 public:
  ConvFrequencyEncoder(int input_size, int channels, int output_dim, bool log_magnitude, int pool_grid = 4);

  int output_dim() const override { return fc_.out_features(); }
  int input_size() const override { return size_; }
  matrix_t forward(std::span<const Spectrum> spectra, std::any* cache) const override;
  void backward(const std::any& cache, const matrix_t& d_out) override;
  void init(nn::Rng& rng) override;
  void collect(nn::ParamList& out) override;

 private:
  struct Cache;

  int size_;
  int grid_;
  bool log_magnitude_;
  nn::Conv2d conv_;
  nn::Linear fc_;
};

matrix_t encode_frequency(const FrequencyEncoder& encoder, const Spectrum& spectrum);

// ---------------------------------------------------------------------------
// Model configuration

enum class ModelKind { sfnet, sfpnet, swinatten, swinfusion, facecrop_pair };

std::string_view to_string(ModelKind k) noexcept;
ModelKind parse_model_kind(std::string_view s);

struct ExtractorConfig {
  /// global_mean | patch_mean | patch_mean_std | projection | swin_large
  std::string preset = "patch_mean";
  int patch_size = 32;
  /// Output width for the projection preset.
  int dim = 16;
  std::uint64_t seed = 7;
};

struct EncoderConfig {
  /// conv | log_mean
  std::string kind = "conv";
  int channels = 8;
  int freq_dim = 16;
  bool log_magnitude = true;
  /// Pooling grid side (clamped to the input size).
  int pool_grid = 4;
};

struct ModelConfig {
  ModelKind kind = ModelKind::sfnet;
  int resolution = 256;
  /// FFT tile size for the per-patch models.
  int patch_size = 32;
  ExtractorConfig extractor;
  EncoderConfig encoder;
  int attention_heads = 1;
  /// SFPnet aggregate width; 0 means ceil(D/2).
  int aggregate_dim = 0;
  /// Head hidden width; -1 means ceil(D/2), 0 means linear.
  int head_hidden = -1;
  double dropout = 0.1;
  /// Replace the frequency features with zeros (ablation).
  bool ablate_frequency = false;
};

bool uses_frequency(ModelKind k) noexcept;
FeatureLayout layout_for(ModelKind k) noexcept;

std::unique_ptr<SpatialExtractor> make_extractor(const ExtractorConfig& cfg, int resolution,
                                                 FeatureLayout layout);
std::unique_ptr<FrequencyEncoder> make_encoder(const EncoderConfig& cfg, int input_size);

// ---------------------------------------------------------------------------
// Detectors

/// Output of the frozen stage: spatial features and the spectra the encoder consumes.
struct PreparedInput {
  matrix_t spatial;  // P x S
  std::vector<Spectrum> spectra;
  int freq_grid_rows = 0;
  int freq_grid_cols = 0;
};

/// Common detector surface. `prepare` runs the frozen extractor and FFT; the
/// trainable part maps a PreparedInput to a logit.
class Detector {
 public:
  explicit Detector(ModelConfig cfg);
  virtual ~Detector() = default;
  Detector(const Detector&) = delete;
  Detector& operator=(const Detector&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const SpatialExtractor& extractor() const { return *extractor_; }
  int spatial_dim() const { return extractor_->spatial_dim(); }
  int num_patches() const { return extractor_->num_patches(); }
  virtual int freq_dim() const { return 0; }

  PreparedInput prepare(const Image& image) const;

  /// Inference: no cache, no dropout. Safe to call concurrently.
  double logit(const PreparedInput& in) const { return forward(in, nullptr, nullptr); }
  /// Training forward. `rng` drives dropout; pass nullptr for deterministic passes.
  double train_logit(const PreparedInput& in, nn::Rng* rng);
  /// Accumulates gradients for the most recent train_logit.
  void backward(double dlogit);

  nn::ParamList parameters();
  void init(std::uint64_t seed);
  void zero_grad();

 protected:
  virtual double forward(const PreparedInput& in, std::any* cache, nn::Rng* rng) const = 0;
  virtual void backward_impl(const std::any& cache, double dlogit) = 0;
  virtual void collect(nn::ParamList& out) = 0;
  virtual void init_impl(nn::Rng& rng) = 0;

  ModelConfig cfg_;
  std::unique_ptr<SpatialExtractor> extractor_;

 private:
  std::any last_cache_;
};

/// Global spatial vector plus whole-image frequency features into one head.
class SfnetModel final : public Detector {
 public:
  explicit SfnetModel(ModelConfig cfg);
  int freq_dim() const override { return encoder_->output_dim(); }
  nn::ClassificationHead& head() { return head_; }
  FrequencyEncoder& encoder() { return *encoder_; }

 protected:
  double forward(const PreparedInput& in, std::any* cache, nn::Rng* rng) const override;
  void backward_impl(const std::any& cache, double dlogit) override;
  void collect(nn::ParamList& out) override;
  void init_impl(nn::Rng& rng) override;

 private:
  struct Cache;
  std::unique_ptr<FrequencyEncoder> encoder_;
  nn::ClassificationHead head_;
};

/// Shared per-patch fusion used by SFPnet and SwinAtten.
class PatchFusionModel : public Detector {
 public:
  explicit PatchFusionModel(ModelConfig cfg);
  int freq_dim() const override { return encoder_->output_dim(); }
  int fused_dim() const { return spatial_dim() + freq_dim(); }
  FrequencyEncoder& encoder() { return *encoder_; }

  /// P x (S + Fq).
  matrix_t fuse(const PreparedInput& in) const;

 protected:
  matrix_t fuse(const PreparedInput& in, std::any* enc_cache) const;
  void backward_fuse(const std::any& enc_cache, const matrix_t& d_fused);

  std::unique_ptr<FrequencyEncoder> encoder_;
  int pool_rows_ = 1, pool_cols_ = 1;
};

/// Mean over patches, then an MLP aggregate, then the head.
class SfpnetModel final : public PatchFusionModel {
 public:
  explicit SfpnetModel(ModelConfig cfg);
  int aggregate_dim() const { return agg2_.out_features(); }
  nn::ClassificationHead& head() { return head_; }

  /// 1 x A.
  matrix_t aggregate(const matrix_t& fused) const;

 protected:
  double forward(const PreparedInput& in, std::any* cache, nn::Rng* rng) const override;
  void backward_impl(const std::any& cache, double dlogit) override;
  void collect(nn::ParamList& out) override;
  void init_impl(nn::Rng& rng) override;

 private:
  struct Cache;
  nn::Linear agg1_, agg2_;
  nn::ClassificationHead head_;
};

/// Multi-head self-attention over fused patches, mean pooled, then the head.
class SwinAttenModel final : public PatchFusionModel {
 public:
  explicit SwinAttenModel(ModelConfig cfg);
  nn::MultiHeadSelfAttention& attention() { return attention_; }
  nn::ClassificationHead& head() { return head_; }

  /// 1 x (S + Fq).
  matrix_t attend_and_pool(const matrix_t& fused) const;

 protected:
  double forward(const PreparedInput& in, std::any* cache, nn::Rng* rng) const override;
  void backward_impl(const std::any& cache, double dlogit) override;
  void collect(nn::ParamList& out) override;
  void init_impl(nn::Rng& rng) override;

 private:
  struct Cache;
  nn::MultiHeadSelfAttention attention_;
  nn::ClassificationHead head_;
};

/// Extractor and head only; used for SwinFusion and the face-crop classifiers.
class PlainClassifierModel final : public Detector {
 public:
  explicit PlainClassifierModel(ModelConfig cfg);
  nn::ClassificationHead& head() { return head_; }

 protected:
  double forward(const PreparedInput& in, std::any* cache, nn::Rng* rng) const override;
  void backward_impl(const std::any& cache, double dlogit) override;
  void collect(nn::ParamList& out) override;
  void init_impl(nn::Rng& rng) override;

 private:
  nn::ClassificationHead head_;
};

std::unique_ptr<Detector> make_detector(const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// Bundles

/// A configured detector plus whether its weights have been initialised or loaded.
class ModelBundle {
 public:
  /// Weights not loaded; scoring throws StateError until `initialize` or `load_checkpoint`.
  explicit ModelBundle(ModelConfig cfg);
  static ModelBundle initialized(ModelConfig cfg, std::uint64_t seed);

  ModelBundle(ModelBundle&&) noexcept = default;
  ModelBundle& operator=(ModelBundle&&) noexcept = default;

  ModelKind kind() const { return model_->config().kind; }
  const ModelConfig& config() const { return model_->config(); }
  bool loaded() const { return loaded_; }

  void initialize(std::uint64_t seed);
  void mark_loaded() { loaded_ = true; }

  Detector& model() { return *model_; }
  const Detector& model() const { return *model_; }

  Score score(const Image& image) const;
  std::vector<Score> score(std::span<const Image> batch) const;

  /// Parameter values in collection order.
  std::vector<matrix_t> weights() const;
  std::vector<std::string> weight_names() const;
  void set_weights(const std::vector<matrix_t>& w);
  ModelBundle clone() const;

 private:
  void require_loaded() const;

  std::unique_ptr<Detector> model_;
  bool loaded_ = false;
};

std::vector<Score> sfnet_forward(const ModelBundle& model, std::span<const Image> batch);
std::vector<Score> sfpnet_forward(const ModelBundle& model, std::span<const Image> batch);
std::vector<Score> swinatten_forward(const ModelBundle& model, std::span<const Image> batch);

// ---------------------------------------------------------------------------
// Checkpoints: `<path>` holds the weights blob, `<path>.json` the metadata.

/// Named float64 tensors: magic, count, then (name, rows, cols, column-major data) each.
using NamedTensors = std::vector<std::pair<std::string, matrix_t>>;
std::string encode_tensors(const NamedTensors& tensors);
NamedTensors decode_tensors(std::string_view blob);

std::string serialize_weights(const ModelBundle& bundle);
void deserialize_weights(ModelBundle& bundle, std::string_view blob);

/// `extra` string fields are copied into the sidecar.
void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& extra = {});
ModelBundle load_checkpoint(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& ckpt);

}  // namespace sfanet
