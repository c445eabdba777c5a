#include "sfanet/heads.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace sfanet {

// ---------------------------------------------------------------------------
// Extractors

namespace {

void check_patch_grid(int resolution, int patch) {
  if (resolution <= 0 || patch <= 0 || resolution % patch != 0)
    throw ConfigError("extractor patch size " + std::to_string(patch) +
                      " must divide resolution " + std::to_string(resolution));
}

void check_resolution(const Image& image, int resolution) {
  if (image.height() != resolution || image.width() != resolution)
    throw ConfigError("image is " + std::to_string(image.height()) + "x" +
                      std::to_string(image.width()) + ", extractor expects " +
                      std::to_string(resolution) + "x" + std::to_string(resolution));
}

}  // namespace

PatchStatsExtractor::PatchStatsExtractor(int resolution, int patch_size, Stats stats,
                                         FeatureLayout layout)
    : resolution_(resolution), patch_(patch_size), stats_(stats), layout_(layout) {
  check_patch_grid(resolution, patch_size);
}

std::string PatchStatsExtractor::preset() const {
  if (stats_ == Stats::mean_std) return "patch_mean_std";
  return patch_ == resolution_ && layout_ == FeatureLayout::global ? "global_mean" : "patch_mean";
}

int PatchStatsExtractor::spatial_dim() const {
  const int per = stats_ == Stats::mean ? 1 : 2;
  return layout_ == FeatureLayout::global ? per * grid_rows() * grid_cols() : per;
}

matrix_t PatchStatsExtractor::extract(const Image& image) const {
  check_resolution(image, resolution_);
  const matrix_t lum = image.luminance();
  const int per = stats_ == Stats::mean ? 1 : 2;
  const int p = patch_;
  matrix_t out(grid_rows() * grid_cols(), per);
  int k = 0;
  for (int r = 0; r < resolution_; r += p) {
    for (int c = 0; c < resolution_; c += p, ++k) {
      const auto tile = lum.block(r, c, p, p);
      const double mean = tile.mean();
      out(k, 0) = mean;
      if (per == 2) out(k, 1) = std::sqrt((tile.array() - mean).square().mean());
    }
  }
  if (layout_ == FeatureLayout::global) {
    matrix_t flat(1, out.size());
    for (int i = 0; i < out.rows(); ++i)
      for (int j = 0; j < per; ++j) flat(0, i * per + j) = out(i, j);
    return flat;
  }
  return out;
}

ProjectionExtractor::ProjectionExtractor(int resolution, int patch_size, int dim,
                                         std::uint64_t seed, FeatureLayout layout)
    : resolution_(resolution), patch_(patch_size), dim_(dim), layout_(layout) {
  check_patch_grid(resolution, patch_size);
  if (dim <= 0) throw ConfigError("projection extractor dim must be positive");
  nn::Rng rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / patch_size);
  projection_.resize(dim, patch_size * patch_size);
  for (Eigen::Index i = 0; i < projection_.size(); ++i) projection_(i) = dist(rng);
}

int ProjectionExtractor::spatial_dim() const { return dim_; }

matrix_t ProjectionExtractor::extract(const Image& image) const {
  check_resolution(image, resolution_);
  const matrix_t lum = image.luminance();
  const int p = patch_;
  matrix_t out(grid_rows() * grid_cols(), dim_);
  vector_t flat(p * p);
  int k = 0;
  for (int r = 0; r < resolution_; r += p) {
    for (int c = 0; c < resolution_; c += p, ++k) {
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) flat(i * p + j) = lum(r + i, c + j) - 0.5;
      out.row(k) = (projection_ * flat).array().tanh().matrix().transpose();
    }
  }
  if (layout_ == FeatureLayout::global) return out.colwise().mean();
  return out;
}

std::vector<matrix_t> spatial_features(const SpatialExtractor& extractor,
                                       std::span<const Image> batch) {
  if (batch.empty()) throw InvalidInput("spatial_features: empty batch");
  std::vector<matrix_t> out;
  out.reserve(batch.size());
  for (const auto& img : batch) {
    matrix_t f = extractor.extract(img);
    if (f.rows() != extractor.num_patches() || f.cols() != extractor.spatial_dim())
      throw StateError("extractor " + extractor.preset() + " violated its declared shape");
    if (!f.allFinite()) throw StateError("extractor " + extractor.preset() + " produced non-finite features");
    out.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Encoders

void FrequencyEncoder::check_input(std::span<const Spectrum> spectra) const {
  for (const auto& s : spectra)
    if (s.rows() != input_size() || s.cols() != input_size())
      throw ConfigError("frequency encoder expects " + std::to_string(input_size()) + "x" +
                        std::to_string(input_size()) + " spectra, got " +
                        std::to_string(s.rows()) + "x" + std::to_string(s.cols()));
}

matrix_t LogMeanEncoder::forward(std::span<const Spectrum> spectra, std::any*) const {
  check_input(spectra);
  matrix_t out(static_cast<Eigen::Index>(spectra.size()), 1);
  for (std::size_t k = 0; k < spectra.size(); ++k)
    out(static_cast<Eigen::Index>(k), 0) = freq::log_compress(spectra[k].magnitude).mean();
  return out;
}

struct ConvFrequencyEncoder::Cache {
  std::vector<nn::Conv2d::Cache> conv;
  std::vector<matrix_t> pre;
  // Per image, per (cell, channel): row of the cell maximum in the activation map.
  std::vector<std::vector<Eigen::Index>> argmax;
  nn::Linear::Cache fc;
};

ConvFrequencyEncoder::ConvFrequencyEncoder(int input_size, int channels, int output_dim,
                                           bool log_magnitude, int pool_grid)
    : size_(input_size),
      grid_(std::min(pool_grid, input_size)),
      log_magnitude_(log_magnitude),
      conv_("freq.conv", 2, channels) {
  if (input_size <= 0) throw ConfigError("frequency encoder input size must be positive");
  if (pool_grid <= 0) throw ConfigError("frequency encoder pool grid must be positive");
  fc_ = nn::Linear("freq.fc", 2 * channels * grid_ * grid_, output_dim);
}

matrix_t ConvFrequencyEncoder::forward(std::span<const Spectrum> spectra, std::any* cache) const {
  check_input(spectra);
  const int n = size_ * size_;
  const int ch = conv_.out_channels();
  const int cells = grid_ * grid_;
  Cache c;
  matrix_t pooled(static_cast<Eigen::Index>(spectra.size()), 2 * ch * cells);
  nn::FeatureMap in{size_, size_, matrix_t(n, 2)};
  for (std::size_t k = 0; k < spectra.size(); ++k) {
    const auto& s = spectra[k];
    for (int i = 0; i < size_; ++i)
      for (int j = 0; j < size_; ++j) {
        const double m = s.magnitude(i, j);
        in.data(i * size_ + j, 0) = log_magnitude_ ? std::log1p(m) : m;
        in.data(i * size_ + j, 1) = s.phase(i, j) / std::numbers::pi;
      }
    nn::Conv2d::Cache cc;
    nn::FeatureMap pre = conv_.forward(in, cache ? &cc : nullptr);
    const matrix_t act = nn::gelu(pre.data);
    std::vector<Eigen::Index> arg(static_cast<std::size_t>(cells * ch));
    for (int gr = 0; gr < grid_; ++gr)
      for (int gc = 0; gc < grid_; ++gc) {
        const int r0 = gr * size_ / grid_, r1 = (gr + 1) * size_ / grid_;
        const int c0 = gc * size_ / grid_, c1 = (gc + 1) * size_ / grid_;
        const int cell = gr * grid_ + gc;
        for (int q = 0; q < ch; ++q) {
          double sum = 0.0, best = -std::numeric_limits<double>::infinity();
          Eigen::Index at = 0;
          for (int i = r0; i < r1; ++i)
            for (int j = c0; j < c1; ++j) {
              const double v = act(i * size_ + j, q);
              sum += v;
              if (v > best) {
                best = v;
                at = i * size_ + j;
              }
            }
          const auto col = static_cast<Eigen::Index>(cell * ch + q);
          pooled(static_cast<Eigen::Index>(k), col) = sum / ((r1 - r0) * (c1 - c0));
          pooled(static_cast<Eigen::Index>(k), cells * ch + col) = best;
          arg[static_cast<std::size_t>(col)] = at;
        }
      }
    if (cache) {
      c.conv.push_back(std::move(cc));
      c.pre.push_back(std::move(pre.data));
      c.argmax.push_back(std::move(arg));
    }
  }
  matrix_t out = fc_.forward(pooled, cache ? &c.fc : nullptr);
  if (cache) *cache = std::move(c);
  return out;
}

void ConvFrequencyEncoder::backward(const std::any& cache, const matrix_t& d_out) {
  const auto& c = std::any_cast<const Cache&>(cache);
  const matrix_t d_pooled = fc_.backward(c.fc, d_out);
  const int ch = conv_.out_channels();
  const int cells = grid_ * grid_;
  for (std::size_t k = 0; k < c.pre.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    matrix_t d_act = matrix_t::Zero(c.pre[k].rows(), ch);
    for (int gr = 0; gr < grid_; ++gr)
      for (int gc = 0; gc < grid_; ++gc) {
        const int r0 = gr * size_ / grid_, r1 = (gr + 1) * size_ / grid_;
        const int c0 = gc * size_ / grid_, c1 = (gc + 1) * size_ / grid_;
        const int cell = gr * grid_ + gc;
        for (int q = 0; q < ch; ++q) {
          const auto col = static_cast<Eigen::Index>(cell * ch + q);
          const double dm = d_pooled(row, col) / ((r1 - r0) * (c1 - c0));
          for (int i = r0; i < r1; ++i)
            for (int j = c0; j < c1; ++j) d_act(i * size_ + j, q) += dm;
          d_act(c.argmax[k][static_cast<std::size_t>(col)], q) += d_pooled(row, cells * ch + col);
        }
      }
    conv_.backward(c.conv[k], nn::gelu_backward(c.pre[k], d_act));
  }
}

void ConvFrequencyEncoder::init(nn::Rng& rng) {
  conv_.init(rng);
  fc_.init(rng);
}

void ConvFrequencyEncoder::collect(nn::ParamList& out) {
  conv_.collect(out);
  fc_.collect(out);
}

matrix_t encode_frequency(const FrequencyEncoder& encoder, const Spectrum& spectrum) {
  matrix_t out = encoder.forward(std::span<const Spectrum>(&spectrum, 1), nullptr);
  if (!out.allFinite()) throw StateError("frequency encoder produced non-finite output");
  return out.row(0);
}

// ---------------------------------------------------------------------------
// Config helpers

std::string_view to_string(ModelKind k) noexcept {
  switch (k) {
    case ModelKind::sfnet: return "sfnet";
    case ModelKind::sfpnet: return "sfpnet";
    case ModelKind::swinatten: return "swinatten";
    case ModelKind::swinfusion: return "swinfusion";
    case ModelKind::facecrop_pair: return "facecrop_pair";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view s) {
  for (auto k : {ModelKind::sfnet, ModelKind::sfpnet, ModelKind::swinatten, ModelKind::swinfusion,
                 ModelKind::facecrop_pair})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown model name: " + std::string(s));
}

bool uses_frequency(ModelKind k) noexcept {
  return k == ModelKind::sfnet || k == ModelKind::sfpnet || k == ModelKind::swinatten;
}

FeatureLayout layout_for(ModelKind k) noexcept {
  return k == ModelKind::sfpnet || k == ModelKind::swinatten ? FeatureLayout::per_patch
                                                              : FeatureLayout::global;
}

std::unique_ptr<SpatialExtractor> make_extractor(const ExtractorConfig& cfg, int resolution,
                                                 FeatureLayout layout) {
  using Stats = PatchStatsExtractor::Stats;
  if (cfg.preset == "global_mean")
    return std::make_unique<PatchStatsExtractor>(resolution, resolution, Stats::mean, FeatureLayout::global);
  if (cfg.preset == "patch_mean")
    return std::make_unique<PatchStatsExtractor>(resolution, cfg.patch_size, Stats::mean, layout);
  if (cfg.preset == "patch_mean_std")
    return std::make_unique<PatchStatsExtractor>(resolution, cfg.patch_size, Stats::mean_std, layout);
  if (cfg.preset == "projection")
    return std::make_unique<ProjectionExtractor>(resolution, cfg.patch_size, cfg.dim, cfg.seed, layout);
  if (cfg.preset == "swin_large")
    throw ConfigError(
        "extractor preset swin_large needs an external pretrained backbone that is not bundled; "
        "implement SpatialExtractor for it or use a stub preset");
  throw ConfigError("unknown extractor preset: " + cfg.preset);
}

std::unique_ptr<FrequencyEncoder> make_encoder(const EncoderConfig& cfg, int input_size) {
  if (cfg.kind == "log_mean") return std::make_unique<LogMeanEncoder>(input_size);
  if (cfg.kind == "conv") {
    if (cfg.channels <= 0 || cfg.freq_dim <= 0)
      throw ConfigError("conv encoder channels and freq_dim must be positive");
    return std::make_unique<ConvFrequencyEncoder>(input_size, cfg.channels, cfg.freq_dim, cfg.log_magnitude,
                                                  cfg.pool_grid);
  }
  throw ConfigError("unknown frequency encoder: " + cfg.kind);
}

// ---------------------------------------------------------------------------
// Detector

Detector::Detector(ModelConfig cfg) : cfg_(std::move(cfg)) {
  extractor_ = make_extractor(cfg_.extractor, cfg_.resolution, layout_for(cfg_.kind));
}

PreparedInput Detector::prepare(const Image& image) const {
  PreparedInput in;
  in.spatial = extractor_->extract(image);
  if (uses_frequency(cfg_.kind)) {
    const matrix_t lum = image.luminance();
    if (cfg_.kind == ModelKind::sfnet) {
      in.spectra.push_back(freq::fft_magnitude_phase(lum));
      in.freq_grid_rows = in.freq_grid_cols = 1;
    } else {
      auto ps = freq::per_patch_spectra(lum, cfg_.patch_size);
      in.spectra = std::move(ps.patches);
      in.freq_grid_rows = ps.grid_rows;
      in.freq_grid_cols = ps.grid_cols;
    }
  }
  return in;
}

double Detector::train_logit(const PreparedInput& in, nn::Rng* rng) {
  return forward(in, &last_cache_, rng);
}

void Detector::backward(double dlogit) {
  if (!last_cache_.has_value()) throw StateError("backward called before train_logit");
  backward_impl(last_cache_, dlogit);
}

nn::ParamList Detector::parameters() {
  nn::ParamList out;
  collect(out);
  return out;
}

void Detector::init(std::uint64_t seed) {
  nn::Rng rng(seed);
  init_impl(rng);
}

void Detector::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

namespace {

int head_width(const ModelConfig& cfg, int in) {
  return cfg.head_hidden < 0 ? nn::auto_hidden(in) : cfg.head_hidden;
}

}  // namespace

// --- SFnet

struct SfnetModel::Cache {
  std::any enc;
  nn::ClassificationHead::Cache head;
};

SfnetModel::SfnetModel(ModelConfig cfg) : Detector(std::move(cfg)) {
  encoder_ = make_encoder(cfg_.encoder, cfg_.resolution);
  const int d = spatial_dim() + encoder_->output_dim();
  head_ = nn::ClassificationHead("head", d, head_width(cfg_, d), cfg_.dropout);
}

double SfnetModel::forward(const PreparedInput& in, std::any* cache, nn::Rng* rng) const {
  if (in.spatial.rows() != 1) throw ConfigError("sfnet needs a global spatial vector");
  if (in.spectra.size() != 1) throw ConfigError("sfnet needs exactly one whole-image spectrum");
  Cache c;
  matrix_t f = encoder_->forward(in.spectra, cache ? &c.enc : nullptr);
  if (cfg_.ablate_frequency) f.setZero();
  matrix_t x(1, in.spatial.cols() + f.cols());
  x << in.spatial, f;
  const double logit = head_.forward(x, cache ? &c.head : nullptr, rng);
  if (cache) *cache = std::move(c);
  return logit;
}

void SfnetModel::backward_impl(const std::any& cache, double dlogit) {
  const auto& c = std::any_cast<const Cache&>(cache);
  const matrix_t dx = head_.backward(c.head, dlogit);
  if (!cfg_.ablate_frequency) encoder_->backward(c.enc, dx.rightCols(encoder_->output_dim()));
}

void SfnetModel::collect(nn::ParamList& out) {
  encoder_->collect(out);
  head_.collect(out);
}

void SfnetModel::init_impl(nn::Rng& rng) {
  encoder_->init(rng);
  head_.init(rng);
}

// --- Per-patch fusion

PatchFusionModel::PatchFusionModel(ModelConfig cfg) : Detector(std::move(cfg)) {
  encoder_ = make_encoder(cfg_.encoder, cfg_.patch_size);
  if (cfg_.patch_size <= 0 || cfg_.resolution % cfg_.patch_size != 0)
    throw ConfigError("FFT patch size " + std::to_string(cfg_.patch_size) +
                      " must divide resolution " + std::to_string(cfg_.resolution));
  const int fr = cfg_.resolution / cfg_.patch_size;
  const int er = extractor_->grid_rows();
  const int ec = extractor_->grid_cols();
  if (fr % er != 0 || fr % ec != 0)
    throw ConfigError("frequency patch grid " + std::to_string(fr) + "x" + std::to_string(fr) +
                      " cannot be pooled onto extractor grid " + std::to_string(er) + "x" +
                      std::to_string(ec) + " (P mismatch)");
  pool_rows_ = fr / er;
  pool_cols_ = fr / ec;
}

matrix_t PatchFusionModel::fuse(const PreparedInput& in) const { return fuse(in, nullptr); }

matrix_t PatchFusionModel::fuse(const PreparedInput& in, std::any* enc_cache) const {
  const int p = num_patches();
  if (in.spatial.rows() != p || in.spatial.cols() != spatial_dim())
    throw ConfigError("spatial features do not match the extractor's declared P x S");
  if (static_cast<int>(in.spectra.size()) != p * pool_rows_ * pool_cols_)
    throw ConfigError("P mismatch: " + std::to_string(in.spectra.size()) +
                      " frequency patches vs " + std::to_string(p) + " spatial patches");
  matrix_t f = encoder_->forward(in.spectra, enc_cache);
  const int fq = encoder_->output_dim();
  matrix_t pooled = matrix_t::Zero(p, fq);
  if (pool_rows_ == 1 && pool_cols_ == 1) {
    pooled = f;
  } else {
    const int fine_cols = extractor_->grid_cols() * pool_cols_;
    const double w = 1.0 / (pool_rows_ * pool_cols_);
    for (Eigen::Index k = 0; k < f.rows(); ++k) {
      const int i = static_cast<int>(k) / fine_cols;
      const int j = static_cast<int>(k) % fine_cols;
      pooled.row((i / pool_rows_) * extractor_->grid_cols() + j / pool_cols_) += w * f.row(k);
    }
  }
  if (cfg_.ablate_frequency) pooled.setZero();
  matrix_t fused(p, spatial_dim() + fq);
  fused << in.spatial, pooled;
  return fused;
}

void PatchFusionModel::backward_fuse(const std::any& enc_cache, const matrix_t& d_fused) {
  if (cfg_.ablate_frequency) return;
  const int fq = encoder_->output_dim();
  const matrix_t d_pooled = d_fused.rightCols(fq);
  if (pool_rows_ == 1 && pool_cols_ == 1) {
    encoder_->backward(enc_cache, d_pooled);
    return;
  }
  const int fine_cols = extractor_->grid_cols() * pool_cols_;
  const int fine = num_patches() * pool_rows_ * pool_cols_;
  const double w = 1.0 / (pool_rows_ * pool_cols_);
  matrix_t d_f(fine, fq);
  for (int k = 0; k < fine; ++k) {
    const int i = k / fine_cols;
    const int j = k % fine_cols;
    d_f.row(k) = w * d_pooled.row((i / pool_rows_) * extractor_->grid_cols() + j / pool_cols_);
  }
  encoder_->backward(enc_cache, d_f);
}

// --- SFPnet

struct SfpnetModel::Cache {
  std::any enc;
  Eigen::Index patches = 0;
  nn::Linear::Cache a1, a2;
  matrix_t pre;
  nn::ClassificationHead::Cache head;
};

SfpnetModel::SfpnetModel(ModelConfig cfg) : PatchFusionModel(std::move(cfg)) {
  const int d = fused_dim();
  const int a = cfg_.aggregate_dim > 0 ? cfg_.aggregate_dim : nn::auto_hidden(d);
  agg1_ = nn::Linear("aggregate.fc1", d, d);
  agg2_ = nn::Linear("aggregate.fc2", d, a);
  head_ = nn::ClassificationHead("head", a, head_width(cfg_, a), cfg_.dropout);
}

matrix_t SfpnetModel::aggregate(const matrix_t& fused) const {
  const matrix_t mean = fused.colwise().mean();
  return agg2_.forward(nn::gelu(agg1_.forward(mean, nullptr)), nullptr);
}

double SfpnetModel::forward(const PreparedInput& in, std::any* cache, nn::Rng* rng) const {
  Cache c;
  const matrix_t fused = fuse(in, cache ? &c.enc : nullptr);
  c.patches = fused.rows();
  const matrix_t mean = fused.colwise().mean();
  matrix_t pre = agg1_.forward(mean, cache ? &c.a1 : nullptr);
  const matrix_t agg = agg2_.forward(nn::gelu(pre), cache ? &c.a2 : nullptr);
  const double logit = head_.forward(agg, cache ? &c.head : nullptr, rng);
  if (cache) {
    c.pre = std::move(pre);
    *cache = std::move(c);
  }
  return logit;
}

void SfpnetModel::backward_impl(const std::any& cache, double dlogit) {
  const auto& c = std::any_cast<const Cache&>(cache);
  const matrix_t d_agg = head_.backward(c.head, dlogit);
  const matrix_t d_hidden = agg2_.backward(c.a2, d_agg);
  const matrix_t d_mean = agg1_.backward(c.a1, nn::gelu_backward(c.pre, d_hidden));
  const matrix_t d_fused = d_mean.replicate(c.patches, 1) / static_cast<double>(c.patches);
  backward_fuse(c.enc, d_fused);
}

void SfpnetModel::collect(nn::ParamList& out) {
  encoder_->collect(out);
  agg1_.collect(out);
  agg2_.collect(out);
  head_.collect(out);
}

void SfpnetModel::init_impl(nn::Rng& rng) {
  encoder_->init(rng);
  agg1_.init(rng);
  agg2_.init(rng);
  head_.init(rng);
}

// --- SwinAtten

struct SwinAttenModel::Cache {
  std::any enc;
  nn::MultiHeadSelfAttention::Cache att;
  Eigen::Index patches = 0;
  nn::ClassificationHead::Cache head;
};

SwinAttenModel::SwinAttenModel(ModelConfig cfg) : PatchFusionModel(std::move(cfg)) {
  const int d = fused_dim();
  attention_ = nn::MultiHeadSelfAttention("attention", d, cfg_.attention_heads);
  head_ = nn::ClassificationHead("head", d, head_width(cfg_, d), cfg_.dropout);
}

matrix_t SwinAttenModel::attend_and_pool(const matrix_t& fused) const {
  return attention_.forward(fused, nullptr).colwise().mean();
}

double SwinAttenModel::forward(const PreparedInput& in, std::any* cache, nn::Rng* rng) const {
  Cache c;
  const matrix_t fused = fuse(in, cache ? &c.enc : nullptr);
  c.patches = fused.rows();
  const matrix_t pooled = attention_.forward(fused, cache ? &c.att : nullptr).colwise().mean();
  const double logit = head_.forward(pooled, cache ? &c.head : nullptr, rng);
  if (cache) *cache = std::move(c);
  return logit;
}

void SwinAttenModel::backward_impl(const std::any& cache, double dlogit) {
  const auto& c = std::any_cast<const Cache&>(cache);
  const matrix_t d_pooled = head_.backward(c.head, dlogit);
  const matrix_t d_att = d_pooled.replicate(c.patches, 1) / static_cast<double>(c.patches);
  backward_fuse(c.enc, attention_.backward(c.att, d_att));
}

void SwinAttenModel::collect(nn::ParamList& out) {
  encoder_->collect(out);
  attention_.collect(out);
  head_.collect(out);
}

void SwinAttenModel::init_impl(nn::Rng& rng) {
  encoder_->init(rng);
  attention_.init(rng);
  head_.init(rng);
}

// --- Plain classifier

PlainClassifierModel::PlainClassifierModel(ModelConfig cfg) : Detector(std::move(cfg)) {
  const int d = spatial_dim();
  head_ = nn::ClassificationHead("head", d, head_width(cfg_, d), cfg_.dropout);
}

double PlainClassifierModel::forward(const PreparedInput& in, std::any* cache, nn::Rng* rng) const {
  if (in.spatial.rows() != 1) throw ConfigError("plain classifier needs a global spatial vector");
  nn::ClassificationHead::Cache c;
  const double logit = head_.forward(in.spatial, cache ? &c : nullptr, rng);
  if (cache) *cache = std::move(c);
  return logit;
}

void PlainClassifierModel::backward_impl(const std::any& cache, double dlogit) {
  head_.backward(std::any_cast<const nn::ClassificationHead::Cache&>(cache), dlogit);
}

void PlainClassifierModel::collect(nn::ParamList& out) { head_.collect(out); }

void PlainClassifierModel::init_impl(nn::Rng& rng) { head_.init(rng); }

std::unique_ptr<Detector> make_detector(const ModelConfig& cfg) {
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
  switch (cfg.kind) {
    case ModelKind::sfnet: return std::make_unique<SfnetModel>(cfg);
    case ModelKind::sfpnet: return std::make_unique<SfpnetModel>(cfg);
    case ModelKind::swinatten: return std::make_unique<SwinAttenModel>(cfg);
    case ModelKind::swinfusion:
    case ModelKind::facecrop_pair: return std::make_unique<PlainClassifierModel>(cfg);
  }
  throw ConfigError("unknown model kind");
}

// ---------------------------------------------------------------------------
// Bundle

ModelBundle::ModelBundle(ModelConfig cfg) : model_(make_detector(cfg)) {}

ModelBundle ModelBundle::initialized(ModelConfig cfg, std::uint64_t seed) {
  ModelBundle b(std::move(cfg));
  b.initialize(seed);
  return b;
}

void ModelBundle::initialize(std::uint64_t seed) {
  model_->init(seed);
  loaded_ = true;
}

void ModelBundle::require_loaded() const {
  if (!loaded_)
    throw StateError(std::string(to_string(kind())) + " bundle has no weights loaded");
}

Score ModelBundle::score(const Image& image) const {
  require_loaded();
  return Score(clamped_sigmoid(model_->logit(model_->prepare(image))));
}

std::vector<Score> ModelBundle::score(std::span<const Image> batch) const {
  require_loaded();
  std::vector<Score> out;
  out.reserve(batch.size());
  for (const auto& img : batch) out.push_back(score(img));
  return out;
}

std::vector<matrix_t> ModelBundle::weights() const {
  std::vector<matrix_t> out;
  for (const auto* p : model_->parameters()) out.push_back(p->value);
  return out;
}

std::vector<std::string> ModelBundle::weight_names() const {
  std::vector<std::string> out;
  for (const auto* p : model_->parameters()) out.push_back(p->name);
  return out;
}

void ModelBundle::set_weights(const std::vector<matrix_t>& w) {
  auto params = model_->parameters();
  if (params.size() != w.size()) throw ConsistencyError("weight tensor count mismatch");
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (params[i]->value.rows() != w[i].rows() || params[i]->value.cols() != w[i].cols())
      throw ConsistencyError("weight shape mismatch for " + params[i]->name);
    params[i]->value = w[i];
  }
  loaded_ = true;
}

ModelBundle ModelBundle::clone() const {
  ModelBundle b(config());
  if (loaded_) b.set_weights(weights());
  return b;
}

namespace {

std::vector<Score> forward_checked(const ModelBundle& model, ModelKind expected,
                                   std::span<const Image> batch) {
  if (model.kind() != expected)
    throw ConfigError("expected a " + std::string(to_string(expected)) + " bundle, got " +
                      std::string(to_string(model.kind())));
  return model.score(batch);
}

}  // namespace

std::vector<Score> sfnet_forward(const ModelBundle& model, std::span<const Image> batch) {
  return forward_checked(model, ModelKind::sfnet, batch);
}

std::vector<Score> sfpnet_forward(const ModelBundle& model, std::span<const Image> batch) {
  return forward_checked(model, ModelKind::sfpnet, batch);
}

std::vector<Score> swinatten_forward(const ModelBundle& model, std::span<const Image> batch) {
  return forward_checked(model, ModelKind::swinatten, batch);
}

}  // namespace sfanet
