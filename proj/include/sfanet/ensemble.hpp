#pragma once

#include "sfanet/core.hpp"
#include "sfanet/faceparts.hpp"
#include "sfanet/heads.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sfanet {

/// Anything that turns an image into a score. Bundles are adapted with
/// BundleScorer; tests substitute fixed-score stubs.
class ImageScorer {
 public:
  virtual ~ImageScorer() = default;
  virtual std::string name() const = 0;
  /// Expected square input side, if the scorer has one.
  virtual std::optional<int> resolution() const { return std::nullopt; }
  virtual bool ready() const { return true; }
  virtual Score score(const Image& image) const = 0;
};

class BundleScorer final : public ImageScorer {
 public:
  BundleScorer(std::shared_ptr<const ModelBundle> bundle, std::string name);
  std::string name() const override { return name_; }
  std::optional<int> resolution() const override { return bundle_->config().resolution; }
  bool ready() const override { return bundle_->loaded(); }
  /// Resizes to the bundle's resolution when needed.
  Score score(const Image& image) const override;

 private:
  std::shared_ptr<const ModelBundle> bundle_;
  std::string name_;
};

class FunctionScorer final : public ImageScorer {
 public:
  FunctionScorer(std::string name, std::function<double(const Image&)> fn)
      : name_(std::move(name)), fn_(std::move(fn)) {}
  std::string name() const override { return name_; }
  Score score(const Image& image) const override { return Score(fn_(image)); }

 private:
  std::string name_;
  std::function<double(const Image&)> fn_;
};

std::shared_ptr<ImageScorer> constant_scorer(std::string name, double value);

struct EnsembleConfig {
  std::shared_ptr<const ImageScorer> swinatten;
  std::shared_ptr<const ImageScorer> swinfusion;
  std::shared_ptr<const ImageScorer> sfnet;
  DecisionPolicy policy;
  /// Run the two gate models on separate threads.
  bool parallel = true;

  void validate() const;
};

enum class PathTaken { gated_pair, fallback, facecrop, facecrop_default, single };

std::string_view to_string(PathTaken p) noexcept;
PathTaken parse_path_taken(std::string_view s);

/// One scored image with provenance.
struct PipelineScore {
  std::string id;
  PathTaken path = PathTaken::fallback;
  std::optional<double> swinatten, swinfusion, sfnet;
  Score fused{0.5};
  Label verdict = Label::real;
};

/// Gate true: mean of the two gate models. Gate false: the fallback model.
PipelineScore final_pipeline_score(const EnsembleConfig& config, const FacePartsProvider& provider,
                                   const ImageSample& sample);

/// Mean of the eyes-crop and lips-crop models, or exactly 0.5 when any part is missing.
PipelineScore facecrop_score(const ImageScorer& eyes_model, const ImageScorer& lips_model,
                             const FacePartsProvider& provider, const ImageSample& sample,
                             const DecisionPolicy& policy = {});

/// Single-model scoring in the same record format.
PipelineScore single_model_score(const ImageScorer& model, const ImageSample& sample,
                                 const DecisionPolicy& policy = {});

// ---------------------------------------------------------------------------
// Score file: id,path_taken,score_swinatten,score_swinfusion,score_sfnet,score_fused,verdict

inline constexpr std::string_view kScoreFileHeader =
    "id,path_taken,score_swinatten,score_swinfusion,score_sfnet,score_fused,verdict";

std::string score_file_csv(const std::vector<PipelineScore>& rows);
std::vector<PipelineScore> parse_score_file(std::string_view text);
void write_score_file(const std::filesystem::path& path, const std::vector<PipelineScore>& rows);
std::vector<PipelineScore> read_score_file(const std::filesystem::path& path);

}  // namespace sfanet
