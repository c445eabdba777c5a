#pragma once

#include "sfanet/datapipe.hpp"
#include "sfanet/heads.hpp"
#include "sfanet/metrics.hpp"
#include "sfanet/trainsched.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace sfanet {

using json = nlohmann::json;

struct DataSection {
  std::string train_manifest;
  std::string validation_manifest;
  /// Raw emotion label -> group name; empty means the standard grouping.
  std::map<std::string, std::string> category_map;
  int k = 5;
  std::uint64_t seed = 7;
  /// "downsample" or "table".
  std::string embedder = "downsample";
  std::string embedding_table;
};

struct EvalSection {
  double threshold = DecisionPolicy::kDefaultThreshold;
  metrics::DcfParams dcf;
  metrics::PositiveClass positive = metrics::PositiveClass::real;
};

struct ProviderSection {
  /// "stub", "texture" or "label_maps".
  std::string face_parts = "texture";
  std::string label_map_dir;
  /// "stub" or "table".
  std::string attributes = "stub";
  std::string attribute_table;
};

struct RunConfig {
  ModelConfig model;
  DataSection data;
  TrainConfig train;
  EvalSection eval;
  ProviderSection provider;

  void validate() const;
  EmotionGrouping emotion_grouping() const;
  DecisionPolicy policy() const { return DecisionPolicy(eval.threshold); }
};

json to_json(const ModelConfig& c);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
ModelConfig model_config_from_json(const json& j);

json to_json(const RunConfig& c);
RunConfig run_config_from_json(const json& j);

/// Hex FNV-1a of the canonical (sorted-key) serialisation.
std::string config_hash(const RunConfig& c);
std::string config_hash(const ModelConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
/// Explicit path, else $SFANET_CONFIG, else defaults.
RunConfig resolve_run_config(const std::optional<std::filesystem::path>& path);

}  // namespace sfanet
