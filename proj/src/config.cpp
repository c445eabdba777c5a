#include "sfanet/config.hpp"

#include <cstdlib>
#include <set>

namespace sfanet {

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

std::string_view positive_name(metrics::PositiveClass p) {
  return p == metrics::PositiveClass::real ? "real" : "fake";
}

}  // namespace

json to_json(const ModelConfig& c) {
  return json{{"name", std::string(to_string(c.kind))},
              {"resolution", c.resolution},
              {"patch_size", c.patch_size},
              {"extractor",
               {{"preset", c.extractor.preset},
                {"patch_size", c.extractor.patch_size},
                {"dim", c.extractor.dim},
                {"seed", c.extractor.seed}}},
              {"encoder",
               {{"kind", c.encoder.kind},
                {"channels", c.encoder.channels},
                {"freq_dim", c.encoder.freq_dim},
                {"log_magnitude", c.encoder.log_magnitude},
                {"pool_grid", c.encoder.pool_grid}}},
              {"attention_heads", c.attention_heads},
              {"aggregate_dim", c.aggregate_dim},
              {"head_hidden", c.head_hidden},
              {"dropout", c.dropout},
              {"ablate_frequency", c.ablate_frequency}};
}

ModelConfig model_config_from_json(const json& j) {
  const std::string w = "model";
  reject_unknown(j, {"name", "resolution", "patch_size", "extractor", "encoder", "attention_heads",
                     "aggregate_dim", "head_hidden", "dropout", "ablate_frequency"},
                 w);
  ModelConfig c;
  if (j.contains("name")) {
    std::string name;
    read(j, "name", name, w);
    c.kind = parse_model_kind(name);
  }
  read(j, "resolution", c.resolution, w);
  read(j, "patch_size", c.patch_size, w);
  read(j, "attention_heads", c.attention_heads, w);
  read(j, "aggregate_dim", c.aggregate_dim, w);
  read(j, "head_hidden", c.head_hidden, w);
  read(j, "dropout", c.dropout, w);
  read(j, "ablate_frequency", c.ablate_frequency, w);
  if (const auto it = j.find("extractor"); it != j.end()) {
    const std::string we = "model.extractor";
    reject_unknown(*it, {"preset", "patch_size", "dim", "seed"}, we);
    read(*it, "preset", c.extractor.preset, we);
    read(*it, "patch_size", c.extractor.patch_size, we);
    read(*it, "dim", c.extractor.dim, we);
    read(*it, "seed", c.extractor.seed, we);
  }
  if (const auto it = j.find("encoder"); it != j.end()) {
    const std::string we = "model.encoder";
    reject_unknown(*it, {"kind", "channels", "freq_dim", "log_magnitude", "pool_grid"}, we);
    read(*it, "kind", c.encoder.kind, we);
    read(*it, "channels", c.encoder.channels, we);
    read(*it, "freq_dim", c.encoder.freq_dim, we);
    read(*it, "log_magnitude", c.encoder.log_magnitude, we);
    read(*it, "pool_grid", c.encoder.pool_grid, we);
  }
  return c;
}

json to_json(const RunConfig& c) {
  json cat = json::object();
  for (const auto& [k, v] : c.data.category_map) cat[k] = v;
  return json{
      {"model", to_json(c.model)},
      {"data",
       {{"train_manifest", c.data.train_manifest},
        {"validation_manifest", c.data.validation_manifest},
        {"category_map", cat},
        {"k", c.data.k},
        {"seed", c.data.seed},
        {"embedder", c.data.embedder},
        {"embedding_table", c.data.embedding_table}}},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"beta1", c.train.beta1},
        {"beta2", c.train.beta2},
        {"weight_decay", c.train.weight_decay},
        {"epsilon", c.train.epsilon},
        {"batch_size", c.train.batch_size},
        {"seed", c.train.seed},
        {"epochs_per_phase", c.train.epochs_per_phase},
        {"finetune_epochs", c.train.finetune_epochs},
        {"carry_optimizer", c.train.carry_optimizer}}},
      {"eval",
       {{"threshold", c.eval.threshold},
        {"c_miss", c.eval.dcf.c_miss},
        {"c_fa", c.eval.dcf.c_fa},
        {"p_target", c.eval.dcf.p_target},
        {"positive_class", std::string(positive_name(c.eval.positive))}}},
      {"provider",
       {{"face_parts", c.provider.face_parts},
        {"label_map_dir", c.provider.label_map_dir},
        {"attributes", c.provider.attributes},
        {"attribute_table", c.provider.attribute_table}}}};
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j, {"model", "data", "train", "eval", "provider"}, "config");
  RunConfig c;
  if (const auto it = j.find("model"); it != j.end()) c.model = model_config_from_json(*it);
  if (const auto it = j.find("data"); it != j.end()) {
    const std::string w = "data";
    reject_unknown(*it, {"train_manifest", "validation_manifest", "category_map", "k", "seed", "embedder",
                         "embedding_table"},
                   w);
    read(*it, "train_manifest", c.data.train_manifest, w);
    read(*it, "validation_manifest", c.data.validation_manifest, w);
    read(*it, "category_map", c.data.category_map, w);
    read(*it, "k", c.data.k, w);
    read(*it, "seed", c.data.seed, w);
    read(*it, "embedder", c.data.embedder, w);
    read(*it, "embedding_table", c.data.embedding_table, w);
  }
  if (const auto it = j.find("train"); it != j.end()) {
    const std::string w = "train";
    reject_unknown(*it, {"learning_rate", "beta1", "beta2", "weight_decay", "epsilon", "batch_size", "seed",
                         "epochs_per_phase", "finetune_epochs", "carry_optimizer"},
                   w);
    read(*it, "learning_rate", c.train.learning_rate, w);
    read(*it, "beta1", c.train.beta1, w);
    read(*it, "beta2", c.train.beta2, w);
    read(*it, "weight_decay", c.train.weight_decay, w);
    read(*it, "epsilon", c.train.epsilon, w);
    read(*it, "batch_size", c.train.batch_size, w);
    read(*it, "seed", c.train.seed, w);
    read(*it, "epochs_per_phase", c.train.epochs_per_phase, w);
    read(*it, "finetune_epochs", c.train.finetune_epochs, w);
    read(*it, "carry_optimizer", c.train.carry_optimizer, w);
  }
  if (const auto it = j.find("eval"); it != j.end()) {
    const std::string w = "eval";
    reject_unknown(*it, {"threshold", "c_miss", "c_fa", "p_target", "positive_class"}, w);
    read(*it, "threshold", c.eval.threshold, w);
    read(*it, "c_miss", c.eval.dcf.c_miss, w);
    read(*it, "c_fa", c.eval.dcf.c_fa, w);
    read(*it, "p_target", c.eval.dcf.p_target, w);
    std::string pos = "real";
    read(*it, "positive_class", pos, w);
    if (pos == "real") c.eval.positive = metrics::PositiveClass::real;
    else if (pos == "fake") c.eval.positive = metrics::PositiveClass::fake;
    else throw ConfigError("eval.positive_class must be real or fake");
  }
  if (const auto it = j.find("provider"); it != j.end()) {
    const std::string w = "provider";
    reject_unknown(*it, {"face_parts", "label_map_dir", "attributes", "attribute_table"}, w);
    read(*it, "face_parts", c.provider.face_parts, w);
    read(*it, "label_map_dir", c.provider.label_map_dir, w);
    read(*it, "attributes", c.provider.attributes, w);
    read(*it, "attribute_table", c.provider.attribute_table, w);
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (model.resolution < 1 || model.patch_size < 1) throw ConfigError("model dimensions must be positive");
  if (!(model.dropout >= 0.0 && model.dropout < 1.0)) throw ConfigError("model.dropout must lie in [0,1)");
  if (data.k < 1) throw ConfigError("data.k must be positive");
  if (data.embedder != "downsample" && data.embedder != "table")
    throw ConfigError("data.embedder must be downsample or table");
  emotion_grouping();
  train.validate();
  DecisionPolicy(eval.threshold);
  eval.dcf.validate();
  if (provider.face_parts != "stub" && provider.face_parts != "texture" && provider.face_parts != "label_maps")
    throw ConfigError("provider.face_parts must be stub, texture or label_maps");
  if (provider.attributes != "stub" && provider.attributes != "table")
    throw ConfigError("provider.attributes must be stub or table");
}

EmotionGrouping RunConfig::emotion_grouping() const {
  if (data.category_map.empty()) return EmotionGrouping::standard();
  static const std::map<std::string, EmotionGroup> names = {{"happy", EmotionGroup::happy},
                                                            {"negative", EmotionGroup::negative},
                                                            {"neutral", EmotionGroup::neutral},
                                                            {"scared", EmotionGroup::scared}};
  EmotionGrouping g;
  for (const auto& [raw, group] : data.category_map) {
    const auto it = names.find(group);
    if (it == names.end()) throw ConfigError("data.category_map: unknown emotion group '" + group + "'");
    g.table[raw] = it->second;
  }
  return g;
}

std::string config_hash(const RunConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }
std::string config_hash(const ModelConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return run_config_from_json(j);
}

RunConfig resolve_run_config(const std::optional<std::filesystem::path>& path) {
  if (path) return load_run_config(*path);
  if (const char* env = std::getenv("SFANET_CONFIG"); env && *env) return load_run_config(env);
  RunConfig c;
  c.validate();
  return c;
}

}  // namespace sfanet
