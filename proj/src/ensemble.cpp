#include "sfanet/ensemble.hpp"

#include "sfanet/datapipe.hpp"

#include <cstdio>
#include <future>

namespace sfanet {

BundleScorer::BundleScorer(std::shared_ptr<const ModelBundle> bundle, std::string name)
    : bundle_(std::move(bundle)), name_(std::move(name)) {
  if (!bundle_) throw ConfigError("BundleScorer: null bundle for " + name_);
}

Score BundleScorer::score(const Image& image) const {
  const int res = bundle_->config().resolution;
  if (image.height() == res && image.width() == res) return bundle_->score(image);
  return bundle_->score(image.resized(res, res));
}

std::shared_ptr<ImageScorer> constant_scorer(std::string name, double value) {
  Score s(value);
  return std::make_shared<FunctionScorer>(std::move(name), [s](const Image&) { return s.value(); });
}

void EnsembleConfig::validate() const {
  const std::pair<const char*, const ImageScorer*> members[] = {
      {"swinatten", swinatten.get()}, {"swinfusion", swinfusion.get()}, {"sfnet", sfnet.get()}};
  std::optional<int> res;
  for (const auto& [role, s] : members) {
    if (s == nullptr) throw ConfigError(std::string("ensemble is missing its ") + role + " model");
    if (!s->ready()) throw StateError(std::string("ensemble ") + role + " model has no weights loaded");
    if (const auto r = s->resolution()) {
      if (res && *res != *r)
        throw ConfigError("ensemble models disagree on input resolution (" + std::to_string(*res) +
                          " vs " + std::to_string(*r) + ")");
      res = r;
    }
  }
}

std::string_view to_string(PathTaken p) noexcept {
  switch (p) {
    case PathTaken::gated_pair: return "gated_pair";
    case PathTaken::fallback: return "fallback";
    case PathTaken::facecrop: return "facecrop";
    case PathTaken::facecrop_default: return "facecrop_default";
    case PathTaken::single: return "single";
  }
  return "unknown";
}

PathTaken parse_path_taken(std::string_view s) {
  for (auto p : {PathTaken::gated_pair, PathTaken::fallback, PathTaken::facecrop,
                 PathTaken::facecrop_default, PathTaken::single})
    if (to_string(p) == s) return p;
  throw IngestError("unknown path_taken value: " + std::string(s));
}

namespace {

Score run_model(const ImageScorer& model, const Image& image) {
  try {
    return model.score(image);
  } catch (const std::exception& e) {
    throw PipelineError("model " + model.name() + " failed: " + e.what());
  }
}

}  // namespace

PipelineScore final_pipeline_score(const EnsembleConfig& config, const FacePartsProvider& provider,
                                   const ImageSample& sample) {
  config.validate();
  const Image image = sample.load();
  const FacePartsReport parts = detect_parts(provider, sample);
  PipelineScore out;
  out.id = sample.id;
  if (parts.gate()) {
    Score a{0.5}, b{0.5};
    if (config.parallel) {
      auto fa = std::async(std::launch::async, [&] { return run_model(*config.swinatten, image); });
      b = run_model(*config.swinfusion, image);
      a = fa.get();
    } else {
      a = run_model(*config.swinatten, image);
      b = run_model(*config.swinfusion, image);
    }
    out.path = PathTaken::gated_pair;
    out.swinatten = a.value();
    out.swinfusion = b.value();
    out.fused = Score((a.value() + b.value()) / 2.0);
  } else {
    const Score s = run_model(*config.sfnet, image);
    out.path = PathTaken::fallback;
    out.sfnet = s.value();
    out.fused = s;
  }
  out.verdict = decide(out.fused, config.policy);
  return out;
}

PipelineScore facecrop_score(const ImageScorer& eyes_model, const ImageScorer& lips_model,
                             const FacePartsProvider& provider, const ImageSample& sample,
                             const DecisionPolicy& policy) {
  if (!eyes_model.ready() || !lips_model.ready())
    throw StateError("face-crop models must be loaded");
  const FacePartsReport parts = detect_parts(provider, sample);
  PipelineScore out;
  out.id = sample.id;
  if (!parts.gate()) {
    out.path = PathTaken::facecrop_default;
    out.fused = Score(0.5);
  } else {
    const Image image = sample.load();
    CropResult crops;
    try {
      crops = extract_crops(image, parts);
    } catch (const std::exception& e) {
      throw PipelineError("crop extraction failed on gated image " + sample.id + ": " + e.what());
    }
    if (crops.kind != CropResult::Kind::dual_crop)
      throw PipelineError("provider reported all parts for " + sample.id + " but no crops resulted");
    const double e = run_model(eyes_model, *crops.eyes_crop).value();
    const double l = run_model(lips_model, *crops.lips_crop).value();
    out.path = PathTaken::facecrop;
    out.fused = Score((e + l) / 2.0);
  }
  out.verdict = decide(out.fused, policy);
  return out;
}

PipelineScore single_model_score(const ImageScorer& model, const ImageSample& sample,
                                 const DecisionPolicy& policy) {
  PipelineScore out;
  out.id = sample.id;
  out.path = PathTaken::single;
  out.fused = run_model(model, sample.load());
  out.verdict = decide(out.fused, policy);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string num(const std::optional<double>& v) {
  if (!v) return {};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

std::optional<double> parse_num(const std::string& s, std::size_t row) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IngestError("score file row " + std::to_string(row) + ": bad number '" + s + "'");
  }
}

}  // namespace

std::string score_file_csv(const std::vector<PipelineScore>& rows) {
  std::string out(kScoreFileHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += csv_field(r.id) + ',' + std::string(to_string(r.path)) + ',' + num(r.swinatten) + ',' +
           num(r.swinfusion) + ',' + num(r.sfnet) + ',' + num(r.fused.value()) + ',' +
           std::string(to_string(r.verdict)) + '\n';
  }
  return out;
}

std::vector<PipelineScore> parse_score_file(std::string_view text) {
  const auto table = parse_csv(text);
  if (table.empty()) throw IngestError("score file is empty");
  std::string header;
  for (std::size_t i = 0; i < table[0].size(); ++i) header += (i ? "," : "") + table[0][i];
  if (header != kScoreFileHeader) throw IngestError("score file header mismatch: " + header);
  std::vector<PipelineScore> rows;
  for (std::size_t i = 1; i < table.size(); ++i) {
    const auto& f = table[i];
    if (f.size() != 7) throw IngestError("score file row " + std::to_string(i) + ": expected 7 fields");
    PipelineScore r;
    r.id = f[0];
    r.path = parse_path_taken(f[1]);
    r.swinatten = parse_num(f[2], i);
    r.swinfusion = parse_num(f[3], i);
    r.sfnet = parse_num(f[4], i);
    const auto fused = parse_num(f[5], i);
    if (!fused) throw IngestError("score file row " + std::to_string(i) + ": score_fused is required");
    r.fused = Score(*fused);
    const auto v = parse_label(f[6]);
    if (!v) throw IngestError("score file row " + std::to_string(i) + ": bad verdict '" + f[6] + "'");
    r.verdict = *v;
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_score_file(const std::filesystem::path& path, const std::vector<PipelineScore>& rows) {
  write_file_atomic(path, score_file_csv(rows));
}

std::vector<PipelineScore> read_score_file(const std::filesystem::path& path) {
  return parse_score_file(read_file(path));
}

}  // namespace sfanet
