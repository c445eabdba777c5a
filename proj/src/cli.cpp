#include "sfanet/cli.hpp"

#include "sfanet/config.hpp"
#include "sfanet/datapipe.hpp"
#include "sfanet/ensemble.hpp"
#include "sfanet/faceparts.hpp"
#include "sfanet/metrics.hpp"
#include "sfanet/synthetic.hpp"
#include "sfanet/trainsched.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iomanip>
#include <map>
#include <sstream>

namespace sfanet::cli {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kCommands = {"ingest",  "categorize", "cluster",  "crop",    "train",
                                            "predict", "evaluate",   "calibrate", "schedule"};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  std::optional<int> k;
  bool stub_providers = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Run config (JSON); defaults to $SFANET_CONFIG");
  app->add_option("--seed", c.seed, "Seed for clustering and training");
  app->add_option("--threshold", c.threshold, "Decision threshold");
  app->add_option("--k", c.k, "Number of fake clusters");
  app->add_flag("--stub-providers", c.stub_providers, "Use the deterministic attribute and face-parts stubs");
}

RunConfig resolve(const Common& c) {
  RunConfig rc = resolve_run_config(c.config.empty() ? std::nullopt : std::optional<fs::path>(c.config));
  if (c.seed) rc.data.seed = rc.train.seed = *c.seed;
  if (c.threshold) rc.eval.threshold = *c.threshold;
  if (c.k) rc.data.k = *c.k;
  if (c.stub_providers) {
    rc.provider.face_parts = "texture";
    rc.provider.attributes = "stub";
  }
  rc.validate();
  return rc;
}

std::unique_ptr<FacePartsProvider> make_parts_provider(const RunConfig& rc) {
  if (rc.provider.face_parts == "stub") return std::make_unique<StubPartsProvider>();
  if (rc.provider.face_parts == "label_maps") {
    if (rc.provider.label_map_dir.empty()) throw ConfigError("provider.label_map_dir is required for label_maps");
    return std::make_unique<LabelMapPartsProvider>(rc.provider.label_map_dir);
  }
  return std::make_unique<TextureGateProvider>();
}

std::unique_ptr<AttributePredictor> make_attribute_predictor(const RunConfig& rc) {
  if (rc.provider.attributes == "table") {
    if (rc.provider.attribute_table.empty()) throw ConfigError("provider.attribute_table is required");
    return std::make_unique<AttributeTablePredictor>(rc.provider.attribute_table);
  }
  return std::make_unique<StubAttributePredictor>();
}

std::unique_ptr<Embedder> make_embedder(const RunConfig& rc) {
  if (rc.data.embedder == "table") {
    if (rc.data.embedding_table.empty()) throw ConfigError("data.embedding_table is required");
    return std::make_unique<EmbeddingTableEmbedder>(rc.data.embedding_table);
  }
  return std::make_unique<DownsampleEmbedder>();
}

fs::path parent_or_dot(const fs::path& p) {
  const auto parent = p.parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

/// Same samples with paths made relative to `dir`, so the manifest can live there.
Manifest rebase(const Manifest& m, const fs::path& dir) {
  Manifest out = m;
  for (auto& s : out.samples) {
    const fs::path abs = s.path.is_relative() && !m.root.empty() ? m.root / s.path : s.path;
    s.path = fs::relative(fs::absolute(abs), fs::absolute(dir));
  }
  out.root = dir;
  out.refresh();
  return out;
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  Common common;
  std::string out;
  bool synthetic = false;
  synthetic::CorpusSpec spec;
  std::string real_dir, fake_dir, origin = "local";
};

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IngestError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm" || ext == ".pnm")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

int cmd_ingest(const IngestArgs& a, std::ostream& out) {
  const RunConfig rc = resolve(a.common);
  const fs::path manifest_path = a.out;
  const fs::path dir = parent_or_dot(manifest_path);
  Manifest m;
  if (a.synthetic) {
    auto spec = a.spec;
    spec.seed = rc.data.seed;
    m = synthetic::write_corpus(dir, spec);
  } else {
    if (a.real_dir.empty() && a.fake_dir.empty())
      throw ConfigError("ingest needs --synthetic or at least one of --real-dir/--fake-dir");
    std::vector<ImageSample> samples;
    for (const auto& [d, label] : {std::pair{a.real_dir, Label::real}, std::pair{a.fake_dir, Label::fake}}) {
      if (d.empty()) continue;
      for (const auto& p : list_images(d)) {
        read_pnm(p);  // fail at ingestion, not later
        ImageSample s;
        s.id = p.stem().string();
        s.path = fs::relative(fs::absolute(p), fs::absolute(dir));
        s.label = label;
        s.origin = a.origin;
        samples.push_back(std::move(s));
      }
    }
    if (samples.empty()) throw IngestError("no images found");
    fs::create_directories(dir);
    m = make_manifest(std::move(samples), dir);
  }
  write_manifest(manifest_path, m);
  out << "manifest=" << manifest_path.string() << "\nsamples=" << m.size() << "\nreal=" << m.real
      << "\nfake=" << m.fake << "\nchecksum=" << m.checksum << "\nconfig_hash=" << config_hash(rc) << '\n';
  return 0;
}

struct CategorizeArgs {
  Common common;
  std::string manifest, validation, out, report;
};

Manifest categorized(const Manifest& m, const AttributePredictor& p, const EmotionGrouping& g) {
  Manifest out = m;
  for (auto& s : out.samples) s.category = categorize(p, s, m.image(s), g);
  out.refresh();
  return out;
}

int cmd_categorize(const CategorizeArgs& a, std::ostream& out) {
  const RunConfig rc = resolve(a.common);
  const auto predictor = make_attribute_predictor(rc);
  const auto grouping = rc.emotion_grouping();
  const Manifest train = categorized(load_manifest(a.manifest), *predictor, grouping);
  std::optional<Manifest> val;
  if (!a.validation.empty()) val = categorized(load_manifest(a.validation), *predictor, grouping);
  const auto report = category_report_csv(category_report(train, val ? &*val : nullptr));
  write_manifest(a.out, rebase(train, parent_or_dot(a.out)));
  if (!a.report.empty()) write_file_atomic(a.report, report);
  out << report << "# predictor=" << predictor->name() << " config_hash=" << config_hash(rc) << '\n';
  return 0;
}

struct ClusterArgs {
  Common common;
  std::string manifest, out;
};

int cmd_cluster(const ClusterArgs& a, std::ostream& out) {
  const RunConfig rc = resolve(a.common);
  const auto embedder = make_embedder(rc);
  const Manifest m = load_manifest(a.manifest);
  std::vector<Embedding> emb;
  for (std::size_t i : indices_with_label(m, Label::fake)) {
    const auto& s = m.samples[i];
    emb.push_back({s.id, embedder->embed(s, m.image(s))});
  }
  if (emb.empty()) throw IngestError("manifest has no fake samples to cluster");
  const auto assignment = cluster_fakes(emb, rc.data.k, rc.data.seed);
  write_file_atomic(a.out, cluster_csv(assignment));
  const auto sizes = assignment.sizes();
  for (std::size_t c = 0; c < sizes.size(); ++c) out << "cluster_" << c << '=' << sizes[c] << '\n';
  out << "iterations=" << assignment.iterations << "\nobjective=" << std::setprecision(10)
      << assignment.objective_history.back() << "\nconfig_hash=" << config_hash(rc) << '\n';
  return 0;
}

struct CropArgs {
  Common common;
  std::string manifest, out_dir;
};

int cmd_crop(const CropArgs& a, std::ostream& out) {
  const RunConfig rc = resolve(a.common);
  const auto provider = make_parts_provider(rc);
  const Manifest m = load_manifest(a.manifest);
  const fs::path dir = a.out_dir;
  for (const char* sub : {"eyes", "lips", "full"}) fs::create_directories(dir / sub);
  std::vector<ImageSample> eyes, lips, full;
  for (const auto& s : m.samples) {
    ImageSample loaded = s;
    loaded.pixels = m.image(s);
    const auto report = detect_parts(*provider, loaded);
    const auto crops = extract_crops(*loaded.pixels, report);
    auto emit = [&](std::vector<ImageSample>& into, const char* sub, const Image& img) {
      ImageSample c = s;
      c.path = fs::path(sub) / (s.id + ".ppm");
      write_ppm(dir / c.path, img);
      into.push_back(std::move(c));
    };
    if (crops.kind == CropResult::Kind::dual_crop) {
      emit(eyes, "eyes", *crops.eyes_crop);
      emit(lips, "lips", *crops.lips_crop);
    } else {
      emit(full, "full", *loaded.pixels);
    }
  }
  for (auto& [name, list] : {std::pair<const char*, std::vector<ImageSample>*>{"eyes", &eyes},
                             {"lips", &lips}, {"full", &full}}) {
    if (list->empty()) continue;
    write_manifest(dir / (std::string(name) + ".csv"), make_manifest(*list, dir));
  }
  out << "dual_crop=" << eyes.size() << "\nfull_image=" << full.size() << "\nprovider=" << provider->name()
      << "\nconfig_hash=" << config_hash(rc) << '\n';
  return 0;
}

struct TrainArgs {
  Common common;
  std::string manifest, validation, clusters, out_dir, name, model;
  std::optional<int> epochs, finetune, batch, resolution, max_epochs;
  std::optional<double> lr;
  bool resume = false;
  bool ablate = false;
};

std::string fmt6(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig rc = resolve(a.common);
  if (!a.model.empty()) rc.model.kind = parse_model_kind(a.model);
  if (a.resolution) rc.model.resolution = *a.resolution;
  if (a.ablate) rc.model.ablate_frequency = true;
  if (a.epochs) rc.train.epochs_per_phase = *a.epochs;
  if (a.finetune) rc.train.finetune_epochs = *a.finetune;
  if (a.batch) rc.train.batch_size = *a.batch;
  if (a.lr) rc.train.learning_rate = *a.lr;
  rc.validate();
  ModelBundle bundle = ModelBundle::initialized(rc.model, rc.train.seed);  // validates model dims

  const Manifest m = load_manifest(a.manifest);
  std::optional<Manifest> val;
  if (!a.validation.empty()) val = load_manifest(a.validation);
  const std::string name = a.name.empty() ? std::string(to_string(rc.model.kind)) : a.name;
  SequentialOptions opts;
  opts.model_name = name;
  opts.checkpoint_dir = fs::path(a.out_dir) / "checkpoints";
  opts.resume = a.resume;
  opts.validation = val ? &*val : nullptr;
  opts.max_epochs = a.max_epochs;
  opts.config_hash = config_hash(rc);

  SequentialResult result;
  if (!a.clusters.empty()) {
    const auto assignment = parse_cluster_csv(read_file(a.clusters));
    const auto folds = build_folds(m, assignment);
    const auto schedule =
        make_schedule(static_cast<int>(folds.size()), rc.train.epochs_per_phase, rc.train.finetune_epochs);
    result = run_sequential(bundle, m, folds, schedule, rc.train, opts);
  } else {
    result = train_full(bundle, m, rc.train.epochs_per_phase, rc.train, opts);
  }
  for (const auto& p : result.phases) {
    out << "phase=" << p.phase << " dataset=" << p.dataset << " train_loss=" << fmt6(p.epoch_losses.back());
    if (p.val_accuracy) out << " val_loss=" << fmt6(*p.val_loss) << " val_accuracy=" << fmt6(*p.val_accuracy);
    out << " checkpoint=" << p.checkpoint << '\n';
  }
  if (!result.completed) {
    out << "status=interrupted\n";
    return 0;
  }
  const fs::path final_path = fs::path(a.out_dir) / (name + ".ckpt");
  save_checkpoint(bundle, final_path, {{"run_config_hash", opts.config_hash}});
  out << "status=completed\nmodel=" << final_path.string() << "\nconfig_hash=" << opts.config_hash << '\n';
  return 0;
}

struct PredictArgs {
  Common common;
  std::string manifest, out, model, swinatten, swinfusion, sfnet, eyes, lips;
  bool sequential = false;
};

std::shared_ptr<ImageScorer> scorer_from(const std::string& path, const std::string& role) {
  auto bundle = std::make_shared<const ModelBundle>(load_checkpoint(path));
  return std::make_shared<BundleScorer>(std::move(bundle), role);
}

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const RunConfig rc = resolve(a.common);
  const auto policy = rc.policy();
  const bool ensemble = !a.swinatten.empty() || !a.swinfusion.empty() || !a.sfnet.empty();
  const bool facecrop = !a.eyes.empty() || !a.lips.empty();
  if (static_cast<int>(ensemble) + static_cast<int>(facecrop) + static_cast<int>(!a.model.empty()) != 1)
    throw ConfigError("predict needs exactly one of --model, the ensemble trio, or --eyes/--lips");
  const Manifest m = load_manifest(a.manifest);
  const auto provider = make_parts_provider(rc);
  std::vector<PipelineScore> rows;
  auto loaded = [&](const ImageSample& s) {
    ImageSample c = s;
    c.pixels = m.image(s);
    return c;
  };
  if (ensemble) {
    EnsembleConfig cfg;
    if (a.swinatten.empty() || a.swinfusion.empty() || a.sfnet.empty())
      throw ConfigError("the ensemble needs --swinatten, --swinfusion and --sfnet");
    cfg.swinatten = scorer_from(a.swinatten, "swinatten");
    cfg.swinfusion = scorer_from(a.swinfusion, "swinfusion");
    cfg.sfnet = scorer_from(a.sfnet, "sfnet");
    cfg.policy = policy;
    cfg.parallel = !a.sequential;
    for (const auto& s : m.samples) rows.push_back(final_pipeline_score(cfg, *provider, loaded(s)));
  } else if (facecrop) {
    if (a.eyes.empty() || a.lips.empty()) throw ConfigError("face-crop scoring needs --eyes and --lips");
    const auto eyes = scorer_from(a.eyes, "eyes");
    const auto lips = scorer_from(a.lips, "lips");
    for (const auto& s : m.samples) rows.push_back(facecrop_score(*eyes, *lips, *provider, loaded(s), policy));
  } else {
    const auto model = scorer_from(a.model, "model");
    for (const auto& s : m.samples) rows.push_back(single_model_score(*model, loaded(s), policy));
  }
  write_score_file(a.out, rows);
  std::map<std::string, long> paths;
  for (const auto& r : rows) ++paths[std::string(to_string(r.path))];
  for (const auto& [p, n] : paths) out << "path_" << p << '=' << n << '\n';
  out << "scores=" << a.out << "\nconfig_hash=" << config_hash(rc) << '\n';
  return 0;
}

/// Either `id,score,label` or a pipeline score file joined with a manifest for labels.
metrics::ScoredSet load_scored_set(const std::string& scores, const std::string& manifest) {
  const std::string text = read_file(scores);
  const auto first = text.substr(0, text.find('\n'));
  metrics::ScoredSet set;
  if (first == kScoreFileHeader || first == std::string(kScoreFileHeader) + "\r") {
    if (manifest.empty()) throw ConfigError("pipeline score files need --manifest for ground-truth labels");
    const Manifest m = load_manifest(manifest);
    std::map<std::string, Label> labels;
    for (const auto& s : m.samples)
      if (s.label) labels[s.id] = *s.label;
    for (const auto& r : parse_score_file(text)) {
      const auto it = labels.find(r.id);
      if (it == labels.end()) throw ConsistencyError("no label for scored sample " + r.id);
      set.push_back({r.id, r.fused.value(), it->second});
    }
    return set;
  }
  const auto rows = parse_csv(text);
  if (rows.empty() || rows[0] != std::vector<std::string>{"id", "score", "label"})
    throw IngestError("score file must have header id,score,label or the pipeline score header");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 3) throw IngestError("score row " + std::to_string(i) + ": expected 3 fields");
    const auto label = parse_label(r[2]);
    if (!label) throw IngestError("score row " + std::to_string(i) + ": bad label '" + r[2] + "'");
    double v = 0.0;
    try {
      v = std::stod(r[1]);
    } catch (const std::exception&) {
      throw IngestError("score row " + std::to_string(i) + ": bad score '" + r[1] + "'");
    }
    set.push_back({r[0], Score(v).value(), *label});
  }
  if (set.empty()) throw IngestError("score file has no rows");
  return set;
}

struct EvaluateArgs {
  Common common;
  std::string scores, manifest;
  std::string positive;
  bool by_category = false;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  RunConfig rc = resolve(a.common);
  if (a.positive == "fake") rc.eval.positive = metrics::PositiveClass::fake;
  else if (a.positive == "real") rc.eval.positive = metrics::PositiveClass::real;
  else if (!a.positive.empty()) throw ConfigError("--positive must be real or fake");
  const auto set = load_scored_set(a.scores, a.manifest);
  out << metrics::format_report(metrics::evaluate(set, rc.policy(), rc.eval.dcf, rc.eval.positive));
  if (a.by_category) {
    if (a.manifest.empty()) throw ConfigError("--by-category needs --manifest");
    const Manifest m = load_manifest(a.manifest);
    std::map<std::string, Category> cats;
    for (const auto& s : m.samples)
      if (s.category) cats[s.id] = *s.category;
    std::array<long, Category::kCount> n{}, correct{};
    for (const auto& e : set) {
      const auto it = cats.find(e.id);
      if (it == cats.end()) continue;
      const auto i = static_cast<std::size_t>(it->second.index());
      ++n[i];
      if (decide(Score(e.score), rc.policy()) == e.label) ++correct[i];
    }
    std::vector<metrics::CategoryStat> stats;
    for (int i = 0; i < Category::kCount; ++i) {
      const auto k = static_cast<std::size_t>(i);
      if (n[k] == 0) continue;
      const double acc = static_cast<double>(correct[k]) / static_cast<double>(n[k]);
      stats.push_back({Category::from_index(i), n[k], acc});
      out << "category_" << to_string(Category::from_index(i)) << "=" << fmt6(acc) << " n=" << n[k] << '\n';
    }
    if (!stats.empty()) out << "weighted_accuracy=" << fmt6(metrics::weighted_accuracy(stats)) << '\n';
  }
  out << "config_hash=" << config_hash(rc) << '\n';
  return 0;
}

struct CalibrateArgs {
  Common common;
  std::string scores, manifest, out;
  double lo = 0.05, hi = 0.95, step = 0.05;
};

int cmd_calibrate(const CalibrateArgs& a, std::ostream& out) {
  const RunConfig rc = resolve(a.common);
  const auto grid = metrics::threshold_grid(a.lo, a.hi, a.step);
  const auto set = load_scored_set(a.scores, a.manifest);
  const auto text = metrics::format_calibration(metrics::calibrate(set, grid, rc.eval.dcf));
  if (!a.out.empty()) write_file_atomic(a.out, text);
  out << text;
  return 0;
}

struct ScheduleArgs {
  Common common;
  std::optional<int> epochs, finetune;
  std::string out;
  bool dry_run = false;
};

int cmd_schedule(const ScheduleArgs& a, std::ostream& out) {
  const RunConfig rc = resolve(a.common);
  const auto s = make_schedule(rc.data.k, a.epochs.value_or(rc.train.epochs_per_phase),
                               a.finetune.value_or(rc.train.finetune_epochs));
  const auto text = format_schedule(s);
  out << text;
  if (!a.dry_run && !a.out.empty()) write_file_atomic(a.out, text);
  return 0;
}

}  // namespace

std::string usage() {
  return "usage: sfanet <command> [options]\n"
         "commands:\n"
         "  ingest      build a manifest from image folders or a synthetic corpus\n"
         "  categorize  attach race/emotion categories and report per-category counts\n"
         "  cluster     k-means over fake-image embeddings\n"
         "  crop        eyes and lips crops for images with all six face parts\n"
         "  train       train one model (sequential over clusters when --clusters is given)\n"
         "  predict     score a manifest with one model, the gated ensemble, or the crop pair\n"
         "  evaluate    metric report for a score file\n"
         "  calibrate   threshold sweep over a validation score file\n"
         "  schedule    print the sequential training plan\n"
         "run `sfanet <command> --help` for options\n";
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty() || std::find(kCommands.begin(), kCommands.end(), args[0]) == kCommands.end()) {
    if (!args.empty() && (args[0] == "--help" || args[0] == "-h")) {
      out << usage();
      return 0;
    }
    if (!args.empty()) err << "unknown command: " << args[0] << '\n';
    err << usage();
    return 2;
  }

  CLI::App app("sfanet", "sfanet");
  app.require_subcommand(1, 1);

  IngestArgs ingest;
  auto* s_ingest = app.add_subcommand("ingest", "build a manifest");
  add_common(s_ingest, ingest.common);
  s_ingest->add_option("--out", ingest.out, "Manifest path")->required();
  s_ingest->add_flag("--synthetic", ingest.synthetic, "Generate the synthetic noise/checkerboard corpus");
  s_ingest->add_option("--real-count", ingest.spec.real);
  s_ingest->add_option("--fake-count", ingest.spec.fake);
  s_ingest->add_option("--size", ingest.spec.size);
  s_ingest->add_option("--amplitude", ingest.spec.amplitude);
  s_ingest->add_option("--blur", ingest.spec.blur_radius);
  s_ingest->add_option("--occluded", ingest.spec.occluded_fraction);
  s_ingest->add_option("--real-dir", ingest.real_dir);
  s_ingest->add_option("--fake-dir", ingest.fake_dir);
  s_ingest->add_option("--origin", ingest.origin);

  CategorizeArgs categorize_a;
  auto* s_cat = app.add_subcommand("categorize", "attach categories");
  add_common(s_cat, categorize_a.common);
  s_cat->add_option("--manifest", categorize_a.manifest)->required();
  s_cat->add_option("--validation", categorize_a.validation);
  s_cat->add_option("--out", categorize_a.out)->required();
  s_cat->add_option("--report", categorize_a.report);

  ClusterArgs cluster;
  auto* s_cluster = app.add_subcommand("cluster", "cluster fakes");
  add_common(s_cluster, cluster.common);
  s_cluster->add_option("--manifest", cluster.manifest)->required();
  s_cluster->add_option("--out", cluster.out)->required();

  CropArgs crop;
  auto* s_crop = app.add_subcommand("crop", "extract crops");
  add_common(s_crop, crop.common);
  s_crop->add_option("--manifest", crop.manifest)->required();
  s_crop->add_option("--out-dir", crop.out_dir)->required();

  TrainArgs train;
  auto* s_train = app.add_subcommand("train", "train a model");
  add_common(s_train, train.common);
  s_train->add_option("--manifest", train.manifest)->required();
  s_train->add_option("--validation", train.validation);
  s_train->add_option("--clusters", train.clusters);
  s_train->add_option("--out-dir", train.out_dir)->required();
  s_train->add_option("--name", train.name);
  s_train->add_option("--model", train.model, "sfnet, sfpnet, swinatten, swinfusion or facecrop_pair");
  s_train->add_option("--resolution", train.resolution);
  s_train->add_option("--epochs", train.epochs);
  s_train->add_option("--finetune", train.finetune);
  s_train->add_option("--batch", train.batch);
  s_train->add_option("--lr", train.lr);
  s_train->add_option("--max-epochs", train.max_epochs, "Stop after this many epochs (resume later)");
  s_train->add_flag("--resume", train.resume);
  s_train->add_flag("--ablate-frequency", train.ablate);

  PredictArgs predict;
  auto* s_predict = app.add_subcommand("predict", "score images");
  add_common(s_predict, predict.common);
  s_predict->add_option("--manifest", predict.manifest)->required();
  s_predict->add_option("--out", predict.out)->required();
  s_predict->add_option("--model", predict.model);
  s_predict->add_option("--swinatten", predict.swinatten);
  s_predict->add_option("--swinfusion", predict.swinfusion);
  s_predict->add_option("--sfnet", predict.sfnet);
  s_predict->add_option("--eyes", predict.eyes);
  s_predict->add_option("--lips", predict.lips);
  s_predict->add_flag("--sequential", predict.sequential, "Run the gate models one after the other");

  EvaluateArgs evaluate;
  auto* s_eval = app.add_subcommand("evaluate", "metric report");
  add_common(s_eval, evaluate.common);
  s_eval->add_option("--scores", evaluate.scores)->required();
  s_eval->add_option("--manifest", evaluate.manifest);
  s_eval->add_option("--positive", evaluate.positive, "real (default) or fake");
  s_eval->add_flag("--by-category", evaluate.by_category);

  CalibrateArgs calibrate;
  auto* s_cal = app.add_subcommand("calibrate", "threshold sweep");
  add_common(s_cal, calibrate.common);
  s_cal->add_option("--scores", calibrate.scores)->required();
  s_cal->add_option("--manifest", calibrate.manifest);
  s_cal->add_option("--out", calibrate.out);
  s_cal->add_option("--lo", calibrate.lo);
  s_cal->add_option("--hi", calibrate.hi);
  s_cal->add_option("--step", calibrate.step);

  ScheduleArgs schedule;
  auto* s_sched = app.add_subcommand("schedule", "print the training plan");
  add_common(s_sched, schedule.common);
  s_sched->add_option("--epochs", schedule.epochs);
  s_sched->add_option("--finetune", schedule.finetune);
  s_sched->add_option("--out", schedule.out);
  s_sched->add_flag("--dry-run", schedule.dry_run);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    out << sub->help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << usage();
    return 2;
  }

  try {
    if (s_ingest->parsed()) return cmd_ingest(ingest, out);
    if (s_cat->parsed()) return cmd_categorize(categorize_a, out);
    if (s_cluster->parsed()) return cmd_cluster(cluster, out);
    if (s_crop->parsed()) return cmd_crop(crop, out);
    if (s_train->parsed()) return cmd_train(train, out);
    if (s_predict->parsed()) return cmd_predict(predict, out);
    if (s_eval->parsed()) return cmd_evaluate(evaluate, out);
    if (s_cal->parsed()) return cmd_calibrate(calibrate, out);
    if (s_sched->parsed()) return cmd_schedule(schedule, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << usage();
  return 2;
}

}  // namespace sfanet::cli
