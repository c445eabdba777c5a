#include "sfanet/trainsched.hpp"

#include "sfanet/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

namespace sfanet {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in (0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (epochs_per_phase < 1 || finetune_epochs < 1) throw ConfigError("epoch counts must be positive");
}

// ---------------------------------------------------------------------------

std::string Phase::dataset() const { return full() ? "FULL" : "fold_" + std::to_string(fold); }

int Schedule::total_epochs() const {
  int n = 0;
  for (const auto& p : phases) n += p.epochs;
  return n;
}

void Schedule::validate() const {
  if (phases.size() < 2) throw ConfigError("schedule needs at least one fold phase and a FULL phase");
  for (std::size_t i = 0; i + 1 < phases.size(); ++i)
    if (phases[i].fold != static_cast<int>(i) + 1) throw ConfigError("fold phases must run in index order");
  if (!phases.back().full()) throw ConfigError("schedule must end with the FULL phase");
  for (const auto& p : phases)
    if (p.epochs < 1) throw ConfigError("phase epochs must be positive");
}

Schedule make_schedule(int k, int epochs_per_phase, int finetune_epochs) {
  if (k < 1 || epochs_per_phase < 1 || finetune_epochs < 1)
    throw ConfigError("make_schedule needs k, epochs and finetune epochs >= 1");
  Schedule s;
  for (int i = 1; i <= k; ++i) s.phases.push_back({i, epochs_per_phase});
  s.phases.push_back({0, finetune_epochs});
  return s;
}

std::string format_schedule(const Schedule& s) {
  std::ostringstream os;
  os << "phase,dataset,epochs\n";
  for (std::size_t i = 0; i < s.phases.size(); ++i)
    os << i + 1 << ',' << s.phases[i].dataset() << ',' << s.phases[i].epochs << '\n';
  os << "# phases=" << s.phases.size() << " total_epochs=" << s.total_epochs() << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------

double bce_with_logits(double z, Label label) noexcept {
  const double y = encode(label);
  return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
}

double bce_grad(double z, Label label) noexcept {
  const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return s - encode(label);
}

double bce_mean(std::span<const double> scores, std::span<const Label> labels, double eps) {
  if (scores.size() != labels.size() || scores.empty()) throw InvalidInput("bce_mean needs equal, nonempty inputs");
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double p = std::clamp(scores[i], eps, 1.0 - eps);
    total -= labels[i] == Label::real ? std::log(p) : std::log1p(-p);
  }
  return total / static_cast<double>(scores.size());
}

AdamW::AdamW(const TrainConfig& cfg)
    : lr_(cfg.learning_rate), b1_(cfg.beta1), b2_(cfg.beta2), wd_(cfg.weight_decay), eps_(cfg.epsilon) {}

void AdamW::reset() {
  t_ = 0;
  m_.clear();
  v_.clear();
}

void AdamW::step(const nn::ParamList& params) {
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.push_back(matrix_t::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(matrix_t::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size()) throw StateError("optimizer state does not match the parameter list");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * p.grad;
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * p.grad.cwiseAbs2();
    const matrix_t update = (m_[i] / c1).array() / ((v_[i] / c2).array().sqrt() + eps_);
    p.value -= lr_ * (update + wd_ * p.value);
  }
}

NamedTensors AdamW::state() const {
  NamedTensors out;
  matrix_t t(1, 1);
  t(0, 0) = static_cast<double>(t_);
  out.emplace_back("t", t);
  for (std::size_t i = 0; i < m_.size(); ++i) {
    out.emplace_back("m" + std::to_string(i), m_[i]);
    out.emplace_back("v" + std::to_string(i), v_[i]);
  }
  return out;
}

void AdamW::load_state(const NamedTensors& state, const nn::ParamList& params) {
  if (state.empty() || state[0].first != "t") throw IngestError("optimizer state has no step counter");
  reset();
  t_ = static_cast<long>(state[0].second(0, 0));
  if (state.size() == 1) return;
  if (state.size() != 1 + 2 * params.size()) throw ConsistencyError("optimizer state size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& m = state[1 + 2 * i].second;
    const auto& v = state[2 + 2 * i].second;
    if (m.rows() != params[i]->value.rows() || m.cols() != params[i]->value.cols() ||
        v.rows() != m.rows() || v.cols() != m.cols())
      throw ConsistencyError("optimizer state shape mismatch for " + params[i]->name);
    m_.push_back(m);
    v_.push_back(v);
  }
}

// ---------------------------------------------------------------------------

PreparedCache::PreparedCache(const Detector& model, const Manifest& manifest)
    : manifest_(&manifest), inputs_(manifest.samples.size()) {
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    const auto& s = manifest.samples[i];
    if (!s.label) continue;
    try {
      Image img = manifest.image(s);
      const int res = model.config().resolution;
      if (img.height() != res || img.width() != res) img = img.resized(res, res);
      inputs_[i] = model.prepare(img);
    } catch (const Error& e) {
      throw IngestError("cannot prepare sample " + s.id + ": " + e.what());
    }
  }
}

const PreparedInput& PreparedCache::at(std::size_t i) const {
  if (i >= inputs_.size() || !inputs_[i]) throw IngestError("sample index " + std::to_string(i) + " is not prepared");
  return *inputs_[i];
}

std::vector<Example> PreparedCache::examples(std::span<const std::size_t> indices) const {
  std::vector<Example> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back({&at(i), *manifest_->samples[i].label});
  return out;
}

std::vector<Example> PreparedCache::all_labelled() const {
  std::vector<Example> out;
  for (std::size_t i = 0; i < inputs_.size(); ++i)
    if (inputs_[i]) out.push_back({&*inputs_[i], *manifest_->samples[i].label});
  return out;
}

double StepLog::mean_loss() const {
  if (losses.empty()) return 0.0;
  double s = 0.0;
  for (double l : losses) s += l;
  return s / static_cast<double>(losses.size());
}

namespace {

std::uint64_t stream_seed(std::uint64_t seed, int phase, int epoch, int stream) {
  std::uint64_t h = fnv1a64(std::to_string(seed));
  for (int v : {phase, epoch, stream}) {
    const auto s = std::to_string(v) + "/";
    h = fnv1a64(s, h);
  }
  return h;
}

}  // namespace

StepLog train_epoch(ModelBundle& model, AdamW& opt, std::span<const Example> data, const TrainConfig& cfg,
                    int phase, int epoch) {
  if (data.empty()) throw InvalidInput("training on an empty dataset");
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  nn::Rng shuffle(stream_seed(cfg.seed, phase, epoch, 0));
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle() % (i + 1)]);
  nn::Rng dropout(stream_seed(cfg.seed, phase, epoch, 1));

  auto& det = model.model();
  const auto params = det.parameters();
  StepLog log;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t end = std::min(order.size(), start + batch);
    const double inv = 1.0 / static_cast<double>(end - start);
    det.zero_grad();
    double loss = 0.0;
    for (std::size_t j = start; j < end; ++j) {
      const auto& ex = data[order[j]];
      const double z = det.train_logit(*ex.input, &dropout);
      loss += bce_with_logits(z, ex.label);
      det.backward(bce_grad(z, ex.label) * inv);
    }
    log.losses.push_back(loss * inv);
    opt.step(params);
  }
  return log;
}

Evaluation evaluate_examples(const ModelBundle& model, std::span<const Example> data,
                             const DecisionPolicy& policy) {
  if (data.empty()) throw InvalidInput("evaluation on an empty dataset");
  Evaluation e;
  long correct = 0;
  for (const auto& ex : data) {
    const double z = model.model().logit(*ex.input);
    e.loss += bce_with_logits(z, ex.label);
    if (decide(Score(clamped_sigmoid(z)), policy) == ex.label) ++correct;
  }
  e.loss /= static_cast<double>(data.size());
  e.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return e;
}

// ---------------------------------------------------------------------------

std::string epoch_record_json(const EpochRecord& r) {
  json j{{"phase", r.phase},
         {"dataset", r.dataset},
         {"epoch", r.epoch},
         {"train_loss", r.train_loss},
         {"step_losses", r.step_losses},
         {"checkpoint", r.checkpoint}};
  j["val_loss"] = r.val_loss ? json(*r.val_loss) : json(nullptr);
  j["val_accuracy"] = r.val_accuracy ? json(*r.val_accuracy) : json(nullptr);
  return j.dump();
}

EpochRecord parse_epoch_record(std::string_view line) {
  try {
    const auto j = json::parse(line);
    EpochRecord r;
    r.phase = j.at("phase").get<int>();
    r.dataset = j.at("dataset").get<std::string>();
    r.epoch = j.at("epoch").get<int>();
    r.train_loss = j.at("train_loss").get<double>();
    r.step_losses = j.at("step_losses").get<std::vector<double>>();
    r.checkpoint = j.value("checkpoint", "");
    if (j.contains("val_loss") && !j["val_loss"].is_null()) r.val_loss = j["val_loss"].get<double>();
    if (j.contains("val_accuracy") && !j["val_accuracy"].is_null())
      r.val_accuracy = j["val_accuracy"].get<double>();
    return r;
  } catch (const json::exception& e) {
    throw IngestError(std::string("bad training log line: ") + e.what());
  }
}

std::string checkpoint_name(const std::string& model, int phase, int epoch) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "-phase%02d-epoch%02d.ckpt", phase, epoch);
  return model + buf;
}

std::optional<CheckpointRef> latest_checkpoint(const std::filesystem::path& dir, const std::string& model) {
  if (!std::filesystem::is_directory(dir)) return std::nullopt;
  const std::regex re("-phase([0-9]+)-epoch([0-9]+)\\.ckpt");
  std::optional<CheckpointRef> best;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind(model, 0) != 0) continue;
    std::smatch m;
    const std::string rest = name.substr(model.size());
    if (!std::regex_match(rest, m, re)) continue;
    if (!std::filesystem::exists(sidecar_path(entry.path()))) continue;
    const CheckpointRef ref{entry.path(), std::stoi(m[1]), std::stoi(m[2])};
    if (!best || std::tie(ref.phase, ref.epoch) > std::tie(best->phase, best->epoch)) best = ref;
  }
  return best;
}

namespace {

std::filesystem::path optimizer_path(std::filesystem::path ckpt) {
  ckpt.replace_extension(".opt");
  return ckpt;
}

std::filesystem::path log_path(const std::filesystem::path& dir, const std::string& model) {
  return dir / (model + "-log.jsonl");
}

std::vector<EpochRecord> read_log(const std::filesystem::path& path) {
  std::vector<EpochRecord> out;
  if (!std::filesystem::exists(path)) return out;
  std::istringstream in(read_file(path));
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(parse_epoch_record(line));
  return out;
}

void write_log(const std::filesystem::path& path, const std::vector<EpochRecord>& records) {
  std::string text;
  for (const auto& r : records) text += epoch_record_json(r) + "\n";
  write_file_atomic(path, text);
}

std::vector<PhaseRecord> summarize(const std::vector<EpochRecord>& epochs, const Schedule& schedule) {
  std::vector<PhaseRecord> out;
  for (std::size_t i = 0; i < schedule.phases.size(); ++i) {
    const int idx = static_cast<int>(i) + 1;
    PhaseRecord p;
    p.phase = idx;
    p.dataset = schedule.phases[i].dataset();
    int seen = 0;
    for (const auto& e : epochs) {
      if (e.phase != idx) continue;
      ++seen;
      p.epoch_losses.push_back(e.train_loss);
      p.loss_curve.insert(p.loss_curve.end(), e.step_losses.begin(), e.step_losses.end());
      p.val_loss = e.val_loss;
      p.val_accuracy = e.val_accuracy;
      p.checkpoint = e.checkpoint;
    }
    if (seen == schedule.phases[i].epochs) out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

namespace {

SequentialResult run_phases(ModelBundle& model, const Manifest& manifest, std::span<const Fold> folds,
                            const std::vector<Phase>& phases, const TrainConfig& cfg,
                            const SequentialOptions& options) {
  cfg.validate();
  if (!model.loaded()) throw StateError("training needs initialised or loaded weights");
  if (options.resume && !options.checkpoint_dir) throw ConfigError("resume needs a checkpoint directory");
  const Schedule schedule{phases};

  // Resolve every dataset before any training.
  for (std::size_t i = 0; i < folds.size(); ++i) {
    if (folds[i].index != static_cast<int>(i) + 1) throw ConsistencyError("folds are not in index order");
    for (std::size_t m : folds[i].members)
      if (m >= manifest.samples.size() || !manifest.samples[m].label)
        throw ConsistencyError("fold " + std::to_string(folds[i].index) + " references an unusable sample");
  }
  const PreparedCache cache(model.model(), manifest);
  std::optional<PreparedCache> val_cache;
  std::vector<Example> val;
  if (options.validation) {
    val_cache.emplace(model.model(), *options.validation);
    val = val_cache->all_labelled();
  }
  std::vector<std::vector<Example>> datasets;
  for (const auto& f : folds) datasets.push_back(cache.examples(f.members));
  datasets.push_back(cache.all_labelled());
  for (const auto& d : datasets)
    if (d.empty()) throw ConsistencyError("a schedule phase has no labelled samples");

  AdamW opt(cfg);
  const auto params = model.model().parameters();
  SequentialResult result;
  int start_phase = 1, start_epoch = 1;
  if (options.resume) {
    if (const auto ref = latest_checkpoint(*options.checkpoint_dir, options.model_name)) {
      ModelBundle restored = load_checkpoint(ref->path);
      if (restored.kind() != model.kind()) throw ConsistencyError("checkpoint is for a different model");
      model.set_weights(restored.weights());
      opt.load_state(decode_tensors(read_file(optimizer_path(ref->path))), params);
      start_phase = ref->phase;
      start_epoch = ref->epoch + 1;
      if (start_epoch > schedule.phases[static_cast<std::size_t>(ref->phase) - 1].epochs) {
        ++start_phase;
        start_epoch = 1;
        if (!cfg.carry_optimizer) opt.reset();
      }
      for (auto& r : read_log(log_path(*options.checkpoint_dir, options.model_name)))
        if (std::tie(r.phase, r.epoch) <= std::tie(ref->phase, ref->epoch)) result.epochs.push_back(std::move(r));
    }
  }
  if (options.checkpoint_dir) std::filesystem::create_directories(*options.checkpoint_dir);

  int budget = options.max_epochs.value_or(-1);
  for (int pi = start_phase; pi <= static_cast<int>(schedule.phases.size()); ++pi) {
    const Phase& phase = schedule.phases[static_cast<std::size_t>(pi) - 1];
    const int first = pi == start_phase ? start_epoch : 1;
    if (first == 1) {
      if (pi > 1 && !cfg.carry_optimizer) opt.reset();
      if (options.on_phase_start) options.on_phase_start(phase, pi, model);
    }
    const auto& data = datasets[phase.full() ? datasets.size() - 1 : static_cast<std::size_t>(phase.fold) - 1];
    for (int e = first; e <= phase.epochs; ++e) {
      if (budget == 0) {
        result.phases = summarize(result.epochs, schedule);
        return result;
      }
      const StepLog steps = train_epoch(model, opt, data, cfg, pi, e);
      EpochRecord rec;
      rec.phase = pi;
      rec.dataset = phase.dataset();
      rec.epoch = e;
      rec.train_loss = steps.mean_loss();
      rec.step_losses = steps.losses;
      if (!val.empty()) {
        const auto ev = evaluate_examples(model, val);
        rec.val_loss = ev.loss;
        rec.val_accuracy = ev.accuracy;
      }
      if (options.checkpoint_dir) {
        const auto path = *options.checkpoint_dir / checkpoint_name(options.model_name, pi, e);
        save_checkpoint(model, path,
                        {{"phase", std::to_string(pi)},
                         {"epoch", std::to_string(e)},
                         {"dataset", phase.dataset()},
                         {"run_config_hash", options.config_hash}});
        write_file_atomic(optimizer_path(path), encode_tensors(opt.state()));
        rec.checkpoint = path.filename().string();
      }
      result.epochs.push_back(rec);
      if (options.checkpoint_dir) write_log(log_path(*options.checkpoint_dir, options.model_name), result.epochs);
      if (budget > 0) --budget;
    }
    if (options.on_phase_end) options.on_phase_end(phase, pi, model);
  }
  result.phases = summarize(result.epochs, schedule);
  result.completed = true;
  return result;
}

}  // namespace

SequentialResult run_sequential(ModelBundle& model, const Manifest& manifest, std::span<const Fold> folds,
                                const Schedule& schedule, const TrainConfig& cfg,
                                const SequentialOptions& options) {
  schedule.validate();
  if (schedule.folds() != static_cast<int>(folds.size()))
    throw ConfigError("schedule has " + std::to_string(schedule.folds()) + " fold phases but " +
                      std::to_string(folds.size()) + " folds were given");
  return run_phases(model, manifest, folds, schedule.phases, cfg, options);
}

SequentialResult train_full(ModelBundle& model, const Manifest& manifest, int epochs, const TrainConfig& cfg,
                            const SequentialOptions& options) {
  if (epochs < 1) throw ConfigError("epochs must be positive");
  return run_phases(model, manifest, {}, {Phase{0, epochs}}, cfg, options);
}

}  // namespace sfanet
