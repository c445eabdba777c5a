#pragma once

#include "sfanet/core.hpp"
#include "sfanet/datapipe.hpp"
#include "sfanet/heads.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sfanet {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double epsilon = 1e-8;
  int batch_size = 32;
  std::uint64_t seed = 7;
  int epochs_per_phase = 3;
  int finetune_epochs = 3;
  /// Keep Adam moments across phase boundaries instead of resetting them.
  bool carry_optimizer = false;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Schedule

struct Phase {
  /// 1-based fold index; 0 means the full dataset.
  int fold = 0;
  int epochs = 1;

  bool full() const { return fold == 0; }
  std::string dataset() const;  // "fold_3" or "FULL"
  friend bool operator==(const Phase&, const Phase&) = default;
};

struct Schedule {
  std::vector<Phase> phases;

  int folds() const { return static_cast<int>(phases.size()) - 1; }
  int total_epochs() const;
  /// k fold phases in index order, then exactly one FULL phase.
  void validate() const;
};

Schedule make_schedule(int k, int epochs_per_phase, int finetune_epochs);
std::string format_schedule(const Schedule& s);

// ---------------------------------------------------------------------------
// Loss and optimiser

/// Binary cross-entropy of sigmoid(logit) against the label encoding.
double bce_with_logits(double logit, Label label) noexcept;
/// d loss / d logit.
double bce_grad(double logit, Label label) noexcept;
/// Mean BCE of probabilities, clipped to [eps, 1 - eps].
double bce_mean(std::span<const double> scores, std::span<const Label> labels, double eps = 1e-7);

/// Adam with decoupled weight decay.
class AdamW {
 public:
  explicit AdamW(const TrainConfig& cfg);

  void step(const nn::ParamList& params);
  void reset();
  long steps() const { return t_; }

  NamedTensors state() const;
  void load_state(const NamedTensors& state, const nn::ParamList& params);

 private:
  double lr_, b1_, b2_, wd_, eps_;
  long t_ = 0;
  std::vector<matrix_t> m_, v_;
};

// ---------------------------------------------------------------------------
// Training loop

struct Example {
  const PreparedInput* input = nullptr;
  Label label = Label::fake;
};

/// Frozen-stage outputs for every labelled manifest sample, computed once.
class PreparedCache {
 public:
  PreparedCache(const Detector& model, const Manifest& manifest);
  const PreparedInput& at(std::size_t manifest_index) const;
  std::vector<Example> examples(std::span<const std::size_t> indices) const;
  std::vector<Example> all_labelled() const;

 private:
  const Manifest* manifest_;
  std::vector<std::optional<PreparedInput>> inputs_;
};

struct StepLog {
  std::vector<double> losses;  // mean batch loss before each update
  double mean_loss() const;
};

/// One shuffled pass. Shuffle order and dropout masks depend only on (seed, phase, epoch).
StepLog train_epoch(ModelBundle& model, AdamW& opt, std::span<const Example> data,
                    const TrainConfig& cfg, int phase, int epoch);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate_examples(const ModelBundle& model, std::span<const Example> data,
                             const DecisionPolicy& policy = DecisionPolicy::neutral());

struct EpochRecord {
  int phase = 0;
  std::string dataset;
  int epoch = 0;
  double train_loss = 0.0;
  std::vector<double> step_losses;
  std::optional<double> val_loss, val_accuracy;
  std::string checkpoint;
};

struct PhaseRecord {
  int phase = 0;
  std::string dataset;
  std::vector<double> epoch_losses;
  /// Every step loss in the phase, in order.
  std::vector<double> loss_curve;
  std::optional<double> val_loss, val_accuracy;
  std::string checkpoint;
};

std::string epoch_record_json(const EpochRecord& r);
EpochRecord parse_epoch_record(std::string_view line);

struct SequentialOptions {
  std::string model_name = "model";
  /// Per-epoch checkpoints and the JSONL log go here when set.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Continue from the latest checkpoint in checkpoint_dir.
  bool resume = false;
  /// Official validation set, evaluated after every epoch.
  const Manifest* validation = nullptr;
  /// Stop after this many epochs in this call (simulated interruption).
  std::optional<int> max_epochs;
  /// Copied into checkpoint sidecars.
  std::string config_hash;
  std::function<void(const Phase&, int index, const ModelBundle&)> on_phase_start;
  std::function<void(const Phase&, int index, const ModelBundle&)> on_phase_end;
};

struct SequentialResult {
  std::vector<PhaseRecord> phases;
  std::vector<EpochRecord> epochs;
  bool completed = false;
};

/// Fold phases with weights carried across boundaries, then the FULL phase on
/// every labelled sample.
SequentialResult run_sequential(ModelBundle& model, const Manifest& manifest,
                                std::span<const Fold> folds, const Schedule& schedule,
                                const TrainConfig& cfg, const SequentialOptions& options = {});

/// Plain training on every labelled sample for `epochs` epochs (one FULL phase).
SequentialResult train_full(ModelBundle& model, const Manifest& manifest, int epochs,
                            const TrainConfig& cfg, const SequentialOptions& options = {});

std::string checkpoint_name(const std::string& model, int phase, int epoch);

struct CheckpointRef {
  std::filesystem::path path;
  int phase = 0;
  int epoch = 0;
};

/// Highest (phase, epoch) checkpoint for `model` in `dir`.
std::optional<CheckpointRef> latest_checkpoint(const std::filesystem::path& dir, const std::string& model);

}  // namespace sfanet
