// SPDX-License-Identifier: Apache-2.0
//
// Two-stage training.
//
// Stage one trains on multimodal graphs with the backbone encoder frozen.
// Stage two starts from the stage-one checkpoint, switches to linguistic
// graphs and unfreezes the encoder. The one-stage multimodal variant trains
// everything on multimodal graphs in a single run.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sgmt/checkpoint.hpp"
#include "sgmt/model.hpp"

namespace sgmt {

enum class Stage { One, Two, OneStageMultimodal };

Stage parse_stage(std::string_view name);
std::string_view to_string(Stage stage);

struct TrainConfig {
  Stage stage = Stage::One;
  std::optional<double> learning_rate;  // unset: 2e-5 for stage one, 1e-5 for stage two
  double lr_end = 0.0;
  double power = 1.0;
  int batch_size = 64;
  int patience = 5;
  int max_epochs = 50;
  std::uint64_t seed = 1;
  bool no_gate = false;
  bool skip_stage1 = false;
  bool unfreeze_encoder = false;  // stage one only
  bool freeze_adapter_stage2 = false;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int valid_max_len = 64;

  // Model shape (used when a fresh model is created).
  int dim = 16;
  int layers = 2;
  int heads = 2;
  std::string provider = "stub";

  double initial_lr() const;
  void validate() const;
};

// Flat key=value text, '#' starts a comment. Recognised keys: stage, lr,
// lr_end, power, batch_size, patience, max_epochs, seed, no_gate,
// skip_stage1, unfreeze_encoder, dim, layers, heads, provider. Unknown keys
// are an error.
TrainConfig parse_train_config(std::string_view text);

// lr_t = (lr0 - lr_end) * (1 - t/T)^power + lr_end, with t clamped to T.
double polynomial_lr(double lr0, double lr_end, double power, long step, long total_steps);

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
};

// One AdamW step over every non-frozen parameter of the store, using
// Parameter::grad. Decoupled weight decay: p -= lr * wd * p before the
// Adam update. Throws NumericError naming the first non-finite gradient,
// before any parameter is modified.
void optimizer_step(ParamStore& store, AdamState& state, double lr, const TrainConfig& config);

// Early stopping on a validation score (higher is better, strict
// improvement resets patience).
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);
  // Records one epoch's score; returns true if it is the new best.
  bool update(double score);
  bool should_stop() const { return since_best_ >= patience_; }
  int best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update
  double best_score() const { return best_score_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  double best_score_ = 0.0;
  int since_best_ = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_bleu = 0.0;
  double lr = 0.0;
};

std::string to_jsonl(const EpochMetrics& m);

struct TrainResult {
  Checkpoint best;  // parameters at the best validation BLEU epoch
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  long steps = 0;
  // Stage two only: adapter tensors matched the stage-one checkpoint
  // bit-for-bit before the first update.
  bool shared_weights_verified = false;
};

// Observer invoked after each optimizer step with the 1-based step number.
using StepHook = std::function<void(long step, const Model& model)>;

struct TrainOptions {
  std::ostream* metrics = nullptr;  // receives one JSONL line per epoch
  StepHook on_step;
  // Stop after this many optimizer steps (0 = no limit).
  long max_steps = 0;
  // Skip validation decoding: BLEU is reported as 0, early stopping is off
  // and the last epoch is kept.
  bool skip_validation = false;
};

// Batches of example indices: sorted by source length, cut into batches,
// batch order shuffled with the seed and epoch.
std::vector<std::vector<std::size_t>> make_batches(std::span<const ParallelExample> data, int batch_size,
                                                   std::uint64_t seed, int epoch);

// Validation BLEU (greedy decoding, add-one smoothing).
double validation_bleu(const Model& model, std::span<const ParallelExample> valid, int max_len);

TrainResult train_stage1(Model& model, std::span<const ParallelExample> train,
                         std::span<const ParallelExample> valid, const TrainConfig& config,
                         const TrainOptions& options = {});

// Loads `model` from the stage-one checkpoint (unless skip_stage1, in which
// case `model` is re-initialised from the seed) and trains on linguistic
// graphs. Before the first update, the adapter tensors are checked
// bit-for-bit against the checkpoint.
TrainResult train_stage2(Model& model, std::span<const ParallelExample> train,
                         std::span<const ParallelExample> valid, const TrainConfig& config,
                         const Checkpoint* stage1_checkpoint, const TrainOptions& options = {});

TrainResult train_one_stage_multimodal(Model& model, std::span<const ParallelExample> train,
                                       std::span<const ParallelExample> valid, const TrainConfig& config,
                                       const TrainOptions& options = {});

}  // namespace sgmt
