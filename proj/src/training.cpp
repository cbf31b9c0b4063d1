// SPDX-License-Identifier: Apache-2.0

#include "sgmt/training.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "sgmt/bleu.hpp"
#include "sgmt/error.hpp"
#include "sgmt/random.hpp"

namespace sgmt {

void optimizer_step(ParamStore& store, AdamState& state, double lr, const TrainConfig& config) {
  const auto params = store.all();
  for (const auto& p : params) {
    if (!p->frozen && !p->grad.allFinite()) throw NumericError("non-finite gradient in tensor " + p->name);
  }
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : params) {
      state.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (p.frozen) continue;
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    p.value *= 1.0 - lr * config.weight_decay;
    m = config.beta1 * m + (1.0 - config.beta1) * p.grad;
    v = config.beta2 * v + (1.0 - config.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config.epsilon);
  }
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw ValidationError("patience must be >= 1");
}

bool EarlyStopping::update(double score) {
  ++epoch_;
  if (best_epoch_ == 0 || score > best_score_) {
    best_score_ = score;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

std::string to_jsonl(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["train_loss"] = m.train_loss;
  j["valid_bleu"] = m.valid_bleu;
  j["lr"] = m.lr;
  return j.dump();
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const ParallelExample> data, int batch_size,
                                                   std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return data[a].source.size() < data[b].source.size(); });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  SplitMix64 rng(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch + 1)));
  for (std::size_t i = batches.size(); i > 1; --i) {
    std::swap(batches[i - 1], batches[rng.below(i)]);
  }
  return batches;
}

double validation_bleu(const Model& model, std::span<const ParallelExample> valid, int max_len) {
  if (valid.empty()) return 0.0;
  std::vector<std::string> hyps;
  std::vector<std::string> refs;
  for (const auto& ex : valid) {
    const int len = std::min(max_len, 2 * static_cast<int>(ex.source.size()) + 10);
    const Hypothesis h = model.translate(ex.graph, ex.source, 1, len);
    hyps.push_back(model.vocab().decode(h.tokens));
    refs.push_back(model.vocab().decode(ex.target));
  }
  return corpus_bleu(hyps, refs, Smoothing::AddOne).bleu;
}

namespace {

void check_kind(std::span<const ParallelExample> data, SuperKind expected, std::string_view stage,
                std::string_view split) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].kind() != expected) {
      throw ValidationError("graph/stage mismatch: " + std::string(split) + " example " + std::to_string(i) +
                            " has a " + std::string(to_string(data[i].kind())) + " graph but stage " +
                            std::string(stage) + " expects " + std::string(to_string(expected)));
    }
  }
}

TrainResult run(Model& model, std::span<const ParallelExample> train, std::span<const ParallelExample> valid,
                const TrainConfig& config, const TrainOptions& options, Stage stage, TrainResult result) {
  if (train.empty()) throw ValidationError("training set is empty");
  ParamStore& store = model.params();
  const long batches_per_epoch =
      (static_cast<long>(train.size()) + config.batch_size - 1) / static_cast<long>(config.batch_size);
  long total_steps = batches_per_epoch * config.max_epochs;
  if (options.max_steps > 0) total_steps = std::min(total_steps, options.max_steps);
  const double lr0 = config.initial_lr();

  AdamState adam;
  SplitMix64 dropout_rng(config.seed ^ 0xD1B54A32D192ED03ULL);
  EarlyStopping stopper(config.patience);
  const nlohmann::json stage_meta = {{"stage", std::string(to_string(stage))}, {"seed", config.seed}};

  std::vector<const ParallelExample*> batch;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    long token_sum = 0;
    double lr = lr0;
    for (const auto& indices : make_batches(train, config.batch_size, config.seed, epoch)) {
      if (options.max_steps > 0 && result.steps >= options.max_steps) break;
      batch.clear();
      for (auto i : indices) batch.push_back(&train[i]);
      store.zero_grad();
      Tape t(true);
      int tokens = 0;
      Var loss = model.batch_loss(t, batch, true, &dropout_rng, &tokens);
      const double value = t.value(loss)(0, 0);
      if (!std::isfinite(value)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      t.backward(loss, Matrix::Constant(1, 1, 1.0 / std::max(tokens, 1)));
      lr = polynomial_lr(lr0, config.lr_end, config.power, result.steps, total_steps);
      optimizer_step(store, adam, lr, config);
      ++result.steps;
      loss_sum += value;
      token_sum += tokens;
      if (options.on_step) options.on_step(result.steps, model);
    }
    if (token_sum == 0) break;  // step budget exhausted

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(token_sum);
    m.valid_bleu = options.skip_validation ? 0.0 : validation_bleu(model, valid, config.valid_max_len);
    m.lr = lr;
    result.history.push_back(m);
    if (options.metrics != nullptr) *options.metrics << to_jsonl(m) << '\n';

    nlohmann::json meta = stage_meta;
    meta["epoch"] = epoch;
    if (options.skip_validation) {
      result.best = model.snapshot(meta);
      result.best_epoch = epoch;
      continue;
    }
    if (stopper.update(m.valid_bleu)) {
      result.best = model.snapshot(meta);
      result.best_epoch = epoch;
    }
    if (stopper.should_stop()) break;
  }
  if (result.best_epoch == 0) throw ValidationError("training ran no complete epoch");
  return result;
}

void prepare(Model& model, const TrainConfig& config) {
  config.validate();
  model.set_no_gate(config.no_gate);
  for (const auto& p : model.params().all()) p->frozen = false;
}

}  // namespace

TrainResult train_stage1(Model& model, std::span<const ParallelExample> train,
                         std::span<const ParallelExample> valid, const TrainConfig& config,
                         const TrainOptions& options) {
  check_kind(train, SuperKind::Image, "one", "train");
  check_kind(valid, SuperKind::Image, "one", "valid");
  prepare(model, config);
  model.params().set_group_frozen("encoder", !config.unfreeze_encoder);
  return run(model, train, valid, config, options, Stage::One, {});
}

TrainResult train_stage2(Model& model, std::span<const ParallelExample> train,
                         std::span<const ParallelExample> valid, const TrainConfig& config,
                         const Checkpoint* stage1_checkpoint, const TrainOptions& options) {
  check_kind(train, SuperKind::Text, "two", "train");
  check_kind(valid, SuperKind::Text, "two", "valid");
  prepare(model, config);
  TrainResult result;
  if (config.skip_stage1) {
    model.init(config.seed);
  } else {
    if (stage1_checkpoint == nullptr) throw ValidationError("stage two needs a stage-one checkpoint");
    if (stage1_checkpoint->meta.contains("vocab") &&
        stage1_checkpoint->meta.at("vocab") != nlohmann::json(model.vocab().tokens())) {
      throw ValidationError("stage-one checkpoint vocabulary differs from the model vocabulary");
    }
    load_parameters(model.params(), *stage1_checkpoint);
    if (!group_matches(model.params(), *stage1_checkpoint, "adapter")) {
      throw ValidationError("shared-weight contract violated: adapter differs from the stage-one checkpoint");
    }
    result.shared_weights_verified = true;
  }
  model.params().set_group_frozen("adapter", config.freeze_adapter_stage2);
  return run(model, train, valid, config, options, Stage::Two, std::move(result));
}

TrainResult train_one_stage_multimodal(Model& model, std::span<const ParallelExample> train,
                                       std::span<const ParallelExample> valid, const TrainConfig& config,
                                       const TrainOptions& options) {
  check_kind(train, SuperKind::Image, "one-multimodal", "train");
  check_kind(valid, SuperKind::Image, "one-multimodal", "valid");
  prepare(model, config);
  return run(model, train, valid, config, options, Stage::OneStageMultimodal, {});
}

}  // namespace sgmt
