#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "golden.hpp"
#include "sgmt/error.hpp"
#include "sgmt/synthetic.hpp"
#include "sgmt/training.hpp"

using namespace sgmt;

namespace {

struct Toy {
  Vocab vocab = synthetic::full_vocab();
  std::vector<synthetic::Sentence> sentences = synthetic::corpus(3, 0, 12);
  std::vector<ParallelExample> msg, lsg;

  explicit Toy(int dim = 8) {
    StubProvider stub(dim);
    msg = synthetic::examples(sentences, SuperKind::Image, vocab, stub);
    lsg = synthetic::examples(sentences, SuperKind::Text, vocab, stub);
  }

  Model model(std::uint64_t seed = 1) const {
    ModelConfig c;
    c.dim = 8;
    c.layers = 1;
    c.heads = 2;
    c.encoder_layers = 1;
    c.decoder_layers = 1;
    Model m(c, vocab);
    m.init(seed);
    return m;
  }
};

TrainConfig quick(Stage stage) {
  TrainConfig c;
  c.stage = stage;
  c.learning_rate = 1e-3;
  c.batch_size = 4;
  c.max_epochs = 2;
  c.dim = 8;
  c.layers = 1;
  return c;
}

ParamStore one_param(double p0) {
  ParamStore s;
  s.add("w", "adapter", 1, 1).value(0, 0) = p0;
  return s;
}

}  // namespace

TEST(Config, ParsesKnownKeys) {
  auto c = parse_train_config("# comment\nstage = two\nlr=3e-4\nbatch_size=8  # trailing\nno_gate=true\n\n");
  EXPECT_EQ(c.stage, Stage::Two);
  EXPECT_DOUBLE_EQ(c.initial_lr(), 3e-4);
  EXPECT_EQ(c.batch_size, 8);
  EXPECT_TRUE(c.no_gate);
}

TEST(Config, RejectsUnknownKeyAndBadValues) {
  try {
    parse_train_config("stage=one\nlearning_rat=1e-3\n");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("learning_rat"), std::string::npos);
  }
  EXPECT_THROW(parse_train_config("batch_size=abc"), ValidationError);
  EXPECT_THROW(parse_train_config("batch_size=0"), ValidationError);
  EXPECT_THROW(parse_train_config("stage=three"), ValidationError);
  EXPECT_THROW(parse_train_config("no_gate=maybe"), ValidationError);
  EXPECT_THROW(parse_train_config("dim=10\nheads=4"), ValidationError);
  EXPECT_THROW(parse_train_config("just a line"), ValidationError);
}

TEST(Config, DefaultLearningRates) {
  EXPECT_DOUBLE_EQ(parse_train_config("stage=one").initial_lr(), 2e-5);
  EXPECT_DOUBLE_EQ(parse_train_config("stage=two").initial_lr(), 1e-5);
  EXPECT_DOUBLE_EQ(parse_train_config("stage=one-multimodal").initial_lr(), 2e-5);
}

TEST(Schedule, Endpoints) {
  EXPECT_DOUBLE_EQ(polynomial_lr(2e-5, 0.0, 1.0, 0, 100), 2e-5);
  EXPECT_DOUBLE_EQ(polynomial_lr(2e-5, 0.0, 1.0, 100, 100), 0.0);
  EXPECT_DOUBLE_EQ(polynomial_lr(2e-5, 0.0, 1.0, 50, 100), 1e-5);
  EXPECT_DOUBLE_EQ(polynomial_lr(2e-5, 1e-6, 2.0, 200, 100), 1e-6);
  EXPECT_DOUBLE_EQ(polynomial_lr(1.0, 0.0, 2.0, 25, 100), 0.5625);
}

TEST(AdamW, Goldens) {
  TrainConfig c;
  auto s = one_param(0.5);
  AdamState st;
  s.get("w").grad(0, 0) = 0.2;
  optimizer_step(s, st, 0.1, c);
  EXPECT_NEAR(s.get("w").value(0, 0), golden::kAdamOneStep, 1e-12);
  s.get("w").grad(0, 0) = -0.3;
  optimizer_step(s, st, 0.1, c);
  EXPECT_NEAR(s.get("w").value(0, 0), golden::kAdamTwoSteps, 1e-12);

  auto z = one_param(0.5);
  AdamState zs;
  optimizer_step(z, zs, 0.1, c);
  EXPECT_NEAR(z.get("w").value(0, 0), golden::kAdamZeroGrad, 1e-15);
}

TEST(AdamW, NonFiniteGradientNamesTensorAndLeavesValues) {
  TrainConfig c;
  ParamStore s;
  s.add("a", "adapter", 1, 2).value.setConstant(1.0);
  s.add("b", "decoder", 1, 1).grad(0, 0) = std::nan("");
  s.get("a").grad.setConstant(0.5);
  AdamState st;
  try {
    optimizer_step(s, st, 0.1, c);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("tensor b"), std::string::npos);
  }
  EXPECT_TRUE((s.get("a").value.array() == 1.0).all());
  EXPECT_EQ(st.step, 0);
}

TEST(AdamW, FrozenUntouched) {
  TrainConfig c;
  ParamStore s;
  s.add("a", "encoder", 2, 2).value.setConstant(0.7);
  s.get("a").grad.setConstant(1.0);
  s.get("a").frozen = true;
  AdamState st;
  optimizer_step(s, st, 0.1, c);
  EXPECT_TRUE((s.get("a").value.array() == 0.7).all());
}

TEST(EarlyStop, PlateauStopsAfterPatience) {
  EarlyStopping es(5);
  const std::vector<double> scores = {10, 11, 11, 11, 11, 11, 11, 12};
  int stopped_after = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    es.update(scores[i]);
    if (es.should_stop()) {
      stopped_after = static_cast<int>(i + 1);
      break;
    }
  }
  EXPECT_EQ(stopped_after, 7);
  EXPECT_EQ(es.best_epoch(), 2);
  EXPECT_EQ(es.best_score(), 11.0);
  EXPECT_THROW(EarlyStopping(0), ValidationError);
}

TEST(EarlyStop, FirstEpochIsBestEvenAtZero) {
  EarlyStopping es(2);
  EXPECT_TRUE(es.update(0.0));
  EXPECT_EQ(es.best_epoch(), 1);
}

TEST(Metrics, JsonlKeyOrder) {
  EXPECT_EQ(to_jsonl({3, 1.5, 20.0, 0.25}), R"({"epoch":3,"train_loss":1.5,"valid_bleu":20.0,"lr":0.25})");
}

TEST(Batches, DeterministicAndComplete) {
  Toy toy;
  auto a = make_batches(toy.msg, 5, 7, 1);
  EXPECT_EQ(a, make_batches(toy.msg, 5, 7, 1));
  EXPECT_NE(a, make_batches(toy.msg, 5, 7, 2));
  std::vector<int> seen(toy.msg.size(), 0);
  for (const auto& b : a) {
    EXPECT_LE(b.size(), 5u);
    for (auto i : b) ++seen[i];
  }
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; }));
  EXPECT_EQ(a.size(), 3u);
}

TEST(Stages, GraphKindMismatchBeforeAnyUpdate) {
  Toy toy;
  auto model = toy.model();
  const auto before = group_checksum(model.params(), "adapter");
  EXPECT_THROW(train_stage1(model, toy.lsg, {}, quick(Stage::One)), ValidationError);
  EXPECT_THROW(train_one_stage_multimodal(model, toy.lsg, {}, quick(Stage::OneStageMultimodal)), ValidationError);
  const auto ckpt = model.snapshot();
  EXPECT_THROW(train_stage2(model, toy.msg, {}, quick(Stage::Two), &ckpt), ValidationError);
  EXPECT_THROW(train_stage1(model, toy.msg, toy.lsg, quick(Stage::One)), ValidationError);
  EXPECT_EQ(group_checksum(model.params(), "adapter"), before);
  try {
    train_stage1(model, toy.lsg, {}, quick(Stage::One));
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("graph/stage mismatch"), std::string::npos);
  }
}

TEST(Stages, Stage1FreezesEncoder) {
  Toy toy;
  auto model = toy.model();
  const auto enc = group_checksum(model.params(), "encoder");
  const auto ada = group_checksum(model.params(), "adapter");
  TrainOptions o;
  o.skip_validation = true;
  long steps = 0;
  o.on_step = [&](long s, const Model& m) {
    steps = s;
    EXPECT_EQ(group_checksum(m.params(), "encoder"), enc) << "step " << s;
  };
  auto r = train_stage1(model, toy.msg, {}, quick(Stage::One), o);
  EXPECT_EQ(steps, 6);
  EXPECT_EQ(r.steps, 6);
  EXPECT_NE(group_checksum(model.params(), "adapter"), ada);
}

TEST(Stages, Stage1UnfreezeMovesEncoder) {
  Toy toy;
  auto model = toy.model();
  const auto enc = group_checksum(model.params(), "encoder");
  auto cfg = quick(Stage::One);
  cfg.unfreeze_encoder = true;
  train_stage1(model, toy.msg, {}, cfg, TrainOptions{nullptr, {}, 1, true});
  EXPECT_NE(group_checksum(model.params(), "encoder"), enc);
}

TEST(Stages, Stage2LoadsAndVerifiesAdapter) {
  Toy toy;
  auto model = toy.model();
  TrainOptions o;
  o.skip_validation = true;
  auto s1 = train_stage1(model, toy.msg, {}, quick(Stage::One), o);
  auto fresh = toy.model(42);
  TrainOptions o2 = o;
  o2.max_steps = 2;
  auto r = train_stage2(fresh, toy.lsg, {}, quick(Stage::Two), &s1.best, o2);
  EXPECT_TRUE(r.shared_weights_verified);
  EXPECT_EQ(r.steps, 2);
  EXPECT_THROW(train_stage2(fresh, toy.lsg, {}, quick(Stage::Two), nullptr, o2), ValidationError);
}

TEST(Stages, Stage2FreezeAdapterOption) {
  Toy toy;
  auto model = toy.model();
  const auto ckpt = model.snapshot();
  auto cfg = quick(Stage::Two);
  cfg.freeze_adapter_stage2 = true;
  auto r = train_stage2(model, toy.lsg, {}, cfg, &ckpt, TrainOptions{nullptr, {}, 3, true});
  EXPECT_TRUE(group_matches(model.params(), ckpt, "adapter"));
  EXPECT_FALSE(group_matches(model.params(), ckpt, "encoder"));
  EXPECT_EQ(r.steps, 3);
}

TEST(Stages, SkipStage1ReinitialisesFromSeed) {
  Toy toy;
  auto a = toy.model(5);
  auto b = toy.model(6);
  auto cfg = quick(Stage::Two);
  cfg.skip_stage1 = true;
  cfg.seed = 9;
  auto ra = train_stage2(a, toy.lsg, {}, cfg, nullptr, TrainOptions{nullptr, {}, 2, true});
  auto rb = train_stage2(b, toy.lsg, {}, cfg, nullptr, TrainOptions{nullptr, {}, 2, true});
  EXPECT_FALSE(ra.shared_weights_verified);
  EXPECT_EQ(encode_checkpoint(ra.best), encode_checkpoint(rb.best));
}

TEST(Stages, MetricsAndEarlyStopping) {
  Toy toy;
  auto model = toy.model();
  auto cfg = quick(Stage::OneStageMultimodal);
  cfg.max_epochs = 3;
  cfg.patience = 1;
  std::ostringstream out;
  TrainOptions o;
  o.metrics = &out;
  auto r = train_one_stage_multimodal(model, toy.msg, toy.msg, cfg, o);
  ASSERT_GE(r.history.size(), 1u);
  std::istringstream in(out.str());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("epoch").get<int>(), ++n);
    EXPECT_TRUE(std::isfinite(j.at("train_loss").get<double>()));
  }
  EXPECT_EQ(n, static_cast<int>(r.history.size()));
  EXPECT_EQ(r.best.meta.at("epoch").get<int>(), r.best_epoch);
  EXPECT_EQ(r.best.meta.at("stage"), "one-multimodal");
}
