#include <gtest/gtest.h>

#include <cmath>

#include "sgmt/backbone.hpp"
#include "sgmt/error.hpp"

using namespace sgmt;

namespace {

Backbone make(ParamStore& store, std::uint64_t seed) {
  BackboneConfig c;
  c.dim = 8;
  c.vocab_size = 12;
  c.heads = 2;
  c.ffn_dim = 16;
  Backbone b(store, c);
  nn::init_all(store, seed);
  return b;
}

std::vector<double> log_softmax(std::vector<double> x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  for (double& v : x) v = v - mx - std::log(s);
  return x;
}

}  // namespace

TEST(Vocab, ReservedAndRoundTrip) {
  std::vector<std::string> sents = {"b a c", "a d"};
  auto v = Vocab::from_corpus(sents);
  EXPECT_EQ(v.size(), Vocab::kNumReserved + 4);
  EXPECT_EQ(v.token(Vocab::kNumReserved), "a");
  EXPECT_EQ(v.id("zzz"), Vocab::kUnk);
  auto ids = v.encode("a  d c");
  ids.push_back(Vocab::kEos);
  ids.push_back(v.id("b"));
  EXPECT_EQ(v.decode(ids), "a d c");
  EXPECT_THROW(v.token(99), ValidationError);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"a", "b", "c", "d"}));
}

TEST(Backbone, ConfigValidation) {
  ParamStore s;
  BackboneConfig c;
  c.vocab_size = 4;
  EXPECT_THROW(Backbone(s, c), ValidationError);
  c.vocab_size = 10;
  c.heads = 3;
  EXPECT_THROW(Backbone(s, c), ValidationError);
}

TEST(Backbone, InputChecks) {
  ParamStore s;
  auto b = make(s, 1);
  EXPECT_THROW(b.encode(std::vector<int>{}), ValidationError);
  EXPECT_THROW(b.encode(std::vector<int>{0, 0}), ValidationError);
  EXPECT_THROW(b.encode(std::vector<int>{5, 40}), ValidationError);
  const std::vector<int> src = {5, 6};
  const Matrix h = b.encode(src);
  EXPECT_THROW(b.decode_logits(h, src, std::vector<int>{5}), ValidationError);
  EXPECT_THROW(b.decode_logits(h.topRows(1), src, std::vector<int>{Vocab::kBos}), ValidationError);
}

TEST(Backbone, PaddingIsMasked) {
  ParamStore s;
  auto b = make(s, 2);
  const std::vector<int> src = {5, 7, 9};
  const std::vector<int> padded = {5, 7, 9, Vocab::kPad, Vocab::kPad};
  const Matrix h = b.encode(src);
  const Matrix hp = b.encode(padded);
  EXPECT_LT((hp.topRows(3) - h).cwiseAbs().maxCoeff(), 1e-12);
  const std::vector<int> prefix = {Vocab::kBos, 6, 8};
  const Matrix a = b.decode_logits(h, src, prefix);
  const Matrix c = b.decode_logits(hp, padded, prefix);
  EXPECT_LT((a - c).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Backbone, DecoderIsCausal) {
  ParamStore s;
  auto b = make(s, 3);
  const std::vector<int> src = {5, 7};
  const Matrix h = b.encode(src);
  const Matrix a = b.decode_logits(h, src, std::vector<int>{Vocab::kBos, 6, 8});
  const Matrix c = b.decode_logits(h, src, std::vector<int>{Vocab::kBos, 6, 11});
  EXPECT_LT((a.topRows(2) - c.topRows(2)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GT((a.row(2) - c.row(2)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Backbone, TapeMatchesInference) {
  ParamStore s;
  auto b = make(s, 4);
  const std::vector<int> src = {5, 7, 0};
  const std::vector<int> prefix = {Vocab::kBos, 9};
  Tape t;
  Var h = b.encode(t, src);
  Var l = b.decode_logits(t, h, src, prefix);
  EXPECT_LT((t.value(l) - b.decode_logits(b.encode(src), src, prefix)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Beam, BeamOneIsGreedy) {
  // Scorer driven by prefix length and last token.
  auto scorer = [](std::span<const int> prefix) {
    std::vector<double> x(6);
    for (int k = 0; k < 6; ++k) x[static_cast<std::size_t>(k)] = std::sin(1.7 * k + 0.9 * prefix.back() + 0.4 * prefix.size());
    x[Vocab::kEos] += 0.3 * static_cast<double>(prefix.size());
    return log_softmax(x);
  };
  BeamOptions o;
  o.beam_size = 1;
  o.max_len = 10;
  const auto hyp = beam_search(scorer, o);
  std::vector<int> prefix = {Vocab::kBos}, greedy;
  for (int step = 0; step < 10; ++step) {
    auto lp = scorer(prefix);
    lp[Vocab::kPad] = lp[Vocab::kBos] = -INFINITY;
    const int best = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    greedy.push_back(best);
    prefix.push_back(best);
    if (best == Vocab::kEos) break;
  }
  EXPECT_EQ(hyp.tokens, greedy);
}

TEST(Beam, WiderBeamFindsBetterSequence) {
  // Greedy takes token 4 (p=0.5) then is stuck with a flat distribution;
  // token 5 (p=0.4) leads to a certain EOS.
  auto scorer = [](std::span<const int> prefix) {
    std::vector<double> p(6, 1e-12);
    if (prefix.size() == 1) {
      p[4] = 0.5;
      p[5] = 0.4;
      p[Vocab::kEos] = 0.1;
    } else if (prefix.back() == 5) {
      p[Vocab::kEos] = 1.0;
    } else {
      p[Vocab::kEos] = p[3] = p[4] = p[5] = 0.25;
    }
    std::vector<double> out;
    for (double v : p) out.push_back(std::log(v));
    return out;
  };
  BeamOptions o;
  o.max_len = 4;
  o.beam_size = 3;
  EXPECT_EQ(beam_search(scorer, o).tokens, (std::vector<int>{5, Vocab::kEos}));
  o.beam_size = 1;
  EXPECT_EQ(beam_search(scorer, o).tokens.front(), 4);
}

TEST(Beam, Errors) {
  auto scorer = [](std::span<const int>) { return std::vector<double>(6, std::log(1.0 / 6)); };
  BeamOptions o;
  o.beam_size = 0;
  EXPECT_THROW(beam_search(scorer, o), ValidationError);
  o.beam_size = 2;
  o.max_len = 0;
  EXPECT_THROW(beam_search(scorer, o), ValidationError);
}

TEST(Beam, Ordering) {
  Hypothesis a{{4, 2}, -1.0, -0.5}, b{{5, 2}, -1.0, -0.5}, c{{4}, -0.2, -0.2};
  EXPECT_TRUE(better_hypothesis(a, b));
  EXPECT_FALSE(better_hypothesis(b, a));
  EXPECT_TRUE(better_hypothesis(c, a));
}
