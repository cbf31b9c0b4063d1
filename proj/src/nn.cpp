// SPDX-License-Identifier: Apache-2.0

#include "sgmt/nn.hpp"

#include <cmath>
#include <limits>

#include "sgmt/error.hpp"

namespace sgmt::nn {

LinearParams add_linear(ParamStore& store, const std::string& name, const std::string& group, Index in,
                        Index out) {
  return {&store.add(name + ".weight", group, out, in), &store.add(name + ".bias", group, 1, out)};
}

LayerNormParams add_layer_norm(ParamStore& store, const std::string& name, const std::string& group,
                               Index dim) {
  return {&store.add(name + ".gamma", group, 1, dim), &store.add(name + ".beta", group, 1, dim)};
}

AttentionParams add_attention(ParamStore& store, const std::string& name, const std::string& group,
                              Index dim) {
  return {add_linear(store, name + ".query", group, dim, dim), add_linear(store, name + ".key", group, dim, dim),
          add_linear(store, name + ".value", group, dim, dim),
          add_linear(store, name + ".output", group, dim, dim)};
}

Var apply(Tape& t, Var x, const LinearParams& p) { return linear(t, x, *p.weight, *p.bias); }

Var apply(Tape& t, Var x, const LayerNormParams& p) {
  return t.layer_norm(x, t.param(*p.gamma), t.param(*p.beta));
}

Var multi_head_attention(Tape& t, Var query, Var key_value, const AttentionParams& p, int heads,
                         const Matrix* mask, std::vector<Matrix>* weights_out) {
  const Index dim = t.value(query).cols();
  if (heads < 1 || dim % heads != 0) throw ValidationError("model dim must be divisible by head count");
  if (t.value(key_value).cols() != dim) throw ValidationError("attention: query/key width mismatch");
  const Index head_dim = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Var q = apply(t, query, p.query);
  Var k = apply(t, key_value, p.key);
  Var v = apply(t, key_value, p.value);
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  if (weights_out != nullptr) weights_out->clear();
  for (int h = 0; h < heads; ++h) {
    Var qh = t.slice_cols(q, h * head_dim, head_dim);
    Var kh = t.slice_cols(k, h * head_dim, head_dim);
    Var vh = t.slice_cols(v, h * head_dim, head_dim);
    Var scores = t.affine(t.matmul_nt(qh, kh), scale, 0.0);
    Var weights = t.softmax_rows(scores, mask);
    if (weights_out != nullptr) weights_out->push_back(t.value(weights));
    outs.push_back(t.matmul(weights, vh));
  }
  Var merged = heads == 1 ? outs.front() : t.concat_cols(outs);
  return apply(t, merged, p.output);
}

Var dropout(Tape& t, Var x, double rate, SplitMix64& rng) {
  if (rate <= 0.0) return x;
  const Matrix& v = t.value(x);
  Matrix keep(v.rows(), v.cols());
  const double scale = 1.0 / (1.0 - rate);
  for (Index i = 0; i < keep.size(); ++i) keep.data()[i] = rng.uniform() >= rate ? scale : 0.0;
  return t.mul(x, t.constant(std::move(keep)));
}

Matrix sinusoidal_positions(Index length, Index dim) {
  Matrix pe(length, dim);
  for (Index pos = 0; pos < length; ++pos) {
    for (Index i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe(pos, i) = (i % 2 == 0) ? std::sin(static_cast<double>(pos) * freq) : std::cos(static_cast<double>(pos) * freq);
    }
  }
  return pe;
}

void init_parameter(Parameter& p, std::uint64_t seed) {
  auto ends_with = [&](std::string_view s) { return std::string_view(p.name).ends_with(s); };
  if (ends_with("gamma")) {
    p.value.setOnes();
    return;
  }
  if (ends_with("bias") || ends_with("beta")) {
    p.value.setZero();
    return;
  }
  SplitMix64 rng(seed ^ fnv1a64(p.name));
  const double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
  for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = (2.0 * rng.uniform() - 1.0) * limit;
}

void init_all(ParamStore& store, std::uint64_t seed) {
  for (const auto& p : store.all()) init_parameter(*p, seed);
}

void init_group(ParamStore& store, const std::string& group, std::uint64_t seed) {
  for (auto* p : store.group(group)) init_parameter(*p, seed);
}

}  // namespace sgmt::nn
