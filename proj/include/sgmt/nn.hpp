// SPDX-License-Identifier: Apache-2.0
//
// Parameter bundles and tape-level building blocks shared by the adapter and
// the backbone.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgmt/random.hpp"
#include "sgmt/tensor.hpp"

namespace sgmt::nn {

struct LinearParams {
  Parameter* weight = nullptr;  // [out x in]
  Parameter* bias = nullptr;    // [1 x out]
};

struct LayerNormParams {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
};

struct AttentionParams {
  LinearParams query, key, value, output;
};

LinearParams add_linear(ParamStore& store, const std::string& name, const std::string& group, Index in,
                        Index out);
LayerNormParams add_layer_norm(ParamStore& store, const std::string& name, const std::string& group,
                               Index dim);
AttentionParams add_attention(ParamStore& store, const std::string& name, const std::string& group,
                              Index dim);

Var apply(Tape& t, Var x, const LinearParams& p);
Var apply(Tape& t, Var x, const LayerNormParams& p);

// Scaled dot-product attention with `heads` heads over query rows and
// key/value rows. mask (optional) is [Tq x Tk] holding 0 or -inf. When
// weights_out is given it receives each head's [Tq x Tk] attention matrix.
Var multi_head_attention(Tape& t, Var query, Var key_value, const AttentionParams& p, int heads,
                         const Matrix* mask = nullptr, std::vector<Matrix>* weights_out = nullptr);

// Inverted dropout with a mask drawn from rng.
Var dropout(Tape& t, Var x, double rate, SplitMix64& rng);

Matrix sinusoidal_positions(Index length, Index dim);

// Parameter initialisation. Each tensor draws from its own stream seeded by
// (seed, name), so adding a tensor never shifts another tensor's values.
// Names ending in "gamma" become ones; "bias" and "beta" become zeros;
// everything else is Xavier-uniform over (rows, cols).
void init_parameter(Parameter& p, std::uint64_t seed);
void init_all(ParamStore& store, std::uint64_t seed);
void init_group(ParamStore& store, const std::string& group, std::uint64_t seed);

}  // namespace sgmt::nn
