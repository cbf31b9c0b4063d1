// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: one line of JSON manifest, then raw little-endian
// float32 tensor blobs.
//
//   {"blob_bytes":N,"blob_fnv1a64":"<hex>","format":"sgmt-checkpoint-1",
//    "meta":{...},"tensors":{"<name>":{"dtype":"f32","offset":B,"shape":[r,c]}}}\n
//   <N bytes of tensor data, offsets relative to the first blob byte>
//
// Encoding is canonical, so decode followed by encode reproduces the input
// bytes exactly.

#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sgmt/tensor.hpp"

namespace sgmt {

struct TensorBlob {
  Index rows = 0;
  Index cols = 0;
  std::vector<float> data;

  friend bool operator==(const TensorBlob&, const TensorBlob&) = default;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::string> order;  // blob order
  std::map<std::string, TensorBlob> tensors;
};

Checkpoint snapshot(const ParamStore& store, nlohmann::json meta);
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

Checkpoint read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// Copies every store tensor from the checkpoint (widened to double). Throws
// if a tensor is missing or has the wrong shape.
void load_parameters(ParamStore& store, const Checkpoint& ckpt);

// True iff every tensor of `group` equals the checkpoint's float32 copy
// exactly (so values not representable as float32 never match).
bool group_matches(const ParamStore& store, const Checkpoint& ckpt, const std::string& group);

// FNV-1a over the raw bytes of every tensor in the group (in store order).
std::uint64_t group_checksum(const ParamStore& store, const std::string& group);

}  // namespace sgmt
