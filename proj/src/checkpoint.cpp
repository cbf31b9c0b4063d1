// SPDX-License-Identifier: Apache-2.0

#include "sgmt/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "sgmt/error.hpp"
#include "sgmt/io.hpp"
#include "sgmt/random.hpp"

namespace sgmt {
namespace {

constexpr std::string_view kFormat = "sgmt-checkpoint-1";

std::string to_hex(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

void put_f32(std::string& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

float get_f32(std::string_view bytes, std::size_t at) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) {
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + static_cast<std::size_t>(i)])) << (8 * i);
  }
  return std::bit_cast<float>(bits);
}

}  // namespace

Checkpoint snapshot(const ParamStore& store, nlohmann::json meta) {
  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  for (const auto& p : store.all()) {
    TensorBlob blob;
    blob.rows = p->value.rows();
    blob.cols = p->value.cols();
    blob.data.resize(static_cast<std::size_t>(p->value.size()));
    for (Index i = 0; i < p->value.size(); ++i) blob.data[static_cast<std::size_t>(i)] = static_cast<float>(p->value.data()[i]);
    ckpt.order.push_back(p->name);
    ckpt.tensors.emplace(p->name, std::move(blob));
  }
  return ckpt;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  using nlohmann::json;
  std::string blobs;
  json tensors = json::object();
  for (const auto& name : ckpt.order) {
    const auto& t = ckpt.tensors.at(name);
    tensors[name] = {{"shape", {t.rows, t.cols}}, {"dtype", "f32"}, {"offset", blobs.size()}};
    for (float f : t.data) put_f32(blobs, f);
  }
  json manifest;
  manifest["format"] = kFormat;
  manifest["meta"] = ckpt.meta;
  manifest["tensors"] = std::move(tensors);
  manifest["blob_bytes"] = blobs.size();
  manifest["blob_fnv1a64"] = to_hex(fnv1a64(blobs));
  return manifest.dump() + "\n" + blobs;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  using nlohmann::json;
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos) throw ValidationError("checkpoint: missing manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(0, newline));
  } catch (const json::exception&) {
    throw ValidationError("checkpoint: manifest is not valid JSON");
  }
  const std::string_view blobs = bytes.substr(newline + 1);
  Checkpoint ckpt;
  try {
    if (manifest.at("format").get<std::string>() != kFormat) throw ValidationError("checkpoint: unknown format");
    if (manifest.at("blob_bytes").get<std::size_t>() != blobs.size()) {
      throw ValidationError("checkpoint: truncated or oversized blob section");
    }
    if (manifest.at("blob_fnv1a64").get<std::string>() != to_hex(fnv1a64(blobs))) {
      throw ValidationError("checkpoint: blob checksum mismatch");
    }
    ckpt.meta = manifest.at("meta");
    // Recover blob order from offsets.
    std::vector<std::pair<std::size_t, std::string>> by_offset;
    for (const auto& [name, info] : manifest.at("tensors").items()) {
      if (info.at("dtype").get<std::string>() != "f32") throw ValidationError("checkpoint: unsupported dtype");
      const auto& shape = info.at("shape");
      TensorBlob t;
      t.rows = shape.at(0).get<Index>();
      t.cols = shape.at(1).get<Index>();
      const auto offset = info.at("offset").get<std::size_t>();
      const auto count = static_cast<std::size_t>(t.rows * t.cols);
      if (t.rows < 0 || t.cols < 0 || offset + 4 * count > blobs.size()) {
        throw ValidationError("checkpoint: tensor " + name + " out of bounds");
      }
      t.data.resize(count);
      for (std::size_t i = 0; i < count; ++i) t.data[i] = get_f32(blobs, offset + 4 * i);
      by_offset.emplace_back(offset, name);
      ckpt.tensors.emplace(name, std::move(t));
    }
    std::sort(by_offset.begin(), by_offset.end());
    for (auto& [_, name] : by_offset) ckpt.order.push_back(std::move(name));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint: bad manifest: ") + e.what());
  }
  return ckpt;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(ckpt));
}

void load_parameters(ParamStore& store, const Checkpoint& ckpt) {
  for (const auto& p : store.all()) {
    auto it = ckpt.tensors.find(p->name);
    if (it == ckpt.tensors.end()) throw ValidationError("checkpoint: missing tensor " + p->name);
    const auto& t = it->second;
    if (t.rows != p->value.rows() || t.cols != p->value.cols()) {
      throw ValidationError("checkpoint: shape mismatch for " + p->name);
    }
    for (Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = static_cast<double>(t.data[static_cast<std::size_t>(i)]);
  }
}

bool group_matches(const ParamStore& store, const Checkpoint& ckpt, const std::string& group) {
  for (auto* p : store.group(group)) {
    auto it = ckpt.tensors.find(p->name);
    if (it == ckpt.tensors.end()) return false;
    const auto& t = it->second;
    if (t.rows != p->value.rows() || t.cols != p->value.cols()) return false;
    for (Index i = 0; i < p->value.size(); ++i) {
      const float a = static_cast<float>(p->value.data()[i]);
      const float b = t.data[static_cast<std::size_t>(i)];
      if (std::bit_cast<std::uint32_t>(a) != std::bit_cast<std::uint32_t>(b)) return false;
      // The in-memory value must itself be exactly representable.
      if (static_cast<double>(b) != p->value.data()[i]) return false;
    }
  }
  return true;
}

std::uint64_t group_checksum(const ParamStore& store, const std::string& group) {
  std::string bytes;
  for (auto* p : store.group(group)) {
    bytes += p->name;
    const auto* raw = reinterpret_cast<const char*>(p->value.data());
    bytes.append(raw, static_cast<std::size_t>(p->value.size()) * sizeof(double));
  }
  return fnv1a64(bytes);
}

}  // namespace sgmt
