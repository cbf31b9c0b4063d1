// SPDX-License-Identifier: Apache-2.0

#include <charconv>
#include <cmath>

#include "sgmt/error.hpp"
#include "sgmt/io.hpp"
#include "sgmt/training.hpp"

namespace sgmt {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ValidationError("config: " + key + " expects a number, got '" + v + "'");
  }
}

long to_long(const std::string& key, const std::string& v) {
  long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ValidationError("config: " + key + " expects an integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("config: " + key + " expects true/false, got '" + v + "'");
}

}  // namespace

Stage parse_stage(std::string_view name) {
  if (name == "one") return Stage::One;
  if (name == "two") return Stage::Two;
  if (name == "one-multimodal") return Stage::OneStageMultimodal;
  throw ValidationError("unknown stage '" + std::string(name) + "' (expected one, two or one-multimodal)");
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::One: return "one";
    case Stage::Two: return "two";
    case Stage::OneStageMultimodal: return "one-multimodal";
  }
  return "one";
}

double TrainConfig::initial_lr() const {
  if (learning_rate) return *learning_rate;
  return stage == Stage::Two ? 1e-5 : 2e-5;
}

void TrainConfig::validate() const {
  if (!(initial_lr() > 0.0)) throw ValidationError("learning rate must be > 0");
  if (lr_end < 0.0) throw ValidationError("lr_end must be >= 0");
  if (power <= 0.0) throw ValidationError("power must be > 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (patience < 1) throw ValidationError("patience must be >= 1");
  if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
  if (dim < 1 || layers < 1 || heads < 1) throw ValidationError("dim, layers and heads must be >= 1");
  if (dim % heads != 0) throw ValidationError("dim must be divisible by heads");
}

TrainConfig parse_train_config(std::string_view text) {
  TrainConfig c;
  auto lines = io::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(i + 1) + ": expected key=value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key == "stage") {
      c.stage = parse_stage(value);
    } else if (key == "lr") {
      c.learning_rate = to_double(key, value);
    } else if (key == "lr_end") {
      c.lr_end = to_double(key, value);
    } else if (key == "power") {
      c.power = to_double(key, value);
    } else if (key == "batch_size") {
      c.batch_size = static_cast<int>(to_long(key, value));
    } else if (key == "patience") {
      c.patience = static_cast<int>(to_long(key, value));
    } else if (key == "max_epochs") {
      c.max_epochs = static_cast<int>(to_long(key, value));
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(to_long(key, value));
    } else if (key == "no_gate") {
      c.no_gate = to_bool(key, value);
    } else if (key == "skip_stage1") {
      c.skip_stage1 = to_bool(key, value);
    } else if (key == "unfreeze_encoder") {
      c.unfreeze_encoder = to_bool(key, value);
    } else if (key == "dim") {
      c.dim = static_cast<int>(to_long(key, value));
    } else if (key == "layers") {
      c.layers = static_cast<int>(to_long(key, value));
    } else if (key == "heads") {
      c.heads = static_cast<int>(to_long(key, value));
    } else if (key == "provider") {
      c.provider = value;
    } else {
      throw ValidationError("config line " + std::to_string(i + 1) + ": unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

double polynomial_lr(double lr0, double lr_end, double power, long step, long total_steps) {
  if (total_steps <= 0) return lr0;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return (lr0 - lr_end) * std::pow(1.0 - frac, power) + lr_end;
}

}  // namespace sgmt
