#include "simmp/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "simmp/errors.hpp"

namespace simmp {

namespace {

std::string trim(std::string s) {
  s.erase(0, s.find_first_not_of(" \t\r"));
  s.erase(s.find_last_not_of(" \t\r") + 1);
  return s;
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size() || !std::isfinite(v)) {
    throw ContractError("config: " + key + " expects a finite number, got '" + text + "'");
  }
  return v;
}

template <class T>
T parse_unsigned(const std::string& key, const std::string& text) {
  T v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ContractError("config: " + key + " expects a non-negative integer, got '" + text + "'");
  }
  return v;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ContractError("config: epochs must be positive");
  if (batch_size == 0) throw ContractError("config: batch_size must be positive");
  if (train_count == 0 || test_count == 0) throw ContractError("config: train_count and test_count must be positive");
  if (height == 0 || width == 0) throw ContractError("config: image extents must be positive");
  if (!(learning_rate > 0.0)) throw ContractError("config: learning_rate must be positive");
  if (weight_decay < 0.0) throw ContractError("config: weight_decay must be non-negative");
  if (dice_weight < 0.0 || ce_weight < 0.0 || dice_weight + ce_weight == 0.0) {
    throw ContractError("config: loss weights must be non-negative and not both zero");
  }
}

bool TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "epochs") epochs = parse_unsigned<std::size_t>(key, value);
  else if (key == "batch_size") batch_size = parse_unsigned<std::size_t>(key, value);
  else if (key == "learning_rate") learning_rate = parse_double(key, value);
  else if (key == "weight_decay") weight_decay = parse_double(key, value);
  else if (key == "dice_weight") dice_weight = parse_double(key, value);
  else if (key == "ce_weight") ce_weight = parse_double(key, value);
  else if (key == "seed") seed = parse_unsigned<std::uint64_t>(key, value);
  else if (key == "train_count") train_count = parse_unsigned<std::size_t>(key, value);
  else if (key == "test_count") test_count = parse_unsigned<std::size_t>(key, value);
  else if (key == "height") height = parse_unsigned<std::size_t>(key, value);
  else if (key == "width") width = parse_unsigned<std::size_t>(key, value);
  else if (key == "augment") {
    if (value == "true" || value == "1") augment = true;
    else if (value == "false" || value == "0") augment = false;
    else throw ContractError("config: augment expects true/false, got '" + value + "'");
  } else {
    return false;
  }
  return true;
}

void RunConfig::validate() const {
  train.validate();
  network.validate();
  if (network.classes < 2 || network.classes > 5) throw ContractError("config: classes must be in [2, 5]");
  if (network.in_channels != 1) throw ContractError("config: the synthetic data is single-channel");
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << "epochs = " << train.epochs << '\n'
      << "batch_size = " << train.batch_size << '\n'
      << "learning_rate = " << fmt(train.learning_rate) << '\n'
      << "weight_decay = " << fmt(train.weight_decay) << '\n'
      << "dice_weight = " << fmt(train.dice_weight) << '\n'
      << "ce_weight = " << fmt(train.ce_weight) << '\n'
      << "seed = " << train.seed << '\n'
      << "train_count = " << train.train_count << '\n'
      << "test_count = " << train.test_count << '\n'
      << "height = " << train.height << '\n'
      << "width = " << train.width << '\n'
      << "augment = " << (train.augment ? "true" : "false") << '\n'
      << network.to_text();
  return out.str();
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (!cfg.train.set(key, value) && !cfg.network.set(key, value)) {
      throw FormatError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

}  // namespace simmp
