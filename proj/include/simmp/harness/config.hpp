#pragma once

// Flat `key = value` run configuration: training keys plus every NetworkConfig key.

#include <cstdint>
#include <filesystem>
#include <string>

#include "simmp/metrics.hpp"
#include "simmp/simmpnet.hpp"

namespace simmp {

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 4;
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  double dice_weight = kDiceWeight;
  double ce_weight = kCrossEntropyWeight;
  std::uint64_t seed = 0;
  std::size_t train_count = 200;
  std::size_t test_count = 50;
  std::size_t height = 64, width = 64;
  bool augment = true;

  void validate() const;
  bool set(const std::string& key, const std::string& value);
};

struct RunConfig {
  TrainConfig train;
  NetworkConfig network;

  void validate() const;
  std::string to_text() const;
  // FormatError for syntax or unknown keys, ContractError for bad values.
  static RunConfig from_text(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace simmp
