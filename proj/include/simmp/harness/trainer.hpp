#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "simmp/harness/config.hpp"
#include "simmp/harness/synthetic.hpp"
#include "simmp/metrics.hpp"
#include "simmp/simmpnet.hpp"

namespace simmp {

struct DatasetSplit {
  std::vector<SyntheticSample> train, test;
};

// train_count + test_count samples from one generator stream, split in order.
DatasetSplit make_dataset(const TrainConfig& config, std::size_t classes);

// Derived stream seeds, so the data, weights and batch order never share a generator.
std::uint64_t model_seed(std::uint64_t seed);
std::uint64_t shuffle_seed(std::uint64_t seed);

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::size_t budget = 0;
  double mean_dsc = 0.0;
  std::optional<double> mean_hd95;
};

struct TrainResult {
  std::vector<EpochLog> log;
  SegMetrics final_metrics;
};

// Writes config.txt, train_log.csv, metrics.csv and checkpoint.bin under out_dir.
// A non-finite loss writes diagnostics.txt and rethrows as NonFiniteError.
TrainResult train_model(const RunConfig& config, const std::filesystem::path& out_dir,
                        std::ostream* progress = nullptr);

// Forward passes only; the network is left in evaluation mode.
SegMetrics evaluate_model(SimMpNet& net, const std::vector<SyntheticSample>& samples);

std::string format_number(double v);
std::string format_optional(const std::optional<double>& v);
std::string train_log_csv(const std::vector<EpochLog>& log);
// Header plus one row per class and a final "mean" row.
std::string eval_metrics_csv(const SegMetrics& metrics);

}  // namespace simmp
