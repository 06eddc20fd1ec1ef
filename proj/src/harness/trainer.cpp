#include "simmp/harness/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "simmp/errors.hpp"
#include "simmp/harness/checkpoint.hpp"
#include "simmp/harness/optim.hpp"
#include "simmp/ops.hpp"

namespace simmp {

namespace {

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double weight_norm(const ParameterStore& store) {
  double s = 0.0;
  for (const auto& [name, p] : store.entries())
    for (double v : p.value().data()) s += v * v;
  return std::sqrt(s);
}

void write_diagnostics(const std::filesystem::path& out_dir, const ParameterStore& store, std::size_t epoch,
                       std::size_t batch, std::size_t last_budget, const std::string& what) {
  std::ostringstream d;
  d << "error = " << what << '\n'
    << "epoch = " << epoch << '\n'
    << "batch = " << batch << '\n'
    << "last_K = " << last_budget << '\n'
    << "weight_norm = " << format_number(weight_norm(store)) << '\n';
  for (const auto& [name, p] : store.entries()) {
    if (!p.value().all_finite()) d << "non_finite_parameter = " << name << '\n';
  }
  write_file_atomic(out_dir / "diagnostics.txt", d.str());
}

std::string metrics_rows(std::size_t epoch, const SegMetrics& m) {
  std::string out;
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    out += std::to_string(epoch) + ',' + std::to_string(c) + ',' + format_number(m.per_class[c].dsc) + ',' +
           format_optional(m.per_class[c].hd95) + '\n';
  }
  return out;
}

}  // namespace

std::uint64_t model_seed(std::uint64_t seed) { return mix(seed ^ 0x6D6F64656Cull); }
std::uint64_t shuffle_seed(std::uint64_t seed) { return mix(seed ^ 0x73687566ull); }

DatasetSplit make_dataset(const TrainConfig& config, std::size_t classes) {
  auto all = generate_synthetic_dataset(config.train_count + config.test_count, config.height, config.width, classes,
                                        config.seed);
  DatasetSplit split;
  split.test.assign(std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(config.train_count)),
                    std::make_move_iterator(all.end()));
  all.resize(config.train_count);
  split.train = std::move(all);
  return split;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

std::string train_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,loss,K,mean_dsc,mean_hd95\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + ',' + format_number(e.loss) + ',' + std::to_string(e.budget) + ',' +
           format_number(e.mean_dsc) + ',' + format_optional(e.mean_hd95) + '\n';
  }
  return out;
}

std::string eval_metrics_csv(const SegMetrics& m) {
  std::string out = "class,dsc,hd95\n";
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    out += std::to_string(c) + ',' + format_number(m.per_class[c].dsc) + ',' + format_optional(m.per_class[c].hd95) +
           '\n';
  }
  out += "mean," + format_number(m.mean_dsc) + ',' + format_optional(m.mean_hd95) + '\n';
  return out;
}

SegMetrics evaluate_model(SimMpNet& net, const std::vector<SyntheticSample>& samples) {
  net.set_training(false);
  net.set_collecting(false);
  std::vector<LabelMap> preds, truths;
  preds.reserve(samples.size());
  truths.reserve(samples.size());
  for (const auto& s : samples) {
    preds.push_back(argmax_labels(net.forward(s.image).value()));
    truths.push_back(s.mask);
  }
  return evaluate_segmentation(preds, truths, net.config().classes);
}

TrainResult train_model(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream* progress) {
  config.validate();
  const TrainConfig& tc = config.train;
  std::filesystem::create_directories(out_dir);
  write_file_atomic(out_dir / "config.txt", config.to_text());

  const DatasetSplit data = make_dataset(tc, config.network.classes);
  SimMpNet net(config.network, model_seed(tc.seed));
  AdamW opt(net.parameters(), {tc.learning_rate, 0.9, 0.999, 1e-8, tc.weight_decay});
  std::mt19937_64 rng(shuffle_seed(tc.seed));

  const std::size_t slots = config.network.slots;
  std::size_t budget = slots / 2;
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batches = (order.size() + tc.batch_size - 1) / tc.batch_size;

  TrainResult result;
  std::string metrics = "epoch,class,dsc,hd95\n";
  double prev_loss = 0.0;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    net.set_training(true);
    double loss_sum = 0.0;
    std::size_t batch = 0;
    try {
      for (batch = 0; batch < batches; ++batch) {
        const std::size_t lo = batch * tc.batch_size, hi = std::min(order.size(), lo + tc.batch_size);
        const double inv = 1.0 / static_cast<double>(hi - lo);
        net.set_collecting(batch + 1 == batches);
        net.parameters().zero_grad();
        double batch_loss = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
          const SyntheticSample& raw = data.train[order[i]];
          const unsigned sym =
              tc.augment ? static_cast<unsigned>(std::uniform_int_distribution<int>(0, 7)(rng)) : 0u;
          const SyntheticSample sample = augment(raw, sym);
          Var loss = combined_loss(net.forward(sample.image), sample.mask, tc.dice_weight, tc.ce_weight);
          const double l = loss.value().item();
          if (!std::isfinite(l)) throw NonFiniteError("loss is " + format_number(l));
          backward(scale(loss, inv));
          batch_loss += l * inv;
        }
        opt.step();
        loss_sum += batch_loss;
      }
    } catch (const NonFiniteError& e) {
      write_diagnostics(out_dir, net.parameters(), epoch, batch, budget, e.what());
      throw;
    }
    net.set_collecting(false);

    const double epoch_loss = loss_sum / static_cast<double>(batches);
    if (epoch > 1) budget = update_budget(prev_loss, epoch_loss, slots);
    for (auto* b : net.memory_blocks()) {
      b->bank().record_epoch_loss(epoch_loss);
      if (epoch > 1) compute_update_budget(b->bank(), prev_loss, epoch_loss);
    }
    net.apply_memory_update(budget);
    prev_loss = epoch_loss;

    result.final_metrics = evaluate_model(net, data.test);
    result.log.push_back({epoch, epoch_loss, budget, result.final_metrics.mean_dsc, result.final_metrics.mean_hd95});
    metrics += metrics_rows(epoch, result.final_metrics);
    write_file_atomic(out_dir / "train_log.csv", train_log_csv(result.log));
    write_file_atomic(out_dir / "metrics.csv", metrics);

    if (progress) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      char line[160];
      std::snprintf(line, sizeof line, "epoch %zu/%zu  loss %.5f  K %zu  test dsc %.4f  (%.1fs)\n", epoch, tc.epochs,
                    epoch_loss, budget, result.final_metrics.mean_dsc, secs);
      *progress << line << std::flush;
    }
  }
  save_checkpoint(out_dir / "checkpoint.bin", config, net);
  return result;
}

}  // namespace simmp
