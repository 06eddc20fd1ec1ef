#include "simmp/harness/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "simmp/errors.hpp"
#include "simmp/harness/checkpoint.hpp"
#include "simmp/harness/pgm.hpp"
#include "simmp/harness/trainer.hpp"

namespace fs = std::filesystem;

namespace simmp {

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string checkpoint;
  std::string split = "test";
  std::string data_dir;
  std::string losses;
  std::size_t slots = 32;
  bool quiet = false;
};

RunConfig load_config(const Options& o) {
  RunConfig cfg;
  try {
    if (!o.config_path.empty()) cfg = RunConfig::load(o.config_path);
    if (o.seed) cfg.train.seed = *o.seed;
    cfg.validate();
  } catch (const FormatError& e) {
    throw UsageError(e.what());
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

std::string sample_name(const char* kind, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu.pgm", kind, i);
  return buf;
}

GrayImage to_gray(const SyntheticSample& s) {
  GrayImage g{s.mask.height, s.mask.width, std::vector<std::uint8_t>(s.mask.labels.size())};
  for (std::size_t i = 0; i < g.pixels.size(); ++i) {
    g.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(s.image[i], 0.0, 1.0) * 255.0));
  }
  return g;
}

void write_split(const fs::path& dir, const std::vector<SyntheticSample>& samples) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& m = samples[i].mask;
    write_pgm(dir / sample_name("image", i), to_gray(samples[i]));
    write_pgm(dir / sample_name("mask", i), GrayImage{m.height, m.width, m.labels});
  }
}

std::vector<SyntheticSample> read_split(const fs::path& dir, std::size_t classes) {
  std::vector<SyntheticSample> out;
  for (std::size_t i = 0; fs::exists(dir / sample_name("image", i)); ++i) {
    const GrayImage img = read_pgm(dir / sample_name("image", i));
    const GrayImage mask = read_pgm(dir / sample_name("mask", i));
    if (img.height != mask.height || img.width != mask.width) {
      throw FormatError("image/mask extents differ for sample " + std::to_string(i));
    }
    SyntheticSample s{Tensor({img.height, img.width, 1}), LabelMap(img.height, img.width)};
    for (std::size_t p = 0; p < img.pixels.size(); ++p) {
      s.image[p] = img.pixels[p] / 255.0;
      if (mask.pixels[p] >= classes) throw FormatError("mask label outside the class range in sample " + std::to_string(i));
      s.mask.labels[p] = mask.pixels[p];
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw UsageError("no samples found in " + dir.string());
  return out;
}

int gen_data(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  const fs::path dir = o.out_dir;
  const DatasetSplit data = make_dataset(cfg.train, cfg.network.classes);
  write_split(dir / "train", data.train);
  write_split(dir / "test", data.test);
  write_file_atomic(dir / "dataset.txt", cfg.to_text());

  std::vector<SyntheticSample> all = data.train;
  all.insert(all.end(), data.test.begin(), data.test.end());
  const DatasetAudit a = audit_dataset(all, cfg.network.classes);
  out << "class,presence,pixel_fraction\n";
  for (std::size_t c = 0; c < a.presence.size(); ++c) {
    out << c << ',' << format_number(a.presence[c]) << ',' << format_number(a.pixel_fraction[c]) << '\n';
  }
  return kExitOk;
}

int train(const Options& o, std::ostream& err) {
  const RunConfig cfg = load_config(o);
  train_model(cfg, o.out_dir, o.quiet ? nullptr : &err);
  return kExitOk;
}

int eval(const Options& o) {
  LoadedModel model = load_checkpoint(o.checkpoint);
  const auto& cfg = model.config;
  std::vector<SyntheticSample> samples;
  if (!o.data_dir.empty()) {
    samples = read_split(fs::path(o.data_dir) / o.split, cfg.network.classes);
  } else {
    DatasetSplit data = make_dataset(cfg.train, cfg.network.classes);
    samples = o.split == "train" ? std::move(data.train) : std::move(data.test);
  }
  const SegMetrics m = evaluate_model(*model.net, samples);
  fs::create_directories(o.out_dir);
  write_file_atomic(fs::path(o.out_dir) / "eval_metrics.csv", eval_metrics_csv(m));
  return kExitOk;
}

int inspect_memory(const Options& o, std::ostream& out) {
  const LoadedModel model = load_checkpoint(o.checkpoint);
  const auto blocks = std::as_const(*model.net).memory_blocks();
  out << "block,clusters,slots,channels,K,initialized,memory_enabled\n";
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& bank = blocks[i]->bank();
    out << i << ',' << bank.clusters() << ',' << bank.slots() << ',' << bank.channels() << ',' << bank.budget() << ','
        << (bank.initialized() ? 1 : 0) << ',' << (blocks[i]->memory_enabled() ? 1 : 0) << '\n';
  }
  if (o.out_dir.empty()) return kExitOk;

  // Long format: one row per stored value.
  std::string csv = "block,cluster,kind,row,channel,value\n";
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& bank = blocks[i]->bank();
    const std::string prefix = std::to_string(i) + ',';
    for (std::size_t c = 0; c < bank.clusters(); ++c) {
      const Tensor& p = bank.priors(c);
      for (std::size_t r = 0; r < bank.slots(); ++r)
        for (std::size_t ch = 0; ch < bank.channels(); ++ch)
          csv += prefix + std::to_string(c) + ",prior," + std::to_string(r) + ',' + std::to_string(ch) + ',' +
                 format_number(p.at(r, ch)) + '\n';
      for (std::size_t ch = 0; ch < bank.channels(); ++ch)
        csv += prefix + std::to_string(c) + ",core,0," + std::to_string(ch) + ',' + format_number(bank.core(c)[ch]) +
               '\n';
    }
  }
  fs::create_directories(o.out_dir);
  write_file_atomic(fs::path(o.out_dir) / "memory.csv", csv);
  return kExitOk;
}

std::vector<double> read_losses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read loss file " + path);
  std::vector<double> losses;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    double v = 0.0;
    if (!(ss >> v)) {
      if (line.find_first_not_of(" \t\r,") == std::string::npos) continue;
      throw FormatError("loss file: cannot parse '" + line + "'");
    }
    if (!std::isfinite(v)) throw FormatError("loss file: non-finite loss");
    losses.push_back(v);
  }
  return losses;
}

int simulate_k(const Options& o, std::ostream& out) {
  if (o.slots == 0) throw UsageError("--slots must be positive");
  const std::vector<double> losses = read_losses(o.losses);
  std::string csv = "epoch,loss,K\n";
  for (std::size_t e = 0; e < losses.size(); ++e) {
    const std::size_t k = e == 0 ? o.slots / 2 : update_budget(losses[e - 1], losses[e], o.slots);
    csv += std::to_string(e + 1) + ',' + format_number(losses[e]) + ',' + std::to_string(k) + '\n';
  }
  if (o.out_dir.empty()) {
    out << csv;
  } else {
    fs::create_directories(o.out_dir);
    write_file_atomic(fs::path(o.out_dir) / "k_curve.csv", csv);
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sim-MPNet desk-scale trainer"};
  app.require_subcommand(1);
  Options o;

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { o.seed = s; }, "Run seed");
  };
  auto* gen = app.add_subcommand("gen-data", "Write the synthetic train/test split as P5 files");
  gen->add_option("--config", o.config_path, "Run config file")->check(CLI::ExistingFile);
  add_seed(gen);
  gen->add_option("--out", o.out_dir, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train and write logs plus a checkpoint");
  tr->add_option("--config", o.config_path, "Run config file")->check(CLI::ExistingFile);
  add_seed(tr);
  tr->add_option("--out", o.out_dir, "Output directory")->required();
  tr->add_flag("--quiet", o.quiet, "No per-epoch progress on stderr");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", o.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  ev->add_option("--data", o.data_dir, "Directory written by gen-data (default: regenerate)")
      ->check(CLI::ExistingDirectory);
  ev->add_option("--out", o.out_dir, "Output directory")->required();

  auto* im = app.add_subcommand("inspect-memory", "Dump memory banks of a checkpoint");
  im->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  im->add_option("--out", o.out_dir, "Directory for memory.csv");

  auto* sk = app.add_subcommand("simulate-k", "Replay a loss trajectory through the update budget");
  sk->add_option("--losses", o.losses, "One epoch loss per line")->required()->check(CLI::ExistingFile);
  sk->add_option("--slots", o.slots, "Memory slots per cluster");
  sk->add_option("--out", o.out_dir, "Directory for k_curve.csv (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return gen_data(o, out);
    if (*tr) return train(o, err);
    if (*ev) return eval(o);
    if (*im) return inspect_memory(o, out);
    if (*sk) return simulate_k(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace simmp
