// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero if
// any selected criterion fails.
//
//   simmp_acceptance [--only 1,2,...] [--workdir DIR]
//
// Criteria 7-9 train six 40-epoch models plus one repeat and take a long time.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "../common/grad_suite.hpp"
#include "../common/test_util.hpp"
#include "../oracles/oracles.hpp"
#include "CLI11.hpp"
#include "simmp/ds_gim.hpp"
#include "simmp/harness/trainer.hpp"
#include "simmp/memory_bank.hpp"
#include "simmp/metrics.hpp"

using namespace simmp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

void report(int id, const std::string& title, const Outcome& o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << title << "): " << o.detail << std::endl;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

Outcome gradient_suite() {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  double worst = 0.0;
  std::string worst_case;
  for (const auto& c : gradsuite::all_cases()) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const GradCheckResult r = c.run(seed);
      if (r.max_relative_error > worst) {
        worst = r.max_relative_error;
        worst_case = c.name;
      }
      if (!(r.max_relative_error <= 1e-4) || r.entries_checked == 0) {
        o.pass = false;
        std::cerr << "  gradient " << c.name << " seed " << seed << ": " << r.describe() << '\n';
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (secs >= 120.0) o.pass = false;
  o.detail = std::to_string(gradsuite::all_cases().size()) + " cases x 5 seeds, worst rel. error " +
             std::to_string(worst) + " (" + worst_case + "), " + fmt(secs, 1) + " s";
  return o;
}

Outcome budget_formula() {
  Outcome o;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> loss(0.0, 2.5);
  std::uniform_int_distribution<std::size_t> slots(4, 128);
  std::size_t mismatches = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t m = slots(rng);
    PrototypeMemoryBank bank(1, m, 1);
    const double a = loss(rng), b = loss(rng);
    if (compute_update_budget(bank, a, b) != oracle::budget(a, b, m) || bank.budget() != oracle::budget(a, b, m))
      ++mismatches;
  }
  PrototypeMemoryBank b64(1, 64, 1);
  const std::size_t k0 = compute_update_budget(b64, 0.42, 0.42);
  bool initial_ok = true;
  for (std::size_t m : {1, 5, 8, 32, 64}) {
    std::mt19937_64 r(m);
    initial_ok &= init_kmeans(testutil::uniform({20, 2}, r), 2, m, 0).budget() == m / 2;
  }
  o.pass = mismatches == 0 && k0 == 32 && initial_ok;
  o.detail = std::to_string(100 - mismatches) + "/100 pairs exact, K(dL=0, M=64) = " + std::to_string(k0) +
             ", initial K = floor(M/2) " + (initial_ok ? "holds" : "violated");
  return o;
}

Outcome decay_formula() {
  Outcome o;
  const long double want = std::exp(-(0.25L - std::pow(2.0L, -2.5L)));
  const double err = std::fabs(decay_schedule(4)[0] - static_cast<double>(want));
  bool monotone = true, bounded = true;
  for (std::size_t count : {1, 2, 4, 9, 16, 64, 256, 4096}) {
    const auto g = decay_schedule(count);
    for (std::size_t n = 0; n < count; ++n) {
      bounded &= g[n] > std::exp(-0.25);
      if (n) monotone &= g[n] < g[n - 1];
    }
  }
  o.pass = err < 5e-13 && monotone && bounded;
  o.detail = "gamma(0, 4) = " + fmt(decay_schedule(4)[0], 12) + ", |error| " + std::to_string(err) +
             (monotone ? ", strictly decreasing" : ", NOT decreasing") + (bounded ? ", > exp(-0.25)" : ", bound broken");
  return o;
}

Outcome wld_oracle() {
  Outcome o;
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> mdist(2, 8), ndist(0, 8), cdist(1, 6);
  std::size_t instances = 0, exact = 0;
  while (instances < 200) {
    const std::size_t m = mdist(rng), n = ndist(rng), c = cdist(rng);
    const Tensor prior = testutil::uniform({m, c}, rng);
    const Tensor tokens = n ? testutil::uniform({n, c}, rng) : Tensor();
    PrototypeMemoryBank bank(1, m, c);
    bank.set_priors({prior});
    const std::size_t k = std::uniform_int_distribution<std::size_t>(bank.min_budget(), bank.max_budget())(rng);
    const auto rep = apply_wld_update(bank, {tokens}, k);
    ++instances;
    if (n == 0) {
      exact += rep.skipped[0] && bank.priors(0) == prior;
      continue;
    }
    const auto want = oracle::sort_and_splice(prior, tokens, k);
    exact += bank.priors(0) == want.prior && rep.replaced_slots[0] == want.slots && rep.source_tokens[0] == want.tokens;
  }
  o.pass = exact == instances;
  o.detail = std::to_string(exact) + "/" + std::to_string(instances) + " instances match slot indices and contents";
  return o;
}

Outcome metric_oracle() {
  Outcome o;
  std::mt19937_64 rng(99);
  std::size_t dsc_ok = 0, hd_ok = 0, total = 0;
  for (int i = 0; i < 200; ++i) {
    const auto p = i % 3 == 0 ? testutil::random_labels(16, 16, 3, rng) : testutil::random_blobs(16, 16, 3, rng);
    const auto t = testutil::random_blobs(16, 16, 3, rng);
    for (std::uint8_t c = 1; c < 3; ++c) {
      ++total;
      dsc_ok += dsc(p, t, c) == oracle::dsc(p, t, c);
      hd_ok += hd95(p, t, c) == oracle::hd95(p, t, c);
    }
  }
  bool identity = true;
  for (int i = 0; i < 20; ++i) {
    auto m = testutil::random_blobs(16, 16, 2, rng);
    m.at(8, 8) = 1;
    identity &= dsc(m, m, 1) == 1.0 && hd95(m, m, 1) == 0.0;
  }
  o.pass = dsc_ok == total && hd_ok == total && identity;
  o.detail = "DSC " + std::to_string(dsc_ok) + "/" + std::to_string(total) + ", HD95 " + std::to_string(hd_ok) + "/" +
             std::to_string(total) + " exact on 200 pairs; identical masks " + (identity ? "1 / 0" : "WRONG");
  return o;
}

Outcome ds_gim_structure() {
  Outcome o;
  std::mt19937_64 rng(5);
  std::size_t good = 0;
  for (int i = 0; i < 100; ++i) {
    ParameterStore store;
    Initializer init(static_cast<std::uint64_t>(i), InitMode::random);
    DsGimBlock block(store, init, "g", 3, 2);
    const std::size_t h = 2 + 2 * (i % 4), w = 2 + 2 * ((i / 4) % 3);
    const Tensor x = testutil::uniform({h, w, 3}, rng, -3, 3);
    DsGimTrace t;
    const Tensor y = block.forward(Var::constant(x), &t).value();
    bool ok = y.shape() == x.shape() && y.all_finite();
    const std::size_t n = h * w;
    for (std::size_t a = 0; a < n; ++a) {
      ok &= t.distance.at(a, a) == 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        ok &= t.distance.at(a, b) == t.distance.at(b, a);
        ok &= t.near_mask.at(a, b) + t.far_mask.at(a, b) == 1.0;
        ok &= t.near_mask.at(a, b) * t.far_mask.at(a, b) == 0.0;
      }
    }
    good += ok;
  }
  o.pass = good == 100;
  o.detail = std::to_string(good) + "/100 inputs: symmetric zero-diagonal distances, partitioning masks, shape kept, finite";
  return o;
}

struct RunSummary {
  double final_dsc = 0.0;
  std::vector<EpochLog> log;
};

RunSummary train_run(const fs::path& dir, std::uint64_t seed, bool memory) {
  RunConfig cfg;
  cfg.train.seed = seed;
  cfg.network.use_memory = memory;
  std::cerr << "  training " << (memory ? "full" : "ablation") << " seed " << seed << " -> " << dir << '\n';
  const auto start = std::chrono::steady_clock::now();
  const TrainResult r = train_model(cfg, dir);
  std::cerr << "    final held-out mean DSC " << r.log.back().mean_dsc << " in "
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s\n";
  return {r.log.back().mean_dsc, r.log};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string only = "1,2,3,4,5,6,7,8,9";
  std::string workdir = (fs::temp_directory_path() / "simmp_acceptance").string();
  app.add_option("--only", only, "Comma-separated criteria to run");
  app.add_option("--workdir", workdir, "Where criteria 7-9 write their runs");
  CLI11_PARSE(app, argc, argv);

  std::set<int> wanted;
  std::stringstream ss(only);
  for (std::string item; std::getline(ss, item, ',');) wanted.insert(std::stoi(item));

  bool all = true;
  auto run = [&](int id, const std::string& title, auto&& check) {
    if (!wanted.count(id)) return;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    report(id, title, o);
    all &= o.pass;
  };

  run(1, "gradient suite", gradient_suite);
  run(2, "update budget closed form", budget_formula);
  run(3, "decay schedule", decay_formula);
  run(4, "W-LD sort-and-splice oracle", wld_oracle);
  run(5, "DSC and HD95 oracles", metric_oracle);
  run(6, "DS-GIM structure", ds_gim_structure);

  if (wanted.count(7) || wanted.count(8) || wanted.count(9)) {
    const fs::path root(workdir);
    std::vector<RunSummary> full, ablation;
    const auto start = std::chrono::steady_clock::now();
    std::string train_error;
    try {
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        full.push_back(train_run(root / ("full_seed" + std::to_string(seed)), seed, true));
        if (wanted.count(7)) ablation.push_back(train_run(root / ("ablation_seed" + std::to_string(seed)), seed, false));
      }
    } catch (const std::exception& e) {
      train_error = e.what();
    }
    const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;

    run(7, "memory ablation direction", [&] {
      if (!train_error.empty()) return Outcome{false, "training failed: " + train_error};
      std::vector<double> f, a;
      double mean = 0.0;
      for (const auto& r : full) {
        f.push_back(r.final_dsc);
        mean += r.final_dsc / static_cast<double>(full.size());
      }
      for (const auto& r : ablation) a.push_back(r.final_dsc);
      Outcome o;
      o.pass = median(f) >= median(a) && mean >= 0.70;
      o.detail = "full DSC " + fmt(f[0]) + "/" + fmt(f[1]) + "/" + fmt(f[2]) + " (median " + fmt(median(f)) + ", mean " +
                 fmt(mean) + "), ablation " + fmt(a[0]) + "/" + fmt(a[1]) + "/" + fmt(a[2]) + " (median " +
                 fmt(median(a)) + "); " + fmt(minutes, 1) + " min for all runs";
      return o;
    });

    run(8, "K dynamics", [&] {
      if (!train_error.empty()) return Outcome{false, "training failed: " + train_error};
      const std::size_t m = RunConfig{}.network.slots;
      const std::size_t lo = (m + 3) / 4, hi = 3 * m / 4;
      bool clamp = true, settled = true;
      std::size_t worst = 0;
      for (const auto& r : full) {
        const std::size_t epochs = r.log.size(), tail = epochs - epochs / 4;
        for (const auto& e : r.log) {
          clamp &= e.budget >= lo && e.budget <= hi;
          if (e.epoch > tail) {
            const std::size_t dev = e.budget > m / 2 ? e.budget - m / 2 : m / 2 - e.budget;
            worst = std::max(worst, dev);
            settled &= 8 * dev <= m;
          }
        }
      }
      return Outcome{clamp && settled, std::string("K within [") + std::to_string(lo) + ", " + std::to_string(hi) +
                                           "] " + (clamp ? "always" : "NOT always") + ", max |K - M/2| over last 25% = " +
                                           std::to_string(worst) + " (limit " + fmt(m / 8.0, 1) + ")"};
    });

    run(9, "bitwise determinism", [&] {
      if (!train_error.empty()) return Outcome{false, "training failed: " + train_error};
      const fs::path a = root / "full_seed0", b = root / "full_seed0_repeat";
      train_run(b, 0, true);
      std::string detail;
      bool same = true;
      for (const char* f : {"config.txt", "train_log.csv", "metrics.csv", "checkpoint.bin"}) {
        const bool eq = fs::exists(a / f) && read_bytes(a / f) == read_bytes(b / f);
        same &= eq;
        detail += std::string(f) + (eq ? " identical, " : " DIFFERS, ");
      }
      return Outcome{same, detail + "repeat of the full model, seed 0"};
    });
  }
  return all ? 0 : 1;
}
