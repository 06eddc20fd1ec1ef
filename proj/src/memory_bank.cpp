#include "simmp/memory_bank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "simmp/binary_io.hpp"
#include "simmp/errors.hpp"
#include "simmp/ops.hpp"

namespace simmp {

namespace {

constexpr char kMagic[4] = {'S', 'M', 'P', 'B'};
constexpr int kMaxLloydIterations = 100;
constexpr int kMaxEmptyClusterReseeds = 16;
constexpr double kFillJitter = 1e-3;

double squared_distance(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Index of the nearest centroid; ties go to the lower index.
std::size_t nearest(const double* x, const std::vector<std::vector<double>>& centroids, std::size_t c,
                    double* dist = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < centroids.size(); ++j) {
    const double d = squared_distance(x, centroids[j].data(), c);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

std::vector<std::vector<double>> kmeanspp_seeds(const Tensor& tokens, std::size_t k, std::mt19937_64& rng) {
  const std::size_t t = tokens.dim(0), c = tokens.dim(1);
  std::vector<std::vector<double>> centroids;
  auto row = [&](std::size_t i) { return tokens.raw() + i * c; };
  std::uniform_int_distribution<std::size_t> pick(0, t - 1);
  const std::size_t first = pick(rng);
  centroids.emplace_back(row(first), row(first) + c);
  std::vector<double> d2(t);
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      nearest(row(i), centroids, c, &d2[i]);
      total += d2[i];
    }
    std::size_t chosen = pick(rng);
    if (total > 0.0) {
      const double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      chosen = t - 1;
      for (std::size_t i = 0; i < t; ++i) {
        acc += d2[i];
        if (acc > target) {
          chosen = i;
          break;
        }
      }
    }
    centroids.emplace_back(row(chosen), row(chosen) + c);
  }
  return centroids;
}

}  // namespace

PrototypeMemoryBank::PrototypeMemoryBank(std::size_t clusters, std::size_t slots, std::size_t channels)
    : clusters_(clusters), slots_(slots), channels_(channels), budget_(slots / 2) {
  if (clusters == 0 || slots == 0 || channels == 0) {
    throw ContractError("memory bank extents must be positive");
  }
  for (std::size_t i = 0; i < clusters; ++i) {
    priors_.emplace_back(Shape{slots, channels});
    cores_.emplace_back(Shape{channels});
  }
}

std::size_t PrototypeMemoryBank::min_budget() const { return (slots_ + 3) / 4; }
std::size_t PrototypeMemoryBank::max_budget() const { return (3 * slots_) / 4; }

void PrototypeMemoryBank::initialize_kmeans(const Tensor& tokens, std::uint64_t seed) {
  if (initialized_) throw StateError("memory bank is already initialized");
  if (tokens.rank() != 2 || tokens.dim(1) != channels_) {
    throw DimensionError("init_kmeans: tokens " + shape_str(tokens.shape()) + " vs bank channels " +
                         std::to_string(channels_));
  }
  const std::size_t t = tokens.dim(0), c = channels_, k = clusters_;
  if (t < k) {
    throw InsufficientDataError("init_kmeans: " + std::to_string(t) + " tokens for " + std::to_string(k) +
                                " clusters");
  }
  std::mt19937_64 rng(seed);
  auto centroids = kmeanspp_seeds(tokens, k, rng);
  auto row = [&](std::size_t i) { return tokens.raw() + i * c; };

  std::vector<std::size_t> labels(t, 0);
  std::vector<double> dist(t, 0.0);
  int reseeds = 0;
  for (int iter = 0; iter < kMaxLloydIterations; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < t; ++i) {
      const std::size_t l = nearest(row(i), centroids, c, &dist[i]);
      if (l != labels[i]) changed = true;
      labels[i] = l;
    }
    std::vector<std::size_t> counts(k, 0);
    for (auto l : labels) ++counts[l];
    const auto empty = std::find(counts.begin(), counts.end(), 0u);
    if (empty != counts.end()) {
      if (++reseeds > kMaxEmptyClusterReseeds) {
        throw InsufficientDataError("init_kmeans: cluster stayed empty after re-seeding");
      }
      const std::size_t far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      centroids[static_cast<std::size_t>(empty - counts.begin())].assign(row(far), row(far) + c);
      continue;
    }
    if (!changed) break;
    for (auto& cen : centroids) std::fill(cen.begin(), cen.end(), 0.0);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < c; ++j) centroids[labels[i]][j] += row(i)[j];
    for (std::size_t l = 0; l < k; ++l)
      for (auto& v : centroids[l]) v /= static_cast<double>(counts[l]);
  }
  for (std::size_t i = 0; i < t; ++i) {
    labels[i] = nearest(row(i), centroids, c, &dist[i]);
  }

  std::normal_distribution<double> jitter(0.0, kFillJitter);
  for (std::size_t l = 0; l < k; ++l) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < t; ++i)
      if (labels[i] == l) members.push_back(i);
    if (members.empty()) throw InsufficientDataError("init_kmeans: empty cluster after convergence");
    std::stable_sort(members.begin(), members.end(),
                     [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    Tensor& prior = priors_[l];
    for (std::size_t s = 0; s < slots_; ++s) {
      const double* src = row(members[s % members.size()]);
      const bool copy = s >= members.size();
      for (std::size_t j = 0; j < c; ++j) prior[s * c + j] = src[j] + (copy ? jitter(rng) : 0.0);
    }
    for (std::size_t j = 0; j < c; ++j) cores_[l][j] = centroids[l][j];
  }
  budget_ = slots_ / 2;
  initialized_ = true;
}

void PrototypeMemoryBank::set_priors(std::vector<Tensor> priors) {
  if (priors.size() != clusters_) throw DimensionError("set_priors: cluster count mismatch");
  for (const auto& p : priors) {
    if (p.shape() != Shape{slots_, channels_}) {
      throw DimensionError("set_priors: prior shape " + shape_str(p.shape()));
    }
    if (!p.all_finite()) throw NonFiniteError("set_priors: non-finite prior");
  }
  priors_ = std::move(priors);
  refresh_cores();
  initialized_ = true;
}

void PrototypeMemoryBank::refresh_cores() {
  for (std::size_t l = 0; l < clusters_; ++l) {
    Tensor& core = cores_[l];
    core.fill(0.0);
    for (std::size_t s = 0; s < slots_; ++s)
      for (std::size_t j = 0; j < channels_; ++j) core[j] += priors_[l][s * channels_ + j];
    for (std::size_t j = 0; j < channels_; ++j) core[j] /= static_cast<double>(slots_);
  }
}

void PrototypeMemoryBank::record_epoch_loss(double loss) {
  if (!std::isfinite(loss)) throw ContractError("record_epoch_loss: non-finite loss");
  loss_prev_ = loss_curr_;
  has_prev_ = has_curr_;
  loss_curr_ = loss;
  has_curr_ = true;
}

std::vector<std::uint8_t> PrototypeMemoryBank::serialize() const {
  io::ByteWriter w;
  for (char ch : kMagic) w.u8(static_cast<std::uint8_t>(ch));
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(clusters_));
  w.u32(static_cast<std::uint32_t>(slots_));
  w.u32(static_cast<std::uint32_t>(channels_));
  w.u32(static_cast<std::uint32_t>(budget_));
  w.u8(static_cast<std::uint8_t>((initialized_ ? 1 : 0) | (has_prev_ ? 2 : 0) | (has_curr_ ? 4 : 0)));
  w.f64(loss_prev_);
  w.f64(loss_curr_);
  for (const auto& p : priors_) w.f64s(p.data());
  for (const auto& c : cores_) w.f64s(c.data());
  return w.take();
}

PrototypeMemoryBank PrototypeMemoryBank::deserialize(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  for (char ch : kMagic) {
    if (r.u8() != static_cast<std::uint8_t>(ch)) throw FormatError("memory bank: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw FormatError("memory bank: unsupported version " + std::to_string(version));
  }
  const std::size_t k = r.u32(), m = r.u32(), c = r.u32();
  if (k == 0 || m == 0 || c == 0) throw FormatError("memory bank: zero extent in header");
  const std::size_t payload = (k * m * c + k * c) * sizeof(double) + 4 + 1 + 16;
  if (r.remaining() < payload) throw FormatError("truncated payload");
  PrototypeMemoryBank bank(k, m, c);
  bank.budget_ = r.u32();
  const std::uint8_t flags = r.u8();
  bank.initialized_ = flags & 1;
  bank.has_prev_ = flags & 2;
  bank.has_curr_ = flags & 4;
  bank.loss_prev_ = r.f64();
  bank.loss_curr_ = r.f64();
  for (auto& p : bank.priors_) r.f64s(p.data());
  for (auto& core : bank.cores_) r.f64s(core.data());
  if (r.remaining() != 0) throw FormatError("memory bank: trailing bytes");
  for (const auto& p : bank.priors_)
    if (!p.all_finite()) throw FormatError("memory bank: non-finite prior");
  return bank;
}

PrototypeMemoryBank PrototypeMemoryBank::deserialize(std::span<const std::uint8_t> bytes, std::size_t clusters,
                                                     std::size_t slots, std::size_t channels) {
  PrototypeMemoryBank bank = deserialize(bytes);
  if (bank.clusters() != clusters || bank.slots() != slots || bank.channels() != channels) {
    throw FormatError("memory bank: extent mismatch, file has k=" + std::to_string(bank.clusters()) +
                      " M=" + std::to_string(bank.slots()) + " C=" + std::to_string(bank.channels()) +
                      ", expected k=" + std::to_string(clusters) + " M=" + std::to_string(slots) +
                      " C=" + std::to_string(channels));
  }
  return bank;
}

PrototypeMemoryBank init_kmeans(const Tensor& tokens, std::size_t clusters, std::size_t slots, std::uint64_t seed) {
  if (tokens.rank() != 2) throw DimensionError("init_kmeans: tokens must be T x C");
  PrototypeMemoryBank bank(clusters, slots, tokens.dim(1));
  bank.initialize_kmeans(tokens, seed);
  return bank;
}

ClusterAssignment assign_tokens(const PrototypeMemoryBank& bank, const Tensor& queries) {
  if (!bank.initialized()) throw StateError("assign_tokens: memory bank is not initialized");
  if (queries.rank() != 2 || queries.dim(1) != bank.channels()) {
    throw DimensionError("assign_tokens: queries " + shape_str(queries.shape()) + " vs bank channels " +
                         std::to_string(bank.channels()));
  }
  const std::size_t t = queries.dim(0), c = queries.dim(1);
  ClusterAssignment out;
  out.labels.resize(t);
  out.groups.resize(bank.clusters());
  for (std::size_t i = 0; i < t; ++i) {
    std::span<const double> q(queries.raw() + i * c, c);
    std::size_t best = 0;
    double best_sim = cosine_similarity(q, bank.core(0).data());
    for (std::size_t l = 1; l < bank.clusters(); ++l) {
      const double s = cosine_similarity(q, bank.core(l).data());
      if (s > best_sim) {
        best_sim = s;
        best = l;
      }
    }
    out.labels[i] = best;
    out.groups[best].push_back(i);
  }
  return out;
}

std::size_t update_budget(double loss_prev, double loss_curr, std::size_t slots, double alpha, double beta) {
  if (!std::isfinite(loss_prev) || !std::isfinite(loss_curr)) {
    throw ContractError("update_budget: losses must be finite");
  }
  const double theta = static_cast<double>(slots);
  const double raw = (-alpha * (loss_prev - loss_curr) + beta) * theta;
  const double lo = static_cast<double>((slots + 3) / 4);
  const double hi = std::max(lo, static_cast<double>((3 * slots) / 4));  // M = 1
  const double rounded = std::floor(raw + 0.5);
  return static_cast<std::size_t>(std::clamp(rounded, lo, hi));
}

std::size_t compute_update_budget(PrototypeMemoryBank& bank, double loss_prev, double loss_curr) {
  const std::size_t k = update_budget(loss_prev, loss_curr, bank.slots());
  bank.set_budget(k);
  return k;
}

std::vector<double> importance_weights(const Tensor& rows) {
  const std::size_t n = rows.dim(0), c = rows.dim(1);
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::abs(rows[i * c + j]);
    score[i] = s / static_cast<double>(c);
  }
  const double mx = *std::max_element(score.begin(), score.end());
  double total = 0.0;
  for (auto& s : score) {
    s = std::exp(s - mx);
    total += s;
  }
  for (auto& s : score) s /= total;
  return score;
}

UpdateReport apply_wld_update(PrototypeMemoryBank& bank, const std::vector<Tensor>& groups, std::size_t budget) {
  if (!bank.initialized()) throw StateError("apply_wld_update: memory bank is not initialized");
  if (budget < bank.min_budget() || budget > bank.max_budget()) {
    throw ContractError("apply_wld_update: budget " + std::to_string(budget) + " outside [" +
                        std::to_string(bank.min_budget()) + ", " + std::to_string(bank.max_budget()) + "]");
  }
  if (groups.size() != bank.clusters()) {
    throw DimensionError("apply_wld_update: " + std::to_string(groups.size()) + " groups for " +
                         std::to_string(bank.clusters()) + " clusters");
  }
  const std::size_t c = bank.channels();
  UpdateReport report;
  report.budget = budget;
  if (bank.has_previous_loss() && bank.has_current_loss()) {
    report.delta_loss = bank.previous_loss() - bank.current_loss();
  }
  report.replaced_slots.resize(bank.clusters());
  report.source_tokens.resize(bank.clusters());
  report.skipped.assign(bank.clusters(), false);

  for (std::size_t l = 0; l < bank.clusters(); ++l) {
    const Tensor& tokens = groups[l];
    if (tokens.empty()) {
      report.skipped[l] = true;
      continue;
    }
    if (tokens.rank() != 2 || tokens.dim(1) != c) {
      throw DimensionError("apply_wld_update: group " + std::to_string(l) + " has shape " +
                           shape_str(tokens.shape()));
    }
    Tensor& prior = bank.mutable_priors(l);
    const auto slot_w = importance_weights(prior);
    const auto token_w = importance_weights(tokens);

    std::vector<std::size_t> slot_order(slot_w.size());
    std::iota(slot_order.begin(), slot_order.end(), 0);
    std::stable_sort(slot_order.begin(), slot_order.end(),
                     [&](std::size_t a, std::size_t b) { return slot_w[a] < slot_w[b]; });
    std::vector<std::size_t> token_order(token_w.size());
    std::iota(token_order.begin(), token_order.end(), 0);
    std::stable_sort(token_order.begin(), token_order.end(),
                     [&](std::size_t a, std::size_t b) { return token_w[a] > token_w[b]; });

    const std::size_t count = std::min(budget, tokens.dim(0));
    for (std::size_t j = 0; j < count; ++j) {
      const std::size_t slot = slot_order[j], tok = token_order[j];
      std::copy_n(tokens.raw() + tok * c, c, prior.raw() + slot * c);
      report.replaced_slots[l].push_back(slot);
      report.source_tokens[l].push_back(tok);
    }
  }
  bank.refresh_cores();
  bank.set_budget(budget);
  return report;
}

}  // namespace simmp
