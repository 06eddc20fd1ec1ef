#pragma once

// Prototype memory bank: k clusters of M stored feature vectors (similarity memory
// priors) with one representative vector per cluster (similarity core prior), plus
// the loss-driven update budget that decides how many slots the weight-loss dynamic
// (W-LD) update replaces each epoch.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "simmp/tensor.hpp"

namespace simmp {

struct ClusterAssignment {
  std::vector<std::size_t> labels;               // one cluster per token
  std::vector<std::vector<std::size_t>> groups;  // token rows per cluster, ascending
};

struct UpdateReport {
  std::size_t budget = 0;
  double delta_loss = 0.0;  // previous epoch loss minus current epoch loss
  // Per cluster, in splice order: slot j of replaced_slots received token source_tokens[j].
  std::vector<std::vector<std::size_t>> replaced_slots;
  std::vector<std::vector<std::size_t>> source_tokens;
  std::vector<bool> skipped;  // cluster had no tokens this round
};

class PrototypeMemoryBank {
 public:
  static constexpr double kAlpha = 0.5;
  static constexpr double kBeta = 0.5;
  static constexpr std::uint32_t kFormatVersion = 1;

  PrototypeMemoryBank(std::size_t clusters, std::size_t slots, std::size_t channels);

  std::size_t clusters() const { return clusters_; }
  std::size_t slots() const { return slots_; }
  std::size_t channels() const { return channels_; }
  bool initialized() const { return initialized_; }

  // Slots x channels matrix of cluster i.
  const Tensor& priors(std::size_t cluster) const { return priors_.at(cluster); }
  // Length-C core vector of cluster i.
  const Tensor& core(std::size_t cluster) const { return cores_.at(cluster); }

  std::size_t budget() const { return budget_; }
  std::size_t min_budget() const;
  std::size_t max_budget() const;
  double theta() const { return static_cast<double>(slots_); }

  bool has_previous_loss() const { return has_prev_; }
  bool has_current_loss() const { return has_curr_; }
  double previous_loss() const { return loss_prev_; }
  double current_loss() const { return loss_curr_; }

  // K-means++ seeded Lloyd clustering of tokens[T x C] into the k clusters.
  void initialize_kmeans(const Tensor& tokens, std::uint64_t seed);

  // Direct contents, for fixtures and checkpoint loading. Cores become slot means.
  void set_priors(std::vector<Tensor> priors);
  void set_budget(std::size_t k) { budget_ = k; }
  // Shifts the current epoch loss into the previous one.
  void record_epoch_loss(double loss);

  // W-LD internals exposed to the update routine.
  Tensor& mutable_priors(std::size_t cluster) { return priors_.at(cluster); }
  void refresh_cores();

  std::vector<std::uint8_t> serialize() const;
  static PrototypeMemoryBank deserialize(std::span<const std::uint8_t> bytes);
  // Also rejects a payload whose (k, M, C) differ from the expected extents.
  static PrototypeMemoryBank deserialize(std::span<const std::uint8_t> bytes, std::size_t clusters,
                                         std::size_t slots, std::size_t channels);

  friend bool operator==(const PrototypeMemoryBank&, const PrototypeMemoryBank&) = default;

 private:
  std::size_t clusters_, slots_, channels_;
  std::vector<Tensor> priors_;
  std::vector<Tensor> cores_;
  std::size_t budget_;
  double loss_prev_ = 0.0, loss_curr_ = 0.0;
  bool has_prev_ = false, has_curr_ = false;
  bool initialized_ = false;
};

PrototypeMemoryBank init_kmeans(const Tensor& tokens, std::size_t clusters, std::size_t slots,
                                std::uint64_t seed);

// Each token goes to the cluster whose core has the highest cosine similarity;
// ties go to the lowest cluster index.
ClusterAssignment assign_tokens(const PrototypeMemoryBank& bank, const Tensor& queries);

// K = round((-alpha * (loss_prev - loss_curr) + beta) * theta), theta = slots, clamped
// to [ceil(slots/4), floor(3 slots/4)]. Halves round up.
std::size_t update_budget(double loss_prev, double loss_curr, std::size_t slots,
                          double alpha = PrototypeMemoryBank::kAlpha, double beta = PrototypeMemoryBank::kBeta);

// update_budget() that also records the losses and the budget in the bank.
std::size_t compute_update_budget(PrototypeMemoryBank& bank, double loss_prev, double loss_curr);

// Softmax over rows of each row's mean absolute value.
std::vector<double> importance_weights(const Tensor& rows);

// Replaces, per cluster, the min(K, N) lowest-weight memory slots with the min(K, N)
// highest-weight rows of that cluster's token group (N x C). An empty Tensor marks a
// cluster without tokens; it is skipped. Cores are recomputed as slot means.
UpdateReport apply_wld_update(PrototypeMemoryBank& bank, const std::vector<Tensor>& groups, std::size_t budget);

}  // namespace simmp
