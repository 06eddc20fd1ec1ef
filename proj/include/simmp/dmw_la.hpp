#pragma once

// Dynamic memory weight-loss attention (DMW-LA).
//
//   X'  = softmax(Q K^T) V                  global interaction over all H*W tokens
//   A_i = softmax(X^i E_i^T) E_i            per cluster i, X^i = query rows matched to E_i
//   X2  = psi(A + X')                       psi: 1x1 convolution C -> C
//
// Queries are matched to clusters by cosine similarity with the core priors. The
// memory priors are constants on the tape; they change only through W-LD updates.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "simmp/layers.hpp"
#include "simmp/memory_bank.hpp"

namespace simmp {

// How data-dependent discrete choices (cluster labels, window ranks, distance masks)
// are made. `frozen` reuses the choices of the last live pass, which makes the block
// a smooth function of its inputs for finite-difference checks.
enum class DiscreteMode { live, frozen };

struct AttentionWeights {
  Linear query, key, value;

  static AttentionWeights create(ParameterStore& store, Initializer& init, const std::string& name,
                                 std::size_t channels);
};

struct MemoryConfig {
  std::size_t clusters = 4;
  std::size_t slots = 32;
  std::uint64_t seed = 0;
  bool enabled = true;
};

// softmax(Q K^T) V on the flattened tokens of x[H x W x C]; no 1/sqrt(d) factor.
Var global_interaction(const Var& x, const AttentionWeights& w);

// A[T x C]: rows of cluster i are softmax(X^i E_i^T) E_i, placed back at their token positions.
Var intra_cluster_attention(const ClusterAssignment& assignment, const Var& queries, const PrototypeMemoryBank& bank);

class DmwLaBlock {
 public:
  DmwLaBlock(ParameterStore& store, Initializer& init, const std::string& name, std::size_t channels,
             const MemoryConfig& memory);

  // X2 for x[H x W x C]. In training mode the first call initializes the bank by
  // K-means over the X' tokens; in evaluation an uninitialized bank is a StateError.
  Var forward(const Var& x);

  std::size_t channels() const { return channels_; }
  const AttentionWeights& attention() const { return attention_; }
  const Conv& psi() const { return psi_; }
  PrototypeMemoryBank& bank() { return bank_; }
  const PrototypeMemoryBank& bank() const { return bank_; }
  bool memory_enabled() const { return memory_.enabled; }

  void set_training(bool training) { training_ = training; }
  void set_discrete_mode(DiscreteMode mode) { mode_ = mode; }
  const std::optional<ClusterAssignment>& last_assignment() const { return last_assignment_; }

  // While collecting, every forward pass pools its X2 rows under their cluster labels.
  void set_collecting(bool on);
  // Applies W-LD with budget K to the pooled rows and clears the pool.
  std::optional<UpdateReport> apply_memory_update(std::size_t budget);

 private:
  std::size_t channels_;
  MemoryConfig memory_;
  AttentionWeights attention_;
  Conv psi_;
  PrototypeMemoryBank bank_;
  bool training_ = false;
  DiscreteMode mode_ = DiscreteMode::live;
  std::optional<ClusterAssignment> last_assignment_;
  bool collecting_ = false;
  std::vector<std::vector<double>> pooled_;  // per cluster, row-major C-wide rows
};

}  // namespace simmp
