#include "simmp/dmw_la.hpp"

#include "simmp/errors.hpp"
#include "simmp/ops.hpp"

namespace simmp {

namespace {
// Query/key projections start small so the unscaled logits begin near uniform attention.
constexpr double kQueryKeyGain = 0.5;
}  // namespace

AttentionWeights AttentionWeights::create(ParameterStore& store, Initializer& init, const std::string& name,
                                          std::size_t channels) {
  AttentionWeights w;
  w.query = Linear::create(store, init, name + ".wq", channels, channels, true, kQueryKeyGain);
  w.key = Linear::create(store, init, name + ".wk", channels, channels, true, kQueryKeyGain);
  w.value = Linear::create(store, init, name + ".wv", channels, channels, true);
  return w;
}

namespace {
Var flatten_tokens(const Var& x) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw DimensionError("expected an H x W x C map, got " + shape_str(s));
  return reshape(x, {s[0] * s[1], s[2]});
}

Var attend(const Var& queries, const Var& keys, const Var& values) {
  return matmul(softmax_lastdim(matmul_nt(queries, keys)), values);
}
}  // namespace

Var global_interaction(const Var& x, const AttentionWeights& w) {
  Var tokens = flatten_tokens(x);
  Var out = attend(w.query(tokens), w.key(tokens), w.value(tokens));
  return reshape(out, x.shape());
}

Var intra_cluster_attention(const ClusterAssignment& assignment, const Var& queries, const PrototypeMemoryBank& bank) {
  if (!bank.initialized()) throw StateError("intra_cluster_attention: memory bank is not initialized");
  const Shape& qs = queries.shape();
  if (qs.size() != 2 || qs[1] != bank.channels()) {
    throw DimensionError("intra_cluster_attention: queries " + shape_str(qs));
  }
  if (assignment.labels.size() != qs[0] || assignment.groups.size() != bank.clusters()) {
    throw DimensionError("intra_cluster_attention: assignment does not cover the queries");
  }
  Var total;
  for (std::size_t i = 0; i < bank.clusters(); ++i) {
    const auto& group = assignment.groups[i];
    if (group.empty()) continue;
    Var memory = Var::constant(bank.priors(i));
    Var rows = attend(gather_rows(queries, group), memory, memory);
    Var placed = scatter_rows(rows, group, qs[0]);
    total = total.defined() ? add(total, placed) : placed;
  }
  return total;
}

DmwLaBlock::DmwLaBlock(ParameterStore& store, Initializer& init, const std::string& name, std::size_t channels,
                       const MemoryConfig& memory)
    : channels_(channels),
      memory_(memory),
      attention_(AttentionWeights::create(store, init, name, channels)),
      psi_(Conv::create(store, init, name + ".psi", channels, channels, 1, 1)),
      bank_(memory.clusters, memory.slots, channels),
      pooled_(memory.clusters) {}

Var DmwLaBlock::forward(const Var& x) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[2] != channels_) {
    throw DimensionError("dmw_la_forward: input " + shape_str(s) + " for " + std::to_string(channels_) +
                         " channels");
  }
  Var tokens = flatten_tokens(x);
  Var queries = attention_.query(tokens);
  Var global = attend(queries, attention_.key(tokens), attention_.value(tokens));

  Var mixed = global;
  std::optional<ClusterAssignment> assignment;
  if (memory_.enabled) {
    if (!bank_.initialized()) {
      if (!training_) throw StateError("dmw_la_forward: memory bank is not initialized");
      bank_.initialize_kmeans(global.value(), memory_.seed);
    }
    if (mode_ == DiscreteMode::frozen && last_assignment_ && last_assignment_->labels.size() == s[0] * s[1]) {
      assignment = last_assignment_;
    } else {
      assignment = assign_tokens(bank_, queries.value());
      last_assignment_ = assignment;
    }
    mixed = add(intra_cluster_attention(*assignment, queries, bank_), global);
  }
  Var out = psi_(reshape(mixed, s));

  if (collecting_ && assignment) {
    const Tensor& v = out.value();
    for (std::size_t t = 0; t < assignment->labels.size(); ++t) {
      auto& pool = pooled_[assignment->labels[t]];
      pool.insert(pool.end(), v.raw() + t * channels_, v.raw() + (t + 1) * channels_);
    }
  }
  return out;
}

void DmwLaBlock::set_collecting(bool on) {
  collecting_ = on;
  if (on)
    for (auto& p : pooled_) p.clear();
}

std::optional<UpdateReport> DmwLaBlock::apply_memory_update(std::size_t budget) {
  if (!memory_.enabled || !bank_.initialized()) return std::nullopt;
  std::vector<Tensor> groups;
  groups.reserve(pooled_.size());
  for (auto& p : pooled_) {
    if (p.empty()) {
      groups.emplace_back();
    } else {
      groups.emplace_back(Shape{p.size() / channels_, channels_}, p);
    }
    p.clear();
  }
  return apply_wld_update(bank_, groups, budget);
}

}  // namespace simmp
