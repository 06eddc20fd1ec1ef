#include <gtest/gtest.h>

#include <random>

#include "../common/test_util.hpp"
#include "../oracles/oracles.hpp"
#include "simmp/dmw_la.hpp"
#include "simmp/errors.hpp"
#include "simmp/gradcheck.hpp"
#include "simmp/ops.hpp"

using namespace simmp;
using testutil::uniform;

namespace {

void expect_near_all(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

Tensor identity(std::size_t c) {
  Tensor t({c, c});
  for (std::size_t i = 0; i < c; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor flat(const Tensor& x) { return x.reshaped({x.dim(0) * x.dim(1), x.dim(2)}); }

struct Fixture {
  ParameterStore store;
  Initializer init{42, InitMode::random};
};

}  // namespace

TEST(GlobalInteraction, SingleTokenReturnsValue) {
  Fixture f;
  auto w = AttentionWeights::create(f.store, f.init, "g", 3);
  std::mt19937_64 rng(1);
  const Tensor x = uniform({1, 1, 3}, rng);
  const Tensor v = oracle::affine(flat(x), w.value.weight.value(), w.value.bias.value());
  expect_near_all(global_interaction(Var::constant(x), w).value(), v, 1e-15);
}

TEST(GlobalInteraction, ZeroQueryKeyGivesTokenMean) {
  Fixture f;
  auto w = AttentionWeights::create(f.store, f.init, "g", 3);
  for (auto* l : {&w.query, &w.key}) {
    l->weight.mutable_value().fill(0.0);
    l->bias.mutable_value().fill(0.0);
  }
  w.value.weight.mutable_value() = identity(3);
  w.value.bias.mutable_value().fill(0.0);
  std::mt19937_64 rng(2);
  const Tensor x = uniform({3, 4, 3}, rng);
  const Tensor y = global_interaction(Var::constant(x), w).value();
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double mean = 0.0;
    for (std::size_t t = 0; t < 12; ++t) mean += x[t * 3 + ch] / 12.0;
    for (std::size_t t = 0; t < 12; ++t) EXPECT_NEAR(y[t * 3 + ch], mean, 1e-14);
  }
}

TEST(GlobalInteraction, MatchesPerTokenLoop) {
  Fixture f;
  auto w = AttentionWeights::create(f.store, f.init, "g", 3);
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    const Tensor x = uniform({4, 4, 3}, rng, -2, 2);
    const Tensor t = flat(x);
    const Tensor want = oracle::attention(oracle::affine(t, w.query.weight.value(), w.query.bias.value()),
                                          oracle::affine(t, w.key.weight.value(), w.key.bias.value()),
                                          oracle::affine(t, w.value.weight.value(), w.value.bias.value()));
    expect_near_all(global_interaction(Var::constant(x), w).value(), want, 1e-13);
  }
}

TEST(IntraCluster, SingleSlotMemoryIsCopied) {
  std::mt19937_64 rng(4);
  PrototypeMemoryBank bank(2, 1, 3);
  bank.set_priors({uniform({1, 3}, rng), uniform({1, 3}, rng)});
  const Tensor q = uniform({5, 3}, rng);
  const auto a = assign_tokens(bank, q);
  const Tensor out = intra_cluster_attention(a, Var::constant(q), bank).value();
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(out.at(t, c), bank.priors(a.labels[t])[c]);
}

TEST(IntraCluster, LargeOrthogonalSlotConcentrates) {
  PrototypeMemoryBank bank(1, 3, 3);
  bank.set_priors({Tensor::from_rows({{10, 0, 0}, {0, 10, 0}, {0, 0, 10}})});
  const Tensor q = Tensor::from_rows({{0, 10, 0}});
  const Tensor out = intra_cluster_attention(assign_tokens(bank, q), Var::constant(q), bank).value();
  // logits 0, 100, 0: off-slot weights are e^-100
  EXPECT_NEAR(out[1], 10.0, 1e-12);
  EXPECT_NEAR(out[0], 0.0, 1e-12);
  EXPECT_NEAR(out[2], 0.0, 1e-12);
}

TEST(IntraCluster, MatchesPerClusterLoop) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    PrototypeMemoryBank bank(2, 4, 3);
    bank.set_priors({uniform({4, 3}, rng), uniform({4, 3}, rng)});
    const Tensor q = uniform({6, 3}, rng, -2, 2);
    const auto a = assign_tokens(bank, q);
    const Tensor out = intra_cluster_attention(a, Var::constant(q), bank).value();
    for (std::size_t t = 0; t < 6; ++t) {
      Tensor row({1, 3}, std::vector<double>(q.raw() + t * 3, q.raw() + t * 3 + 3));
      const Tensor& e = bank.priors(a.labels[t]);
      const Tensor want = oracle::attention(row, e, e);
      for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out.at(t, c), want[c], 1e-14);
    }
  }
}

TEST(IntraCluster, UninitializedBankThrows) {
  PrototypeMemoryBank bank(2, 4, 3);
  ClusterAssignment a{{0}, {{0}, {}}};
  EXPECT_THROW(intra_cluster_attention(a, Var::constant(Tensor({1, 3})), bank), StateError);
}

TEST(DmwLa, ZeroMemoryAndIdentityPsiGivesGlobalInteraction) {
  Fixture f;
  DmwLaBlock block(f.store, f.init, "d", 4, {2, 4, 0, true});
  block.bank().set_priors({Tensor({4, 4}), Tensor({4, 4})});
  Var kernel = block.psi().kernel, bias = block.psi().bias;
  kernel.mutable_value() = identity(4).reshaped({1, 1, 4, 4});
  bias.mutable_value().fill(0.0);
  std::mt19937_64 rng(6);
  const Tensor x = uniform({4, 4, 4}, rng);
  expect_near_all(block.forward(Var::constant(x)).value(), global_interaction(Var::constant(x), block.attention()).value(),
                  1e-15);
}

TEST(DmwLa, MatchesComposedOracle) {
  Fixture f;
  DmwLaBlock block(f.store, f.init, "d", 3, {2, 4, 0, true});
  std::mt19937_64 rng(7);
  block.bank().set_priors({uniform({4, 3}, rng), uniform({4, 3}, rng)});
  const Tensor x = uniform({2, 4, 3}, rng);
  const auto& w = block.attention();
  const Tensor t = flat(x);
  const Tensor q = oracle::affine(t, w.query.weight.value(), w.query.bias.value());
  Tensor mixed = oracle::attention(q, oracle::affine(t, w.key.weight.value(), w.key.bias.value()),
                                   oracle::affine(t, w.value.weight.value(), w.value.bias.value()));
  const auto labels = oracle::assign(q, {block.bank().core(0), block.bank().core(1)});
  for (std::size_t i = 0; i < 8; ++i) {
    Tensor row({1, 3}, std::vector<double>(q.raw() + i * 3, q.raw() + i * 3 + 3));
    const Tensor& e = block.bank().priors(labels[i]);
    const Tensor a = oracle::attention(row, e, e);
    for (std::size_t c = 0; c < 3; ++c) mixed.at(i, c) += a[c];
  }
  const Tensor want = oracle::affine(mixed, block.psi().kernel.value().reshaped({3, 3}), block.psi().bias.value());
  expect_near_all(block.forward(Var::constant(x)).value(), want, 1e-13);
}

TEST(DmwLa, ShapeContract) {
  for (std::size_t h : {2, 4, 8})
    for (std::size_t w : {2, 4, 8})
      for (std::size_t c : {2, 4}) {
        Fixture f;
        DmwLaBlock block(f.store, f.init, "d", c, {2, 4, 1, true});
        block.set_training(true);
        std::mt19937_64 rng(h * 100 + w * 10 + c);
        const Tensor y = block.forward(Var::constant(uniform({h, w, c}, rng))).value();
        EXPECT_EQ(y.shape(), (Shape{h, w, c}));
        EXPECT_TRUE(y.all_finite());
      }
}

TEST(DmwLa, FirstTrainingPassInitializesBank) {
  Fixture f;
  DmwLaBlock block(f.store, f.init, "d", 3, {2, 4, 5, true});
  std::mt19937_64 rng(8);
  const Var x = Var::constant(uniform({4, 4, 3}, rng));
  EXPECT_THROW(block.forward(x), StateError);
  block.set_training(true);
  block.forward(x);
  EXPECT_TRUE(block.bank().initialized());
  EXPECT_EQ(block.bank().budget(), 2u);
}

TEST(DmwLa, DisabledMemoryNeedsNoBank) {
  Fixture f;
  DmwLaBlock block(f.store, f.init, "d", 3, {2, 4, 0, false});
  std::mt19937_64 rng(9);
  const Var x = Var::constant(uniform({2, 2, 3}, rng));
  const Tensor y = block.forward(x).value();
  EXPECT_FALSE(block.bank().initialized());
  const Tensor g = global_interaction(x, block.attention()).value();
  const Tensor want = oracle::affine(flat(g), block.psi().kernel.value().reshaped({3, 3}), block.psi().bias.value());
  expect_near_all(y, want, 1e-14);
  EXPECT_FALSE(block.apply_memory_update(2).has_value());
}

TEST(DmwLa, CollectedRowsDriveTheUpdate) {
  Fixture f;
  DmwLaBlock block(f.store, f.init, "d", 3, {2, 4, 0, true});
  block.set_training(true);
  std::mt19937_64 rng(10);
  const Var x = Var::constant(uniform({4, 4, 3}, rng, -3, 3));
  block.forward(x);
  const auto before = block.bank();
  block.set_collecting(true);
  const Tensor y = block.forward(x).value();
  const auto labels = block.last_assignment()->labels;
  block.set_collecting(false);
  const auto report = block.apply_memory_update(2);
  ASSERT_TRUE(report.has_value());
  for (std::size_t l = 0; l < 2; ++l) {
    std::vector<double> rows;
    for (std::size_t t = 0; t < 16; ++t)
      if (labels[t] == l) rows.insert(rows.end(), y.raw() + t * 3, y.raw() + t * 3 + 3);
    if (rows.empty()) {
      EXPECT_TRUE(report->skipped[l]);
      continue;
    }
    const Tensor group({rows.size() / 3, 3}, rows);
    EXPECT_EQ(block.bank().priors(l), oracle::sort_and_splice(before.priors(l), group, 2).prior);
  }
  // The pool is emptied by the update.
  const auto after = block.bank();
  block.apply_memory_update(2);
  EXPECT_EQ(block.bank(), after);
}

TEST(DmwLa, GradientsWithFrozenAssignment) {
  Fixture f;
  DmwLaBlock block(f.store, f.init, "d", 4, {2, 4, 3, true});
  block.set_training(true);
  std::mt19937_64 rng(11);
  Var x = Var::leaf(uniform({8, 8, 4}, rng));
  const Tensor r = uniform({8, 8, 4}, rng);
  block.forward(x);
  block.set_discrete_mode(DiscreteMode::frozen);
  std::vector<Var> leaves{x};
  for (const auto& [name, v] : f.store.entries()) leaves.push_back(v);
  const auto res = check_gradients([&] { return sum(mul(block.forward(x), Var::constant(r))); }, leaves);
  EXPECT_LE(res.max_relative_error, 1e-4) << res.describe();
}
