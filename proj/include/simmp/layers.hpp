#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "simmp/autograd.hpp"

namespace simmp {

// Named trainable leaves, kept in registration order (which is also checkpoint order).
class ParameterStore {
 public:
  Var add(std::string name, Tensor init);
  const Var& get(const std::string& name) const;
  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Var>> entries_;
};

enum class InitMode { random, zeros };

// Seeded weight initializer. Uniform Glorot bounds scaled by `gain`.
class Initializer {
 public:
  Initializer(std::uint64_t seed, InitMode mode) : rng_(seed), mode_(mode) {}
  Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, double gain = 1.0);
  Tensor zeros(Shape shape) { return Tensor::zeros(std::move(shape)); }

 private:
  std::mt19937_64 rng_;
  InitMode mode_;
};

// Token-wise affine map: x[T x Cin] * W[Cin x Cout] + b.
struct Linear {
  Var weight;
  Var bias;  // undefined when the map has no bias

  static Linear create(ParameterStore& store, Initializer& init, const std::string& name, std::size_t in,
                       std::size_t out, bool with_bias = true, double gain = 1.0);
  Var operator()(const Var& x) const;
};

// Convolution with optional bias over H x W x C maps.
struct Conv {
  Var kernel;  // kh x kw x Cin x Cout
  Var bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  static Conv create(ParameterStore& store, Initializer& init, const std::string& name, std::size_t in,
                     std::size_t out, std::size_t kernel_size, std::size_t stride, bool with_bias = true,
                     double gain = 1.0);
  Var operator()(const Var& x) const;
};

}  // namespace simmp
