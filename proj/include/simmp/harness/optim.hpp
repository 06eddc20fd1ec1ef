#pragma once

#include <vector>

#include "simmp/layers.hpp"

namespace simmp {

// Adam with decoupled weight decay and bias-corrected moments.
class AdamW {
 public:
  struct Options {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
  };

  AdamW(ParameterStore& store, Options options);

  // Consumes the accumulated leaf gradients; does not clear them.
  void step();
  std::size_t steps() const { return t_; }

 private:
  ParameterStore& store_;
  Options opt_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace simmp
