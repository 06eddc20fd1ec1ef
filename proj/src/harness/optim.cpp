#include "simmp/harness/optim.hpp"

#include <cmath>

namespace simmp {

AdamW::AdamW(ParameterStore& store, Options options) : store_(store), opt_(options) {
  for (const auto& [name, p] : store_.entries()) {
    m_.push_back(Tensor::zeros(p.shape()));
    v_.push_back(Tensor::zeros(p.shape()));
  }
}

void AdamW::step() {
  ++t_;
  const double t = static_cast<double>(t_);
  const double c1 = 1.0 - std::pow(opt_.beta1, t), c2 = 1.0 - std::pow(opt_.beta2, t);
  const auto& entries = store_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Var p = entries[i].second;
    if (!p.has_grad()) continue;
    const Tensor g = p.grad();
    Tensor& w = p.mutable_value();
    double* m = m_[i].raw();
    double* v = v_[i].raw();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = opt_.beta1 * m[j] + (1.0 - opt_.beta1) * g[j];
      v[j] = opt_.beta2 * v[j] + (1.0 - opt_.beta2) * g[j] * g[j];
      w[j] -= opt_.learning_rate * (opt_.weight_decay * w[j] + (m[j] / c1) / (std::sqrt(v[j] / c2) + opt_.eps));
    }
  }
}

}  // namespace simmp
