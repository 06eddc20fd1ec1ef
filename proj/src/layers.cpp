#include "simmp/layers.hpp"

#include <cmath>

#include "simmp/errors.hpp"
#include "simmp/ops.hpp"

namespace simmp {

Var ParameterStore::add(std::string name, Tensor init) {
  for (const auto& [n, v] : entries_) {
    if (n == name) throw ContractError("duplicate parameter name " + name);
  }
  Var v = Var::leaf(std::move(init), true);
  entries_.emplace_back(std::move(name), v);
  return v;
}

const Var& ParameterStore::get(const std::string& name) const {
  for (const auto& [n, v] : entries_) {
    if (n == name) return v;
  }
  throw ContractError("unknown parameter " + name);
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : entries_) n += v.value().size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, v] : entries_) v.zero_grad();
}

Tensor Initializer::glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, double gain) {
  Tensor t(std::move(shape));
  if (mode_ == InitMode::zeros) return t;
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = dist(rng_);
  return t;
}

Linear Linear::create(ParameterStore& store, Initializer& init, const std::string& name, std::size_t in,
                      std::size_t out, bool with_bias, double gain) {
  Linear l;
  l.weight = store.add(name + ".weight", init.glorot({in, out}, in, out, gain));
  if (with_bias) l.bias = store.add(name + ".bias", init.zeros({out}));
  return l;
}

Var Linear::operator()(const Var& x) const {
  Var y = matmul(x, weight);
  return bias.defined() ? add_bias(y, bias) : y;
}

Conv Conv::create(ParameterStore& store, Initializer& init, const std::string& name, std::size_t in,
                  std::size_t out, std::size_t kernel_size, std::size_t stride, bool with_bias, double gain) {
  Conv c;
  const std::size_t area = kernel_size * kernel_size;
  c.kernel = store.add(name + ".kernel", init.glorot({kernel_size, kernel_size, in, out}, area * in, area * out, gain));
  if (with_bias) c.bias = store.add(name + ".bias", init.zeros({out}));
  c.stride = stride;
  c.padding = kernel_size / 2;
  return c;
}

Var Conv::operator()(const Var& x) const {
  const Shape& ks = kernel.shape();
  Var y;
  if (ks[0] == 1 && ks[1] == 1 && stride == 1) {
    // Pointwise: a token-wise matmul is the same map and much cheaper.
    const Shape& xs = x.shape();
    if (xs.size() != 3 || xs[2] != ks[2]) {
      throw DimensionError("conv: kernel " + shape_str(ks) + " vs input " + shape_str(xs));
    }
    Var flat = matmul(reshape(x, {xs[0] * xs[1], xs[2]}), reshape(kernel, {ks[2], ks[3]}));
    y = reshape(flat, {xs[0], xs[1], ks[3]});
  } else {
    y = conv2d(x, kernel, stride, padding);
  }
  return bias.defined() ? add_bias(y, bias) : y;
}

}  // namespace simmp
