#include "kinship/parameters.hpp"

#include <algorithm>

#include "kinship/error.hpp"

namespace kinship {

void ParameterSet::add(std::string name, Tensor tensor) {
  const bool duplicate =
      std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
  if (duplicate) throw ContractError("duplicate parameter name '" + name + "'");
  tensor.set_requires_grad(true);
  entries_.emplace_back(std::move(name), std::move(tensor));
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return e.second;
  }
  throw ContractError("no parameter named '" + name + "'");
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

Tensor init_truncated_normal(Rng& rng, Shape shape, double stddev) {
  std::vector<double> values(element_count(shape));
  for (double& v : values) v = rng.truncated_normal(stddev);
  return Tensor::from(std::move(shape), std::move(values));
}

LinearParams init_linear(Rng& rng, std::size_t in, std::size_t out, double stddev, bool with_bias) {
  LinearParams p;
  p.weight = init_truncated_normal(rng, {in, out}, stddev);
  if (with_bias) p.bias = Tensor::zeros({out});
  return p;
}

LayerNormParams init_layer_norm(std::size_t width) {
  return {Tensor::full({width}, 1.0), Tensor::zeros({width})};
}

void register_linear(ParameterSet& set, const std::string& prefix, const LinearParams& p) {
  set.add(prefix + ".weight", p.weight);
  if (p.bias.defined()) set.add(prefix + ".bias", p.bias);
}

void register_layer_norm(ParameterSet& set, const std::string& prefix, const LayerNormParams& p) {
  set.add(prefix + ".gain", p.gain);
  set.add(prefix + ".bias", p.bias);
}

}  // namespace kinship
