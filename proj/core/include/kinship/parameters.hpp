#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "kinship/rng.hpp"
#include "kinship/tensor.hpp"

namespace kinship {

struct LinearParams {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out], may be undefined
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

/// Ordered name -> tensor registry. Entries alias the model's tensors, so
/// optimizer steps and checkpoint loads through the registry act on the
/// model directly.
class ParameterSet {
 public:
  void add(std::string name, Tensor tensor);

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  // Throws ContractError when absent.
  const Tensor& at(const std::string& name) const;

  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Truncated-normal weights (2 sigma), zero bias.
LinearParams init_linear(Rng& rng, std::size_t in, std::size_t out, double stddev, bool with_bias = true);
LayerNormParams init_layer_norm(std::size_t width);
Tensor init_truncated_normal(Rng& rng, Shape shape, double stddev);

void register_linear(ParameterSet& set, const std::string& prefix, const LinearParams& p);
void register_layer_norm(ParameterSet& set, const std::string& prefix, const LayerNormParams& p);

}  // namespace kinship
