#include "kinship/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "kinship/error.hpp"

namespace kinship {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {

void check_shape(const Shape& shape, std::size_t count) {
  for (auto extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  }
  if (element_count(shape) != count) {
    throw DimensionError("shape " + to_string(shape) + " holds " + std::to_string(element_count(shape)) +
                         " elements but " + std::to_string(count) + " values were given");
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = element_count(shape);
  return from(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  check_shape(shape, values.size());
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  return t;
}

Tensor::Node& Tensor::node() const {
  if (!node_) throw ContractError("access to an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::extent(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::size() const { return node().value.size(); }

std::span<const double> Tensor::values() const { return node().value; }

std::span<double> Tensor::mutable_values() { return node().value; }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return node().value[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  Node& n = node();
  n.requires_grad = flag;
  if (flag && n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
}

std::span<const double> Tensor::grad() const {
  Node& n = node();
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

std::span<double> Tensor::mutable_grad() {
  Node& n = node();
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tensor::zero_grad() {
  Node& n = node();
  n.grad.assign(n.value.size(), 0.0);
}

Tensor Tensor::detached() const { return from(shape(), node().value); }

Tensor Tape::record(Shape shape, std::vector<double> values, std::initializer_list<Tensor> inputs,
                    Adjoint adjoint) {
  return record(std::move(shape), std::move(values), std::span<const Tensor>(inputs.begin(), inputs.size()),
                std::move(adjoint));
}

Tensor Tape::record(Shape shape, std::vector<double> values, std::span<const Tensor> inputs, Adjoint adjoint) {
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  if (!recording()) return out;
  const bool needs_grad =
      std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.node().requires_grad; });
  if (!needs_grad) return out;

  if (spent_) {
    // A new forward pass begins on a tape whose previous pass was consumed.
    spent_ = false;
  }
  out.node_->requires_grad = true;
  Entry entry;
  entry.output = out.node_;
  entry.inputs.reserve(inputs.size());
  for (const Tensor& t : inputs) entry.inputs.push_back(t.node_);
  entry.adjoint = std::move(adjoint);
  entries_.push_back(std::move(entry));
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (spent_) throw ContractError("backward called twice without a new forward pass");
  if (loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
  }
  Tensor::Node& root = loss.node();
  if (!root.requires_grad) throw ContractError("loss does not depend on any tensor that requires a gradient");

  for (Entry& e : entries_) e.output->grad.assign(e.output->value.size(), 0.0);
  if (root.grad.size() != 1) root.grad.assign(1, 0.0);
  root.grad[0] += 1.0;

  std::vector<std::span<double>> grad_in;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    Entry& e = *it;
    grad_in.clear();
    for (auto& input : e.inputs) {
      if (input->requires_grad) {
        if (input->grad.size() != input->value.size()) input->grad.assign(input->value.size(), 0.0);
        grad_in.emplace_back(input->grad);
      } else {
        grad_in.emplace_back();
      }
    }
    e.adjoint(e.output->grad, grad_in);
  }
  entries_.clear();
  spent_ = true;
}

void Tape::clear() {
  entries_.clear();
  spent_ = false;
}

}  // namespace kinship
