#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kinship {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

class Tape;

/// Dense row-major float64 array with an optional gradient buffer.
///
/// A Tensor is a cheap handle: copies share the same storage. Values are
/// treated as immutable once an op has produced them; the mutable accessors
/// exist for parameter initialization, optimizer steps and finite-difference
/// perturbation of leaves.
class Tensor {
 public:
  // Undefined handle; every accessor except defined() throws.
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  // Leaf that accumulates gradients during Tape::backward.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double operator[](std::size_t i) const { return values()[i]; }
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  // Zero-filled until a backward pass reaches this tensor.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Fresh leaf holding a copy of the values; no gradient history.
  Tensor detached() const;

  bool shares_storage_with(const Tensor& other) const { return node_ == other.node_; }

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
  };

  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  Node& node() const;

  std::shared_ptr<Node> node_;

  friend class Tape;
};

/// Record of executed differentiable operations.
///
/// Ops append one entry per output; `backward` replays the adjoints in exact
/// reverse order. A tape in inference mode records nothing, so forward passes
/// on it carry no gradient history. A tape is single-threaded.
class Tape {
 public:
  enum class Mode { Record, Inference };

  // Adjoint of one op: reads the output gradient, accumulates into each
  // input gradient. Inputs that need no gradient get an empty span.
  using Adjoint =
      std::function<void(std::span<const double> grad_out, std::span<const std::span<double>> grad_in)>;

  explicit Tape(Mode mode = Mode::Record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape inference() { return Tape(Mode::Inference); }

  bool recording() const { return mode_ == Mode::Record; }
  std::size_t size() const { return entries_.size(); }

  /// Wraps freshly computed values as an op output and, when any input
  /// requires a gradient, records `adjoint` for the backward pass.
  Tensor record(Shape shape, std::vector<double> values, std::initializer_list<Tensor> inputs,
                Adjoint adjoint);
  Tensor record(Shape shape, std::vector<double> values, std::span<const Tensor> inputs,
                Adjoint adjoint);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable leaf,
  /// accumulating into existing leaf gradients. The tape is spent
  /// afterwards; calling backward again before recording a new forward
  /// pass throws ContractError.
  void backward(const Tensor& loss);

  void clear();

 private:
  struct Entry {
    std::shared_ptr<Tensor::Node> output;
    std::vector<std::shared_ptr<Tensor::Node>> inputs;
    Adjoint adjoint;
  };

  Mode mode_;
  std::vector<Entry> entries_;
  bool spent_ = false;
};

}  // namespace kinship
