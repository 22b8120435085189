#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kinship/tensor.hpp"

// Differentiable tensor operations. Each op computes its forward values
// eagerly and records its adjoint on the given tape. Broadcasting is limited
// to add_bias (a vector added along the last axis).
namespace kinship {

// [m x k] * [k x n] -> [m x n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

// Elementwise on identical shapes.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

Tensor scale(Tape& tape, const Tensor& x, double factor);

// x + bias, with bias.shape == {x.shape.back()}.
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias);

// x * weight (+ bias). `bias` may be an undefined tensor.
Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor relu(Tape& tape, const Tensor& x);
// Exact GELU, x * Phi(x).
Tensor gelu(Tape& tape, const Tensor& x);
Tensor exp(Tape& tape, const Tensor& x);
// Natural log; inputs must be positive.
Tensor log(Tape& tape, const Tensor& x);

// Max-subtracted softmax over one axis.
Tensor softmax(Tape& tape, const Tensor& x, std::size_t axis);
Tensor log_softmax(Tape& tape, const Tensor& x, std::size_t axis);

/// Layer normalization over the last axis with population variance:
/// (x - mean) / sqrt(var + eps) * gain + bias.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// Row-major relabeling; element order is unchanged.
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);
// out.shape[i] = x.shape[axes[i]].
Tensor permute(Tape& tape, const Tensor& x, std::span<const std::size_t> axes);
Tensor permute(Tape& tape, const Tensor& x, std::initializer_list<std::size_t> axes);
// 2-D transpose.
Tensor transpose(Tape& tape, const Tensor& x);

Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis);
Tensor concat(Tape& tape, std::initializer_list<Tensor> parts, std::size_t axis);
// `length` entries of `axis` starting at `start`.
Tensor slice(Tape& tape, const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);

// Scalar sum of all elements.
Tensor sum(Tape& tape, const Tensor& x);
// Mean over one axis; that axis is removed from the shape.
Tensor mean(Tape& tape, const Tensor& x, std::size_t axis);
// Scalar x.values()[index].
Tensor pick(Tape& tape, const Tensor& x, std::size_t index);

}  // namespace kinship
