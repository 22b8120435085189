#include "kinship/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "kinship/error.hpp"

namespace kinship {

namespace {

using GradIn = std::span<const std::span<double>>;

struct AxisLayout {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;
};

AxisLayout layout_for(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape));
  }
  AxisLayout l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  l.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         to_string(x.shape()));
  }
}

template <typename Forward, typename Derivative>
Tensor unary(Tape& tape, const Tensor& x, Forward f, Derivative df) {
  const auto in = x.values();
  std::vector<double> out(in.size());
  std::transform(in.begin(), in.end(), out.begin(), f);
  return tape.record(x.shape(), std::move(out), {x}, [x, df](std::span<const double> g, GradIn gin) {
    if (gin[0].empty()) return;
    const auto v = x.values();
    for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * df(v[i]);
  });
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return tape.record({m, n}, std::move(out), {a, b}, [a, b, m, k, n](std::span<const double> g, GradIn gin) {
    const auto av = a.values();
    const auto bv = b.values();
    if (!gin[0].empty()) {
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = bv.data() + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          gin[0][i * k + p] += acc;
        }
      }
    }
    if (!gin[1].empty()) {
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          double* dbrow = gin[1].data() + p * n;
          for (std::size_t j = 0; j < n; ++j) dbrow[j] += aip * grow[j];
        }
      }
    }
  });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return tape.record(a.shape(), std::move(out), {a, b}, [](std::span<const double> g, GradIn gin) {
    for (const auto& dst : gin) {
      if (dst.empty()) continue;
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return tape.record(a.shape(), std::move(out), {a, b}, [](std::span<const double> g, GradIn gin) {
    if (!gin[0].empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
    }
    if (!gin[1].empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) gin[1][i] -= g[i];
    }
  });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g, GradIn gin) {
    const auto av = a.values();
    const auto bv = b.values();
    if (!gin[0].empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * bv[i];
    }
    if (!gin[1].empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) gin[1][i] += g[i] * av[i];
    }
  });
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  return unary(
      tape, x, [factor](double v) { return v * factor; }, [factor](double) { return factor; });
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  if (x.rank() == 0 || bias.rank() != 1 || bias.extent(0) != x.shape().back()) {
    throw DimensionError("add_bias: bias shape " + to_string(bias.shape()) + " does not match last axis of " +
                         to_string(x.shape()));
  }
  const std::size_t width = bias.size();
  const auto xv = x.values();
  const auto bv = bias.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + bv[i % width];
  return tape.record(x.shape(), std::move(out), {x, bias}, [width](std::span<const double> g, GradIn gin) {
    if (!gin[0].empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
    }
    if (!gin[1].empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) gin[1][i % width] += g[i];
    }
  });
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  Tensor y = matmul(tape, x, weight);
  return bias.defined() ? add_bias(tape, y, bias) : y;
}

Tensor relu(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(Tape& tape, const Tensor& x) {
  constexpr double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      tape, x, [&](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](double v) {
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        return cdf + v * pdf;
      });
}

Tensor exp(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Tensor log(Tape& tape, const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) throw ParameterError("log: non-positive input " + std::to_string(v));
  }
  return unary(
      tape, x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Tensor softmax(Tape& tape, const Tensor& x, std::size_t axis) {
  const AxisLayout l = layout_for(x.shape(), axis);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.length * l.inner + in;
      double peak = xv[base];
      for (std::size_t k = 1; k < l.length; ++k) peak = std::max(peak, xv[base + k * l.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < l.length; ++k) {
        const double e = std::exp(xv[base + k * l.inner] - peak);
        out[base + k * l.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < l.length; ++k) out[base + k * l.inner] /= total;
    }
  }
  std::vector<double> y = out;
  return tape.record(x.shape(), std::move(out), {x}, [y = std::move(y), l](std::span<const double> g, GradIn gin) {
    if (gin[0].empty()) return;
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t in = 0; in < l.inner; ++in) {
        const std::size_t base = o * l.length * l.inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < l.length; ++k) dot += g[base + k * l.inner] * y[base + k * l.inner];
        for (std::size_t k = 0; k < l.length; ++k) {
          const std::size_t idx = base + k * l.inner;
          gin[0][idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(Tape& tape, const Tensor& x, std::size_t axis) {
  const AxisLayout l = layout_for(x.shape(), axis);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.length * l.inner + in;
      double peak = xv[base];
      for (std::size_t k = 1; k < l.length; ++k) peak = std::max(peak, xv[base + k * l.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < l.length; ++k) total += std::exp(xv[base + k * l.inner] - peak);
      const double log_norm = peak + std::log(total);
      for (std::size_t k = 0; k < l.length; ++k) out[base + k * l.inner] = xv[base + k * l.inner] - log_norm;
    }
  }
  std::vector<double> y = out;
  return tape.record(x.shape(), std::move(out), {x}, [y = std::move(y), l](std::span<const double> g, GradIn gin) {
    if (gin[0].empty()) return;
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t in = 0; in < l.inner; ++in) {
        const std::size_t base = o * l.length * l.inner + in;
        double total = 0.0;
        for (std::size_t k = 0; k < l.length; ++k) total += g[base + k * l.inner];
        for (std::size_t k = 0; k < l.length; ++k) {
          const std::size_t idx = base + k * l.inner;
          gin[0][idx] += g[idx] - std::exp(y[idx]) * total;
        }
      }
    }
  });
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive, got " + std::to_string(eps));
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t width = x.shape().back();
  if (gain.shape() != Shape{width} || bias.shape() != Shape{width}) {
    throw DimensionError("layer_norm: gain " + to_string(gain.shape()) + " / bias " + to_string(bias.shape()) +
                         " must match last axis of " + to_string(x.shape()));
  }
  const std::size_t rows = x.size() / width;
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  std::vector<double> out(xv.size());
  std::vector<double> normalized(xv.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * width;
    double mu = 0.0;
    for (std::size_t c = 0; c < width; ++c) mu += row[c];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t c = 0; c < width; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(width);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < width; ++c) {
      const double xhat = (row[c] - mu) * inv_std[r];
      normalized[r * width + c] = xhat;
      out[r * width + c] = xhat * gv[c] + bv[c];
    }
  }
  return tape.record(
      x.shape(), std::move(out), {x, gain, bias},
      [gain, normalized = std::move(normalized), inv_std = std::move(inv_std), rows, width](
          std::span<const double> g, GradIn gin) {
        const auto gv = gain.values();
        const double n = static_cast<double>(width);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* grow = g.data() + r * width;
          const double* xhat = normalized.data() + r * width;
          if (!gin[0].empty()) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t c = 0; c < width; ++c) {
              const double d = grow[c] * gv[c];
              mean_d += d;
              mean_dx += d * xhat[c];
            }
            mean_d /= n;
            mean_dx /= n;
            for (std::size_t c = 0; c < width; ++c) {
              const double d = grow[c] * gv[c];
              gin[0][r * width + c] += inv_std[r] * (d - mean_d - xhat[c] * mean_dx);
            }
          }
          if (!gin[1].empty()) {
            for (std::size_t c = 0; c < width; ++c) gin[1][c] += grow[c] * xhat[c];
          }
          if (!gin[2].empty()) {
            for (std::size_t c = 0; c < width; ++c) gin[2][c] += grow[c];
          }
        }
      });
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (element_count(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return tape.record(std::move(shape), std::move(out), {x}, [](std::span<const double> g, GradIn gin) {
    if (gin[0].empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
  });
}

Tensor permute(Tape& tape, const Tensor& x, std::span<const std::size_t> axes) {
  const Shape& in_shape = x.shape();
  const std::size_t rank = in_shape.size();
  if (axes.size() != rank) {
    throw DimensionError("permute: " + std::to_string(axes.size()) + " axes for shape " + to_string(in_shape));
  }
  std::vector<bool> seen(rank, false);
  for (auto a : axes) {
    if (a >= rank || seen[a]) throw DimensionError("permute: axes are not a permutation of 0.." + std::to_string(rank - 1));
    seen[a] = true;
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(rank);
  std::vector<std::size_t> src_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[axes[i]];
    src_strides[i] = in_strides[axes[i]];
  }
  // gather[i] = flat source index of output element i
  const std::size_t n = x.size();
  std::vector<std::size_t> gather(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    gather[i] = src;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      src += src_strides[d];
      if (counter[d] < out_shape[d]) break;
      src -= src_strides[d] * out_shape[d];
      counter[d] = 0;
    }
  }
  const auto xv = x.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[gather[i]];
  return tape.record(std::move(out_shape), std::move(out), {x},
                     [gather = std::move(gather)](std::span<const double> g, GradIn gin) {
                       if (gin[0].empty()) return;
                       for (std::size_t i = 0; i < g.size(); ++i) gin[0][gather[i]] += g[i];
                     });
}

Tensor permute(Tape& tape, const Tensor& x, std::initializer_list<std::size_t> axes) {
  return permute(tape, x, std::span<const std::size_t>(axes.begin(), axes.size()));
}

Tensor transpose(Tape& tape, const Tensor& x) {
  require_rank("transpose", x, 2);
  return permute(tape, x, {1, 0});
}

Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for shape " + to_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool compatible = s.size() == first.size();
    for (std::size_t d = 0; compatible && d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) compatible = false;
    }
    if (!compatible) {
      throw DimensionError("concat: operand " + to_string(s) + " disagrees with " + to_string(first) +
                           " off axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  const AxisLayout out_layout = layout_for(out_shape, axis);
  std::vector<double> out(element_count(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.shape()[axis];
    const auto pv = p.values();
    const std::size_t block = len * out_layout.inner;
    for (std::size_t o = 0; o < out_layout.outer; ++o) {
      std::copy_n(pv.data() + o * block, block,
                  out.data() + o * out_layout.length * out_layout.inner + offset * out_layout.inner);
    }
    offset += len;
  }
  std::vector<std::size_t> lengths;
  for (const Tensor& p : parts) lengths.push_back(p.shape()[axis]);
  return tape.record(std::move(out_shape), std::move(out), parts,
                     [out_layout, offsets = std::move(offsets), lengths = std::move(lengths)](
                         std::span<const double> g, GradIn gin) {
                       for (std::size_t j = 0; j < gin.size(); ++j) {
                         if (gin[j].empty()) continue;
                         const std::size_t block = lengths[j] * out_layout.inner;
                         for (std::size_t o = 0; o < out_layout.outer; ++o) {
                           const double* src = g.data() + o * out_layout.length * out_layout.inner +
                                               offsets[j] * out_layout.inner;
                           double* dst = gin[j].data() + o * block;
                           for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor concat(Tape& tape, std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(tape, std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(Tape& tape, const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const AxisLayout l = layout_for(x.shape(), axis);
  if (length == 0 || start + length > l.length) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") exceeds axis " + std::to_string(axis) + " of " + to_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  const std::size_t block = length * l.inner;
  const auto xv = x.values();
  std::vector<double> out(l.outer * block);
  for (std::size_t o = 0; o < l.outer; ++o) {
    std::copy_n(xv.data() + o * l.length * l.inner + start * l.inner, block, out.data() + o * block);
  }
  return tape.record(std::move(out_shape), std::move(out), {x},
                     [l, start, block](std::span<const double> g, GradIn gin) {
                       if (gin[0].empty()) return;
                       for (std::size_t o = 0; o < l.outer; ++o) {
                         double* dst = gin[0].data() + o * l.length * l.inner + start * l.inner;
                         for (std::size_t i = 0; i < block; ++i) dst[i] += g[o * block + i];
                       }
                     });
}

Tensor sum(Tape& tape, const Tensor& x) {
  const auto xv = x.values();
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  return tape.record({}, {total}, {x}, [](std::span<const double> g, GradIn gin) {
    if (gin[0].empty()) return;
    for (double& v : gin[0]) v += g[0];
  });
}

Tensor mean(Tape& tape, const Tensor& x, std::size_t axis) {
  const AxisLayout l = layout_for(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const auto xv = x.values();
  const double inv = 1.0 / static_cast<double>(l.length);
  std::vector<double> out(l.outer * l.inner, 0.0);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t k = 0; k < l.length; ++k) {
      const double* src = xv.data() + (o * l.length + k) * l.inner;
      double* dst = out.data() + o * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) dst[i] += src[i];
    }
  }
  for (double& v : out) v *= inv;
  return tape.record(std::move(out_shape), std::move(out), {x}, [l, inv](std::span<const double> g, GradIn gin) {
    if (gin[0].empty()) return;
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t k = 0; k < l.length; ++k) {
        double* dst = gin[0].data() + (o * l.length + k) * l.inner;
        for (std::size_t i = 0; i < l.inner; ++i) dst[i] += g[o * l.inner + i] * inv;
      }
    }
  });
}

Tensor pick(Tape& tape, const Tensor& x, std::size_t index) {
  if (index >= x.size()) {
    throw DimensionError("pick: index " + std::to_string(index) + " out of range for shape " + to_string(x.shape()));
  }
  return tape.record({}, {x.values()[index]}, {x}, [index](std::span<const double> g, GradIn gin) {
    if (!gin[0].empty()) gin[0][index] += g[0];
  });
}

}  // namespace kinship
