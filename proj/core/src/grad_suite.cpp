#include <cmath>
#include <cstdio>
#include <functional>

#include "kinship/gradcheck.hpp"
#include "kinship/ops.hpp"
#include "kinship/pvt.hpp"
#include "kinship/rng.hpp"
#include "kinship/siamese.hpp"

namespace kinship {

namespace {

using Body = std::function<Tensor(Tape&)>;

class Suite {
 public:
  Suite(std::uint64_t seed, std::size_t shapes) : rng_(seed), shapes_(shapes) {}

  std::size_t dim(std::size_t lo, std::size_t hi) { return lo + rng_.index(hi - lo + 1); }

  Tensor random(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(element_count(shape));
    for (double& x : v) x = lo + (hi - lo) * rng_.uniform();
    return Tensor::from(std::move(shape), std::move(v));
  }

  // Uniform magnitude in [0.1, 1] with random sign, keeping relu and
  // friends away from their kinks.
  Tensor away_from_zero(Shape shape) {
    Tensor t = random(std::move(shape), 0.1, 1.0);
    for (double& x : t.mutable_values()) x = rng_.uniform() < 0.5 ? -x : x;
    return t;
  }

  // sum(op(...) * r) for a fixed random r, so the check sees a generic
  // linear functional of the output.
  Tensor project(Tape& tape, const Tensor& y, const Tensor& r) { return sum(tape, mul(tape, y, r)); }

  template <typename Build>
  void run(const std::string& op, Build build) {
    for (std::size_t s = 0; s < shapes_; ++s) {
      std::vector<Tensor> leaves;
      std::string shape;
      Body body = build(leaves, shape);
      GradCheckOptions options;
      options.max_coordinates = 48;
      options.seed = rng_.next();
      cases_.push_back({op, shape, finite_diff_check(body, leaves, options)});
    }
  }

  // Wraps an op with one output into `sum(op * r)`; r is drawn after the
  // first evaluation reveals the output shape.
  Body projected(std::function<Tensor(Tape&)> op) {
    Tape probe(Tape::Mode::Inference);
    const Tensor r = random(op(probe).shape());
    return [this, op, r](Tape& tape) { return project(tape, op(tape), r); };
  }

  // Zero-initialized biases put dead ReLU units exactly on the kink; a
  // random offset moves every parameter off such degenerate points.
  void jitter(std::vector<Tensor>& leaves) {
    for (Tensor& t : leaves) {
      for (double& x : t.mutable_values()) x += 0.2 * (rng_.uniform() - 0.5);
    }
  }

  std::vector<GradCheckCase> take() { return std::move(cases_); }

 private:
  Rng rng_;
  std::size_t shapes_;
  std::vector<GradCheckCase> cases_;
};

std::string dims(std::initializer_list<std::size_t> d) {
  std::string s;
  for (std::size_t v : d) s += (s.empty() ? "" : "x") + std::to_string(v);
  return s;
}

PVTConfig tiny_pvt(Suite& s, std::string& shape) {
  PVTConfig c;
  c.name = "gradcheck";
  const std::size_t p1 = s.dim(1, 2);
  const std::size_t grid1 = 4;
  c.height = c.width = p1 * grid1;
  c.channels = s.dim(1, 2);
  const std::size_t heads = s.dim(1, 2);
  // LayerNorm over two channels is a near-discontinuous sign function, so
  // every stage keeps at least three.
  const std::size_t dim1 = heads == 1 ? s.dim(3, 4) : heads * s.dim(2, 3);
  c.stages.push_back({p1, dim1, heads, s.dim(1, 2), 1, 2});
  c.stages.push_back({2, 2 * s.dim(2, 3), s.dim(1, 2), 1, 1, 2});
  c.seed = s.dim(0, 1000);
  c.init_std = 0.4;
  c.norm_eps = 1e-5;
  shape = dims({c.height, c.width, c.channels}) + " C" + dims({c.stages[0].embed_dim, c.stages[1].embed_dim}) +
          " R" + std::to_string(c.stages[0].reduction_ratio);
  return c;
}

}  // namespace

std::vector<GradCheckCase> run_gradient_suite(std::uint64_t seed, std::size_t shapes_per_op) {
  Suite s(seed, shapes_per_op);

  s.run("matmul", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const std::size_t m = s.dim(1, 4), k = s.dim(1, 4), n = s.dim(1, 4);
    shape = dims({m, k, n});
    leaves = {s.random({m, k}), s.random({k, n})};
    return s.projected([a = leaves[0], b = leaves[1]](Tape& t) { return matmul(t, a, b); });
  });

  using Binary = Tensor (*)(Tape&, const Tensor&, const Tensor&);
  for (auto [name, fn] : {std::pair<const char*, Binary>{"add", add}, {"sub", sub}, {"mul", mul}}) {
    s.run(name, [&, fn = fn](std::vector<Tensor>& leaves, std::string& shape) {
      const std::size_t a = s.dim(1, 3), b = s.dim(1, 4);
      shape = dims({a, b});
      leaves = {s.random({a, b}), s.random({a, b})};
      return s.projected([fn, x = leaves[0], y = leaves[1]](Tape& t) { return fn(t, x, y); });
    });
  }

  s.run("scale", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const std::size_t n = s.dim(1, 6);
    shape = dims({n});
    leaves = {s.random({n})};
    const double factor = s.random({1}, -2.0, 2.0)[0];
    return s.projected([x = leaves[0], factor](Tape& t) { return scale(t, x, factor); });
  });

  s.run("add_bias", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const std::size_t a = s.dim(1, 3), b = s.dim(1, 4);
    shape = dims({a, b});
    leaves = {s.random({a, b}), s.random({b})};
    return s.projected([x = leaves[0], bias = leaves[1]](Tape& t) { return add_bias(t, x, bias); });
  });

  s.run("linear", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const std::size_t m = s.dim(1, 3), k = s.dim(1, 4), n = s.dim(1, 4);
    shape = dims({m, k, n});
    leaves = {s.random({m, k}), s.random({k, n}), s.random({n})};
    return s.projected([x = leaves[0], w = leaves[1], b = leaves[2]](Tape& t) { return linear(t, x, w, b); });
  });

  using Unary = Tensor (*)(Tape&, const Tensor&);
  for (auto [name, fn] : {std::pair<const char*, Unary>{"relu", relu}, {"gelu", gelu}, {"exp", exp}}) {
    s.run(name, [&, fn = fn](std::vector<Tensor>& leaves, std::string& shape) {
      const std::size_t a = s.dim(1, 3), b = s.dim(1, 4);
      shape = dims({a, b});
      leaves = {s.away_from_zero({a, b})};
      return s.projected([fn, x = leaves[0]](Tape& t) { return fn(t, x); });
    });
  }

  s.run("log", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const std::size_t n = s.dim(1, 6);
    shape = dims({n});
    leaves = {s.random({n}, 0.2, 2.0)};
    return s.projected([x = leaves[0]](Tape& t) { return log(t, x); });
  });

  for (bool use_log : {false, true}) {
    s.run(use_log ? "log_softmax" : "softmax", [&, use_log](std::vector<Tensor>& leaves, std::string& shape) {
      const std::size_t a = s.dim(1, 3), b = s.dim(1, 4), c = s.dim(1, 3);
      const std::size_t axis = s.dim(0, 2);
      shape = dims({a, b, c}) + " axis " + std::to_string(axis);
      leaves = {s.random({a, b, c}, -2.0, 2.0)};
      return s.projected([x = leaves[0], axis, use_log](Tape& t) {
        return use_log ? log_softmax(t, x, axis) : softmax(t, x, axis);
      });
    });
  }

  s.run("layer_norm", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const std::size_t a = s.dim(1, 3), b = s.dim(2, 5);
    shape = dims({a, b});
    leaves = {s.random({a, b}), s.random({b}, 0.5, 1.5), s.random({b})};
    return s.projected([x = leaves[0], g = leaves[1], bias = leaves[2]](Tape& t) {
      return layer_norm(t, x, g, bias, 1e-5);
    });
  });

  s.run("reshape", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const std::size_t a = s.dim(1, 3), b = s.dim(1, 4);
    shape = dims({a, b}) + " -> " + dims({b, a});
    leaves = {s.random({a, b})};
    return s.projected([x = leaves[0], a, b](Tape& t) { return reshape(t, x, {b, a}); });
  });

  s.run("permute", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const std::size_t a = s.dim(1, 3), b = s.dim(1, 3), c = s.dim(1, 3);
    std::vector<std::size_t> axes = {0, 1, 2};
    std::vector<std::size_t> order = axes;
    Rng local(a * 31 + b * 7 + c);
    local.shuffle(order.begin(), order.end());
    shape = dims({a, b, c}) + " perm " + dims({order[0], order[1], order[2]});
    leaves = {s.random({a, b, c})};
    return s.projected([x = leaves[0], order](Tape& t) { return permute(t, x, order); });
  });

  s.run("transpose", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const std::size_t a = s.dim(1, 4), b = s.dim(1, 4);
    shape = dims({a, b});
    leaves = {s.random({a, b})};
    return s.projected([x = leaves[0]](Tape& t) { return transpose(t, x); });
  });

  s.run("concat", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const std::size_t a = s.dim(1, 3), b1 = s.dim(1, 3), b2 = s.dim(1, 3);
    shape = dims({a, b1}) + " | " + dims({a, b2});
    leaves = {s.random({a, b1}), s.random({a, b2})};
    return s.projected([x = leaves[0], y = leaves[1]](Tape& t) { return concat(t, {x, y}, 1); });
  });

  s.run("slice", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const std::size_t a = s.dim(1, 3), b = s.dim(2, 5);
    const std::size_t start = s.dim(0, b - 1);
    const std::size_t length = s.dim(1, b - start);
    shape = dims({a, b}) + " [" + std::to_string(start) + "+" + std::to_string(length) + "]";
    leaves = {s.random({a, b})};
    return s.projected([x = leaves[0], start, length](Tape& t) { return slice(t, x, 1, start, length); });
  });

  s.run("sum", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const std::size_t a = s.dim(1, 3), b = s.dim(1, 4);
    shape = dims({a, b});
    leaves = {s.random({a, b})};
    return s.projected([x = leaves[0]](Tape& t) { return sum(t, mul(t, x, x)); });
  });

  s.run("mean", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const std::size_t a = s.dim(1, 3), b = s.dim(1, 4), axis = s.dim(0, 1);
    shape = dims({a, b}) + " axis " + std::to_string(axis);
    leaves = {s.random({a, b})};
    return s.projected([x = leaves[0], axis](Tape& t) { return mean(t, x, axis); });
  });

  s.run("pick", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const std::size_t n = s.dim(1, 6), index = s.dim(0, n - 1);
    shape = dims({n}) + " [" + std::to_string(index) + "]";
    leaves = {s.random({n})};
    return s.projected([x = leaves[0], index](Tape& t) { return pick(t, x, index); });
  });

  s.run("patch_embed", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const std::size_t p = s.dim(1, 2), gh = s.dim(1, 3), gw = s.dim(1, 3), c = s.dim(1, 2), dim = s.dim(1, 3);
    shape = dims({gh * p, gw * p, c}) + " p" + std::to_string(p) + " C" + std::to_string(dim);
    leaves = {s.random({gh * p, gw * p, c}), s.random({p * p * c, dim}), s.random({dim}), s.random({gh * gw, dim})};
    return s.projected([l = leaves, p](Tape& t) { return patch_embed(t, l[0], p, {l[1], l[2]}, l[3]); });
  });

  s.run("spatial_reduce", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const std::size_t r = s.dim(1, 2), gh = r * s.dim(1, 2), gw = r * s.dim(1, 2), c = s.dim(2, 3);
    shape = dims({gh, gw}) + " R" + std::to_string(r) + " C" + std::to_string(c);
    leaves = {s.random({gh * gw, c}), s.random({r * r * c, c}), s.random({c}), s.random({c}, 0.5, 1.5),
              s.random({c})};
    return s.projected([l = leaves, r, gh, gw](Tape& t) {
      SpatialReduceParams params{{l[1], l[2]}, LayerNormParams{l[3], l[4]}, 1e-5};
      return spatial_reduce(t, l[0], {gh, gw}, r, params);
    });
  });

  s.run("sra_attention", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const std::size_t r = s.dim(1, 2), gh = r * s.dim(1, 2), gw = r * s.dim(1, 2);
    const std::size_t heads = s.dim(1, 2), c = heads * s.dim(1, 3);
    shape = dims({gh, gw}) + " R" + std::to_string(r) + " heads" + std::to_string(heads) + " C" + std::to_string(c);
    leaves = {s.random({gh * gw, c}), s.random({c, c}), s.random({c, c}), s.random({c, c}), s.random({c, c}),
              s.random({c})};
    if (r > 1) {
      for (Tensor t : {s.random({r * r * c, c}), s.random({c}), s.random({c}, 0.5, 1.5), s.random({c})}) {
        leaves.push_back(t);
      }
    }
    return s.projected([l = leaves, r, gh, gw, heads](Tape& t) {
      SRAParams params{l[1], l[2], l[3], std::nullopt, {l[4], l[5]}};
      if (r > 1) params.reduce = SpatialReduceParams{{l[6], l[7]}, LayerNormParams{l[8], l[9]}, 1e-5};
      return sra_attention(t, l[0], l[0], {gh, gw}, params, heads, r);
    });
  });

  s.run("pvt_forward", [&](std::vector<Tensor>& leaves, std::string& shape) {
    const PVTConfig config = tiny_pvt(s, shape);
    auto model = std::make_shared<PVTModel>(config);
    leaves = model->parameters().tensors();
    s.jitter(leaves);
    const Tensor image = s.random({config.height, config.width, config.channels});
    leaves.push_back(image);
    return s.projected([model, image](Tape& t) { return model->forward(t, image); });
  });

  for (Combinator c : {Combinator::Diff, Combinator::Quad3, Combinator::Quad5}) {
    s.run("combine_" + std::string(to_string(c)), [&, c](std::vector<Tensor>& leaves, std::string& shape) {
      const std::size_t d = s.dim(1, 6);
      shape = dims({d});
      leaves = {s.random({d}), s.random({d})};
      return s.projected([x = leaves[0], y = leaves[1], c](Tape& t) { return combine_features(t, x, y, c); });
    });
  }

  s.run("siamese_loss", [&](std::vector<Tensor>& leaves, std::string& shape) {
    SiameseConfig config;
    config.backbone = tiny_pvt(s, shape);
    config.combinator = static_cast<Combinator>(s.dim(0, 2));
    config.head_init_std = 0.4;
    const int label = static_cast<int>(s.dim(0, 1));
    shape += std::string(" ") + std::string(to_string(config.combinator)) + " label " + std::to_string(label);
    auto model = std::make_shared<SiameseModel>(config);
    leaves = model->parameters().tensors();
    s.jitter(leaves);
    const Shape image_shape{config.backbone.height, config.backbone.width, config.backbone.channels};
    const Tensor a = s.random(image_shape), b = s.random(image_shape);
    leaves.push_back(a);
    leaves.push_back(b);
    return Body([model, a, b, label](Tape& t) { return cross_entropy_loss(t, model->logits(t, a, b), label); });
  });

  return s.take();
}

}  // namespace kinship
