#include <doctest.h>

#include "kinship/error.hpp"
#include "kinship/gradcheck.hpp"
#include "kinship/ops.hpp"
#include "kinship/pvt.hpp"
#include "oracles.hpp"

using namespace kinship;

namespace {

Tensor identity(std::size_t n) {
  Tensor t = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.mutable_values()[i * n + i] = 1.0;
  return t;
}

// Independent count: every tensor the architecture description implies.
std::size_t expected_parameter_count(const PVTConfig& c) {
  std::size_t total = 0, h = c.height, w = c.width, in = c.channels;
  for (const auto& s : c.stages) {
    h /= s.patch_size;
    w /= s.patch_size;
    const std::size_t C = s.embed_dim, hidden = s.mlp_ratio * C;
    total += s.patch_size * s.patch_size * in * C + C + h * w * C;
    std::size_t layer = 2 * C + 3 * C * C + (C * C + C) + 2 * C + (C * hidden + hidden) + (hidden * C + C);
    if (s.reduction_ratio > 1) layer += s.reduction_ratio * s.reduction_ratio * C * C + C + 2 * C;
    total += s.depth * layer;
    in = C;
  }
  return total + 2 * c.stages.back().embed_dim;
}

SRAParams random_sra(Rng& rng, std::size_t c, std::size_t ratio) {
  SRAParams p;
  p.query = oracle::random_tensor(rng, {c, c});
  p.key = oracle::random_tensor(rng, {c, c});
  p.value = oracle::random_tensor(rng, {c, c});
  p.output = {oracle::random_tensor(rng, {c, c}), oracle::random_tensor(rng, {c})};
  if (ratio > 1) {
    p.reduce = SpatialReduceParams{{oracle::random_tensor(rng, {ratio * ratio * c, c}), oracle::random_tensor(rng, {c})},
                                   LayerNormParams{Tensor::full({c}, 1.0), Tensor::zeros({c})},
                                   1e-6};
  }
  return p;
}

}  // namespace

TEST_CASE("patch_embed shape and constructed-weight oracles") {
  Tape tape(Tape::Mode::Inference);
  Rng rng(1);
  const Tensor img = oracle::random_tensor(rng, {8, 8, 1});
  const LinearParams proj{oracle::random_tensor(rng, {16, 16}), Tensor::zeros({16})};
  CHECK(patch_embed(tape, img, 4, proj, Tensor::zeros({4, 16})).shape() == Shape{4, 16});

  const Tensor pos = oracle::random_tensor(rng, {4, 16});
  CHECK(oracle::values(patch_embed(tape, Tensor::zeros({8, 8, 1}), 4, proj, pos)) == oracle::values(pos));

  // Identity projection on a 2x2 image with p=2: the token is the flattened patch.
  const Tensor small = Tensor::from({2, 2, 1}, {1, 2, 3, 4});
  CHECK(oracle::values(patch_embed(tape, small, 2, {identity(4), Tensor::zeros({4})}, Tensor::zeros({1, 4}))) ==
        std::vector<double>{1, 2, 3, 4});

  // Patch order is row-major over the patch grid, each patch (row, col, channel).
  const std::size_t H = 4, W = 6, c = 2, p = 2;
  const Tensor big = oracle::random_tensor(rng, {H, W, c});
  const Tensor tokens = patch_embed(tape, big, p, {identity(p * p * c), Tensor::zeros({p * p * c})},
                                    Tensor::zeros({(H / p) * (W / p), p * p * c}));
  for (std::size_t gy = 0; gy < H / p; ++gy) {
    for (std::size_t gx = 0; gx < W / p; ++gx) {
      std::size_t k = 0;
      for (std::size_t dy = 0; dy < p; ++dy) {
        for (std::size_t dx = 0; dx < p; ++dx) {
          for (std::size_t ch = 0; ch < c; ++ch, ++k) {
            const double pixel = big[((gy * p + dy) * W + gx * p + dx) * c + ch];
            CHECK(tokens[(gy * (W / p) + gx) * p * p * c + k] == pixel);
          }
        }
      }
    }
  }
  CHECK_THROWS_AS(patch_embed(tape, oracle::random_tensor(rng, {6, 6, 1}), 4, proj, Tensor::zeros({4, 16})),
                  ConfigError);
}

TEST_CASE("spatial_reduce shapes and grouping") {
  Tape tape(Tape::Mode::Inference);
  Rng rng(2);
  const Tensor x = oracle::random_tensor(rng, {64, 32});
  SpatialReduceParams params{{oracle::random_tensor(rng, {128, 32}), Tensor::zeros({32})},
                             LayerNormParams{Tensor::full({32}, 1.0), Tensor::zeros({32})}, 1e-6};
  CHECK(spatial_reduce(tape, x, {8, 8}, 2, params).shape() == Shape{16, 32});
  CHECK_THROWS_AS(spatial_reduce(tape, x, {8, 8}, 3, params), ConfigError);

  SpatialReduceParams ident{{identity(32), Tensor::zeros({32})}, std::nullopt, 1e-6};
  CHECK(oracle::values(spatial_reduce(tape, x, {8, 8}, 1, ident)) == oracle::values(x));

  // Without norm and with an identity-sized projection, row g holds the
  // R x R block of tokens in (dy, dx, channel) order.
  const std::size_t c = 3, r = 2, gh = 4, gw = 6;
  const Tensor tokens = oracle::random_tensor(rng, {gh * gw, c});
  SpatialReduceParams flat{{identity(r * r * c), Tensor::zeros({r * r * c})}, std::nullopt, 1e-6};
  flat.projection.weight = identity(r * r * c);
  // Projection is (R^2 C) x (R^2 C) here, which spatial_reduce accepts as any linear map.
  const Tensor grouped = spatial_reduce(tape, tokens, {gh, gw}, r, flat);
  REQUIRE(grouped.shape() == Shape{(gh / r) * (gw / r), r * r * c});
  for (std::size_t by = 0; by < gh / r; ++by) {
    for (std::size_t bx = 0; bx < gw / r; ++bx) {
      std::size_t k = 0;
      for (std::size_t dy = 0; dy < r; ++dy) {
        for (std::size_t dx = 0; dx < r; ++dx) {
          for (std::size_t ch = 0; ch < c; ++ch, ++k) {
            CHECK(grouped[(by * (gw / r) + bx) * r * r * c + k] == tokens[((by * r + dy) * gw + bx * r + dx) * c + ch]);
          }
        }
      }
    }
  }
}

TEST_CASE("spatial_reduce shrinks sequence length exactly R^2-fold (sweep)") {
  Tape tape(Tape::Mode::Inference);
  Rng rng(3);
  for (std::size_t r : {1, 2, 3, 4}) {
    for (std::size_t gh : {1, 2, 3}) {
      for (std::size_t gw : {1, 2}) {
        const std::size_t c = 1 + rng.index(4);
        const Tensor x = oracle::random_tensor(rng, {gh * r * gw * r, c});
        SpatialReduceParams params{{oracle::random_tensor(rng, {r * r * c, c}), Tensor::zeros({c})},
                                   LayerNormParams{Tensor::full({c}, 1.0), Tensor::zeros({c})}, 1e-6};
        const Tensor y = spatial_reduce(tape, x, {gh * r, gw * r}, r, params);
        CHECK(y.extent(0) * r * r == x.extent(0));
        CHECK(y.extent(1) == c);
      }
    }
  }
}

TEST_CASE("SRA with R=1 equals vanilla multi-head attention") {
  Tape tape(Tape::Mode::Inference);
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t heads = 1 + rng.index(3), c = heads * (1 + rng.index(4));
    const std::size_t gh = 1 + rng.index(4), gw = 1 + rng.index(4);
    const SRAParams p = random_sra(rng, c, 1);
    const Tensor x = oracle::random_tensor(rng, {gh * gw, c});
    const auto got = oracle::to_matrix(sra_attention(tape, x, x, {gh, gw}, p, heads, 1));
    const auto want = oracle::multi_head_attention(oracle::to_matrix(x), oracle::to_matrix(p.query),
                                                   oracle::to_matrix(p.key), oracle::to_matrix(p.value),
                                                   oracle::to_matrix(p.output.weight), oracle::values(p.output.bias),
                                                   heads);
    for (std::size_t i = 0; i < got.size(); ++i) {
      for (std::size_t j = 0; j < c; ++j) CHECK(std::abs(got[i][j] - want[i][j]) <= 1e-10);
    }
  }
}

TEST_CASE("SRA single token and attention-row laws") {
  Tape tape(Tape::Mode::Inference);
  Rng rng(5);
  const std::size_t c = 4;
  const SRAParams p = random_sra(rng, c, 1);
  const Tensor token = oracle::random_tensor(rng, {1, c});
  std::vector<Tensor> attn;
  const Tensor out = sra_attention(tape, token, token, {1, 1}, p, 2, 1, &attn);
  for (const Tensor& a : attn) CHECK(oracle::values(a) == std::vector<double>{1.0});
  const Tensor expect = linear(tape, matmul(tape, token, p.value), p.output.weight, p.output.bias);
  for (std::size_t j = 0; j < c; ++j) CHECK(out[j] == doctest::Approx(expect[j]).epsilon(1e-14));

  attn.clear();
  const SRAParams reduced = random_sra(rng, 6, 2);
  const Tensor x = oracle::random_tensor(rng, {16, 6});
  const Tensor y = sra_attention(tape, x, x, {4, 4}, reduced, 3, 2, &attn);
  CHECK(y.shape() == x.shape());
  REQUIRE(attn.size() == 3);
  for (const Tensor& a : attn) {
    REQUIRE(a.shape() == Shape{16, 4});
    for (std::size_t i = 0; i < 16; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 4; ++j) s += a[i * 4 + j];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(sra_attention(tape, x, x, {4, 4}, reduced, 4, 2), ConfigError);
}

TEST_CASE("encoder layer with all-zero weights is the identity") {
  Tape tape(Tape::Mode::Inference);
  Rng rng(6);
  const std::size_t c = 4;
  const StageConfig stage{1, c, 2, 2, 1, 2};
  auto zeros_ln = LayerNormParams{Tensor::zeros({c}), Tensor::zeros({c})};
  EncoderLayerParams params{zeros_ln,
                            {Tensor::zeros({c, c}), Tensor::zeros({c, c}), Tensor::zeros({c, c}),
                             SpatialReduceParams{{Tensor::zeros({4 * c, c}), Tensor::zeros({c})}, zeros_ln, 1e-6},
                             {Tensor::zeros({c, c}), Tensor::zeros({c})}},
                            zeros_ln,
                            {Tensor::zeros({c, 2 * c}), Tensor::zeros({2 * c})},
                            {Tensor::zeros({2 * c, c}), Tensor::zeros({c})}};
  const Tensor x = oracle::random_tensor(rng, {16, c});
  CHECK(oracle::values(encoder_layer(tape, x, {4, 4}, params, stage, 1e-6)) == oracle::values(x));
}

TEST_CASE("PVT-Nano produces a 64-d feature and a stable parameter count") {
  const PVTConfig nano = pvt_nano();
  CHECK(nano.feature_dim() == 64);
  PVTModel model(nano);
  Rng rng(7);
  const Tensor image = oracle::random_tensor(rng, {32, 32, 1});
  Tape tape(Tape::Mode::Inference);
  const Tensor f = model.forward(tape, image);
  CHECK(f.shape() == Shape{64});
  CHECK(oracle::values(model.forward(tape, image)) == oracle::values(f));

  CHECK(model.parameters().scalar_count() == expected_parameter_count(nano));
  CHECK(PVTModel(nano).parameters().scalar_count() == model.parameters().scalar_count());
  // Same seed, same weights.
  CHECK(oracle::values(PVTModel(nano).forward(tape, image)) == oracle::values(f));
  CHECK_THROWS_AS(model.forward(tape, oracle::random_tensor(rng, {16, 16, 1})), ConfigError);
}

TEST_CASE("parameter count matches the architecture formula for every preset") {
  for (const char* name : {"nano", "tiny", "v2-b0"}) {
    const PVTConfig c = pvt_preset(name);
    INFO(name);
    CHECK(PVTModel(c).parameters().scalar_count() == expected_parameter_count(c));
  }
}

TEST_CASE("token count after each stage follows the patch-size product (sweep)") {
  Rng rng(8);
  for (int trial = 0; trial < 12; ++trial) {
    PVTConfig c;
    c.channels = 1 + rng.index(2);
    const std::size_t p1 = 1 + rng.index(2), p2 = 1 + rng.index(2);
    const std::size_t grid = 2 * (1 + rng.index(2));
    c.height = c.width = p1 * p2 * grid;
    c.stages = {{p1, 4, 2, 1 + rng.index(2), 1, 2}, {p2, 6, 3, 1, 1, 2}};
    if ((c.height / p1) % c.stages[0].reduction_ratio != 0) c.stages[0].reduction_ratio = 1;
    c.seed = static_cast<std::uint64_t>(trial);
    PVTModel model(c);
    std::vector<Tensor> outputs;
    Tape tape(Tape::Mode::Inference);
    const Tensor f = model.forward(tape, oracle::random_tensor(rng, {c.height, c.width, c.channels}), &outputs);
    REQUIRE(outputs.size() == 2);
    CHECK(outputs[0].extent(0) * p1 * p1 == c.height * c.width);
    CHECK(outputs[1].extent(0) * p1 * p1 * p2 * p2 == c.height * c.width);
    CHECK(f.shape() == Shape{6});
  }
}

TEST_CASE("config validation") {
  PVTConfig c = pvt_nano();
  c.stages[0].num_heads = 3;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = pvt_nano();
  c.height = 30;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = pvt_nano();
  c.stages[1].reduction_ratio = 3;
  CHECK_THROWS_AS(validate(c), ConfigError);
  CHECK_THROWS_AS(pvt_preset("huge"), ConfigError);
}

TEST_CASE("encoder layer gradient passes the finite-difference check") {
  Rng rng(9);
  const std::size_t c = 4;
  const StageConfig stage{1, c, 2, 2, 1, 2};
  auto ln = [&] { return LayerNormParams{oracle::random_tensor(rng, {c}, 0.5, 1.5), oracle::random_tensor(rng, {c})}; };
  EncoderLayerParams p{ln(),
                       {oracle::random_tensor(rng, {c, c}), oracle::random_tensor(rng, {c, c}),
                        oracle::random_tensor(rng, {c, c}),
                        SpatialReduceParams{{oracle::random_tensor(rng, {4 * c, c}), oracle::random_tensor(rng, {c})}, ln(),
                                            1e-5},
                        {oracle::random_tensor(rng, {c, c}), oracle::random_tensor(rng, {c})}},
                       ln(),
                       {oracle::random_tensor(rng, {c, 2 * c}), oracle::random_tensor(rng, {2 * c})},
                       {oracle::random_tensor(rng, {2 * c, c}), oracle::random_tensor(rng, {c})}};
  const Tensor r = oracle::random_tensor(rng, {16, c});
  const double err = finite_diff_check(
      [&](Tape& t, const Tensor& x) { return sum(t, mul(t, encoder_layer(t, x, {4, 4}, p, stage, 1e-5), r)); },
      oracle::random_tensor(rng, {16, c}));
  CHECK(err < 1e-4);
}
