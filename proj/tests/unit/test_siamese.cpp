#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "kinship/error.hpp"
#include "kinship/ops.hpp"
#include "kinship/siamese.hpp"
#include "oracles.hpp"

using namespace kinship;

namespace {

PVTConfig micro_backbone() {
  PVTConfig c;
  c.name = "micro";
  c.height = c.width = 8;
  c.channels = 1;
  c.stages = {{2, 4, 1, 2, 1, 2}, {2, 8, 2, 1, 1, 2}};
  c.seed = 5;
  return c;
}

std::vector<double> run_combine(const std::vector<double>& x, const std::vector<double>& y, Combinator c) {
  Tape tape(Tape::Mode::Inference);
  return oracle::values(combine_features(tape, Tensor::from({x.size()}, x), Tensor::from({y.size()}, y), c));
}

}  // namespace

TEST_CASE("combinator closed-form examples") {
  CHECK(run_combine({1, 2}, {0, 2}, Combinator::Diff) == std::vector<double>{1, 0});
  CHECK(run_combine({1}, {2}, Combinator::Quad3) == std::vector<double>{5, -3, 2});
  CHECK(run_combine({3, -1}, {3, -1}, Combinator::Quad5) == std::vector<double>{0, 0, 0, 0, 18, 2, 0, 0, 9, 1});
  CHECK_THROWS_AS(run_combine({1, 2}, {1}, Combinator::Diff), DimensionError);
}

TEST_CASE("combinator output widths are 1, 3 and 5 times D") {
  Rng rng(1);
  for (std::size_t d = 1; d <= 9; ++d) {
    std::vector<double> x(d), y(d);
    for (std::size_t i = 0; i < d; ++i) x[i] = rng.normal(), y[i] = rng.normal();
    CHECK(run_combine(x, y, Combinator::Diff).size() == d);
    CHECK(run_combine(x, y, Combinator::Quad3).size() == 3 * d);
    CHECK(run_combine(x, y, Combinator::Quad5).size() == 5 * d);
  }
}

TEST_CASE("swapping the inputs negates exactly the antisymmetric blocks") {
  Rng rng(2);
  // Per block: -1 when the block flips sign under x <-> y, +1 when unchanged.
  const std::vector<std::pair<Combinator, std::vector<int>>> patterns = {
      {Combinator::Diff, {-1}}, {Combinator::Quad3, {1, -1, 1}}, {Combinator::Quad5, {-1, 1, 1, -1, 1}}};
  for (const auto& [c, signs] : patterns) {
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t d = 1 + rng.index(8);
      std::vector<double> x(d), y(d);
      for (std::size_t i = 0; i < d; ++i) x[i] = rng.normal(0, 3), y[i] = rng.normal(0, 3);
      const auto xy = run_combine(x, y, c), yx = run_combine(y, x, c);
      for (std::size_t b = 0; b < signs.size(); ++b) {
        for (std::size_t i = 0; i < d; ++i) CHECK(yx[b * d + i] == signs[b] * xy[b * d + i]);
      }
    }
  }
}

TEST_CASE("combinator names") {
  CHECK(parse_combinator("quad5") == Combinator::Quad5);
  CHECK(parse_combinator("PVT-1") == Combinator::Diff);
  CHECK(parse_combinator("pvt-2") == Combinator::Quad3);
  CHECK(to_string(Combinator::Quad3) == "QUAD3");
  CHECK_THROWS_AS(parse_combinator("QUAD4"), ConfigError);
}

TEST_CASE("cross-entropy closed forms and shift invariance") {
  Tape tape(Tape::Mode::Inference);
  for (int label : {0, 1}) {
    CHECK(cross_entropy_loss(tape, Tensor::from({2}, {0, 0}), label).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  CHECK(cross_entropy_loss(tape, Tensor::from({2}, {0, std::log(3.0)}), 1).item() ==
        doctest::Approx(-std::log(0.75)).epsilon(1e-14));
  // Huge margins stay finite and non-negative.
  const double tiny = cross_entropy_loss(tape, Tensor::from({2}, {-800, 800}), 1).item();
  CHECK(tiny >= 0.0);
  CHECK(std::isfinite(cross_entropy_loss(tape, Tensor::from({2}, {-800, 800}), 0).item()));
  CHECK_THROWS_AS(cross_entropy_loss(tape, Tensor::from({2}, {0, 0}), 2), ContractError);

  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const double a = rng.normal(0, 4), b = rng.normal(0, 4), shift = rng.normal(0, 100);
    const int label = static_cast<int>(rng.index(2));
    const double base = cross_entropy_loss(tape, Tensor::from({2}, {a, b}), label).item();
    const double moved = cross_entropy_loss(tape, Tensor::from({2}, {a + shift, b + shift}), label).item();
    CHECK(base >= 0.0);
    CHECK(std::abs(base - moved) <= 1e-12);
  }
}

TEST_CASE("zeroed head gives probability one half") {
  SiameseConfig config;
  config.backbone = micro_backbone();
  SiameseModel model(config);
  for (auto [name, t] : model.parameters().entries()) {
    if (name.rfind("head.", 0) == 0) std::fill(t.mutable_values().begin(), t.mutable_values().end(), 0.0);
  }
  Rng rng(4);
  const Tensor a = oracle::random_tensor(rng, {8, 8, 1}), b = oracle::random_tensor(rng, {8, 8, 1});
  CHECK(model.kin_probability(a, b) == 0.5);
}

TEST_CASE("siamese forward is deterministic and weight-tied") {
  SiameseConfig config;
  config.backbone = micro_backbone();
  config.combinator = Combinator::Quad3;
  SiameseModel model(config);
  Rng rng(5);
  const Tensor a = oracle::random_tensor(rng, {8, 8, 1}), b = oracle::random_tensor(rng, {8, 8, 1});
  const double p = model.kin_probability(a, b);
  CHECK(p > 0.0);
  CHECK(p < 1.0);
  CHECK(model.kin_probability(a, b) == p);

  // Both branches read the same tensors: one backbone parameter set, and
  // identical inputs give identical features.
  std::size_t backbone = 0;
  for (const auto& [name, t] : model.parameters().entries()) backbone += name.rfind("backbone.", 0) == 0;
  CHECK(backbone == model.backbone().parameters().size());
  Tape tape(Tape::Mode::Inference);
  CHECK(oracle::values(model.features(tape, a)) == oracle::values(model.features(tape, a)));

  CHECK_THROWS_AS(model.kin_probability(a, oracle::random_tensor(rng, {8, 4, 2})), DimensionError);
}

TEST_CASE("head widths default to kD/2 and kD/4") {
  SiameseConfig config;
  config.backbone = micro_backbone();
  config.combinator = Combinator::Quad5;
  const auto w = config.hidden_widths();
  CHECK(w[0] == 20);
  CHECK(w[1] == 10);
  SiameseModel model(config);
  CHECK(model.head().layers[0].weight.shape() == Shape{40, 20});
  CHECK(model.head().layers[2].weight.shape() == Shape{10, 2});
  config.hidden = {3};
  CHECK_THROWS_AS(config.hidden_widths(), ConfigError);
}

namespace {

PersonImages toy_images(std::size_t families, std::size_t persons, std::size_t images) {
  PersonImages out;
  for (std::size_t f = 0; f < families; ++f) {
    for (std::size_t p = 0; p < persons; ++p) {
      const std::string id = "F" + std::to_string(f) + "/P" + std::to_string(p);
      for (std::size_t i = 0; i < images; ++i) {
        out[id].push_back({id + "/" + std::to_string(i), Tensor::full({2, 2, 1}, static_cast<double>(f))});
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("sample_pairs count, family and determinism laws") {
  const PersonImages images = toy_images(4, 3, 2);
  std::vector<RelationshipRecord> relations;
  for (std::size_t f = 0; f < 4; ++f) {
    relations.push_back({"F" + std::to_string(f) + "/P0", "F" + std::to_string(f) + "/P1"});
    relations.push_back({"F" + std::to_string(f) + "/P1", "F" + std::to_string(f) + "/P2"});
  }
  relations.push_back({"F0/P0", "F0/P2"});
  relations.push_back({"F1/P0", "F1/P2"});
  REQUIRE(relations.size() == 10);

  const auto pairs = sample_pairs(relations, images, 1.0, 42);
  std::size_t pos = 0, neg = 0;
  for (const auto& p : pairs) {
    const std::string fa = family_of(p.image_a), fb = family_of(p.image_b);
    if (p.label == 1) {
      ++pos;
    } else {
      ++neg;
      CHECK(fa != fb);
    }
  }
  CHECK(pos == 10);
  CHECK(neg == 10);

  const auto again = sample_pairs(relations, images, 1.0, 42);
  REQUIRE(again.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(again[i].image_a == pairs[i].image_a);
    CHECK(again[i].image_b == pairs[i].image_b);
    CHECK(again[i].label == pairs[i].label);
  }
  CHECK(sample_pairs(relations, images, 2.5, 1).size() == 35);
  CHECK(sample_pairs(relations, images, 0.0, 1).size() == 10);
}

TEST_CASE("sample_pairs rejects degenerate inputs") {
  const PersonImages one_family = toy_images(1, 3, 1);
  const std::vector<RelationshipRecord> rel = {{"F0/P0", "F0/P1"}};
  CHECK_THROWS_AS(sample_pairs(rel, one_family, 1.0, 0), ContractError);
  CHECK_THROWS_AS(sample_pairs({}, one_family, 1.0, 0), ContractError);
  const std::vector<RelationshipRecord> ghost = {{"F0/P0", "F9/P9"}};
  CHECK_THROWS_AS(sample_pairs(ghost, toy_images(2, 1, 1), 1.0, 0), ContractError);
}
