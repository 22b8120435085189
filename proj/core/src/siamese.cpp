#include "kinship/siamese.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "kinship/error.hpp"
#include "kinship/ops.hpp"
#include "kinship/rng.hpp"

namespace kinship {

std::size_t combinator_blocks(Combinator c) {
  switch (c) {
    case Combinator::Diff:
      return 1;
    case Combinator::Quad3:
      return 3;
    case Combinator::Quad5:
      return 5;
  }
  return 0;
}

std::string_view to_string(Combinator c) {
  switch (c) {
    case Combinator::Diff:
      return "DIFF";
    case Combinator::Quad3:
      return "QUAD3";
    case Combinator::Quad5:
      return "QUAD5";
  }
  return "?";
}

Combinator parse_combinator(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char ch) { return std::toupper(ch); });
  if (upper == "DIFF" || upper == "PVT-1") return Combinator::Diff;
  if (upper == "QUAD3" || upper == "PVT-2") return Combinator::Quad3;
  if (upper == "QUAD5" || upper == "PVT-3" || upper == "PVT-4") return Combinator::Quad5;
  throw ConfigError("unknown combinator '" + std::string(text) + "' (expected DIFF, QUAD3 or QUAD5)");
}

Tensor combine_features(Tape& tape, const Tensor& x, const Tensor& y, Combinator c) {
  if (x.rank() != 1 || x.shape() != y.shape()) {
    throw DimensionError("combine_features: feature shapes " + to_string(x.shape()) + " and " + to_string(y.shape()) +
                         " must be equal vectors");
  }
  switch (c) {
    case Combinator::Diff:
      return sub(tape, x, y);
    case Combinator::Quad3: {
      const Tensor xx = mul(tape, x, x);
      const Tensor yy = mul(tape, y, y);
      return concat(tape, {add(tape, xx, yy), sub(tape, xx, yy), mul(tape, x, y)}, 0);
    }
    case Combinator::Quad5: {
      const Tensor d = sub(tape, x, y);
      const Tensor xx = mul(tape, x, x);
      const Tensor yy = mul(tape, y, y);
      return concat(tape, {d, mul(tape, d, d), add(tape, xx, yy), sub(tape, xx, yy), mul(tape, x, y)}, 0);
    }
  }
  throw ConfigError("invalid combinator");
}

std::array<std::size_t, 2> SiameseConfig::hidden_widths() const {
  if (!hidden.empty()) {
    if (hidden.size() != 2 || hidden[0] == 0 || hidden[1] == 0) {
      throw ConfigError("siamese head needs exactly two positive hidden widths");
    }
    return {hidden[0], hidden[1]};
  }
  const std::size_t width = combinator_blocks(combinator) * backbone.feature_dim();
  return {std::max<std::size_t>(1, width / 2), std::max<std::size_t>(1, width / 4)};
}

Tensor SiameseHead::forward(Tape& tape, const Tensor& combined) const {
  Tensor h = reshape(tape, combined, {1, combined.size()});
  h = relu(tape, linear(tape, h, layers[0].weight, layers[0].bias));
  h = relu(tape, linear(tape, h, layers[1].weight, layers[1].bias));
  h = linear(tape, h, layers[2].weight, layers[2].bias);
  return reshape(tape, h, {2});
}

SiameseModel::SiameseModel(SiameseConfig config) : config_(std::move(config)), backbone_(config_.backbone) {
  const std::size_t in = combinator_blocks(config_.combinator) * backbone_.config().feature_dim();
  const auto widths = config_.hidden_widths();
  // Offset the stream so head weights do not replay the backbone's draws.
  Rng rng(config_.backbone.seed ^ 0x9E3779B97F4A7C15ULL);
  head_.layers[0] = init_linear(rng, in, widths[0], config_.head_init_std);
  head_.layers[1] = init_linear(rng, widths[0], widths[1], config_.head_init_std);
  head_.layers[2] = init_linear(rng, widths[1], 2, config_.head_init_std);

  for (const auto& [name, tensor] : backbone_.parameters().entries()) parameters_.add("backbone." + name, tensor);
  for (std::size_t i = 0; i < head_.layers.size(); ++i) {
    register_linear(parameters_, "head.fc" + std::to_string(i + 1), head_.layers[i]);
  }
}

Tensor SiameseModel::features(Tape& tape, const Tensor& image) const { return backbone_.forward(tape, image); }

Tensor SiameseModel::logits_from_features(Tape& tape, const Tensor& features_a, const Tensor& features_b) const {
  return head_.forward(tape, combine_features(tape, features_a, features_b, config_.combinator));
}

Tensor SiameseModel::logits(Tape& tape, const Tensor& image_a, const Tensor& image_b) const {
  if (image_a.shape() != image_b.shape()) {
    throw DimensionError("siamese pair images differ in shape: " + to_string(image_a.shape()) + " vs " +
                         to_string(image_b.shape()));
  }
  return logits_from_features(tape, features(tape, image_a), features(tape, image_b));
}

double SiameseModel::kin_probability(const Tensor& image_a, const Tensor& image_b) const {
  Tape tape(Tape::Mode::Inference);
  return softmax(tape, logits(tape, image_a, image_b), 0)[1];
}

double SiameseModel::kin_probability_from_features(const Tensor& features_a, const Tensor& features_b) const {
  Tape tape(Tape::Mode::Inference);
  return softmax(tape, logits_from_features(tape, features_a, features_b), 0)[1];
}

Tensor cross_entropy_loss(Tape& tape, const Tensor& logits, int label) {
  if (label != 0 && label != 1) throw ContractError("cross_entropy_loss: label must be 0 or 1, got " + std::to_string(label));
  if (logits.shape() != Shape{2}) {
    throw DimensionError("cross_entropy_loss: expected 2 logits, got " + to_string(logits.shape()));
  }
  return scale(tape, pick(tape, log_softmax(tape, logits, 0), static_cast<std::size_t>(label)), -1.0);
}

std::vector<PairSample> sample_pairs(std::span<const RelationshipRecord> relations, const PersonImages& images,
                                     double ratio, std::uint64_t seed) {
  if (relations.empty()) throw ContractError("sample_pairs: no relations to draw positives from");
  if (!(ratio >= 0.0) || !std::isfinite(ratio)) throw ParameterError("sample_pairs: ratio must be non-negative");

  auto images_of = [&](const std::string& person) -> const std::vector<PersonImage>& {
    auto it = images.find(person);
    if (it == images.end() || it->second.empty()) {
      throw ContractError("sample_pairs: person '" + person + "' has no images");
    }
    return it->second;
  };

  Rng rng(seed);
  std::vector<PairSample> out;
  auto emit = [&](const std::string& pa, const std::string& pb, int label) {
    const auto& ia = images_of(pa);
    const auto& ib = images_of(pb);
    const PersonImage& a = ia[rng.index(ia.size())];
    const PersonImage& b = ib[rng.index(ib.size())];
    out.push_back({a.id, b.id, a.image, b.image, label});
  };

  for (const auto& r : relations) emit(r.person_a, r.person_b, 1);

  const auto negatives = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(relations.size())));
  if (negatives > 0) {
    std::vector<std::string> persons;
    std::vector<std::string> families;
    for (const auto& [person, list] : images) {
      if (list.empty()) continue;
      persons.push_back(person);
      families.push_back(family_of(person));
    }
    const bool any_cross =
        std::adjacent_find(families.begin(), families.end(), std::not_equal_to<>()) != families.end();
    if (!any_cross) throw ContractError("sample_pairs: no cross-family person pairs available for negatives");
    for (std::size_t n = 0; n < negatives; ++n) {
      std::size_t i = 0, j = 0;
      do {
        i = rng.index(persons.size());
        j = rng.index(persons.size());
      } while (families[i] == families[j]);
      emit(persons[i], persons[j], 0);
    }
  }
  rng.shuffle(out.begin(), out.end());
  return out;
}

}  // namespace kinship
