#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kinship/csv_io.hpp"
#include "kinship/parameters.hpp"
#include "kinship/pvt.hpp"
#include "kinship/tensor.hpp"

namespace kinship {

/// Feature-fusion formula applied to the twin feature vectors x and y.
/// Squares and products are elementwise.
enum class Combinator {
  Diff,   // x - y
  Quad3,  // [x^2 + y^2, x^2 - y^2, x*y]
  Quad5,  // [x - y, (x - y)^2, x^2 + y^2, x^2 - y^2, x*y]
};

// Number of D-wide blocks the combinator emits: 1, 3 or 5.
std::size_t combinator_blocks(Combinator c);
std::string_view to_string(Combinator c);
// Accepts DIFF / QUAD3 / QUAD5 (any case) and the variant names pvt-1 .. pvt-4.
Combinator parse_combinator(std::string_view text);

/// Evaluates the combinator on two [D] vectors; output is [kD] with the
/// blocks in the order listed on Combinator.
Tensor combine_features(Tape& tape, const Tensor& x, const Tensor& y, Combinator c);

struct SiameseConfig {
  PVTConfig backbone = pvt_nano();
  Combinator combinator = Combinator::Quad5;
  // Widths of the two hidden fully-connected layers; empty means {kD/2, kD/4}.
  std::vector<std::size_t> hidden;
  double head_init_std = 0.02;

  std::array<std::size_t, 2> hidden_widths() const;
};

/// Three affine layers with ReLU between them, ending in 2 logits
/// (index 0 = unrelated, index 1 = kin).
struct SiameseHead {
  std::array<LinearParams, 3> layers;

  Tensor forward(Tape& tape, const Tensor& combined) const;
};

/// Twin weight-tied PVT branches, a combinator and the classification head.
/// Both images run through the same backbone parameters.
class SiameseModel {
 public:
  explicit SiameseModel(SiameseConfig config);

  const SiameseConfig& config() const { return config_; }
  const PVTModel& backbone() const { return backbone_; }
  const SiameseHead& head() const { return head_; }
  // Backbone parameters prefixed "backbone.", then "head.fc{1,2,3}.*".
  const ParameterSet& parameters() const { return parameters_; }
  ParameterSet& parameters() { return parameters_; }

  Tensor features(Tape& tape, const Tensor& image) const;
  Tensor logits_from_features(Tape& tape, const Tensor& features_a, const Tensor& features_b) const;
  Tensor logits(Tape& tape, const Tensor& image_a, const Tensor& image_b) const;

  // softmax(logits)[kin] from an inference-only pass.
  double kin_probability(const Tensor& image_a, const Tensor& image_b) const;
  double kin_probability_from_features(const Tensor& features_a, const Tensor& features_b) const;

 private:
  SiameseConfig config_;
  PVTModel backbone_;
  SiameseHead head_;
  ParameterSet parameters_;
};

/// -log softmax(logits)[label], evaluated in log space. `logits` has 2
/// entries; label must be 0 or 1 (ContractError otherwise).
Tensor cross_entropy_loss(Tape& tape, const Tensor& logits, int label);

struct PairSample {
  std::string image_a;  // image ids, for caching and reporting
  std::string image_b;
  Tensor a;
  Tensor b;
  int label = 0;  // 1 = kin
};

struct PersonImage {
  std::string id;
  Tensor image;
};

// person id -> that person's images. Ordered so sampling is deterministic.
using PersonImages = std::map<std::string, std::vector<PersonImage>>;

/// One epoch's worth of training pairs. Positives follow `relations` (a
/// random image of each person); round(ratio * positives) negatives are
/// drawn uniformly from ordered cross-family person pairs in `images`. The
/// result is shuffled and fully determined by `seed`.
std::vector<PairSample> sample_pairs(std::span<const RelationshipRecord> relations, const PersonImages& images,
                                     double ratio, std::uint64_t seed);

}  // namespace kinship
