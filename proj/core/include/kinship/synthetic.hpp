#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "kinship/csv_io.hpp"
#include "kinship/siamese.hpp"
#include "kinship/train.hpp"

namespace kinship {

/// Knobs of the synthetic kinship generator.
///
/// Every image is a p x p x c tile repeated over the grid plus iid pixel
/// noise. The tile is a fixed orthonormal basis applied to
///   [person latent (latent_dim) | per-image nuisance (nuisance_dim)],
/// where person latent = family latent + N(0, 1/signal_to_noise^2) and the
/// nuisance is N(0, nuisance_scale^2), drawn fresh for every image. The
/// nuisance carries no kin information but dominates raw pixel distances,
/// so a learned projection beats pixel matching.
struct SyntheticOptions {
  std::size_t families = 16;
  std::size_t persons_per_family = 4;
  std::size_t images_per_person = 8;
  std::size_t image_size = 32;
  std::size_t channels = 1;
  std::size_t tile = 4;
  std::size_t latent_dim = 8;
  std::size_t nuisance_dim = 2;
  double signal_to_noise = 3.0;  // +inf gives identical latents within a family
  double nuisance_scale = 3.0;
  double pixel_noise = 0.5;
  // The last holdout_families families are reserved for evaluation pairs.
  std::size_t holdout_families = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticImage {
  std::string id;  // "F0001/MID2/3.grid", relative to the images directory
  Tensor pixels;   // [H, W, C]
};

struct SyntheticPerson {
  std::string id;  // "F0001/MID2"
  std::vector<double> latent;
  std::vector<SyntheticImage> images;
};

struct SyntheticKinshipSet {
  SyntheticOptions options;
  std::vector<std::vector<double>> family_latents;
  std::vector<SyntheticPerson> persons;
  // Every unordered intra-family person pair, all families included.
  std::vector<RelationshipRecord> relations;
  std::vector<std::string> holdout_families;
  // Labeled image pairs drawn from holdout families only: every cross-person
  // intra-family image pair as a positive, the same number of cross-family
  // negatives.
  std::vector<ImagePair> holdout;
};

// ParameterError on degenerate sizes or a non-positive signal_to_noise.
SyntheticKinshipSet generate_synthetic(const SyntheticOptions& options);

/// Writes DIR/images/<family>/<person>/<n>.grid, DIR/relationships.csv and
/// DIR/holdout_pairs.csv. Output depends only on the set, never on time.
void write_synthetic(const SyntheticKinshipSet& set, const std::filesystem::path& dir);

// Image lookup for the generated persons; holdout families are left out
// when `include_holdout` is false.
PersonImages person_images(const SyntheticKinshipSet& set, bool include_holdout);

/// Grid image text format:
///   kinship-grid 1
///   H W C
///   H lines of W*C values (row-major, channel fastest)
void write_grid(std::ostream& out, const Tensor& image);
void write_grid(const std::filesystem::path& path, const Tensor& image);
Tensor read_grid(std::istream& in, const std::string& source = "<stream>");
Tensor read_grid(const std::filesystem::path& path);

/// Scans images_root/<family>/<person>/*.grid. Image ids are paths
/// relative to images_root with '/' separators; order is lexicographic.
PersonImages load_person_images(const std::filesystem::path& images_root);

/// Reads a pair list whose header starts with "img_pair" and loads both
/// images of every pair from `images`. A second "is_related" column, when
/// present, must hold 0/1 labels.
std::vector<ImagePair> load_image_pairs(const std::filesystem::path& pairs_csv, const PersonImages& images);

// Families appearing on either side of the pair list.
std::set<std::string> families_in(std::span<const ImagePair> pairs);

/// Drops relations and persons that belong to `families`.
void exclude_families(std::vector<RelationshipRecord>& relations, PersonImages& images,
                      const std::set<std::string>& families);

/// Scores 1 / (1 + mean squared pixel difference); higher means closer.
PredictionSet pixel_distance_baseline(std::span<const ImagePair> pairs, std::string name = "pixel-baseline");

}  // namespace kinship
