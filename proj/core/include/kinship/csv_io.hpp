#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "kinship/metrics.hpp"

namespace kinship {

/// One row of a relationship file: two family-scoped person ids such as
/// "F0002/MID1".
struct RelationshipRecord {
  std::string person_a;
  std::string person_b;

  bool operator==(const RelationshipRecord&) const = default;
};

// Text before the first '/', or the whole id when there is none.
std::string family_of(const std::string& person_id);

/// Relationship CSV: header "p1,p2", then one pair per line. Empty ids,
/// self-pairs and wrong field counts raise ParseError naming the 1-based
/// line number. An empty body is valid.
std::vector<RelationshipRecord> parse_relationship_csv(std::istream& in, const std::string& source = "<stream>");
std::vector<RelationshipRecord> parse_relationship_csv(const std::filesystem::path& path);
void write_relationship_csv(std::ostream& out, const std::vector<RelationshipRecord>& records);

/// Submission CSV: header "img_pair,is_related", pair ids of the form
/// "<imageA>-<imageB>" (exactly one '-'), scores written with 6 decimals.
/// Out-of-range scores and duplicate ids are rejected.
PredictionSet parse_submission_csv(std::istream& in, const std::string& name);
PredictionSet parse_submission_csv(const std::filesystem::path& path);
void write_submission_csv(std::ostream& out, const PredictionSet& predictions);
void write_submission_csv(const std::filesystem::path& path, const PredictionSet& predictions);

/// Labels use the submission layout with is_related in {0, 1}.
LabelSet parse_label_csv(std::istream& in, const std::string& source = "<stream>");
LabelSet parse_label_csv(const std::filesystem::path& path);

struct PairId {
  std::string image_a;
  std::string image_b;
};

// Throws ParameterError unless `pair_id` has exactly one '-' with non-empty sides.
PairId split_pair_id(const std::string& pair_id);
std::string make_pair_id(const std::string& image_a, const std::string& image_b);

}  // namespace kinship
