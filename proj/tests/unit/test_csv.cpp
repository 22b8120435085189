#include <doctest.h>

#include <cstdio>
#include <sstream>

#include "generators.hpp"
#include "kinship/csv_io.hpp"
#include "kinship/error.hpp"

using namespace kinship;

namespace {

std::string parse_error_location(const std::string& text) {
  std::istringstream in(text);
  try {
    (void)parse_submission_csv(in, "sub.csv");
  } catch (const ParseError& e) {
    return e.location();
  }
  return "";
}

}  // namespace

TEST_CASE("relationship csv parses and round-trips") {
  std::istringstream in("p1,p2\nF0002/MID1,F0002/MID3\r\nF0005/MID2,F0005/MID1\n");
  const auto rel = parse_relationship_csv(in);
  REQUIRE(rel.size() == 2);
  CHECK(rel[0] == RelationshipRecord{"F0002/MID1", "F0002/MID3"});
  CHECK(family_of(rel[1].person_a) == "F0005");
  CHECK(family_of("loner") == "loner");

  std::ostringstream out;
  write_relationship_csv(out, rel);
  std::istringstream back(out.str());
  CHECK(parse_relationship_csv(back) == rel);

  std::istringstream empty("p1,p2\n");
  CHECK(parse_relationship_csv(empty).empty());
}

TEST_CASE("relationship csv errors name the line") {
  for (const auto& [text, line] : std::vector<std::pair<std::string, std::string>>{
           {"p1,p2\nF1/A,F1/B\nF1/A\n", "rel.csv line 3"},
           {"p1,p2\nF1/A,F1/A\n", "rel.csv line 2"},
           {"p1,p2\n,F1/B\n", "rel.csv line 2"},
           {"a,b\n", "rel.csv line 1"},
       }) {
    std::istringstream in(text);
    try {
      (void)parse_relationship_csv(in, "rel.csv");
      FAIL("no error for: " << text);
    } catch (const ParseError& e) {
      CHECK(e.location() == line);
    }
  }
}

TEST_CASE("submission csv round-trips 1000 records at six decimals") {
  Rng rng(7);
  PredictionSet p;
  p.name = "random";
  for (std::size_t i = 0; i < 1000; ++i) {
    const double score = i == 0 ? 0.0 : i == 1 ? 1.0 : rng.uniform();
    p.entries.emplace_back("face" + std::to_string(i) + ".jpg-face" + std::to_string(i + 5000) + ".jpg", score);
  }
  std::ostringstream out;
  write_submission_csv(out, p);
  std::istringstream in(out.str());
  const PredictionSet back = parse_submission_csv(in, "random");
  REQUIRE(back.size() == p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(back.entries[i].first == p.entries[i].first);
    char expect[32];
    std::snprintf(expect, sizeof(expect), "%.6f", p.entries[i].second);
    CHECK(back.entries[i].second == std::stod(expect));
    CHECK(std::abs(back.entries[i].second - p.entries[i].second) <= 5e-7);
  }
}

TEST_CASE("submission csv rejects malformed rows with their line number") {
  CHECK(parse_error_location("img_pair,is_related\na.jpg-b.jpg,0.5\na.jpg-b.jpg,0.1\n") == "sub.csv line 3");
  CHECK(parse_error_location("img_pair,is_related\na.jpg-b.jpg,1.5\n") == "sub.csv line 2");
  CHECK(parse_error_location("img_pair,is_related\na.jpg-b.jpg,-0.01\n") == "sub.csv line 2");
  CHECK(parse_error_location("img_pair,is_related\na.jpg-b.jpg,abc\n") == "sub.csv line 2");
  CHECK(parse_error_location("img_pair,is_related\na.jpg-b.jpg,nan\n") == "sub.csv line 2");
  CHECK(parse_error_location("img_pair,is_related\nab.jpg,0.5\n") == "sub.csv line 2");
  CHECK(parse_error_location("img_pair,is_related\na-b-c,0.5\n") == "sub.csv line 2");
  CHECK(parse_error_location("img_pair,is_related\na.jpg-b.jpg\n") == "sub.csv line 2");
  CHECK(parse_error_location("pair,score\n") == "sub.csv line 1");
}

TEST_CASE("label csv accepts only 0 and 1") {
  std::istringstream ok("img_pair,is_related\na.jpg-b.jpg,1\nc.jpg-d.jpg,0\n");
  const LabelSet labels = parse_label_csv(ok);
  CHECK(labels.size() == 2);
  CHECK(labels.at("a.jpg-b.jpg") == 1);
  std::istringstream bad("img_pair,is_related\na.jpg-b.jpg,0.5\n");
  CHECK_THROWS_AS(parse_label_csv(bad, "labels.csv"), ParseError);
}

TEST_CASE("pair ids split on the single dash") {
  const PairId id = split_pair_id("F01/MID1/a.jpg-F02/MID3/b.jpg");
  CHECK(id.image_a == "F01/MID1/a.jpg");
  CHECK(id.image_b == "F02/MID3/b.jpg");
  CHECK(make_pair_id(id.image_a, id.image_b) == "F01/MID1/a.jpg-F02/MID3/b.jpg");
  CHECK_THROWS_AS(split_pair_id("a-b-c"), ParameterError);
  CHECK_THROWS_AS(split_pair_id("-b"), ParameterError);
  CHECK_THROWS_AS(split_pair_id("ab"), ParameterError);
}
