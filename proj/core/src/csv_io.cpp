#include "kinship/csv_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_set>

#include "kinship/error.hpp"

namespace kinship {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::string location(const std::string& source, std::size_t line) {
  return source + " line " + std::to_string(line);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

double parse_number(const std::string& text, const std::string& where) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || text.empty()) throw ParseError(where, "not a number: '" + text + "'");
  return value;
}

// Consumes the header line and checks it field by field.
void expect_header(std::istream& in, const std::string& expected, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(location(source, 1), "missing header \"" + expected + "\"");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  const auto fields = split_fields(line);
  const auto want = split_fields(expected);
  if (fields != want) {
    throw ParseError(location(source, 1), "expected header \"" + expected + "\", got \"" + trim(line) + "\"");
  }
}

struct ScoredRow {
  std::string id;
  double value;
  std::size_t line;
};

std::vector<ScoredRow> read_scored_rows(std::istream& in, const std::string& source) {
  expect_header(in, "img_pair,is_related", source);
  std::vector<ScoredRow> rows;
  std::string line;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 2) {
      throw ParseError(location(source, number), "expected 2 fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw ParseError(location(source, number), "empty img_pair");
    rows.push_back({fields[0], parse_number(fields[1], location(source, number)), number});
  }
  return rows;
}

}  // namespace

std::string family_of(const std::string& person_id) {
  const auto slash = person_id.find('/');
  return slash == std::string::npos ? person_id : person_id.substr(0, slash);
}

std::vector<RelationshipRecord> parse_relationship_csv(std::istream& in, const std::string& source) {
  expect_header(in, "p1,p2", source);
  std::vector<RelationshipRecord> records;
  std::string line;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 2) {
      throw ParseError(location(source, number), "expected 2 fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) throw ParseError(location(source, number), "empty person id");
    if (fields[0] == fields[1]) throw ParseError(location(source, number), "self-pair '" + fields[0] + "'");
    records.push_back({fields[0], fields[1]});
  }
  return records;
}

std::vector<RelationshipRecord> parse_relationship_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_relationship_csv(in, path.string());
}

void write_relationship_csv(std::ostream& out, const std::vector<RelationshipRecord>& records) {
  out << "p1,p2\n";
  for (const auto& r : records) out << r.person_a << ',' << r.person_b << '\n';
}

PairId split_pair_id(const std::string& pair_id) {
  const auto dash = pair_id.find('-');
  if (dash == std::string::npos || pair_id.find('-', dash + 1) != std::string::npos || dash == 0 ||
      dash + 1 == pair_id.size()) {
    throw ParameterError("pair_id '" + pair_id + "' must have the form <imageA>-<imageB> with exactly one '-'");
  }
  return {pair_id.substr(0, dash), pair_id.substr(dash + 1)};
}

std::string make_pair_id(const std::string& image_a, const std::string& image_b) {
  std::string id = image_a + "-" + image_b;
  split_pair_id(id);
  return id;
}

PredictionSet parse_submission_csv(std::istream& in, const std::string& name) {
  PredictionSet set;
  set.name = name;
  std::unordered_set<std::string> seen;
  for (auto& row : read_scored_rows(in, name)) {
    const std::string where = location(name, row.line);
    if (!std::isfinite(row.value) || row.value < 0.0 || row.value > 1.0) {
      throw ParseError(where, "score for '" + row.id + "' is outside [0, 1]: " + std::to_string(row.value));
    }
    if (!seen.insert(row.id).second) throw ParseError(where, "duplicate pair_id '" + row.id + "'");
    try {
      split_pair_id(row.id);
    } catch (const ParameterError& e) {
      throw ParseError(where, e.what());
    }
    set.entries.emplace_back(std::move(row.id), row.value);
  }
  return set;
}

PredictionSet parse_submission_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  PredictionSet set = parse_submission_csv(in, path.string());
  set.name = path.stem().string();
  return set;
}

void write_submission_csv(std::ostream& out, const PredictionSet& predictions) {
  predictions.validate();
  for (const auto& e : predictions.entries) split_pair_id(e.first);
  out << "img_pair,is_related\n";
  char buf[64];
  for (const auto& [id, score] : predictions.entries) {
    std::snprintf(buf, sizeof(buf), "%.6f", score);
    out << id << ',' << buf << '\n';
  }
}

void write_submission_csv(const std::filesystem::path& path, const PredictionSet& predictions) {
  auto out = open_output(path);
  write_submission_csv(out, predictions);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

LabelSet parse_label_csv(std::istream& in, const std::string& source) {
  LabelSet labels;
  for (const auto& row : read_scored_rows(in, source)) {
    const std::string where = location(source, row.line);
    if (row.value != 0.0 && row.value != 1.0) {
      throw ParseError(where, "label for '" + row.id + "' must be 0 or 1");
    }
    if (labels.contains(row.id)) throw ParseError(where, "duplicate pair_id '" + row.id + "'");
    labels.add(row.id, static_cast<int>(row.value));
  }
  return labels;
}

LabelSet parse_label_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_label_csv(in, path.string());
}

}  // namespace kinship
