#include "kinship/config_file.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kinship/error.hpp"

namespace kinship {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) parts.push_back(trim(item));
  return parts;
}

template <typename T>
T parse_integer(const std::string& text, const std::string& what) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError(what + ": expected a non-negative integer, got '" + text + "'");
  }
  return value;
}

double parse_real(const std::string& text, const std::string& what) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError(what + ": expected a number, got '" + text + "'");
  }
  return value;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& source) {
  KeyValueConfig kv;
  kv.source_ = source;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    const std::string where = source + " line " + std::to_string(number);
    if (eq == std::string::npos) throw ParseError(where, "expected 'key = value'");
    std::string key = trim(std::string_view(content).substr(0, eq));
    std::string value = trim(std::string_view(content).substr(eq + 1));
    if (key.empty()) throw ParseError(where, "empty key");
    if (kv.has(key)) throw ParseError(where, "duplicate key '" + key + "'");
    kv.entries_.emplace_back(std::move(key), std::move(value));
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  return parse(in, path.string());
}

bool KeyValueConfig::has(const std::string& key) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
}

const std::string& KeyValueConfig::get(const std::string& key) const {
  for (const auto& e : entries_) {
    if (e.first == key) return e.second;
  }
  throw ConfigError(source_ + ": missing required key '" + key + "'");
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const {
  return has(key) ? parse_integer<std::size_t>(get(key), source_ + ": " + key) : fallback;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? parse_integer<std::uint64_t>(get(key), source_ + ": " + key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? parse_real(get(key), source_ + ": " + key) : fallback;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  for (auto& e : entries_) {
    if (e.first == key) {
      e.second = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void KeyValueConfig::reject_unknown(std::initializer_list<std::string_view> known) const {
  for (const auto& e : entries_) {
    if (std::find(known.begin(), known.end(), e.first) == known.end()) {
      throw ConfigError(source_ + ": unknown key '" + e.first + "'");
    }
  }
}

std::string KeyValueConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

std::string format_stages(const std::vector<StageConfig>& stages) {
  std::string out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const StageConfig& s = stages[i];
    if (i > 0) out += ", ";
    out += std::to_string(s.patch_size) + ":" + std::to_string(s.embed_dim) + ":" + std::to_string(s.num_heads) +
           ":" + std::to_string(s.reduction_ratio) + ":" + std::to_string(s.depth) + ":" +
           std::to_string(s.mlp_ratio);
  }
  return out;
}

std::vector<StageConfig> parse_stages(const std::string& text) {
  std::vector<StageConfig> stages;
  for (const auto& item : split(text, ',')) {
    const auto f = split(item, ':');
    if (f.size() != 5 && f.size() != 6) {
      throw ConfigError("stage '" + item + "' must be patch:dim:heads:ratio:depth[:mlp]");
    }
    StageConfig s;
    s.patch_size = parse_integer<std::size_t>(f[0], "stage patch size");
    s.embed_dim = parse_integer<std::size_t>(f[1], "stage embed dim");
    s.num_heads = parse_integer<std::size_t>(f[2], "stage heads");
    s.reduction_ratio = parse_integer<std::size_t>(f[3], "stage reduction ratio");
    s.depth = parse_integer<std::size_t>(f[4], "stage depth");
    if (f.size() == 6) s.mlp_ratio = parse_integer<std::size_t>(f[5], "stage mlp ratio");
    stages.push_back(s);
  }
  if (stages.empty()) throw ConfigError("empty stage list");
  return stages;
}

PVTConfig pvt_config_from(const KeyValueConfig& kv) {
  // A name that is not a preset is a custom model and must spell out its shape.
  const std::string name = kv.get_or("model", "nano");
  const bool preset = name == "nano" || name == "tiny" || name == "v2-b0";
  PVTConfig c = preset || !kv.has("input") || !kv.has("stages") ? pvt_preset(name) : PVTConfig{};
  c.name = name;
  if (kv.has("input")) {
    const auto dims = split(kv.get("input"), 'x');
    if (dims.size() != 3) throw ConfigError("input must be HxWxC, got '" + kv.get("input") + "'");
    c.height = parse_integer<std::size_t>(dims[0], "input height");
    c.width = parse_integer<std::size_t>(dims[1], "input width");
    c.channels = parse_integer<std::size_t>(dims[2], "input channels");
  }
  if (kv.has("stages")) c.stages = parse_stages(kv.get("stages"));
  c.seed = kv.get_u64("seed", c.seed);
  c.init_std = kv.get_double("init_std", c.init_std);
  c.norm_eps = kv.get_double("norm_eps", c.norm_eps);
  validate(c);
  return c;
}

void store_pvt_config(KeyValueConfig& kv, const PVTConfig& config) {
  kv.set("model", config.name);
  kv.set("input", std::to_string(config.height) + "x" + std::to_string(config.width) + "x" +
                      std::to_string(config.channels));
  kv.set("stages", format_stages(config.stages));
  kv.set("seed", std::to_string(config.seed));
  kv.set("init_std", format_real(config.init_std));
  kv.set("norm_eps", format_real(config.norm_eps));
}

SiameseConfig siamese_config_from(const KeyValueConfig& kv) {
  SiameseConfig c;
  c.backbone = pvt_config_from(kv);
  c.combinator = parse_combinator(kv.get_or("combinator", "QUAD5"));
  if (kv.has("head_hidden")) {
    c.hidden.clear();
    for (const auto& w : split(kv.get("head_hidden"), ',')) c.hidden.push_back(parse_integer<std::size_t>(w, "head_hidden"));
  }
  c.head_init_std = kv.get_double("head_init_std", c.head_init_std);
  c.hidden_widths();
  return c;
}

void store_siamese_config(KeyValueConfig& kv, const SiameseConfig& config) {
  store_pvt_config(kv, config.backbone);
  kv.set("combinator", std::string(to_string(config.combinator)));
  const auto widths = config.hidden_widths();
  kv.set("head_hidden", std::to_string(widths[0]) + "," + std::to_string(widths[1]));
  kv.set("head_init_std", format_real(config.head_init_std));
}

TrainConfig train_config_from(const KeyValueConfig& kv) {
  TrainConfig t;
  t.epochs = kv.get_size("epochs", t.epochs);
  t.batch_size = kv.get_size("batch_size", t.batch_size);
  t.learning_rate = kv.get_double("learning_rate", t.learning_rate);
  t.momentum = kv.get_double("momentum", t.momentum);
  t.negative_ratio = kv.get_double("negative_ratio", t.negative_ratio);
  t.pairs_per_relation = kv.get_size("pairs_per_relation", t.pairs_per_relation);
  t.grad_clip = kv.get_double("grad_clip", t.grad_clip);
  t.weight_decay = kv.get_double("weight_decay", t.weight_decay);
  t.lr_schedule = kv.get_or("lr_schedule", t.lr_schedule);
  t.average_from = kv.get_size("average_from", t.average_from);
  t.seed = kv.get_u64("seed", t.seed);
  return t;
}

}  // namespace kinship
