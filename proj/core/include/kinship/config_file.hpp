#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <istream>
#include <string>
#include <utility>
#include <vector>

#include "kinship/pvt.hpp"
#include "kinship/siamese.hpp"
#include "kinship/train.hpp"

namespace kinship {

/// Flat `key = value` text. '#' starts a comment, blank lines are ignored,
/// keys are unique. Insertion order is kept so serialization is stable.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;

  void set(const std::string& key, const std::string& value);
  // Throws ConfigError naming the first key not in `known`.
  void reject_unknown(std::initializer_list<std::string_view> known) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string serialize() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::string source_ = "<config>";
};

/// Model keys: `model` (preset name, default nano), optional overrides
/// `input` (HxWxC), `stages` (comma-separated patch:dim:heads:ratio:depth[:mlp]),
/// `seed`, `init_std`, `norm_eps`.
PVTConfig pvt_config_from(const KeyValueConfig& kv);
void store_pvt_config(KeyValueConfig& kv, const PVTConfig& config);

// Adds `combinator`, `head_hidden` (w1,w2) and `head_init_std`.
SiameseConfig siamese_config_from(const KeyValueConfig& kv);
void store_siamese_config(KeyValueConfig& kv, const SiameseConfig& config);

// `epochs`, `batch_size`, `learning_rate`, `momentum`, `negative_ratio`,
// `pairs_per_relation`, `grad_clip`, `weight_decay`, `lr_schedule`, `seed`.
TrainConfig train_config_from(const KeyValueConfig& kv);

std::string format_stages(const std::vector<StageConfig>& stages);
std::vector<StageConfig> parse_stages(const std::string& text);

}  // namespace kinship
