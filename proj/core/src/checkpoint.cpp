#include "kinship/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "kinship/config_file.hpp"
#include "kinship/error.hpp"

namespace kinship {

namespace {

constexpr std::array<char, 8> kMagic = {'K', 'I', 'N', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;
// Guards against allocating absurd buffers from a corrupted length field.
constexpr std::uint64_t kMaxBlob = 1ULL << 32;

template <typename T>
void put(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

// Errors report the offset where the offending field starts.
class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  template <typename T>
  T get(const char* what) {
    std::array<unsigned char, sizeof(T)> bytes;
    field_start_ = offset_;
    if (!in_.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) fail(std::string("truncated while reading ") + what);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    offset_ += sizeof(T);
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
  }

  std::string bytes(std::uint64_t n, const char* what) {
    if (n > kMaxBlob) fail(std::string("implausible length for ") + what);
    field_start_ = offset_;
    std::string s(n, '\0');
    if (n > 0 && !in_.read(s.data(), static_cast<std::streamsize>(n))) fail(std::string("truncated while reading ") + what);
    offset_ += n;
    return s;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw ParseError(source_ + " offset " + std::to_string(field_start_), message);
  }

  const std::string& source() const { return source_; }

 private:
  std::istream& in_;
  std::string source_;
  std::uint64_t offset_ = 0;
  std::uint64_t field_start_ = 0;
};

}  // namespace

void save_checkpoint(std::ostream& out, const SiameseModel& model) {
  KeyValueConfig kv;
  store_siamese_config(kv, model.config());
  const std::string meta = kv.serialize();

  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));

  const auto& entries = model.parameters().entries();
  put<std::uint64_t>(out, entries.size());
  for (const auto& [name, tensor] : entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) put<std::uint64_t>(out, d);
    for (double v : tensor.values()) put<double>(out, v);
  }
  if (!out) throw IoError("failed writing checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const SiameseModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  save_checkpoint(out, model);
}

SiameseModel load_checkpoint(std::istream& in, const std::string& source) {
  Reader r(in, source);
  if (r.bytes(kMagic.size(), "magic") != std::string_view(kMagic.data(), kMagic.size())) {
    r.fail("not a kinship checkpoint (bad magic)");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) r.fail("unsupported checkpoint version " + std::to_string(version));

  const std::string meta = r.bytes(r.get<std::uint64_t>("config length"), "config");
  std::istringstream meta_in(meta);
  SiameseModel model(siamese_config_from(KeyValueConfig::parse(meta_in, source + " config")));

  const auto count = r.get<std::uint64_t>("tensor count");
  const auto& params = model.parameters();
  if (count != params.size()) {
    r.fail("checkpoint holds " + std::to_string(count) + " tensors, model expects " + std::to_string(params.size()));
  }
  std::unordered_set<std::string> seen;
  for (std::uint64_t t = 0; t < count; ++t) {
    const std::string name = r.bytes(r.get<std::uint32_t>("name length"), "name");
    if (!seen.insert(name).second) r.fail("duplicate tensor '" + name + "'");
    Tensor target;
    try {
      target = params.at(name);
    } catch (const ContractError&) {
      r.fail("unexpected tensor '" + name + "'");
    }
    const auto rank = r.get<std::uint32_t>("rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>("extent"));
    if (shape != target.shape()) {
      r.fail("tensor '" + name + "' has shape " + to_string(shape) + ", model expects " + to_string(target.shape()));
    }
    auto values = target.mutable_values();
    for (double& v : values) v = r.get<double>("values");
  }
  return model;
}

SiameseModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  return load_checkpoint(in, path.string());
}

}  // namespace kinship
