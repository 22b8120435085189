#include "kinship/synthetic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "kinship/error.hpp"
#include "kinship/rng.hpp"

namespace kinship {

namespace fs = std::filesystem;

void SyntheticOptions::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ParameterError(std::string(what) + " must be at least 1");
  };
  positive(families, "families");
  positive(persons_per_family, "persons_per_family");
  positive(images_per_person, "images_per_person");
  positive(image_size, "image_size");
  positive(channels, "channels");
  positive(tile, "tile");
  positive(latent_dim, "latent_dim");
  if (persons_per_family < 2) throw ParameterError("persons_per_family must be at least 2 so relations exist");
  if (image_size % tile != 0) {
    throw ParameterError("image_size " + std::to_string(image_size) + " is not a multiple of tile " + std::to_string(tile));
  }
  if (latent_dim + nuisance_dim > tile * tile * channels) {
    throw ParameterError("latent_dim + nuisance_dim exceeds the tile's " + std::to_string(tile * tile * channels) +
                         " values");
  }
  if (!(signal_to_noise > 0.0)) throw ParameterError("signal_to_noise must be positive");
  if (!(nuisance_scale >= 0.0) || !std::isfinite(nuisance_scale)) throw ParameterError("nuisance_scale must be >= 0");
  if (!(pixel_noise >= 0.0) || !std::isfinite(pixel_noise)) throw ParameterError("pixel_noise must be >= 0");
  if (holdout_families > families) throw ParameterError("holdout_families exceeds families");
  if (holdout_families == 1) {
    throw ParameterError("holdout_families must be 0 or at least 2 so holdout negatives exist");
  }
}

namespace {

std::string family_name(std::size_t f) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "F%04zu", f + 1);
  return buf;
}

// Columns of a random orthonormal basis of R^n via Gram-Schmidt.
std::vector<std::vector<double>> orthonormal_basis(Rng& rng, std::size_t n, std::size_t count) {
  std::vector<std::vector<double>> basis;
  while (basis.size() < count) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += v[i] * b[i];
      for (std::size_t i = 0; i < n; ++i) v[i] -= dot * b[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  return basis;
}

std::string person_of_image(const std::string& image_id) {
  const auto slash = image_id.rfind('/');
  return slash == std::string::npos ? std::string() : image_id.substr(0, slash);
}

}  // namespace

SyntheticKinshipSet generate_synthetic(const SyntheticOptions& options) {
  options.validate();
  const SyntheticOptions& o = options;
  Rng rng(o.seed);

  const std::size_t tile_values = o.tile * o.tile * o.channels;
  const auto basis = orthonormal_basis(rng, tile_values, o.latent_dim + o.nuisance_dim);
  // Unit-variance latents then give unit-variance signal per tile value on average.
  const double gain = std::sqrt(static_cast<double>(tile_values) / static_cast<double>(o.latent_dim));
  const double person_sd = std::isinf(o.signal_to_noise) ? 0.0 : 1.0 / o.signal_to_noise;

  SyntheticKinshipSet set;
  set.options = o;
  for (std::size_t f = 0; f < o.families; ++f) {
    std::vector<double> latent(o.latent_dim);
    for (double& x : latent) x = rng.normal();
    set.family_latents.push_back(std::move(latent));
  }

  std::vector<double> coeff(o.latent_dim + o.nuisance_dim);
  std::vector<double> tile(tile_values);
  for (std::size_t f = 0; f < o.families; ++f) {
    for (std::size_t m = 0; m < o.persons_per_family; ++m) {
      SyntheticPerson person;
      person.id = family_name(f) + "/MID" + std::to_string(m + 1);
      person.latent = set.family_latents[f];
      for (double& x : person.latent) x += person_sd * rng.normal();
      for (std::size_t n = 0; n < o.images_per_person; ++n) {
        for (std::size_t k = 0; k < o.latent_dim; ++k) coeff[k] = gain * person.latent[k];
        for (std::size_t k = 0; k < o.nuisance_dim; ++k) coeff[o.latent_dim + k] = gain * o.nuisance_scale * rng.normal();
        std::fill(tile.begin(), tile.end(), 0.0);
        for (std::size_t k = 0; k < coeff.size(); ++k) {
          for (std::size_t i = 0; i < tile_values; ++i) tile[i] += coeff[k] * basis[k][i];
        }
        std::vector<double> pixels(o.image_size * o.image_size * o.channels);
        std::size_t at = 0;
        for (std::size_t r = 0; r < o.image_size; ++r) {
          for (std::size_t col = 0; col < o.image_size; ++col) {
            for (std::size_t ch = 0; ch < o.channels; ++ch) {
              const std::size_t t = ((r % o.tile) * o.tile + col % o.tile) * o.channels + ch;
              pixels[at++] = tile[t] + o.pixel_noise * rng.normal();
            }
          }
        }
        person.images.push_back({person.id + "/" + std::to_string(n) + ".grid",
                                 Tensor::from({o.image_size, o.image_size, o.channels}, std::move(pixels))});
      }
      set.persons.push_back(std::move(person));
    }
  }

  const std::size_t ppf = o.persons_per_family;
  for (std::size_t f = 0; f < o.families; ++f) {
    for (std::size_t i = 0; i < ppf; ++i) {
      for (std::size_t j = i + 1; j < ppf; ++j) {
        set.relations.push_back({set.persons[f * ppf + i].id, set.persons[f * ppf + j].id});
      }
    }
  }

  const std::size_t first_holdout = o.families - o.holdout_families;
  for (std::size_t f = first_holdout; f < o.families; ++f) set.holdout_families.push_back(family_name(f));
  auto make_pair = [](const SyntheticImage& a, const SyntheticImage& b, int label) {
    return ImagePair{make_pair_id(a.id, b.id), a.id, b.id, a.pixels, b.pixels, label};
  };
  for (std::size_t f = first_holdout; f < o.families; ++f) {
    for (std::size_t i = 0; i < ppf; ++i) {
      for (std::size_t j = i + 1; j < ppf; ++j) {
        for (const auto& a : set.persons[f * ppf + i].images) {
          for (const auto& b : set.persons[f * ppf + j].images) set.holdout.push_back(make_pair(a, b, 1));
        }
      }
    }
  }
  const std::size_t positives = set.holdout.size();
  if (positives > 0) {
    // Distinct negatives: a shuffled prefix of all cross-family image pairs.
    std::vector<std::pair<const SyntheticImage*, const SyntheticImage*>> candidates;
    for (std::size_t pa = first_holdout * ppf; pa < set.persons.size(); ++pa) {
      for (std::size_t pb = (pa / ppf + 1) * ppf; pb < set.persons.size(); ++pb) {
        for (const auto& a : set.persons[pa].images) {
          for (const auto& b : set.persons[pb].images) candidates.emplace_back(&a, &b);
        }
      }
    }
    rng.shuffle(candidates.begin(), candidates.end());
    const std::size_t negatives = std::min(positives, candidates.size());
    for (std::size_t n = 0; n < negatives; ++n) {
      auto [a, b] = candidates[n];
      if (rng.uniform() < 0.5) std::swap(a, b);
      set.holdout.push_back(make_pair(*a, *b, 0));
    }
    rng.shuffle(set.holdout.begin(), set.holdout.end());
  }
  return set;
}

void write_grid(std::ostream& out, const Tensor& image) {
  if (image.rank() != 3) throw DimensionError("grid images are [H, W, C], got " + to_string(image.shape()));
  const std::size_t h = image.extent(0), row = image.extent(1) * image.extent(2);
  out << "kinship-grid 1\n" << image.extent(0) << ' ' << image.extent(1) << ' ' << image.extent(2) << '\n';
  const auto values = image.values();
  char buf[32];
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t i = 0; i < row; ++i) {
      std::snprintf(buf, sizeof(buf), "%.9g", values[r * row + i]);
      if (i > 0) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

void write_grid(const fs::path& path, const Tensor& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_grid(out, image);
}

Tensor read_grid(std::istream& in, const std::string& source) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "kinship-grid" || version != 1) {
    throw ParseError(source, "not a kinship-grid v1 file");
  }
  std::size_t h = 0, w = 0, c = 0;
  if (!(in >> h >> w >> c) || h == 0 || w == 0 || c == 0) throw ParseError(source, "bad grid dimensions");
  std::vector<double> values(h * w * c);
  std::string token;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(in >> token)) throw ParseError(source, "expected " + std::to_string(values.size()) + " values, got " + std::to_string(i));
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), values[i]);
    if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(values[i])) {
      throw ParseError(source, "bad value '" + token + "' at index " + std::to_string(i));
    }
  }
  if (in >> token) throw ParseError(source, "trailing data after " + std::to_string(values.size()) + " values");
  return Tensor::from({h, w, c}, std::move(values));
}

Tensor read_grid(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path.string() + "'");
  return read_grid(in, path.string());
}

void write_synthetic(const SyntheticKinshipSet& set, const fs::path& dir) {
  const fs::path images = dir / "images";
  for (const auto& person : set.persons) {
    fs::create_directories(images / person.id);
    for (const auto& image : person.images) write_grid(images / image.id, image.pixels);
  }
  {
    std::ofstream out(dir / "relationships.csv", std::ios::binary);
    if (!out) throw IoError("cannot write relationships.csv in '" + dir.string() + "'");
    write_relationship_csv(out, set.relations);
  }
  std::ofstream out(dir / "holdout_pairs.csv", std::ios::binary);
  if (!out) throw IoError("cannot write holdout_pairs.csv in '" + dir.string() + "'");
  out << "img_pair,is_related\n";
  for (const auto& p : set.holdout) out << p.pair_id << ',' << p.label << '\n';
}

PersonImages person_images(const SyntheticKinshipSet& set, bool include_holdout) {
  const std::set<std::string> held(set.holdout_families.begin(), set.holdout_families.end());
  PersonImages out;
  for (const auto& person : set.persons) {
    if (!include_holdout && held.count(family_of(person.id)) > 0) continue;
    auto& list = out[person.id];
    for (const auto& image : person.images) list.push_back({image.id, image.pixels});
  }
  return out;
}

PersonImages load_person_images(const fs::path& images_root) {
  if (!fs::is_directory(images_root)) throw IoError("image directory '" + images_root.string() + "' not found");
  std::map<std::string, fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(images_root)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".grid") continue;
    files.emplace(fs::relative(entry.path(), images_root).generic_string(), entry.path());
  }
  PersonImages out;
  for (const auto& [id, path] : files) {
    const std::string person = person_of_image(id);
    if (person.empty()) throw IoError("image '" + id + "' is not inside a <family>/<person> directory");
    out[person].push_back({id, read_grid(path)});
  }
  return out;
}

std::vector<ImagePair> load_image_pairs(const fs::path& pairs_csv, const PersonImages& images) {
  std::unordered_map<std::string, Tensor> by_id;
  for (const auto& [person, list] : images) {
    for (const auto& image : list) by_id.emplace(image.id, image.image);
  }
  std::ifstream in(pairs_csv);
  if (!in) throw IoError("cannot open pair list '" + pairs_csv.string() + "'");
  const std::string source = pairs_csv.string();

  auto fields_of = [](std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) {
      const auto a = f.find_first_not_of(" \t"), b = f.find_last_not_of(" \t");
      fields.push_back(a == std::string::npos ? std::string() : f.substr(a, b - a + 1));
    }
    return fields;
  };

  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + " line 1", "missing header");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
  const auto header = fields_of(line);
  if (header.empty() || header[0] != "img_pair") throw ParseError(source + " line 1", "header must start with img_pair");
  const bool labeled = header.size() >= 2 && header[1] == "is_related";

  std::vector<ImagePair> pairs;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    const auto fields = fields_of(line);
    if (fields.empty() || (fields.size() == 1 && fields[0].empty())) continue;
    const std::string where = source + " line " + std::to_string(number);
    if (fields.size() != header.size()) throw ParseError(where, "expected " + std::to_string(header.size()) + " fields");
    PairId id;
    try {
      id = split_pair_id(fields[0]);
    } catch (const Error& e) {
      throw ParseError(where, e.what());
    }
    ImagePair pair{fields[0], id.image_a, id.image_b, {}, {}, -1};
    for (auto [name, tensor] : {std::pair{&pair.image_a, &pair.a}, std::pair{&pair.image_b, &pair.b}}) {
      auto it = by_id.find(*name);
      if (it == by_id.end()) throw ParseError(where, "unknown image '" + *name + "'");
      *tensor = it->second;
    }
    if (labeled) {
      if (fields[1] == "1") {
        pair.label = 1;
      } else if (fields[1] == "0") {
        pair.label = 0;
      } else {
        throw ParseError(where, "is_related must be 0 or 1, got '" + fields[1] + "'");
      }
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::set<std::string> families_in(std::span<const ImagePair> pairs) {
  std::set<std::string> out;
  for (const auto& p : pairs) {
    out.insert(family_of(p.image_a));
    out.insert(family_of(p.image_b));
  }
  return out;
}

void exclude_families(std::vector<RelationshipRecord>& relations, PersonImages& images,
                      const std::set<std::string>& families) {
  std::erase_if(relations, [&](const RelationshipRecord& r) {
    return families.count(family_of(r.person_a)) > 0 || families.count(family_of(r.person_b)) > 0;
  });
  std::erase_if(images, [&](const auto& entry) { return families.count(family_of(entry.first)) > 0; });
}

PredictionSet pixel_distance_baseline(std::span<const ImagePair> pairs, std::string name) {
  PredictionSet out;
  out.name = std::move(name);
  for (const auto& p : pairs) {
    if (p.a.shape() != p.b.shape()) throw DimensionError("pair '" + p.pair_id + "' has images of different shapes");
    const auto a = p.a.values(), b = p.b.values();
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
    out.entries.emplace_back(p.pair_id, 1.0 / (1.0 + sum / static_cast<double>(a.size())));
  }
  return out;
}

}  // namespace kinship
