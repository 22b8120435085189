#pragma once

#include <filesystem>
#include <istream>
#include <ostream>

#include "kinship/siamese.hpp"

namespace kinship {

/// Binary checkpoint, all integers and floats little-endian:
///
///   "KINCKPT1"                      8-byte magic
///   u32 version (= 1)
///   u64 n, n bytes                  model config as key = value text
///   u64 tensor count
///   per tensor:
///     u32 n, n bytes                parameter name
///     u32 rank, rank x u64 extents
///     element_count x f64           row-major values
///
/// Values are stored bit-exactly, so a reloaded model scores identically.
void save_checkpoint(std::ostream& out, const SiameseModel& model);
void save_checkpoint(const std::filesystem::path& path, const SiameseModel& model);

/// Rebuilds the model from the stored config, then overwrites every
/// parameter by name. Missing, extra or mis-shaped tensors raise ParseError.
SiameseModel load_checkpoint(std::istream& in, const std::string& source = "<stream>");
SiameseModel load_checkpoint(const std::filesystem::path& path);

}  // namespace kinship
