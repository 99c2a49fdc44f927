#pragma once

#include <filesystem>

#include "core/model.hpp"

namespace fsr {

// Flat binary container of named tensors. Layout: magic "FSR1", then per
// entry: name length (u32 LE), UTF-8 name, rank (u32 LE), dims (u32 LE
// each), raw little-endian f64 data. Round-trips bit-exactly.
void save_checkpoint(const Network& net, const std::filesystem::path& path);

// Populates every state tensor of `net` by name; rejects missing entries,
// unknown entries and shape mismatches.
void load_checkpoint(Network& net, const std::filesystem::path& path);

}  // namespace fsr
