// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cspan/parameters.hpp"

namespace cspan {

/// Binary layout, all integers little-endian:
///   "CSPAN1\n"
///   u32 parameter count
///   per parameter: u16 name length, name bytes, u8 rank, rank × u32 dims,
///                  row-major f32 values
inline constexpr char kCheckpointMagic[] = "CSPAN1\n";

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);

/// Fills `params` in place. Every stored name must exist in `params` with
/// identical dims and every parameter must be present; otherwise throws
/// ParseError and leaves `params` unchanged.
void load_checkpoint(const std::filesystem::path& path, ParameterSet& params);

/// Rounds every value to the nearest float, as a save/load cycle would.
void round_to_float(ParameterSet& params);

}  // namespace cspan
