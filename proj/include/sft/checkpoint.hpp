#pragma once

#include <string>

#include "sft/layers.hpp"

namespace sft {

// Checkpoint binary: magic "SFCK", u32 version, u32 param count, then per
// parameter (u16 name length, name bytes, u8 rank, u32 extents..., float64
// values). Little-endian throughout.
void save_checkpoint(const NamedParams& params, const std::string& path);

// Loads by name; every stored parameter must exist with a matching shape and
// every expected parameter must be present.
void load_checkpoint(const NamedParams& params, const std::string& path);

}  // namespace sft
