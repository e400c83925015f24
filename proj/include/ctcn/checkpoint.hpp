#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ctcn/tensor.hpp"

namespace ctcn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: "CTCN", u32 version, then records until end of file:
//   u32 name length, name bytes, u32 rank, u32 extents..., f64 values.
// Everything little-endian.
std::string encode_checkpoint(std::span<const Parameter> params);
std::vector<Parameter> decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter> params);
std::vector<Parameter> load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into existing parameters by name. Every
/// parameter must be present with a matching shape.
void assign_parameters(std::span<Parameter> dst, std::span<const Parameter> src);

}  // namespace ctcn
