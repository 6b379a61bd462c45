#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "talforge/layers.hpp"
#include "talforge/tensor.hpp"

namespace talforge {

// "TALW" weight checkpoint layout (all integers u32 little-endian):
//   magic "TALW" | version
//   repeated until EOF:
//     name length | UTF-8 name | rank | extents[rank] | float64 LE payload
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;

  bool operator==(const NamedArray&) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedArray>& arrays);
std::vector<NamedArray> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

std::vector<NamedArray> snapshot(const ParameterSet& params);
void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);
std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path);

/// Copies values of every parameter named `prefix + name` into `params`.
/// Missing names and shape mismatches are errors.
void restore(ParameterSet& params, const std::vector<NamedArray>& arrays, const std::string& prefix = "");

}  // namespace talforge
