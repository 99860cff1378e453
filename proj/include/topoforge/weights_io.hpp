#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "topoforge/layers.hpp"

namespace topoforge::nn {

inline constexpr std::uint32_t kWeightsVersion = 1;

struct WeightFile {
  Sequential net;
  std::string metadata;  // free-form JSON text
};

/// "TWGT" container: header, per-layer spec and f32 parameter blobs, a
/// metadata block, and a SHA-256 footer over everything before it.
std::vector<std::uint8_t> serialize_weights(const Sequential& net, const std::string& metadata);
/// Throws ChecksumMismatch when the footer does not match, FormatError on
/// malformed content.
WeightFile deserialize_weights(std::span<const std::uint8_t> bytes);

void save_weights(const std::string& path, const Sequential& net, const std::string& metadata);
WeightFile load_weights(const std::string& path);

/// Rounds every parameter to the nearest f32 so in-memory weights equal
/// their serialized form.
void round_to_f32(Sequential& net);

/// SHA-256 (hex) of the f32 parameter bytes of layers [first, last).
std::string parameter_hash(const Sequential& net, std::size_t first = 0,
                           std::size_t last = static_cast<std::size_t>(-1));

}  // namespace topoforge::nn
