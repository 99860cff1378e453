#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "topoforge/mesh_domain.hpp"

namespace topoforge {

struct Problem {
  DesignDomain domain;
  BoundaryConditions bc;
  double volfrac = 0.5;
};

/// Bitset packing: element e is bit (e % 8) of byte e / 8 (LSB first).
std::string encode_mask(std::span<const std::uint8_t> mask);
std::vector<std::uint8_t> decode_mask(std::string_view base64, std::size_t count);

std::string encode_f32(std::span<const double> values);
std::vector<double> decode_f32(std::string_view base64, std::size_t count);

/// {"v":1, "dims":[ny,nx(,nz)], "mask":"<base64 bitset>", "fixed":[[node,axis],...],
///  "loads":[[node,[fx,fy(,fz)]],...], "volfrac":0.5}
std::string problem_to_json(const Problem& problem);
/// Throws FormatError for malformed documents; domain errors propagate.
Problem problem_from_json(std::string_view text);

std::string dims_to_string(const GridDims& dims);

/// Flat little-endian f32 raster plus a JSON sidecar at `<path>.json`
/// holding {"v":1, "dims":[...], ...extra}.
void write_raster(const std::string& path, std::span<const double> values, const GridDims& dims,
                  const std::string& extra_json = "{}");

struct Raster {
  GridDims dims;
  std::vector<double> values;
};
Raster read_raster(const std::string& path);

}  // namespace topoforge
