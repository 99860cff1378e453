#include "topoforge/problem_io.hpp"

#include <filesystem>

#include <json.hpp>

#include "topoforge/codec.hpp"
#include "topoforge/error.hpp"

namespace topoforge {

using nlohmann::json;

namespace {

json dims_json(const GridDims& d) {
  return d.rank == 3 ? json::array({d.ny, d.nx, d.nz}) : json::array({d.ny, d.nx});
}

GridDims parse_dims(const json& j) {
  if (!j.is_array() || (j.size() != 2 && j.size() != 3)) {
    fail(ErrorCode::FormatError, "dims must be [ny, nx] or [ny, nx, nz]");
  }
  std::vector<int> v;
  for (const json& x : j) {
    if (!x.is_number_integer() || x.get<long long>() < 1 || x.get<long long>() > 100000) {
      fail(ErrorCode::FormatError, "dims entries must be positive integers");
    }
    v.push_back(x.get<int>());
  }
  return v.size() == 3 ? GridDims::volume(v[1], v[0], v[2]) : GridDims::plane(v[1], v[0]);
}

}  // namespace

std::string encode_mask(std::span<const std::uint8_t> mask) {
  std::vector<std::uint8_t> bits((mask.size() + 7) / 8, 0);
  for (std::size_t e = 0; e < mask.size(); ++e) {
    if (mask[e]) bits[e / 8] |= static_cast<std::uint8_t>(1u << (e % 8));
  }
  return base64_encode(bits);
}

std::vector<std::uint8_t> decode_mask(std::string_view base64, std::size_t count) {
  const auto bits = base64_decode(base64);
  if (bits.size() != (count + 7) / 8) {
    fail(ErrorCode::DimensionMismatch, "mask holds " + std::to_string(bits.size()) + " bytes, expected " +
                                           std::to_string((count + 7) / 8));
  }
  std::vector<std::uint8_t> mask(count);
  for (std::size_t e = 0; e < count; ++e) mask[e] = (bits[e / 8] >> (e % 8)) & 1u;
  return mask;
}

std::string encode_f32(std::span<const double> values) {
  ByteWriter w;
  for (double v : values) w.f32(static_cast<float>(v));
  return base64_encode(w.bytes());
}

std::vector<double> decode_f32(std::string_view base64, std::size_t count) {
  const auto bytes = base64_decode(base64);
  if (bytes.size() != 4 * count) fail(ErrorCode::DimensionMismatch, "raster payload has the wrong length");
  ByteReader r(bytes);
  std::vector<double> out(count);
  for (double& v : out) v = r.f32();
  return out;
}

std::string problem_to_json(const Problem& p) {
  const int rank = p.domain.rank();
  json fixed = json::array();
  for (const FixedDof& f : p.bc.fixed) fixed.push_back({f.node, f.axis});
  json loads = json::array();
  for (const PointLoad& l : p.bc.loads) {
    json f = json::array();
    for (int a = 0; a < rank; ++a) f.push_back(l.force[static_cast<std::size_t>(a)]);
    loads.push_back({l.node, f});
  }
  const json j = {{"v", 1},
                  {"dims", dims_json(p.domain.dims())},
                  {"mask", encode_mask(p.domain.mask())},
                  {"fixed", fixed},
                  {"loads", loads},
                  {"volfrac", p.volfrac}};
  return j.dump();
}

Problem problem_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("problem is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::FormatError, "problem must be a JSON object");
  if (j.contains("v") && j["v"] != 1) fail(ErrorCode::FormatError, "unsupported problem version");
  if (!j.contains("dims")) fail(ErrorCode::FormatError, "problem lacks dims");
  const GridDims dims = parse_dims(j["dims"]);
  std::vector<std::uint8_t> mask;
  if (j.contains("mask")) {
    if (!j["mask"].is_string()) fail(ErrorCode::FormatError, "mask must be a base64 string");
    mask = decode_mask(j["mask"].get<std::string>(), dims.element_count());
  } else {
    mask = full_mask(dims);
  }
  std::vector<FixedDof> fixed;
  std::vector<PointLoad> loads;
  double volfrac = 0.5;
  try {
    for (const json& f : j.value("fixed", json::array())) {
      fixed.push_back({f.at(0).get<std::size_t>(), f.at(1).get<int>()});
    }
    for (const json& l : j.value("loads", json::array())) {
      PointLoad p;
      p.node = l.at(0).get<std::size_t>();
      const json& f = l.at(1);
      if (!f.is_array() || f.size() != static_cast<std::size_t>(dims.rank)) {
        fail(ErrorCode::FormatError, "load vectors need one component per axis");
      }
      for (std::size_t a = 0; a < f.size(); ++a) p.force[a] = f[a].get<double>();
      loads.push_back(p);
    }
    volfrac = j.value("volfrac", 0.5);
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("malformed fixed/loads entry: ") + e.what());
  }
  DesignDomain domain = make_domain(dims, std::move(mask));
  BoundaryConditions bc = make_boundary_conditions(domain, std::move(fixed), std::move(loads));
  return {std::move(domain), std::move(bc), volfrac};
}

std::string dims_to_string(const GridDims& d) {
  std::string s = std::to_string(d.ny) + "x" + std::to_string(d.nx);
  if (d.rank == 3) s += "x" + std::to_string(d.nz);
  return s;
}

void write_raster(const std::string& path, std::span<const double> values, const GridDims& dims,
                  const std::string& extra_json) {
  if (values.size() != dims.element_count()) fail(ErrorCode::DimensionMismatch, "raster size");
  ByteWriter w;
  for (double v : values) w.f32(static_cast<float>(v));
  write_file(path, w.bytes());
  json side = json::parse(extra_json);
  side["v"] = 1;
  side["dims"] = dims_json(dims);
  side["format"] = "f32le";
  write_text_file(path + ".json", side.dump(2));
}

Raster read_raster(const std::string& path) {
  const std::string side_path = path + ".json";
  if (!std::filesystem::exists(side_path)) fail(ErrorCode::IoError, "raster sidecar '" + side_path + "' is missing");
  const auto side_bytes = read_file(side_path);
  json side;
  try {
    side = json::parse(side_bytes.begin(), side_bytes.end());
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("raster sidecar is not JSON: ") + e.what());
  }
  Raster r;
  r.dims = parse_dims(side.at("dims"));
  const auto bytes = read_file(path);
  if (bytes.size() != 4 * r.dims.element_count()) fail(ErrorCode::FormatError, "raster size does not match its sidecar");
  ByteReader reader(bytes);
  r.values.resize(r.dims.element_count());
  for (double& v : r.values) v = reader.f32();
  return r;
}

}  // namespace topoforge
