#include <filesystem>

#include <gtest/gtest.h>

#include "topoforge/error.hpp"
#include "topoforge/problem_io.hpp"

namespace topoforge {
namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::IoError;
}

Problem cantilever(int nx, int ny) {
  const auto dims = GridDims::plane(nx, ny);
  DesignDomain d = make_domain(dims, full_mask(dims));
  PointLoad load;
  load.node = d.node_index(nx, ny / 2);
  load.force = {0.0, -1.0, 0.0};
  BoundaryConditions bc = standard_bc_case(d, BcCase::Cantilever, load);
  return {std::move(d), std::move(bc), 0.4};
}

TEST(MaskCodec, PacksLeastSignificantBitFirst) {
  std::vector<std::uint8_t> mask(9, 0);
  mask[0] = 1;
  mask[8] = 1;
  EXPECT_EQ(encode_mask(mask), "AQE=");
  mask.assign(8, 0);
  mask[7] = 1;
  EXPECT_EQ(encode_mask(mask), "gA==");
}

TEST(MaskCodec, RoundTripsOddLengths) {
  for (std::size_t n : {1u, 7u, 8u, 13u, 800u}) {
    std::vector<std::uint8_t> mask(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = (i * 7 + 3) % 5 < 2;
    EXPECT_EQ(decode_mask(encode_mask(mask), n), mask) << n;
  }
}

TEST(MaskCodec, WrongLengthIsDimensionMismatch) {
  EXPECT_EQ(code_of([] { decode_mask("AQE=", 20); }), ErrorCode::DimensionMismatch);
}

TEST(RasterCodec, F32RoundTripIsExactForFloats) {
  const std::vector<double> v{0.0, 1.0, 0.25, -3.5, 0.1f};
  EXPECT_EQ(decode_f32(encode_f32(v), v.size()), v);
}

TEST(ProblemJson, RoundTripIsByteIdentical) {
  const Problem p = cantilever(8, 4);
  const std::string text = problem_to_json(p);
  const Problem q = problem_from_json(text);
  EXPECT_EQ(q.domain.dims(), p.domain.dims());
  EXPECT_EQ(q.domain.mask(), p.domain.mask());
  EXPECT_EQ(q.bc, p.bc);
  EXPECT_DOUBLE_EQ(q.volfrac, 0.4);
  EXPECT_EQ(problem_to_json(q), text);
}

TEST(ProblemJson, DimsAreRowsFirst) {
  const Problem q = problem_from_json(R"({"v":1,"dims":[2,3],"fixed":[[0,0],[0,1]],"loads":[[11,[0,-1]]]})");
  EXPECT_EQ(q.domain.dims().nx, 3);
  EXPECT_EQ(q.domain.dims().ny, 2);
  EXPECT_EQ(q.domain.active_count(), 6u);
  EXPECT_DOUBLE_EQ(q.volfrac, 0.5);

  const Problem v = problem_from_json(R"({"v":1,"dims":[2,3,4],"fixed":[[0,2]],"loads":[[1,[0,0,-1]]]})");
  EXPECT_EQ(v.domain.dims(), GridDims::volume(3, 2, 4));
}

TEST(ProblemJson, MaskIsHonoured) {
  std::vector<std::uint8_t> mask(6, 1);
  mask[5] = 0;
  const std::string text = std::string(R"({"v":1,"dims":[2,3],"mask":")") + encode_mask(mask) +
                           R"(","fixed":[[0,0],[0,1]],"loads":[[1,[0,-1]]]})";
  EXPECT_EQ(problem_from_json(text).domain.active_count(), 5u);
}

TEST(ProblemJson, Rejections) {
  EXPECT_EQ(code_of([] { problem_from_json("{"); }), ErrorCode::FormatError);
  EXPECT_EQ(code_of([] { problem_from_json("[1,2]"); }), ErrorCode::FormatError);
  EXPECT_EQ(code_of([] { problem_from_json(R"({"v":2,"dims":[2,2]})"); }), ErrorCode::FormatError);
  EXPECT_EQ(code_of([] { problem_from_json(R"({"v":1,"dims":[2]})"); }), ErrorCode::FormatError);
  EXPECT_EQ(code_of([] { problem_from_json(R"({"v":1,"dims":[2,-2]})"); }), ErrorCode::FormatError);
  EXPECT_EQ(code_of([] { problem_from_json(R"({"v":1,"dims":[2,2],"loads":[[0,[1]]]})"); }),
            ErrorCode::FormatError);
  EXPECT_EQ(code_of([] { problem_from_json(R"({"v":1,"dims":[2,2],"loads":[[99,[0,1]]]})"); }),
            ErrorCode::LoadOutsideDomain);
  EXPECT_EQ(code_of([] { problem_from_json(R"({"v":1,"dims":[1,2],"mask":"AA=="})"); }), ErrorCode::EmptyDomain);
}

TEST(Raster, FileRoundTripWithSidecar) {
  const auto dir = std::filesystem::temp_directory_path() / "topoforge_raster_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "r.bin").string();
  const auto dims = GridDims::plane(3, 2);
  const std::vector<double> v{0.0, 0.5, 1.0, 0.25, 0.75, 0.125};
  write_raster(path, v, dims, R"({"seed":4})");
  const Raster r = read_raster(path);
  EXPECT_EQ(r.dims, dims);
  EXPECT_EQ(r.values, v);
  EXPECT_EQ(std::filesystem::file_size(path), 24u);
  std::filesystem::remove(path + ".json");
  EXPECT_EQ(code_of([&] { read_raster(path); }), ErrorCode::IoError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace topoforge
