#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "topoforge/codec.hpp"
#include "topoforge/error.hpp"
#include "topoforge/eval_metrics.hpp"
#include "topoforge/fea.hpp"
#include "topoforge/simp.hpp"

using namespace topoforge;

TEST(Mse, FootnoteAndEndpoints) {
  const std::vector<double> a{0.49}, b{0.51};
  EXPECT_NEAR(mse_metric(a, b), 0.0004, 1e-16);
  EXPECT_EQ(binary_accuracy(a, b), 0.0);
  const std::vector<double> ones(7, 1.0), zeros(7, 0.0);
  EXPECT_EQ(mse_metric(ones, zeros), 1.0);
  EXPECT_EQ(mse_metric(ones, ones), 0.0);
  EXPECT_THROW(mse_metric(ones, a), Error);
}

TEST(BinaryAccuracy, HandCount) {
  const std::vector<double> pred{0.9, 0.2, 0.7, 0.1}, truth{1, 0, 0, 0};
  EXPECT_EQ(binary_accuracy(pred, truth), 0.75);
  EXPECT_EQ(binary_accuracy(truth, truth), 1.0);
  EXPECT_EQ(binary_accuracy(std::vector<double>{0.5}, std::vector<double>{1.0}), 1.0);
  const std::vector<std::uint8_t> mask{1, 1, 0, 1};
  EXPECT_EQ(binary_accuracy(pred, truth, mask), 1.0);
}

TEST(Metrics, SymmetryAndThresholdInvariance) {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(200), t(200);
  for (auto& v : p) v = u(rng);
  for (auto& v : t) v = u(rng);
  EXPECT_EQ(binary_accuracy(p, t), binary_accuracy(t, p));
  EXPECT_EQ(mse_metric(p, t), mse_metric(t, p));
  auto q = p;
  for (auto& v : q) v = v >= 0.5 ? 0.5 + 0.5 * u(rng) : 0.49 * u(rng);
  EXPECT_EQ(binary_accuracy(q, t), binary_accuracy(p, t));
}

TEST(SymmetricDifference, XorOracle) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> a(64), b(64), na(64);
  std::vector<std::uint8_t> mask(64);
  for (std::size_t e = 0; e < 64; ++e) {
    a[e] = u(rng);
    b[e] = u(rng);
    na[e] = a[e] >= 0.5 ? 0.0 : 1.0;
    mask[e] = e % 5 != 0;
  }
  for (auto v : symmetric_difference(a, a)) EXPECT_EQ(v, 0);
  const auto all = symmetric_difference(a, na, mask);
  const auto x = symmetric_difference(a, b);
  for (std::size_t e = 0; e < 64; ++e) {
    EXPECT_EQ(all[e], mask[e]);
    EXPECT_EQ(x[e], (a[e] >= 0.5) != (b[e] >= 0.5) ? 1 : 0);
  }
}

class ComplianceError : public ::testing::Test {
 protected:
  GridDims dims = GridDims::plane(30, 10);
  DesignDomain domain{dims, full_mask(dims)};
  MaterialModel material;
  BoundaryConditions bc =
      standard_bc_case(domain, BcCase::Cantilever, {domain.node_index(30, 5), {0.0, -1.0, 0.0}});

  std::vector<double> truth() {
    static const std::vector<double> t = to_raster(domain, optimize(domain, bc, material, {}).densities);
    return t;
  }

  // Independent re-solve: binarise by hand and call the FE solver directly.
  double direct(const std::vector<double>& raster) {
    std::vector<double> rho;
    for (std::size_t e = 0; e < raster.size(); ++e) rho.push_back(raster[e] >= 0.5 ? 1.0 : 0.0);
    return solve(domain, bc, rho, material).compliance;
  }
};

TEST_F(ComplianceError, IdenticalFieldsGiveZero) {
  const auto t = truth();
  EXPECT_EQ(compliance_error(t, t, domain, bc, material), 0.0);
}

TEST_F(ComplianceError, FilledVoidMatchesDirectSolve) {
  const auto t = truth();
  auto p = t;
  std::size_t filled = t.size();
  for (int j = 3; j < 7 && filled == t.size(); ++j)
    for (int i = 5; i < 25; ++i) {
      const std::size_t e = domain.element_index(i, j);
      if (t[e] < 0.5) {
        filled = e;
        break;
      }
    }
  ASSERT_LT(filled, t.size());
  p[filled] = 1.0;
  const double expected = (direct(p) - direct(t)) / direct(t);
  EXPECT_NEAR(compliance_error(p, t, domain, bc, material), expected, 1e-12);
  EXPECT_LE(expected, 0.0);
}

TEST_F(ComplianceError, VoidPredictionIsDisconnected) {
  const auto t = truth();
  const std::vector<double> empty(t.size(), 0.0);
  EXPECT_FALSE(load_path_connected(domain, bc, empty));
  EXPECT_TRUE(load_path_connected(domain, bc, t));
  try {
    compliance_error(empty, t, domain, bc, material);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DisconnectedPrediction);
  }
}

TEST(Report, AggregatesAreMeans) {
  std::vector<SampleScore> s(3);
  s[0] = {0.1, 0.9, 0.02, false, 0.01};
  s[1] = {0.3, 0.7, std::nullopt, true, 0.03};
  s[2] = {0.2, 0.8, -0.04, false, 0.02};
  const EvalReport r = aggregate(s);
  EXPECT_EQ(r.mse, (0.1 + 0.3 + 0.2) / 3.0);
  EXPECT_EQ(r.ba, (0.9 + 0.7 + 0.8) / 3.0);
  EXPECT_EQ(r.compliance_error, (0.02 - 0.04) / 2.0);
  EXPECT_NEAR(r.compliance_error_std, 0.03, 1e-15);
  EXPECT_EQ(r.disconnected, 1u);
  EXPECT_EQ(r.compliance_count, 2u);
  const std::string j = r.to_json();
  for (const char* key : {"\"mse\"", "\"ba\"", "\"compliance_error\"", "\"v\": 1"}) {
    EXPECT_NE(j.find(key), std::string::npos) << key;
  }
}

TEST(Pgm, HeaderAndOrientation) {
  const auto dims = GridDims::plane(3, 2);
  const std::vector<double> r{1, 0, 0, 0, 0, 0.5};
  const std::string path = (std::filesystem::temp_directory_path() / "topoforge_test.pgm").string();
  write_pgm(path, r, dims);
  const auto bytes = read_file(path);
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 6);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + static_cast<long>(header.size())), header);
  // Top row is y = 1.
  EXPECT_EQ(bytes[header.size() + 2], 128);
  EXPECT_EQ(bytes[header.size() + 3], 0);
  EXPECT_EQ(bytes[header.size() + 4], 255);
  std::filesystem::remove(path);
}
