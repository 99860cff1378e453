#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "topoforge/error.hpp"
#include "topoforge/simp.hpp"

using namespace topoforge;

namespace {

double brute_filter_weight(int di, int dj, double r) {
  return std::max(0.0, r - std::sqrt(static_cast<double>(di * di + dj * dj)));
}

}  // namespace

TEST(SimpModulus, Endpoints) {
  MaterialModel m;
  EXPECT_EQ(simp_modulus(1.0, m), m.e0);
  EXPECT_EQ(simp_modulus(0.0, m), m.e_min);
  EXPECT_NEAR(simp_modulus(0.5, m), 0.125 * (1 - 1e-9) + 1e-9, 1e-16);
  EXPECT_THROW(simp_modulus(1.2, m), Error);
  EXPECT_THROW(simp_modulus(-0.1, m), Error);
}

TEST(Sensitivity, MatchesCentralDifferences) {
  const auto dims = GridDims::plane(6, 4);
  const DesignDomain d = make_domain(dims, full_mask(dims));
  MaterialModel m;
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> u(0.2, 0.9);
  std::vector<double> rho(d.active_count());
  for (double& r : rho) r = u(rng);
  const auto bc = standard_bc_case(d, BcCase::Cantilever, {d.node_index(6, 2), {20.0, -50.0, 0.0}});
  FeaSystem system(d, bc, m);
  const auto sol = system.solve(rho);
  const auto dc = compliance_sensitivity(sol, rho, m);
  const double h = 1e-6;
  for (std::size_t e = 0; e < rho.size(); ++e) {
    EXPECT_LE(dc[e], 0.0);
    auto plus = rho;
    auto minus = rho;
    plus[e] += h;
    minus[e] -= h;
    const double fd = (system.solve(plus).compliance - system.solve(minus).compliance) / (2 * h);
    EXPECT_LE(std::abs(fd - dc[e]), 1e-4 * std::abs(fd)) << "element " << e;
  }
}

TEST(Sensitivity, ZeroDensityHasZeroSensitivity) {
  const auto dims = GridDims::plane(4, 2);
  const DesignDomain d = make_domain(dims, full_mask(dims));
  MaterialModel m;
  std::vector<double> rho(d.active_count(), 0.5);
  rho[3] = 0.0;
  const auto bc = standard_bc_case(d, BcCase::Cantilever, {d.node_index(4, 1), {0, -1, 0}});
  const auto dc = compliance_sensitivity(solve(d, bc, rho, m), rho, m);
  EXPECT_EQ(dc[3], 0.0);
  FeaSolution stale;
  stale.element_energy.resize(3);
  EXPECT_THROW(compliance_sensitivity(stale, rho, m), Error);
}

TEST(DensityFilter, UniformFieldUnchanged) {
  const auto dims = GridDims::plane(7, 5);
  auto mask = l_shape_mask(dims);
  const DesignDomain d = make_domain(dims, mask);
  const std::vector<double> field(d.active_count(), 0.37);
  for (double v : density_filter(field, d, 2.3)) EXPECT_NEAR(v, 0.37, 1e-15);
}

TEST(DensityFilter, SpikeMatchesDirectWeights) {
  const auto dims = GridDims::plane(5, 5);
  const DesignDomain d = make_domain(dims, full_mask(dims));
  std::vector<double> field(25, 0.0);
  field[d.element_index(2, 2)] = 1.0;
  const auto out = density_filter(field, d, 1.5);
  // Brute force: centre weight / sum of all hat weights around the centre.
  double sum = 0.0;
  for (int dj = -2; dj <= 2; ++dj)
    for (int di = -2; di <= 2; ++di) sum += brute_filter_weight(di, dj, 1.5);
  const double expected = 1.5 / sum;
  EXPECT_NEAR(out[d.element_index(2, 2)], expected, 1e-15);
  // Frozen value: 1.5 / (1.5 + 4 * 0.5 + 4 * (1.5 - sqrt 2)).
  EXPECT_NEAR(out[d.element_index(2, 2)], 0.3903052596435807, 1e-12);
}

TEST(DensityFilter, ConvexCombinationAndBruteForce) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const int nx = 2 + static_cast<int>(rng() % 7);
    const int ny = 2 + static_cast<int>(rng() % 7);
    const auto dims = GridDims::plane(nx, ny);
    auto mask = full_mask(dims);
    if (nx > 3 && ny > 3) subtract_box(mask, dims, {nx - 2, ny - 2, 0}, {nx, ny, 1});
    const DesignDomain d = make_domain(dims, mask);
    const double r = 1.0 + 2.0 * u(rng);
    std::vector<double> x(d.active_count()), dc(d.active_count());
    for (auto& v : x) v = u(rng);
    for (auto& v : dc) v = -u(rng);
    DensityFilter filter(d, r);
    const auto fx = filter.apply(x);
    const auto fdc = filter.filter_sensitivity(x, dc);
    const double lo = *std::min_element(x.begin(), x.end());
    const double hi = *std::max_element(x.begin(), x.end());
    const auto& active = d.active_elements();
    for (std::size_t s = 0; s < active.size(); ++s) {
      EXPECT_GE(fx[s], lo - 1e-15);
      EXPECT_LE(fx[s], hi + 1e-15);
      // Double-loop oracle over every active element pair.
      const NodeCoord c = d.element_coord(active[s]);
      double num = 0.0, den = 0.0;
      for (std::size_t t = 0; t < active.size(); ++t) {
        const NodeCoord o = d.element_coord(active[t]);
        const double w = brute_filter_weight(o.i - c.i, o.j - c.j, r);
        num += w * x[t] * dc[t];
        den += w;
      }
      EXPECT_EQ(fdc[s], num / (std::max(1e-3, x[s]) * den));
    }
  }
}

TEST(OcUpdate, UniformInputStaysAtVolfrac) {
  SimpConfig cfg;
  const std::vector<double> x(40, 0.5), dc(40, -3.0), dv(40, 1.0);
  for (double v : oc_update(x, dc, dv, cfg)) EXPECT_NEAR(v, 0.5, 1e-9);
}

TEST(OcUpdate, VolumeConstraintActive) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    SimpConfig cfg;
    cfg.volfrac = 0.2 + 0.6 * u(rng);
    std::vector<double> x(64), dc(64), dv(64, 1.0);
    for (auto& v : x) v = cfg.volfrac + 0.1 * (u(rng) - 0.5);
    for (auto& v : dc) v = -std::exp(4.0 * u(rng));
    const auto out = oc_update(x, dc, dv, cfg);
    const double vol = std::accumulate(out.begin(), out.end(), 0.0) / 64.0;
    EXPECT_NEAR(vol, cfg.volfrac, 1e-4 * cfg.volfrac);
    for (std::size_t e = 0; e < out.size(); ++e) {
      EXPECT_GE(out[e], std::max(0.0, x[e] - cfg.move_limit) - 1e-15);
      EXPECT_LE(out[e], std::min(1.0, x[e] + cfg.move_limit) + 1e-15);
    }
  }
}

TEST(OcUpdate, ZeroSensitivityRemovesMaterial) {
  SimpConfig cfg;
  std::vector<double> x(10, 0.5), dc(10, -1.0), dv(10, 1.0);
  x[0] = 0.7;
  dc[0] = 0.0;
  const auto out = oc_update(x, dc, dv, cfg);
  EXPECT_DOUBLE_EQ(out[0], 0.7 - 0.2);
  EXPECT_THROW(oc_update(x, std::vector<double>(10, 1.0), dv, cfg), Error);
}

class SimpLoop : public ::testing::Test {
 protected:
  GridDims dims = GridDims::plane(30, 10);
  DesignDomain domain{dims, full_mask(dims)};
  MaterialModel material;
  BoundaryConditions bc =
      standard_bc_case(domain, BcCase::Cantilever, {domain.node_index(30, 5), {0.0, -1.0, 0.0}});
};

TEST_F(SimpLoop, ConvergesWithinConstraints) {
  SimpConfig cfg;
  const auto r = optimize(domain, bc, material, cfg);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, cfg.max_iters);
  EXPECT_EQ(r.compliance_history.size(), static_cast<std::size_t>(r.iterations));
  for (double v : r.volume_history) EXPECT_NEAR(v, cfg.volfrac, 1e-4 * cfg.volfrac);
  for (double v : r.densities) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_LT(r.compliance_history.back(), r.compliance_history.front());
}

TEST_F(SimpLoop, DeterministicHistories) {
  SimpConfig cfg;
  cfg.max_iters = 25;
  const auto a = optimize(domain, bc, material, cfg);
  const auto b = optimize(domain, bc, material, cfg);
  EXPECT_EQ(a.compliance_history, b.compliance_history);
  EXPECT_EQ(a.densities, b.densities);
}

TEST_F(SimpLoop, WarmStartFromConvergedIsFixedPoint) {
  SimpConfig cfg;
  const auto cold = optimize(domain, bc, material, cfg);
  ASSERT_TRUE(cold.converged);
  SimpConfig warm_cfg = cfg;
  warm_cfg.warm_start_filter = false;
  const auto warm = optimize(domain, bc, material, warm_cfg, std::span<const double>(cold.densities));
  EXPECT_TRUE(warm.converged);
  EXPECT_LE(warm.iterations, 2);
}

TEST(SimpLoop3D, DensityFilterSchemeRespectsConstraints) {
  const auto dims = GridDims::volume(12, 6, 4);
  const DesignDomain d = make_domain(dims, full_mask(dims));
  MaterialModel m;
  const auto bc = standard_bc_case(d, BcCase::Cantilever, {d.node_index(12, 3, 2), {0, -1, 0}});
  SimpConfig cfg;
  cfg.max_iters = 30;
  const auto r = optimize(d, bc, m, cfg);
  for (double v : r.volume_history) EXPECT_NEAR(v, cfg.volfrac, 1e-4 * cfg.volfrac);
  for (double v : r.densities) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_LT(r.compliance_history.back(), r.compliance_history.front());
}
