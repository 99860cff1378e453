#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance runner.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "topoforge/fea.hpp"
#include "topoforge/layers.hpp"
#include "topoforge/material.hpp"
#include "topoforge/mesh_domain.hpp"

namespace topoforge::oracle {

// Independent oracle: element stiffness by Gauss-Legendre quadrature of
// B^T D B with explicitly built B and D matrices.
inline Eigen::MatrixXd gauss_stiffness(int rank, double nu) {
  const int npe = rank == 3 ? 8 : 4;
  const int ndof = npe * rank;
  const int nstrain = rank == 3 ? 6 : 3;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(nstrain, nstrain);
  if (rank == 2) {
    const double c = 1.0 / (1.0 - nu * nu);
    d << c, c * nu, 0, c * nu, c, 0, 0, 0, c * (1.0 - nu) / 2.0;
  } else {
    const double c = 1.0 / ((1.0 + nu) * (1.0 - 2.0 * nu));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) d(i, j) = c * (i == j ? 1.0 - nu : nu);
    for (int i = 3; i < 6; ++i) d(i, i) = c * (1.0 - 2.0 * nu) / 2.0;
  }
  const double corners[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  const double g = 0.5 / std::sqrt(3.0);
  const double pts[2] = {0.5 - g, 0.5 + g};
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(ndof, ndof);
  const int nz = rank == 3 ? 2 : 1;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      for (int c = 0; c < nz; ++c) {
        const double x[3] = {pts[a], pts[b], rank == 3 ? pts[c] : 0.0};
        const double w = rank == 3 ? 0.125 : 0.25;
        Eigen::MatrixXd bm = Eigen::MatrixXd::Zero(nstrain, ndof);
        for (int n = 0; n < npe; ++n) {
          double grad[3];
          for (int p = 0; p < rank; ++p) {
            double v = 1.0;
            for (int q = 0; q < rank; ++q) {
              const double s = corners[n][q];
              if (q == p) {
                v *= s == 1.0 ? 1.0 : -1.0;
              } else {
                v *= s == 1.0 ? x[q] : 1.0 - x[q];
              }
            }
            grad[p] = v;
          }
          if (rank == 2) {
            bm(0, 2 * n) = grad[0];
            bm(1, 2 * n + 1) = grad[1];
            bm(2, 2 * n) = grad[1];
            bm(2, 2 * n + 1) = grad[0];
          } else {
            bm(0, 3 * n) = grad[0];
            bm(1, 3 * n + 1) = grad[1];
            bm(2, 3 * n + 2) = grad[2];
            bm(3, 3 * n) = grad[1];
            bm(3, 3 * n + 1) = grad[0];
            bm(4, 3 * n + 1) = grad[2];
            bm(4, 3 * n + 2) = grad[1];
            bm(5, 3 * n) = grad[2];
            bm(5, 3 * n + 2) = grad[0];
          }
        }
        k += w * bm.transpose() * d * bm;
      }
    }
  }
  return k;
}

// Brute-force dense global stiffness over free dofs, accumulated element by
// element in active-element order.
inline Eigen::MatrixXd dense_global(const DesignDomain& domain, const BoundaryConditions& bc,
                             const std::vector<double>& rho, const MaterialModel& m,
                             std::vector<std::int64_t>& reduced, std::size_t& nfree) {
  DofMap map(domain);
  const auto ke = element_stiffness(domain.rank(), m.poisson).k0;
  std::vector<bool> fixed(map.dof_count(), false);
  for (auto f : bc.fixed) fixed[map.dof(f.node, f.axis)] = true;
  reduced.assign(map.dof_count(), -1);
  nfree = 0;
  for (std::size_t n : map.active_nodes())
    for (int a = 0; a < domain.rank(); ++a)
      if (!fixed[map.dof(n, a)]) reduced[map.dof(n, a)] = static_cast<std::int64_t>(nfree++);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(nfree, nfree);
  const auto& active = domain.active_elements();
  for (std::size_t s = 0; s < active.size(); ++s) {
    const auto dofs = map.element_dofs(active[s]);
    const double e = simp_modulus(rho[s], m);
    for (int b = 0; b < map.dofs_per_element(); ++b)
      for (int a = 0; a < map.dofs_per_element(); ++a) {
        const auto ra = reduced[dofs[a]];
        const auto rb = reduced[dofs[b]];
        if (ra >= 0 && rb >= 0) k(ra, rb) += e * ke(a, b);
      }
  }
  return k;
}

inline std::vector<double> random_densities(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> rho(n);
  for (double& r : rho) r = u(rng);
  return rho;
}

inline nn::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  nn::Tensor t(std::move(shape));
  for (double& v : t.storage()) v = u(rng);
  return t;
}

inline double dot(const nn::Tensor& a, const nn::Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Norm-wise relative error between an analytic gradient and central
// differences of loss() with respect to every entry of `param`.
inline double fd_error(nn::Tensor& param, const nn::Tensor& analytic, const std::function<double()>& loss) {
  const double h = 1e-6;
  double diff = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double keep = param[i];
    param[i] = keep + h;
    const double up = loss();
    param[i] = keep - h;
    const double down = loss();
    param[i] = keep;
    const double fd = (up - down) / (2 * h);
    diff += (fd - analytic[i]) * (fd - analytic[i]);
    norm += std::max(fd * fd, analytic[i] * analytic[i]);
  }
  return norm == 0.0 ? std::sqrt(diff) : std::sqrt(diff / norm);
}

}  // namespace topoforge::oracle
