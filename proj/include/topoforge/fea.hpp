#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "topoforge/material.hpp"
#include "topoforge/mesh_domain.hpp"

namespace topoforge {

/// Unit-modulus element matrix of a unit square (Q4, plane stress) or unit
/// cube (H8) element. Dofs are node-major in DesignDomain::element_nodes order.
struct ElementStiffness {
  Eigen::MatrixXd k0;
  double poisson = 0.3;
  int rank = 2;
};

ElementStiffness element_stiffness_q4(double poisson_ratio);
ElementStiffness element_stiffness_h8(double poisson_ratio);
ElementStiffness element_stiffness(int rank, double poisson_ratio);

struct FeaSolution {
  std::vector<double> displacement;     // one entry per global dof
  std::vector<double> force;            // one entry per global dof
  double compliance = 0.0;
  std::vector<double> element_energy;   // u_e^T k0 u_e, per active element
  int cg_iterations = 0;
};

enum class LinearSolverKind { Auto, Direct, ConjugateGradient };

struct SolverOptions {
  LinearSolverKind kind = LinearSolverKind::Auto;
  double cg_tolerance = 1e-8;
  int cg_iteration_factor = 10;  // cap = factor * free dofs
  /// Auto switches to CG above this many free dofs for rank-3 grids.
  std::size_t direct_limit_3d = 3000;
};

/// Assembly and solve machinery for a fixed domain and boundary conditions.
/// The sparsity pattern and factorisation ordering are built once, so
/// repeated solves (one per SIMP iteration) only refill values.
class FeaSystem {
 public:
  FeaSystem(const DesignDomain& domain, const BoundaryConditions& bc,
            const MaterialModel& material, SolverOptions options = {});
  ~FeaSystem();
  FeaSystem(FeaSystem&&) noexcept;
  FeaSystem& operator=(FeaSystem&&) noexcept;

  /// One density per active element, each in [0, 1].
  FeaSolution solve(std::span<const double> densities);

  /// Assembled reduced stiffness matrix for the given densities (free dofs only).
  Eigen::SparseMatrix<double> assemble(std::span<const double> densities);
  /// Global dof of each reduced (free) index.
  const std::vector<std::size_t>& free_dofs() const;
  const ElementStiffness& element_matrix() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One-shot convenience wrapper around FeaSystem.
FeaSolution solve(const DesignDomain& domain, const BoundaryConditions& bc,
                  std::span<const double> densities, const MaterialModel& material,
                  SolverOptions options = {});

}  // namespace topoforge
