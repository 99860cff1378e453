#include "topoforge/fea.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "topoforge/error.hpp"

namespace topoforge {

namespace {

// Closed-form integrals of products of the 1D linear shape functions
// phi_0(t) = 1 - t and phi_1(t) = t over [0, 1].
double mass_1d(int s, int t) { return s == t ? 1.0 / 3.0 : 1.0 / 6.0; }
double stiff_1d(int s, int t) { return s == t ? 1.0 : -1.0; }
// integral of phi_s'(t) * phi_t(t)
double mixed_1d(int s, int /*t*/) { return s == 1 ? 0.5 : -0.5; }

std::array<int, 3> corner_offsets(int node) {
  static constexpr std::array<std::array<int, 3>, 8> kCorners{{
      {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};
  return kCorners[static_cast<std::size_t>(node)];
}

// integral over the unit element of dN_a/dx_p * dN_b/dx_q.
double gradient_product(int rank, int a, int b, int p, int q) {
  const auto sa = corner_offsets(a);
  const auto sb = corner_offsets(b);
  double value = 1.0;
  for (int d = 0; d < rank; ++d) {
    if (p == q && d == p) {
      value *= stiff_1d(sa[d], sb[d]);
    } else if (d == p) {
      value *= mixed_1d(sa[d], sb[d]);
    } else if (d == q) {
      value *= mixed_1d(sb[d], sa[d]);
    } else {
      value *= mass_1d(sa[d], sb[d]);
    }
  }
  return value;
}

ElementStiffness analytic_element(int rank, double nu) {
  if (!(nu >= 0.0 && nu < 0.5)) {
    fail(ErrorCode::InvalidPoissonRatio, "Poisson ratio must lie in [0, 0.5)");
  }
  const double e = 1.0;
  const double mu = e / (2.0 * (1.0 + nu));
  // Plane stress uses the reduced Lame constant.
  const double lambda = rank == 2 ? e * nu / (1.0 - nu * nu)
                                  : e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  const int npe = rank == 3 ? 8 : 4;
  const int n = npe * rank;
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (int a = 0; a < npe; ++a) {
    for (int b = 0; b < npe; ++b) {
      double laplace = 0.0;
      for (int m = 0; m < rank; ++m) laplace += gradient_product(rank, a, b, m, m);
      for (int i = 0; i < rank; ++i) {
        for (int j = 0; j < rank; ++j) {
          double v = lambda * gradient_product(rank, a, b, i, j) +
                     mu * gradient_product(rank, a, b, j, i);
          if (i == j) v += mu * laplace;
          k(a * rank + i, b * rank + j) = v;
        }
      }
    }
  }
  // Exact symmetry; the integrals above are symmetric up to rounding.
  k = 0.5 * (k + k.transpose()).eval();
  return {std::move(k), nu, rank};
}

}  // namespace

ElementStiffness element_stiffness_q4(double poisson_ratio) {
  return analytic_element(2, poisson_ratio);
}

ElementStiffness element_stiffness_h8(double poisson_ratio) {
  return analytic_element(3, poisson_ratio);
}

ElementStiffness element_stiffness(int rank, double poisson_ratio) {
  return rank == 3 ? element_stiffness_h8(poisson_ratio) : element_stiffness_q4(poisson_ratio);
}

struct FeaSystem::Impl {
  int rank = 2;
  std::size_t dof_count = 0;
  int local = 8;
  MaterialModel material;
  SolverOptions options;
  ElementStiffness ke;
  std::vector<std::array<std::size_t, 24>> element_dofs;  // per active element
  std::vector<std::size_t> free;                          // reduced -> global
  std::vector<std::int64_t> reduced;                      // global -> reduced or -1
  std::vector<std::int64_t> slots;                        // per element, local*local
  Eigen::SparseMatrix<double> k;
  Eigen::VectorXd f;
  std::vector<double> full_force;
  bool use_direct = true;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  bool analysed = false;
  Eigen::VectorXd last_solution;

  void fill(std::span<const double> densities) {
    if (densities.size() != element_dofs.size()) {
      fail(ErrorCode::DimensionMismatch,
           "expected " + std::to_string(element_dofs.size()) + " densities, got " +
               std::to_string(densities.size()));
    }
    double* values = k.valuePtr();
    std::fill(values, values + k.nonZeros(), 0.0);
    const std::size_t ll = static_cast<std::size_t>(local) * static_cast<std::size_t>(local);
    for (std::size_t e = 0; e < element_dofs.size(); ++e) {
      const double modulus = simp_modulus(densities[e], material);
      const std::int64_t* s = slots.data() + e * ll;
      const double* kv = ke.k0.data();  // column-major; k0 is symmetric
      for (std::size_t m = 0; m < ll; ++m) {
        if (s[m] >= 0) values[s[m]] += modulus * kv[m];
      }
    }
  }
};

FeaSystem::FeaSystem(const DesignDomain& domain, const BoundaryConditions& bc,
                     const MaterialModel& material, SolverOptions options)
    : impl_(std::make_unique<Impl>()) {
  material.validate();
  Impl& s = *impl_;
  s.rank = domain.rank();
  s.material = material;
  s.options = options;
  s.ke = element_stiffness(s.rank, material.poisson);
  s.local = static_cast<int>(s.ke.k0.rows());
  DofMap map(domain);
  s.dof_count = map.dof_count();

  if (bc.fixed.empty()) {
    fail(ErrorCode::SingularSystem, "no fixed dofs; rigid-body modes are unconstrained");
  }
  std::vector<std::uint8_t> fixed(s.dof_count, 0);
  for (const FixedDof& fd : bc.fixed) fixed[map.dof(fd.node, fd.axis)] = 1;

  s.reduced.assign(s.dof_count, -1);
  for (std::size_t node : map.active_nodes()) {
    for (int a = 0; a < s.rank; ++a) {
      const std::size_t d = map.dof(node, a);
      if (!fixed[d]) {
        s.reduced[d] = static_cast<std::int64_t>(s.free.size());
        s.free.push_back(d);
      }
    }
  }
  if (s.free.empty()) fail(ErrorCode::SingularSystem, "every dof is fixed");

  s.element_dofs.reserve(domain.active_count());
  for (std::size_t e : domain.active_elements()) s.element_dofs.push_back(map.element_dofs(e));

  const auto n = static_cast<Eigen::Index>(s.free.size());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(s.element_dofs.size() * static_cast<std::size_t>(s.local * s.local));
  for (const auto& dofs : s.element_dofs) {
    for (int a = 0; a < s.local; ++a) {
      const std::int64_t ra = s.reduced[dofs[static_cast<std::size_t>(a)]];
      if (ra < 0) continue;
      for (int b = 0; b < s.local; ++b) {
        const std::int64_t rb = s.reduced[dofs[static_cast<std::size_t>(b)]];
        if (rb >= 0) triplets.emplace_back(ra, rb, 1.0);
      }
    }
  }
  s.k.resize(n, n);
  s.k.setFromTriplets(triplets.begin(), triplets.end());
  s.k.makeCompressed();

  // Position of every (row, col) element contribution inside the value array.
  const std::size_t ll = static_cast<std::size_t>(s.local) * static_cast<std::size_t>(s.local);
  s.slots.assign(s.element_dofs.size() * ll, -1);
  const int* outer = s.k.outerIndexPtr();
  const int* inner = s.k.innerIndexPtr();
  for (std::size_t e = 0; e < s.element_dofs.size(); ++e) {
    const auto& dofs = s.element_dofs[e];
    for (int b = 0; b < s.local; ++b) {
      const std::int64_t col = s.reduced[dofs[static_cast<std::size_t>(b)]];
      if (col < 0) continue;
      for (int a = 0; a < s.local; ++a) {
        const std::int64_t row = s.reduced[dofs[static_cast<std::size_t>(a)]];
        if (row < 0) continue;
        const int* first = inner + outer[col];
        const int* last = inner + outer[col + 1];
        const int* hit = std::lower_bound(first, last, static_cast<int>(row));
        // column-major local index matches ke.k0.data() layout
        s.slots[e * ll + static_cast<std::size_t>(b) * static_cast<std::size_t>(s.local) +
                static_cast<std::size_t>(a)] = outer[col] + (hit - first);
      }
    }
  }

  s.f = Eigen::VectorXd::Zero(n);
  s.full_force.assign(s.dof_count, 0.0);
  for (const PointLoad& load : bc.loads) {
    for (int a = 0; a < s.rank; ++a) {
      const std::size_t d = map.dof(load.node, a);
      s.full_force[d] += load.force[static_cast<std::size_t>(a)];
      if (s.reduced[d] >= 0) s.f[s.reduced[d]] += load.force[static_cast<std::size_t>(a)];
    }
  }

  switch (options.kind) {
    case LinearSolverKind::Direct: s.use_direct = true; break;
    case LinearSolverKind::ConjugateGradient: s.use_direct = false; break;
    case LinearSolverKind::Auto:
      s.use_direct = s.rank == 2 || s.free.size() <= options.direct_limit_3d;
      break;
  }
}

FeaSystem::~FeaSystem() = default;
FeaSystem::FeaSystem(FeaSystem&&) noexcept = default;
FeaSystem& FeaSystem::operator=(FeaSystem&&) noexcept = default;

const std::vector<std::size_t>& FeaSystem::free_dofs() const { return impl_->free; }
const ElementStiffness& FeaSystem::element_matrix() const { return impl_->ke; }

Eigen::SparseMatrix<double> FeaSystem::assemble(std::span<const double> densities) {
  impl_->fill(densities);
  return impl_->k;
}

FeaSolution FeaSystem::solve(std::span<const double> densities) {
  Impl& s = *impl_;
  s.fill(densities);
  Eigen::VectorXd u;
  int cg_iterations = 0;
  if (s.use_direct) {
    if (!s.analysed) {
      s.ldlt.analyzePattern(s.k);
      s.analysed = true;
    }
    s.ldlt.factorize(s.k);
    if (s.ldlt.info() != Eigen::Success) {
      fail(ErrorCode::SingularSystem, "factorisation failed; supports do not remove rigid modes");
    }
    const Eigen::VectorXd pivots = s.ldlt.vectorD().cwiseAbs();
    if (pivots.minCoeff() <= 1e-13 * pivots.maxCoeff()) {
      fail(ErrorCode::SingularSystem, "stiffness matrix is singular; insufficient supports");
    }
    u = s.ldlt.solve(s.f);
  } else {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<double>>
        cg;
    cg.setTolerance(s.options.cg_tolerance);
    cg.setMaxIterations(s.options.cg_iteration_factor * static_cast<int>(s.free.size()));
    cg.compute(s.k);
    if (s.last_solution.size() == s.f.size()) {
      u = cg.solveWithGuess(s.f, s.last_solution);
    } else {
      u = cg.solve(s.f);
    }
    cg_iterations = static_cast<int>(cg.iterations());
    if (cg.info() != Eigen::Success) {
      fail(ErrorCode::NonConvergence,
           "CG stopped after " + std::to_string(cg.iterations()) +
               " iterations at relative residual " + std::to_string(cg.error()));
    }
    s.last_solution = u;
  }
  const double fnorm = s.f.norm();
  if (!u.allFinite()) fail(ErrorCode::SingularSystem, "non-finite displacement");
  if (fnorm > 0.0) {
    const double residual = (s.k * u - s.f).norm() / fnorm;
    if (residual > 1e-6) {
      fail(ErrorCode::SingularSystem,
           "solve residual " + std::to_string(residual) + " indicates a singular system");
    }
  }

  FeaSolution out;
  out.cg_iterations = cg_iterations;
  out.force = s.full_force;
  out.displacement.assign(s.dof_count, 0.0);
  for (std::size_t r = 0; r < s.free.size(); ++r) {
    out.displacement[s.free[r]] = u[static_cast<Eigen::Index>(r)];
  }
  out.element_energy.resize(s.element_dofs.size());
  Eigen::VectorXd ue(s.local);
  double compliance = 0.0;
  for (std::size_t e = 0; e < s.element_dofs.size(); ++e) {
    for (int a = 0; a < s.local; ++a) {
      ue[a] = out.displacement[s.element_dofs[e][static_cast<std::size_t>(a)]];
    }
    const double energy = ue.dot(s.ke.k0 * ue);
    out.element_energy[e] = energy;
    compliance += simp_modulus(densities[e], s.material) * energy;
  }
  out.compliance = compliance;
  return out;
}

FeaSolution solve(const DesignDomain& domain, const BoundaryConditions& bc,
                  std::span<const double> densities, const MaterialModel& material,
                  SolverOptions options) {
  FeaSystem system(domain, bc, material, options);
  return system.solve(densities);
}

}  // namespace topoforge
