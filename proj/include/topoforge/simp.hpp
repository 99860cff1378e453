#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "topoforge/fea.hpp"
#include "topoforge/material.hpp"
#include "topoforge/mesh_domain.hpp"

namespace topoforge {

enum class FilterScheme {
  Auto,         // sensitivity filtering in 2D, density filtering in 3D
  Sensitivity,
  Density,
};

struct SimpConfig {
  double volfrac = 0.5;
  double filter_radius = 1.5;
  int max_iters = 200;
  double move_limit = 0.2;
  double change_tol = 0.01;
  double oc_damping = 0.5;
  FilterScheme scheme = FilterScheme::Auto;
  /// Smooth a warm-start field with one filter pass before iterating.
  bool warm_start_filter = true;
  SolverOptions solver;
  /// Polled before every iteration; returning true aborts with Cancelled.
  std::function<bool()> cancelled;
  /// Called after every update with the new physical densities.
  std::function<void(int iteration, std::span<const double> densities)> on_iterate;

  void validate() const;
  FilterScheme resolved_scheme(int rank) const;
};

struct SimpResult {
  std::vector<double> densities;           // physical densities, per active element
  std::vector<double> compliance_history;  // compliance evaluated at each iteration
  std::vector<double> volume_history;      // volume fraction after each update
  std::vector<double> change_history;      // max |delta rho| of each update
  int iterations = 0;
  bool converged = false;
};

/// dc/drho_e = -p rho^(p-1) (E0 - E_min) u_e^T k0 u_e for every active element.
std::vector<double> compliance_sensitivity(const FeaSolution& solution,
                                           std::span<const double> densities,
                                           const MaterialModel& material);

/// Linear hat-weight neighbourhood filter restricted to active elements,
/// w_ij = max(0, r - |c_i - c_j|).
class DensityFilter {
 public:
  DensityFilter(const DesignDomain& domain, double radius);

  /// sum_j w_ij x_j / sum_j w_ij
  std::vector<double> apply(std::span<const double> field) const;
  /// Adjoint of apply(); used for chain-ruling sensitivities through the
  /// density filter.
  std::vector<double> apply_transpose(std::span<const double> field) const;
  /// Classic sensitivity filter: sum_j w_ij x_j dc_j / (max(1e-3, x_i) sum_j w_ij)
  std::vector<double> filter_sensitivity(std::span<const double> densities,
                                         std::span<const double> dc) const;

  std::size_t size() const { return weight_sum_.size(); }

 private:
  // Compressed rows: neighbours of every active element (including itself).
  std::vector<std::size_t> row_start_;
  std::vector<std::size_t> column_;
  std::vector<double> weight_;
  std::vector<double> weight_sum_;
};

std::vector<double> density_filter(std::span<const double> field, const DesignDomain& domain,
                                   double radius);

/// Optimality-criteria update with a bisected Lagrange multiplier. `densities`,
/// `dc` and `dv` are per active element; element volumes are unity.
std::vector<double> oc_update(std::span<const double> densities, std::span<const double> dc,
                              std::span<const double> dv, const SimpConfig& config);

/// Full SIMP loop. `initial_densities`, when given, is a per-active-element
/// warm-start field (clamped to [0, 1] and optionally filtered once).
SimpResult optimize(const DesignDomain& domain, const BoundaryConditions& bc,
                    const MaterialModel& material, const SimpConfig& config,
                    std::optional<std::span<const double>> initial_densities = std::nullopt);

/// Expands per-active-element values into a full-grid raster (0 outside the mask).
std::vector<double> to_raster(const DesignDomain& domain, std::span<const double> active_values);
/// Gathers per-active-element values from a full-grid raster.
std::vector<double> from_raster(const DesignDomain& domain, std::span<const double> raster);

}  // namespace topoforge
