#include "topoforge/simp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "topoforge/error.hpp"

namespace topoforge {

void SimpConfig::validate() const {
  if (!(volfrac > 0.0 && volfrac < 1.0)) fail(ErrorCode::InvalidArgument, "volfrac must lie in (0, 1)");
  if (!(filter_radius >= 1.0)) fail(ErrorCode::InvalidArgument, "filter radius must be >= 1");
  if (!(move_limit > 0.0 && move_limit <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "move limit must lie in (0, 1]");
  }
  if (max_iters < 1) fail(ErrorCode::InvalidArgument, "max_iters must be >= 1");
  if (!(change_tol > 0.0)) fail(ErrorCode::InvalidArgument, "change_tol must be positive");
  if (!(oc_damping > 0.0)) fail(ErrorCode::InvalidArgument, "oc_damping must be positive");
}

FilterScheme SimpConfig::resolved_scheme(int rank) const {
  if (scheme != FilterScheme::Auto) return scheme;
  return rank == 3 ? FilterScheme::Density : FilterScheme::Sensitivity;
}

std::vector<double> compliance_sensitivity(const FeaSolution& solution,
                                           std::span<const double> densities,
                                           const MaterialModel& material) {
  if (solution.element_energy.size() != densities.size()) {
    fail(ErrorCode::StaleSolution, "solution has " + std::to_string(solution.element_energy.size()) +
                                       " elements, density field has " +
                                       std::to_string(densities.size()));
  }
  std::vector<double> dc(densities.size());
  for (std::size_t e = 0; e < densities.size(); ++e) {
    dc[e] = -simp_modulus_derivative(densities[e], material) * solution.element_energy[e];
  }
  return dc;
}

DensityFilter::DensityFilter(const DesignDomain& domain, double radius) {
  if (!(radius >= 1.0)) fail(ErrorCode::InvalidArgument, "filter radius must be >= 1");
  const GridDims& d = domain.dims();
  const int reach = static_cast<int>(std::ceil(radius)) - 1;
  const int kreach = d.rank == 3 ? reach : 0;
  const auto& active = domain.active_elements();
  row_start_.reserve(active.size() + 1);
  row_start_.push_back(0);
  weight_sum_.reserve(active.size());
  for (std::size_t e : active) {
    const NodeCoord c = domain.element_coord(e);
    double sum = 0.0;
    for (int k = std::max(c.k - kreach, 0); k <= std::min(c.k + kreach, d.nz - 1); ++k) {
      for (int j = std::max(c.j - reach, 0); j <= std::min(c.j + reach, d.ny - 1); ++j) {
        for (int i = std::max(c.i - reach, 0); i <= std::min(c.i + reach, d.nx - 1); ++i) {
          const std::size_t n = domain.element_index(i, j, k);
          if (!domain.is_active(n)) continue;
          const double dist = std::sqrt(static_cast<double>((i - c.i) * (i - c.i) +
                                                            (j - c.j) * (j - c.j) +
                                                            (k - c.k) * (k - c.k)));
          const double w = std::max(0.0, radius - dist);
          if (w <= 0.0) continue;
          column_.push_back(static_cast<std::size_t>(domain.active_slot(n)));
          weight_.push_back(w);
          sum += w;
        }
      }
    }
    weight_sum_.push_back(sum);
    row_start_.push_back(column_.size());
  }
}

std::vector<double> DensityFilter::apply(std::span<const double> field) const {
  if (field.size() != size()) fail(ErrorCode::DimensionMismatch, "filter input size");
  std::vector<double> out(size());
  for (std::size_t r = 0; r < size(); ++r) {
    double acc = 0.0;
    for (std::size_t q = row_start_[r]; q < row_start_[r + 1]; ++q) acc += weight_[q] * field[column_[q]];
    out[r] = acc / weight_sum_[r];
  }
  return out;
}

std::vector<double> DensityFilter::apply_transpose(std::span<const double> field) const {
  if (field.size() != size()) fail(ErrorCode::DimensionMismatch, "filter input size");
  // Weights are symmetric, so row r's entries double as column r's.
  std::vector<double> out(size());
  for (std::size_t r = 0; r < size(); ++r) {
    double acc = 0.0;
    for (std::size_t q = row_start_[r]; q < row_start_[r + 1]; ++q) {
      acc += weight_[q] * field[column_[q]] / weight_sum_[column_[q]];
    }
    out[r] = acc;
  }
  return out;
}

std::vector<double> DensityFilter::filter_sensitivity(std::span<const double> densities,
                                                      std::span<const double> dc) const {
  if (densities.size() != size() || dc.size() != size()) {
    fail(ErrorCode::DimensionMismatch, "filter input size");
  }
  std::vector<double> out(size());
  for (std::size_t r = 0; r < size(); ++r) {
    double acc = 0.0;
    for (std::size_t q = row_start_[r]; q < row_start_[r + 1]; ++q) {
      acc += weight_[q] * densities[column_[q]] * dc[column_[q]];
    }
    out[r] = acc / (std::max(1e-3, densities[r]) * weight_sum_[r]);
  }
  return out;
}

std::vector<double> density_filter(std::span<const double> field, const DesignDomain& domain,
                                   double radius) {
  return DensityFilter(domain, radius).apply(field);
}

namespace {

using Projection = std::function<std::vector<double>(const std::vector<double>&)>;

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// OC fixed-point step; `project` maps design variables to the physical field
// whose volume is constrained.
std::vector<double> oc_step(std::span<const double> x, std::span<const double> dc,
                            std::span<const double> dv, const SimpConfig& config,
                            const Projection& project, std::vector<double>* physical) {
  const std::size_t n = x.size();
  if (dc.size() != n || dv.size() != n) fail(ErrorCode::DimensionMismatch, "OC input sizes differ");
  for (std::size_t e = 0; e < n; ++e) {
    if (!(dv[e] > 0.0)) fail(ErrorCode::InvalidArgument, "volume sensitivities must be positive");
  }
  const double m = config.move_limit;
  const double eta = config.oc_damping;
  std::vector<double> lower(n), upper(n), xnew(n);
  for (std::size_t e = 0; e < n; ++e) {
    lower[e] = std::max(0.0, x[e] - m);
    upper[e] = std::min(1.0, x[e] + m);
  }
  const auto update = [&](double lambda) {
    for (std::size_t e = 0; e < n; ++e) {
      const double ratio = std::max(0.0, -dc[e]) / (lambda * dv[e]);
      const double candidate = x[e] * std::pow(ratio, eta);
      xnew[e] = std::clamp(candidate, lower[e], upper[e]);
    }
  };
  double l1 = 1e-9;
  double l2 = 1e9;
  std::vector<double> phys;
  for (int it = 0; it < 200 && (l2 - l1) > 1e-13 * (l1 + l2); ++it) {
    const double mid = std::sqrt(l1 * l2);
    update(mid);
    phys = project(xnew);
    if (mean(phys) > config.volfrac) {
      l1 = mid;
    } else {
      l2 = mid;
    }
  }
  update(l2);
  phys = project(xnew);
  const double vol = mean(phys);
  if (std::abs(vol - config.volfrac) > 1e-4 * config.volfrac) {
    // Only an error if some element could still have moved.
    bool free_element = false;
    for (std::size_t e = 0; e < n && !free_element; ++e) {
      free_element = xnew[e] > lower[e] && xnew[e] < upper[e];
    }
    if (free_element && vol > config.volfrac) {
      fail(ErrorCode::BisectionFailure, "volume " + std::to_string(vol) +
                                            " not within tolerance of target " +
                                            std::to_string(config.volfrac));
    }
  }
  if (physical) *physical = std::move(phys);
  return xnew;
}

}  // namespace

std::vector<double> oc_update(std::span<const double> densities, std::span<const double> dc,
                              std::span<const double> dv, const SimpConfig& config) {
  for (double g : dc) {
    if (g > 0.0) fail(ErrorCode::InvalidArgument, "compliance sensitivities must be <= 0");
  }
  return oc_step(densities, dc, dv, config, [](const std::vector<double>& v) { return v; },
                 nullptr);
}

SimpResult optimize(const DesignDomain& domain, const BoundaryConditions& bc,
                    const MaterialModel& material, const SimpConfig& config,
                    std::optional<std::span<const double>> initial_densities) {
  config.validate();
  material.validate();
  const FilterScheme scheme = config.resolved_scheme(domain.rank());
  const std::size_t n = domain.active_count();
  FeaSystem system(domain, bc, material, config.solver);
  DensityFilter filter(domain, config.filter_radius);

  std::vector<double> x(n, config.volfrac);
  if (initial_densities) {
    if (initial_densities->size() != n) {
      fail(ErrorCode::DimensionMismatch, "warm-start field has " +
                                             std::to_string(initial_densities->size()) +
                                             " entries, domain has " + std::to_string(n) +
                                             " active elements");
    }
    for (std::size_t e = 0; e < n; ++e) x[e] = std::clamp((*initial_densities)[e], 0.0, 1.0);
    if (config.warm_start_filter && scheme == FilterScheme::Sensitivity) x = filter.apply(x);
  }
  // With density filtering the filter pass is the design-to-physical map.
  std::vector<double> x_phys = scheme == FilterScheme::Density ? filter.apply(x) : x;
  const Projection project = scheme == FilterScheme::Density
                                 ? Projection([&](const std::vector<double>& v) { return filter.apply(v); })
                                 : Projection([](const std::vector<double>& v) { return v; });

  SimpResult result;
  const std::vector<double> dv_unit(n, 1.0);
  for (int iter = 0; iter < config.max_iters; ++iter) {
    if (config.cancelled && config.cancelled()) fail(ErrorCode::Cancelled, "optimization cancelled");
    const FeaSolution sol = system.solve(x_phys);
    result.compliance_history.push_back(sol.compliance);
    std::vector<double> dc = compliance_sensitivity(sol, x_phys, material);
    std::vector<double> dv = dv_unit;
    if (scheme == FilterScheme::Sensitivity) {
      dc = filter.filter_sensitivity(x, dc);
      for (double& g : dc) g = std::min(g, 0.0);
    } else {
      dc = filter.apply_transpose(dc);
      dv = filter.apply_transpose(dv);
    }
    std::vector<double> next_phys;
    std::vector<double> xnew = oc_step(x, dc, dv, config, project, &next_phys);
    double change = 0.0;
    for (std::size_t e = 0; e < n; ++e) change = std::max(change, std::abs(xnew[e] - x[e]));
    x = std::move(xnew);
    x_phys = std::move(next_phys);
    result.volume_history.push_back(mean(x_phys));
    result.change_history.push_back(change);
    result.iterations = iter + 1;
    if (config.on_iterate) config.on_iterate(iter + 1, x_phys);
    if (change < config.change_tol) {
      result.converged = true;
      break;
    }
  }
  result.densities = std::move(x_phys);
  return result;
}

std::vector<double> to_raster(const DesignDomain& domain, std::span<const double> active_values) {
  if (active_values.size() != domain.active_count()) {
    fail(ErrorCode::DimensionMismatch, "active value count does not match the domain");
  }
  std::vector<double> raster(domain.element_count(), 0.0);
  const auto& active = domain.active_elements();
  for (std::size_t s = 0; s < active.size(); ++s) raster[active[s]] = active_values[s];
  return raster;
}

std::vector<double> from_raster(const DesignDomain& domain, std::span<const double> raster) {
  if (raster.size() != domain.element_count()) {
    fail(ErrorCode::DimensionMismatch, "raster size does not match the domain");
  }
  std::vector<double> values;
  values.reserve(domain.active_count());
  for (std::size_t e : domain.active_elements()) values.push_back(raster[e]);
  return values;
}

}  // namespace topoforge
