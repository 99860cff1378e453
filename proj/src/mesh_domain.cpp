#include "topoforge/mesh_domain.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

#include "topoforge/error.hpp"

namespace topoforge {

std::array<std::size_t, 8> grid_element_nodes(const GridDims& dims, int i, int j, int k) {
  const auto node = [&](int a, int b, int c) {
    return static_cast<std::size_t>(a) +
           static_cast<std::size_t>(dims.nx + 1) * (b + static_cast<std::size_t>(dims.ny + 1) * c);
  };
  std::array<std::size_t, 8> n{};
  n[0] = node(i, j, k);
  n[1] = node(i + 1, j, k);
  n[2] = node(i + 1, j + 1, k);
  n[3] = node(i, j + 1, k);
  if (dims.rank == 3) {
    n[4] = node(i, j, k + 1);
    n[5] = node(i + 1, j, k + 1);
    n[6] = node(i + 1, j + 1, k + 1);
    n[7] = node(i, j + 1, k + 1);
  }
  return n;
}

namespace {

void check_dims(const GridDims& dims) {
  if (dims.rank != 2 && dims.rank != 3) {
    fail(ErrorCode::DimensionMismatch, "rank must be 2 or 3");
  }
  if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1) {
    fail(ErrorCode::DimensionMismatch, "every axis needs at least one element");
  }
  if (dims.rank == 2 && dims.nz != 1) {
    fail(ErrorCode::DimensionMismatch, "rank-2 grids must have nz == 1");
  }
}

// Face-connected flood fill from the first active element.
bool is_face_connected(const GridDims& dims, const std::vector<std::uint8_t>& mask,
                       std::size_t first, std::size_t active_count) {
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::queue<std::size_t> queue;
  queue.push(first);
  seen[first] = 1;
  std::size_t reached = 0;
  const std::size_t sx = 1;
  const std::size_t sy = static_cast<std::size_t>(dims.nx);
  const std::size_t sz = sy * static_cast<std::size_t>(dims.ny);
  while (!queue.empty()) {
    const std::size_t e = queue.front();
    queue.pop();
    ++reached;
    const int i = static_cast<int>(e % dims.nx);
    const int j = static_cast<int>((e / dims.nx) % dims.ny);
    const int k = static_cast<int>(e / sz);
    const auto visit = [&](bool in_range, std::size_t n) {
      if (in_range && mask[n] && !seen[n]) {
        seen[n] = 1;
        queue.push(n);
      }
    };
    visit(i > 0, e - sx);
    visit(i + 1 < dims.nx, e + sx);
    visit(j > 0, e - sy);
    visit(j + 1 < dims.ny, e + sy);
    visit(k > 0, e - sz);
    visit(k + 1 < dims.nz, e + sz);
  }
  return reached == active_count;
}

}  // namespace

DesignDomain::DesignDomain(GridDims dims, std::vector<std::uint8_t> mask)
    : dims_(dims), mask_(std::move(mask)) {
  check_dims(dims_);
  if (mask_.size() != dims_.element_count()) {
    fail(ErrorCode::DimensionMismatch, "mask has " + std::to_string(mask_.size()) +
                                           " entries, grid has " +
                                           std::to_string(dims_.element_count()) + " elements");
  }
  slot_.assign(mask_.size(), -1);
  for (std::size_t e = 0; e < mask_.size(); ++e) {
    if (mask_[e]) {
      mask_[e] = 1;
      slot_[e] = static_cast<std::int64_t>(active_.size());
      active_.push_back(e);
    }
  }
  if (active_.empty()) fail(ErrorCode::EmptyDomain, "mask has no active element");
  if (!is_face_connected(dims_, mask_, active_.front(), active_.size())) {
    fail(ErrorCode::DisconnectedDomain, "active region is not face-connected");
  }
  node_active_.assign(dims_.node_count(), 0);
  for (std::size_t e : active_) {
    const auto nodes = element_nodes(e);
    for (int a = 0; a < dims_.nodes_per_element(); ++a) node_active_[nodes[a]] = 1;
  }
}

NodeCoord DesignDomain::node_coord(std::size_t node) const {
  const std::size_t px = static_cast<std::size_t>(dims_.nx + 1);
  const std::size_t py = static_cast<std::size_t>(dims_.ny + 1);
  return {static_cast<int>(node % px), static_cast<int>((node / px) % py),
          static_cast<int>(node / (px * py))};
}

NodeCoord DesignDomain::element_coord(std::size_t element) const {
  const std::size_t px = static_cast<std::size_t>(dims_.nx);
  const std::size_t py = static_cast<std::size_t>(dims_.ny);
  return {static_cast<int>(element % px), static_cast<int>((element / px) % py),
          static_cast<int>(element / (px * py))};
}

std::array<std::size_t, 8> DesignDomain::element_nodes(std::size_t element) const {
  const NodeCoord c = element_coord(element);
  return grid_element_nodes(dims_, c.i, c.j, c.k);
}

bool DesignDomain::node_on_boundary(std::size_t node) const {
  if (!node_active_[node]) return false;
  const NodeCoord c = node_coord(node);
  const int kspan = dims_.rank == 3 ? 1 : 0;
  for (int dk = -kspan; dk <= 0; ++dk) {
    for (int dj = -1; dj <= 0; ++dj) {
      for (int di = -1; di <= 0; ++di) {
        const int i = c.i + di;
        const int j = c.j + dj;
        const int k = c.k + dk;
        if (i < 0 || j < 0 || k < 0 || i >= dims_.nx || j >= dims_.ny || k >= dims_.nz) {
          return true;
        }
        if (!mask_[element_index(i, j, k)]) return true;
      }
    }
  }
  return false;
}

DesignDomain make_domain(GridDims dims, std::vector<std::uint8_t> mask) {
  return DesignDomain(dims, std::move(mask));
}

std::vector<std::uint8_t> full_mask(const GridDims& dims) {
  check_dims(dims);
  return std::vector<std::uint8_t>(dims.element_count(), 1);
}

void subtract_box(std::vector<std::uint8_t>& mask, const GridDims& dims,
                  std::array<int, 3> lo, std::array<int, 3> hi) {
  if (mask.size() != dims.element_count()) fail(ErrorCode::DimensionMismatch, "mask size");
  const std::array<int, 3> n{dims.nx, dims.ny, dims.nz};
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::clamp(lo[a], 0, n[a]);
    hi[a] = std::clamp(hi[a], 0, n[a]);
  }
  for (int k = lo[2]; k < hi[2]; ++k)
    for (int j = lo[1]; j < hi[1]; ++j)
      for (int i = lo[0]; i < hi[0]; ++i)
        mask[i + static_cast<std::size_t>(dims.nx) * (j + static_cast<std::size_t>(dims.ny) * k)] = 0;
}

void subtract_ball(std::vector<std::uint8_t>& mask, const GridDims& dims,
                   std::array<double, 3> centre, double radius) {
  if (mask.size() != dims.element_count()) fail(ErrorCode::DimensionMismatch, "mask size");
  const double r2 = radius * radius;
  for (int k = 0; k < dims.nz; ++k) {
    for (int j = 0; j < dims.ny; ++j) {
      for (int i = 0; i < dims.nx; ++i) {
        const double dx = i + 0.5 - centre[0];
        const double dy = j + 0.5 - centre[1];
        const double dz = dims.rank == 3 ? k + 0.5 - centre[2] : 0.0;
        if (dx * dx + dy * dy + dz * dz < r2) {
          mask[i + static_cast<std::size_t>(dims.nx) * (j + static_cast<std::size_t>(dims.ny) * k)] = 0;
        }
      }
    }
  }
}

std::vector<std::uint8_t> l_shape_mask(const GridDims& dims) {
  auto mask = full_mask(dims);
  subtract_box(mask, dims, {dims.nx / 2, dims.ny / 2, 0}, {dims.nx, dims.ny, dims.nz});
  return mask;
}

BoundaryConditions make_boundary_conditions(const DesignDomain& domain,
                                            std::vector<FixedDof> fixed,
                                            std::vector<PointLoad> loads) {
  for (const FixedDof& f : fixed) {
    if (f.node >= domain.node_count() || !domain.node_touches_active(f.node)) {
      fail(ErrorCode::LoadOutsideDomain,
           "support node " + std::to_string(f.node) + " is not part of the domain");
    }
    if (f.axis < 0 || f.axis >= domain.rank()) {
      fail(ErrorCode::DimensionMismatch, "support axis out of range");
    }
  }
  for (const PointLoad& l : loads) {
    if (l.node >= domain.node_count() || !domain.node_touches_active(l.node)) {
      fail(ErrorCode::LoadOutsideDomain,
           "load node " + std::to_string(l.node) + " is not part of the domain");
    }
    if (domain.rank() == 2 && l.force[2] != 0.0) {
      fail(ErrorCode::DimensionMismatch, "rank-2 load with a z component");
    }
  }
  std::sort(fixed.begin(), fixed.end());
  fixed.erase(std::unique(fixed.begin(), fixed.end()), fixed.end());
  return {std::move(fixed), std::move(loads)};
}

std::string_view to_string(BcCase c) {
  switch (c) {
    case BcCase::Cantilever: return "cantilever";
    case BcCase::SimplySupported: return "simply_supported";
    case BcCase::ConstrainedCantilever: return "constrained_cantilever";
    case BcCase::DomeSupport: return "dome_support";
  }
  return "unknown";
}

BcCase bc_case_from_string(std::string_view name) {
  for (BcCase c : {BcCase::Cantilever, BcCase::SimplySupported, BcCase::ConstrainedCantilever,
                   BcCase::DomeSupport}) {
    if (name == to_string(c)) return c;
  }
  fail(ErrorCode::UnknownCase, "unknown boundary-condition case '" + std::string(name) + "'");
}

std::vector<FixedDof> standard_supports(const DesignDomain& domain, BcCase c) {
  const GridDims& d = domain.dims();
  const int rank = d.rank;
  const int kmax = rank == 3 ? d.nz : 0;
  std::vector<FixedDof> fixed;
  const auto fix_all = [&](std::size_t node) {
    if (!domain.node_touches_active(node)) return;
    for (int a = 0; a < rank; ++a) fixed.push_back({node, a});
  };
  const auto fix_axis = [&](std::size_t node, int axis) {
    if (domain.node_touches_active(node)) fixed.push_back({node, axis});
  };
  switch (c) {
    case BcCase::Cantilever:
      for (int k = 0; k <= kmax; ++k)
        for (int j = 0; j <= d.ny; ++j) fix_all(domain.node_index(0, j, k));
      break;
    case BcCase::SimplySupported:
      // Pin along the bottom-left corner (line in 3D), roller in y along the
      // bottom-right one.
      for (int k = 0; k <= kmax; ++k) {
        fix_all(domain.node_index(0, 0, k));
        fix_axis(domain.node_index(d.nx, 0, k), 1);
      }
      break;
    case BcCase::ConstrainedCantilever:
      for (int k = 0; k <= kmax; ++k) {
        for (int j = 0; j <= d.ny; ++j) fix_all(domain.node_index(0, j, k));
        fix_axis(domain.node_index(d.nx, 0, k), 1);
      }
      break;
    case BcCase::DomeSupport:
      // Perimeter of the base face y = 0, all axes.
      for (int k = 0; k <= kmax; ++k) {
        for (int i = 0; i <= d.nx; ++i) {
          const bool perimeter = i == 0 || i == d.nx || k == 0 || k == kmax;
          if (perimeter) fix_all(domain.node_index(i, 0, k));
        }
      }
      break;
    default:
      fail(ErrorCode::UnknownCase, "unknown boundary-condition case");
  }
  std::sort(fixed.begin(), fixed.end());
  fixed.erase(std::unique(fixed.begin(), fixed.end()), fixed.end());
  return fixed;
}

BoundaryConditions standard_bc_case(const DesignDomain& domain, BcCase c, const PointLoad& load) {
  if (load.node >= domain.node_count() || !domain.node_touches_active(load.node)) {
    fail(ErrorCode::LoadOutsideDomain,
         "load node " + std::to_string(load.node) + " is not part of the domain");
  }
  return make_boundary_conditions(domain, standard_supports(domain, c), {load});
}

DofMap::DofMap(const DesignDomain& domain)
    : dims_(domain.dims()), node_count_(domain.node_count()), rank_(domain.rank()) {
  for (std::size_t n = 0; n < node_count_; ++n) {
    if (domain.node_touches_active(n)) active_nodes_.push_back(n);
  }
}

std::array<std::size_t, 24> DofMap::element_dofs(std::size_t element) const {
  const std::size_t px = static_cast<std::size_t>(dims_.nx);
  const std::size_t py = static_cast<std::size_t>(dims_.ny);
  const auto nodes = grid_element_nodes(dims_, static_cast<int>(element % px),
                                        static_cast<int>((element / px) % py),
                                        static_cast<int>(element / (px * py)));
  std::array<std::size_t, 24> dofs{};
  const int npe = rank_ == 3 ? 8 : 4;
  for (int a = 0; a < npe; ++a)
    for (int r = 0; r < rank_; ++r) dofs[static_cast<std::size_t>(a * rank_ + r)] = dof(nodes[a], r);
  return dofs;
}

}  // namespace topoforge
