#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace topoforge {

/// Element counts per axis. Rank-2 grids carry nz == 1.
struct GridDims {
  int nx = 1;
  int ny = 1;
  int nz = 1;
  int rank = 2;

  static GridDims plane(int nx, int ny) { return {nx, ny, 1, 2}; }
  static GridDims volume(int nx, int ny, int nz) { return {nx, ny, nz, 3}; }

  std::size_t element_count() const {
    return static_cast<std::size_t>(nx) * ny * nz;
  }
  std::size_t node_count() const {
    return static_cast<std::size_t>(nx + 1) * (ny + 1) * (rank == 3 ? nz + 1 : 1);
  }
  int nodes_per_element() const { return rank == 3 ? 8 : 4; }

  bool operator==(const GridDims&) const = default;
};

/// Corner nodes of element (i, j, k) on a structured grid: counter-clockwise
/// from the lower-left corner on the k face, then the same on the k+1 face.
std::array<std::size_t, 8> grid_element_nodes(const GridDims& dims, int i, int j, int k);

struct NodeCoord {
  int i = 0;
  int j = 0;
  int k = 0;
};

/// Voxel design domain. Elements and nodes are numbered row-major with x
/// fastest, then y, then z; y = 0 is the bottom of the domain.
class DesignDomain {
 public:
  DesignDomain(GridDims dims, std::vector<std::uint8_t> mask);

  const GridDims& dims() const { return dims_; }
  int rank() const { return dims_.rank; }
  double element_size() const { return 1.0; }
  double element_volume() const { return 1.0; }

  std::size_t element_count() const { return mask_.size(); }
  std::size_t node_count() const { return dims_.node_count(); }
  std::size_t active_count() const { return active_.size(); }

  bool is_active(std::size_t element) const { return mask_[element] != 0; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }
  /// Active element indices in increasing order.
  const std::vector<std::size_t>& active_elements() const { return active_; }
  /// Position of an element within active_elements(), or -1.
  std::int64_t active_slot(std::size_t element) const { return slot_[element]; }

  std::size_t element_index(int i, int j, int k = 0) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims_.nx) * (j + static_cast<std::size_t>(dims_.ny) * k);
  }
  std::size_t node_index(int i, int j, int k = 0) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims_.nx + 1) * (j + static_cast<std::size_t>(dims_.ny + 1) * k);
  }
  NodeCoord node_coord(std::size_t node) const;
  NodeCoord element_coord(std::size_t element) const;

  /// Corner nodes of an element: counter-clockwise from the lower-left corner
  /// on the k face, then the same on the k+1 face for hexahedra.
  std::array<std::size_t, 8> element_nodes(std::size_t element) const;

  /// True when the node is a corner of at least one active element.
  bool node_touches_active(std::size_t node) const { return node_active_[node] != 0; }

  /// True when the node lies on the boundary of the active region.
  bool node_on_boundary(std::size_t node) const;

 private:
  GridDims dims_;
  std::vector<std::uint8_t> mask_;
  std::vector<std::size_t> active_;
  std::vector<std::int64_t> slot_;
  std::vector<std::uint8_t> node_active_;
};

DesignDomain make_domain(GridDims dims, std::vector<std::uint8_t> mask);

// Shape primitives for building masks.
std::vector<std::uint8_t> full_mask(const GridDims& dims);
/// Clears every element whose index box [lo, hi) contains it.
void subtract_box(std::vector<std::uint8_t>& mask, const GridDims& dims,
                  std::array<int, 3> lo, std::array<int, 3> hi);
/// Clears every element whose centre lies strictly inside the disc/ball.
void subtract_ball(std::vector<std::uint8_t>& mask, const GridDims& dims,
                   std::array<double, 3> centre, double radius);
/// Rectangle with its upper-right quadrant removed.
std::vector<std::uint8_t> l_shape_mask(const GridDims& dims);

struct FixedDof {
  std::size_t node = 0;
  int axis = 0;
  auto operator<=>(const FixedDof&) const = default;
};

struct PointLoad {
  std::size_t node = 0;
  std::array<double, 3> force{0.0, 0.0, 0.0};  // Newtons, one entry per axis
  bool operator==(const PointLoad&) const = default;
};

struct BoundaryConditions {
  std::vector<FixedDof> fixed;  // sorted, unique
  std::vector<PointLoad> loads;

  bool operator==(const BoundaryConditions&) const = default;
};

/// Validates node references and normalises the fixed set (sort + unique).
BoundaryConditions make_boundary_conditions(const DesignDomain& domain,
                                            std::vector<FixedDof> fixed,
                                            std::vector<PointLoad> loads);

enum class BcCase { Cantilever, SimplySupported, ConstrainedCantilever, DomeSupport };

std::string_view to_string(BcCase c);
BcCase bc_case_from_string(std::string_view name);

/// Support layout for one of the canonical cases.
std::vector<FixedDof> standard_supports(const DesignDomain& domain, BcCase c);

/// Supports of the named case plus the given load.
BoundaryConditions standard_bc_case(const DesignDomain& domain, BcCase c, const PointLoad& load);

/// Global dof numbering: dof = rank * node + axis.
class DofMap {
 public:
  explicit DofMap(const DesignDomain& domain);

  std::size_t node_count() const { return node_count_; }
  std::size_t dof_count() const { return node_count_ * static_cast<std::size_t>(rank_); }
  int rank() const { return rank_; }
  int dofs_per_element() const { return rank_ * (rank_ == 3 ? 8 : 4); }

  /// Dofs of an element in element-matrix order (node-major, axis-minor).
  std::array<std::size_t, 24> element_dofs(std::size_t element) const;
  std::size_t dof(std::size_t node, int axis) const {
    return static_cast<std::size_t>(rank_) * node + static_cast<std::size_t>(axis);
  }
  /// Nodes referenced by at least one active element.
  const std::vector<std::size_t>& active_nodes() const { return active_nodes_; }

 private:
  GridDims dims_;
  std::size_t node_count_;
  int rank_;
  std::vector<std::size_t> active_nodes_;
};

}  // namespace topoforge
