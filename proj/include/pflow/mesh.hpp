#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace pflow {

/// Spatial point. One-dimensional problems leave the second coordinate at 0.
using Point = Eigen::Vector2d;

/// Axis-aligned domain: an interval (dimension 1) or a rectangle (dimension 2).
struct Box {
  Point lower{0.0, 0.0};
  Point upper{1.0, 1.0};
  int dimension = 2;

  static Box unit_square() { return Box{}; }
  static Box interval(double a, double b) { return Box{Point(a, 0.0), Point(b, 0.0), 1}; }
  static Box rectangle(double x0, double x1, double y0, double y1) {
    return Box{Point(x0, y0), Point(x1, y1), 2};
  }

  double measure() const;
};

struct Cell {
  Point center;
  double measure = 0.0;
};

/// Interior edge sigma = K|L, stored once with K < L.
struct InnerEdge {
  int k = -1;
  int l = -1;
  double measure = 0.0;
  double distance = 0.0;
  double transmissivity = 0.0;
  Point normal{0.0, 0.0};  // outward w.r.t. K
};

struct BoundaryEdge {
  int k = -1;
  Point face_point;
  double measure = 0.0;
  double distance = 0.0;
};

/// Admissible finite-volume mesh (two-point flux geometry).
struct FVMesh {
  int dimension = 2;
  std::vector<Cell> cells;
  std::vector<InnerEdge> inner_edges;
  std::vector<BoundaryEdge> boundary_edges;
  /// Measure of the meshed domain, or 0 when unknown (e.g. imported meshes).
  double domain_measure = 0.0;

  std::size_t num_cells() const { return cells.size(); }
  double total_measure() const;
  /// Indices of inner edges touching each cell.
  std::vector<std::vector<int>> cell_edges() const;
};

/// Uniform Cartesian mesh of `box`. For a one-dimensional box `ny` must be 1.
FVMesh build_cartesian_fv_mesh(int nx, int ny, const Box& box);

/// Human-readable list of violated admissibility invariants; empty when valid.
std::vector<std::string> validate_mesh(const FVMesh& mesh);

void write_fv_mesh(const FVMesh& mesh, std::ostream& out);
FVMesh read_fv_mesh(std::istream& in);

/// Structured vertex grid of a box, triangulated by splitting every square
/// along its lower-left/upper-right diagonal. In one dimension the simplices
/// are the grid intervals.
class StructuredGrid {
 public:
  StructuredGrid() = default;
  StructuredGrid(const Box& box, int nx, int ny);

  const Box& box() const { return box_; }
  int dimension() const { return box_.dimension; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int num_vertices() const;
  int vertex_index(int ix, int iy) const { return iy * (nx_ + 1) + ix; }
  Point vertex(int j) const;
  double hx() const { return (box_.upper.x() - box_.lower.x()) / nx_; }
  double hy() const { return dimension() == 2 ? (box_.upper.y() - box_.lower.y()) / ny_ : 1.0; }

  /// Spatial simplices as vertex lists (d+1 entries used).
  const std::vector<std::array<int, 3>>& simplices() const { return simplices_; }
  /// Cartesian cell containing each simplex (matches build_cartesian_fv_mesh numbering).
  const std::vector<int>& simplex_cell() const { return simplex_cell_; }
  double simplex_measure() const;

  /// Row sums of the P1 mass matrix, i.e. the integral of each hat function.
  std::vector<double> lumped_weights() const;
  /// Vertices viewed as quadrature cells (center = vertex, measure = lumped weight).
  std::vector<Cell> nodal_cells() const;
  /// Exact cell averages of a P1 field over the Cartesian cells.
  Eigen::VectorXd cell_averages(const Eigen::Ref<const Eigen::VectorXd>& nodal) const;

 private:
  Box box_;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<std::array<int, 3>> simplices_;
  std::vector<int> simplex_cell_;
};

/// Simplicial mesh of (0,1) x Omega. Node coordinates are (t, x, y).
struct SpaceTimeMesh {
  StructuredGrid spatial;
  int n_inner = 1;
  std::vector<Eigen::Vector3d> nodes;
  /// Simplices with d+2 vertices (unused slots are -1), positively oriented.
  std::vector<std::array<int, 4>> elements;
  std::vector<double> element_measure;
  /// Gradients of the barycentric functions: element e, local vertex a,
  /// component c (0 = time) stored at [(e * (d+2) + a) * (d+1) + c].
  std::vector<double> basis_gradients;
  std::vector<std::array<int, 3>> faces_t0;
  std::vector<std::array<int, 3>> faces_t1;
  /// Node index of spatial vertex j at t=0 and t=1.
  std::vector<int> bottom_nodes;
  std::vector<int> top_nodes;
  /// Spatial vertex of each t=1 node, indexed like top_nodes' position.
  std::vector<int> spatial_trace;

  int spatial_dimension() const { return spatial.dimension(); }
  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_elements() const { return static_cast<int>(elements.size()); }
  int vertices_per_element() const { return spatial_dimension() + 2; }
  int gradient_components() const { return spatial_dimension() + 1; }
  const double* gradient(int e, int a) const {
    return basis_gradients.data() +
           (static_cast<std::size_t>(e) * vertices_per_element() + a) * gradient_components();
  }
};

/// Tensor-product nodes (n_inner+1 uniform time levels) split into simplices by
/// the Kuhn construction (one simplex per ordering of the axes, time first).
SpaceTimeMesh build_space_time_mesh(const StructuredGrid& spatial_grid, int n_inner);

}  // namespace pflow
