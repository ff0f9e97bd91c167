#include "pflow/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace pflow {

double Box::measure() const {
  const double lx = upper.x() - lower.x();
  if (dimension == 1) return lx;
  return lx * (upper.y() - lower.y());
}

double FVMesh::total_measure() const {
  double sum = 0.0;
  for (const auto& c : cells) sum += c.measure;
  return sum;
}

std::vector<std::vector<int>> FVMesh::cell_edges() const {
  std::vector<std::vector<int>> out(cells.size());
  for (std::size_t e = 0; e < inner_edges.size(); ++e) {
    out[inner_edges[e].k].push_back(static_cast<int>(e));
    out[inner_edges[e].l].push_back(static_cast<int>(e));
  }
  return out;
}

namespace {

void check_box(const Box& box) {
  if (box.dimension != 1 && box.dimension != 2)
    throw std::invalid_argument("box dimension must be 1 or 2");
  if (!(box.upper.x() > box.lower.x()))
    throw std::invalid_argument("box has non-positive x extent");
  if (box.dimension == 2 && !(box.upper.y() > box.lower.y()))
    throw std::invalid_argument("box has non-positive y extent");
}

}  // namespace

FVMesh build_cartesian_fv_mesh(int nx, int ny, const Box& box) {
  check_box(box);
  if (nx < 1 || ny < 1) throw std::invalid_argument("cell counts must be >= 1");
  if (box.dimension == 1 && ny != 1)
    throw std::invalid_argument("one-dimensional mesh requires ny == 1");

  FVMesh mesh;
  mesh.dimension = box.dimension;
  mesh.domain_measure = box.measure();
  const double hx = (box.upper.x() - box.lower.x()) / nx;
  const double hy = box.dimension == 2 ? (box.upper.y() - box.lower.y()) / ny : 1.0;
  // Face measure of a (d-1)-dimensional face; a point has measure 1.
  const double mx = box.dimension == 2 ? hy : 1.0;
  const double my = hx;

  auto id = [nx](int ix, int iy) { return iy * nx + ix; };
  mesh.cells.resize(static_cast<std::size_t>(nx) * ny);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      Cell& c = mesh.cells[id(ix, iy)];
      c.center = Point(box.lower.x() + (ix + 0.5) * hx,
                       box.dimension == 2 ? box.lower.y() + (iy + 0.5) * hy : 0.0);
      c.measure = box.dimension == 2 ? hx * hy : hx;
    }
  }

  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      if (ix + 1 < nx) {
        mesh.inner_edges.push_back(
            InnerEdge{id(ix, iy), id(ix + 1, iy), mx, hx, mx / hx, Point(1.0, 0.0)});
      }
      if (box.dimension == 2 && iy + 1 < ny) {
        mesh.inner_edges.push_back(
            InnerEdge{id(ix, iy), id(ix, iy + 1), my, hy, my / hy, Point(0.0, 1.0)});
      }
    }
  }

  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const int k = id(ix, iy);
      const Point& xk = mesh.cells[k].center;
      if (ix == 0) mesh.boundary_edges.push_back({k, Point(box.lower.x(), xk.y()), mx, 0.5 * hx});
      if (ix == nx - 1) mesh.boundary_edges.push_back({k, Point(box.upper.x(), xk.y()), mx, 0.5 * hx});
      if (box.dimension == 2) {
        if (iy == 0) mesh.boundary_edges.push_back({k, Point(xk.x(), box.lower.y()), my, 0.5 * hy});
        if (iy == ny - 1) mesh.boundary_edges.push_back({k, Point(xk.x(), box.upper.y()), my, 0.5 * hy});
      }
    }
  }
  return mesh;
}

std::vector<std::string> validate_mesh(const FVMesh& mesh) {
  std::vector<std::string> report;
  auto add = [&report](const std::string& s) { report.push_back(s); };
  const int n = static_cast<int>(mesh.cells.size());

  if (mesh.dimension != 1 && mesh.dimension != 2) add("dimension must be 1 or 2");
  for (int k = 0; k < n; ++k) {
    if (!(mesh.cells[k].measure > 0.0)) {
      std::ostringstream os;
      os << "cell " << k << ": non-positive measure";
      add(os.str());
    }
  }

  std::set<std::pair<int, int>> seen;
  for (std::size_t e = 0; e < mesh.inner_edges.size(); ++e) {
    const InnerEdge& ed = mesh.inner_edges[e];
    std::ostringstream pre;
    pre << "inner edge " << e << " (" << ed.k << "," << ed.l << "): ";
    if (ed.k < 0 || ed.k >= n || ed.l < 0 || ed.l >= n || ed.k == ed.l) {
      add(pre.str() + "invalid cell pair");
      continue;
    }
    const auto key = std::minmax(ed.k, ed.l);
    if (!seen.insert({key.first, key.second}).second) add(pre.str() + "duplicate edge");
    if (!(ed.measure > 0.0)) add(pre.str() + "non-positive measure");
    if (!(ed.distance > 0.0)) {
      add(pre.str() + "non-positive distance");
      continue;
    }
    if (std::abs(ed.transmissivity - ed.measure / ed.distance) >
        1e-14 * std::abs(ed.measure / ed.distance)) {
      add(pre.str() + "transmissivity differs from measure/distance");
    }
    const Point diff = mesh.cells[ed.l].center - mesh.cells[ed.k].center;
    if (std::abs(diff.norm() - ed.distance) > 1e-12 * std::max(1.0, ed.distance))
      add(pre.str() + "distance differs from |x_L - x_K|");
    if ((diff / ed.distance - ed.normal).norm() > 1e-12)
      add(pre.str() + "orthogonality violated: (x_L - x_K)/d differs from the normal");
  }

  for (std::size_t e = 0; e < mesh.boundary_edges.size(); ++e) {
    const BoundaryEdge& b = mesh.boundary_edges[e];
    std::ostringstream pre;
    pre << "boundary edge " << e << ": ";
    if (b.k < 0 || b.k >= n) {
      add(pre.str() + "invalid cell");
      continue;
    }
    if (!(b.measure > 0.0)) add(pre.str() + "non-positive measure");
    if (std::abs((mesh.cells[b.k].center - b.face_point).norm() - b.distance) >
        1e-12 * std::max(1.0, b.distance))
      add(pre.str() + "distance differs from |x_K - x_sigma|");
  }

  if (mesh.domain_measure > 0.0) {
    const double total = mesh.total_measure();
    if (std::abs(total - mesh.domain_measure) > 1e-12 * mesh.domain_measure)
      add("cell measures do not sum to the domain measure");
  }
  return report;
}

// --- StructuredGrid -------------------------------------------------------

StructuredGrid::StructuredGrid(const Box& box, int nx, int ny) : box_(box), nx_(nx), ny_(ny) {
  check_box(box);
  if (nx < 1) throw std::invalid_argument("nx must be >= 1");
  if (box.dimension == 1) {
    ny_ = 0;
    for (int ix = 0; ix < nx; ++ix) {
      simplices_.push_back({ix, ix + 1, -1});
      simplex_cell_.push_back(ix);
    }
    return;
  }
  if (ny < 1) throw std::invalid_argument("ny must be >= 1");
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const int v00 = vertex_index(ix, iy);
      const int v10 = vertex_index(ix + 1, iy);
      const int v11 = vertex_index(ix + 1, iy + 1);
      const int v01 = vertex_index(ix, iy + 1);
      const int cell = iy * nx + ix;
      simplices_.push_back({v00, v10, v11});
      simplex_cell_.push_back(cell);
      simplices_.push_back({v00, v11, v01});
      simplex_cell_.push_back(cell);
    }
  }
}

int StructuredGrid::num_vertices() const {
  return dimension() == 1 ? nx_ + 1 : (nx_ + 1) * (ny_ + 1);
}

Point StructuredGrid::vertex(int j) const {
  const int ix = j % (nx_ + 1);
  const int iy = j / (nx_ + 1);
  return Point(box_.lower.x() + ix * hx(), dimension() == 2 ? box_.lower.y() + iy * hy() : 0.0);
}

double StructuredGrid::simplex_measure() const {
  return dimension() == 1 ? hx() : 0.5 * hx() * hy();
}

std::vector<double> StructuredGrid::lumped_weights() const {
  std::vector<double> w(num_vertices(), 0.0);
  const int nv = dimension() + 1;
  const double share = simplex_measure() / nv;
  for (const auto& s : simplices_)
    for (int a = 0; a < nv; ++a) w[s[a]] += share;
  return w;
}

std::vector<Cell> StructuredGrid::nodal_cells() const {
  const auto w = lumped_weights();
  std::vector<Cell> out(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) out[j] = Cell{vertex(static_cast<int>(j)), w[j]};
  return out;
}

Eigen::VectorXd StructuredGrid::cell_averages(const Eigen::Ref<const Eigen::VectorXd>& nodal) const {
  if (nodal.size() != num_vertices()) throw std::invalid_argument("nodal field size mismatch");
  const int ncells = dimension() == 1 ? nx_ : nx_ * ny_;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(ncells);
  Eigen::VectorXd vol = Eigen::VectorXd::Zero(ncells);
  const int nv = dimension() + 1;
  const double m = simplex_measure();
  for (std::size_t s = 0; s < simplices_.size(); ++s) {
    double mean = 0.0;
    for (int a = 0; a < nv; ++a) mean += nodal[simplices_[s][a]];
    mean /= nv;
    sum[simplex_cell_[s]] += mean * m;
    vol[simplex_cell_[s]] += m;
  }
  return sum.cwiseQuotient(vol);
}

// --- SpaceTimeMesh --------------------------------------------------------

SpaceTimeMesh build_space_time_mesh(const StructuredGrid& grid, int n_inner) {
  if (n_inner < 1) throw std::invalid_argument("n_inner must be >= 1");
  if (grid.num_vertices() == 0) throw std::invalid_argument("empty spatial grid");

  SpaceTimeMesh mesh;
  mesh.spatial = grid;
  mesh.n_inner = n_inner;
  const int d = grid.dimension();
  const int nv = grid.num_vertices();
  const double dt = 1.0 / n_inner;

  mesh.nodes.reserve(static_cast<std::size_t>(nv) * (n_inner + 1));
  for (int l = 0; l <= n_inner; ++l) {
    for (int j = 0; j < nv; ++j) {
      const Point x = grid.vertex(j);
      mesh.nodes.emplace_back(l == n_inner ? 1.0 : l * dt, x.x(), x.y());
    }
  }
  for (int j = 0; j < nv; ++j) {
    mesh.bottom_nodes.push_back(j);
    mesh.top_nodes.push_back(n_inner * nv + j);
    mesh.spatial_trace.push_back(j);
  }
  for (const auto& s : grid.simplices()) {
    std::array<int, 3> f0{-1, -1, -1}, f1{-1, -1, -1};
    for (int a = 0; a <= d; ++a) {
      f0[a] = mesh.bottom_nodes[s[a]];
      f1[a] = mesh.top_nodes[s[a]];
    }
    mesh.faces_t0.push_back(f0);
    mesh.faces_t1.push_back(f1);
  }

  // Axis orderings; axis 0 is time. Lexicographic order fixes the element numbering.
  std::vector<int> axes(d + 1);
  std::iota(axes.begin(), axes.end(), 0);
  std::vector<std::vector<int>> orderings;
  do {
    orderings.push_back(axes);
  } while (std::next_permutation(axes.begin(), axes.end()));

  const int ny_cells = d == 2 ? grid.ny() : 1;
  auto node_of = [&](int l, int ix, int iy) { return l * nv + grid.vertex_index(ix, iy); };
  const int nvert = d + 2;
  double factorial = 1.0;
  for (int k = 2; k <= d + 1; ++k) factorial *= k;

  for (int l = 0; l < n_inner; ++l) {
    for (int iy = 0; iy < ny_cells; ++iy) {
      for (int ix = 0; ix < grid.nx(); ++ix) {
        for (const auto& ord : orderings) {
          std::array<int, 4> el{-1, -1, -1, -1};
          int pos[3] = {l, ix, iy};
          el[0] = node_of(pos[0], pos[1], pos[2]);
          for (int k = 0; k <= d; ++k) {
            ++pos[ord[k]];
            el[k + 1] = node_of(pos[0], pos[1], pos[2]);
          }
          // Edge matrix in (t, x[, y]) coordinates.
          Eigen::MatrixXd edges(d + 1, d + 1);
          for (int k = 1; k < nvert; ++k)
            for (int c = 0; c <= d; ++c) edges(c, k - 1) = mesh.nodes[el[k]][c] - mesh.nodes[el[0]][c];
          double det = edges.determinant();
          if (det < 0.0) {
            std::swap(el[1], el[2]);
            edges.col(0).swap(edges.col(1));
            det = -det;
          }
          const Eigen::MatrixXd inv = edges.inverse();
          mesh.elements.push_back(el);
          mesh.element_measure.push_back(det / factorial);
          std::vector<double> grads(static_cast<std::size_t>(nvert) * (d + 1), 0.0);
          for (int k = 1; k < nvert; ++k) {
            for (int c = 0; c <= d; ++c) {
              grads[k * (d + 1) + c] = inv(k - 1, c);
              grads[c] -= inv(k - 1, c);
            }
          }
          mesh.basis_gradients.insert(mesh.basis_gradients.end(), grads.begin(), grads.end());
        }
      }
    }
  }
  return mesh;
}

}  // namespace pflow
