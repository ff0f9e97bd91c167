// Plain-text mesh exchange format:
//
//   DIMENSION d
//   CELLS n
//   id x [y] measure
//   INNER_EDGES n
//   K L m_sigma d_sigma
//   BOUNDARY_EDGES n
//   K x_sigma [y_sigma] m_sigma d_sigma
//
// Lines starting with '#' are comments. Normals and transmissivities are
// derived on import from the cell centers.

#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "pflow/mesh.hpp"

namespace pflow {

void write_fv_mesh(const FVMesh& mesh, std::ostream& out) {
  const int d = mesh.dimension;
  out << std::setprecision(17);
  out << "DIMENSION " << d << "\n";
  out << "CELLS " << mesh.cells.size() << "\n";
  for (std::size_t k = 0; k < mesh.cells.size(); ++k) {
    const Cell& c = mesh.cells[k];
    out << k << ' ' << c.center.x();
    if (d == 2) out << ' ' << c.center.y();
    out << ' ' << c.measure << "\n";
  }
  out << "INNER_EDGES " << mesh.inner_edges.size() << "\n";
  for (const auto& e : mesh.inner_edges)
    out << e.k << ' ' << e.l << ' ' << e.measure << ' ' << e.distance << "\n";
  out << "BOUNDARY_EDGES " << mesh.boundary_edges.size() << "\n";
  for (const auto& b : mesh.boundary_edges) {
    out << b.k << ' ' << b.face_point.x();
    if (d == 2) out << ' ' << b.face_point.y();
    out << ' ' << b.measure << ' ' << b.distance << "\n";
  }
}

namespace {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::istringstream next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++lineno_;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      return std::istringstream(line);
    }
    fail("unexpected end of file");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    std::ostringstream os;
    os << "mesh file line " << lineno_ << ": " << msg;
    throw std::runtime_error(os.str());
  }

  std::size_t header(const std::string& keyword) {
    auto ls = next();
    std::string kw;
    long long n = -1;
    if (!(ls >> kw >> n) || kw != keyword || n < 0) fail("expected '" + keyword + " <count>'");
    return static_cast<std::size_t>(n);
  }

 private:
  std::istream& in_;
  int lineno_ = 0;
};

}  // namespace

FVMesh read_fv_mesh(std::istream& in) {
  LineReader reader(in);
  FVMesh mesh;
  {
    auto ls = reader.next();
    std::string kw;
    if (!(ls >> kw >> mesh.dimension) || kw != "DIMENSION") reader.fail("expected 'DIMENSION <d>'");
    if (mesh.dimension != 1 && mesh.dimension != 2) reader.fail("dimension must be 1 or 2");
  }
  const int d = mesh.dimension;

  mesh.cells.resize(reader.header("CELLS"));
  for (std::size_t i = 0; i < mesh.cells.size(); ++i) {
    auto ls = reader.next();
    long long id = -1;
    Cell c;
    c.center.setZero();
    ls >> id >> c.center.x();
    if (d == 2) ls >> c.center.y();
    ls >> c.measure;
    if (!ls || id < 0 || static_cast<std::size_t>(id) >= mesh.cells.size()) reader.fail("malformed cell row");
    mesh.cells[id] = c;
  }

  mesh.inner_edges.resize(reader.header("INNER_EDGES"));
  for (auto& e : mesh.inner_edges) {
    auto ls = reader.next();
    if (!(ls >> e.k >> e.l >> e.measure >> e.distance)) reader.fail("malformed inner edge row");
    if (e.k < 0 || e.l < 0 || static_cast<std::size_t>(e.k) >= mesh.cells.size() ||
        static_cast<std::size_t>(e.l) >= mesh.cells.size())
      reader.fail("inner edge references unknown cell");
    e.transmissivity = e.measure / e.distance;
    const Point diff = mesh.cells[e.l].center - mesh.cells[e.k].center;
    const double len = diff.norm();
    e.normal = len > 0.0 ? Point(diff / len) : Point(0.0, 0.0);
  }

  mesh.boundary_edges.resize(reader.header("BOUNDARY_EDGES"));
  for (auto& b : mesh.boundary_edges) {
    auto ls = reader.next();
    b.face_point.setZero();
    ls >> b.k >> b.face_point.x();
    if (d == 2) ls >> b.face_point.y();
    ls >> b.measure >> b.distance;
    if (!ls) reader.fail("malformed boundary edge row");
  }
  return mesh;
}

}  // namespace pflow
