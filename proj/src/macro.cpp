#include "sgtopo/macro.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace sgtopo {

namespace {

constexpr std::array<double, 4> kXi{-1.0, 1.0, 1.0, -1.0};
constexpr std::array<double, 4> kEta{-1.0, -1.0, 1.0, 1.0};

struct GaussPoint {
  Eigen::Vector4d n;                 // shape functions
  Eigen::Matrix<double, 2, 4> grad;  // d/dx, d/dy in units of 1/h
};

// 2x2 Gauss points of the unit (h = 1) square; weight 1/4 each.
const std::array<GaussPoint, 4>& gauss_points() {
  static const std::array<GaussPoint, 4> pts = [] {
    std::array<GaussPoint, 4> out;
    const double g = 1.0 / std::sqrt(3.0);
    const double xs[4] = {-g, g, g, -g};
    const double ys[4] = {-g, -g, g, g};
    for (int q = 0; q < 4; ++q) {
      for (int a = 0; a < 4; ++a) {
        out[q].n(a) = 0.25 * (1.0 + kXi[a] * xs[q]) * (1.0 + kEta[a] * ys[q]);
        out[q].grad(0, a) = 0.5 * kXi[a] * (1.0 + kEta[a] * ys[q]);
        out[q].grad(1, a) = 0.5 * kEta[a] * (1.0 + kXi[a] * xs[q]);
      }
    }
    return out;
  }();
  return pts;
}

struct Segment {
  Eigen::Vector2d a;
  Eigen::Vector2d b;
};

double point_segment_distance(const Eigen::Vector2d& p, const Segment& s) {
  const Eigen::Vector2d d = s.b - s.a;
  const double len2 = d.squaredNorm();
  double t = len2 > 0.0 ? (p - s.a).dot(d) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (s.a + t * d)).norm();
}

double clamp_range(double v, const Range& r) { return std::clamp(v, r.lower, r.upper); }

// u_e^T k u_e with the element's mean translation removed first; k
// annihilates translations, and removing them avoids cancellation in k u_e
double element_energy(const QuadK& k, const Eigen::VectorXd& u, const std::array<int, 4>& nodes) {
  Eigen::Matrix<double, 8, 1> ue;
  for (int a = 0; a < 4; ++a) {
    ue(2 * a) = u(2 * nodes[a]);
    ue(2 * a + 1) = u(2 * nodes[a] + 1);
  }
  const double tx = 0.25 * (ue(0) + ue(2) + ue(4) + ue(6));
  const double ty = 0.25 * (ue(1) + ue(3) + ue(5) + ue(7));
  for (int a = 0; a < 4; ++a) {
    ue(2 * a) -= tx;
    ue(2 * a + 1) -= ty;
  }
  return ue.dot(k * ue);
}

}  // namespace

std::array<int, 4> MacroMesh::element_nodes(int e) const {
  const int i = e % nx;
  const int j = e / nx;
  return {node_id(i, j), node_id(i + 1, j), node_id(i + 1, j + 1), node_id(i, j + 1)};
}

void MacroMesh::validate() const {
  if (nx < 1 || ny < 1) throw ParameterError("mesh: nx and ny must be >= 1");
  if (!(h > 0.0)) throw ParameterError("mesh: element size must be positive");
  for (const auto& s : supports) {
    if (s.node < 0 || s.node >= node_count() || s.component < 0 || s.component > 1)
      throw BoundsError("mesh: support outside the mesh");
    if (s.value != 0.0) throw ParameterError("mesh: only homogeneous supports are supported");
  }
  for (const auto& l : loads)
    if (l.node < 0 || l.node >= node_count() || l.component < 0 || l.component > 1)
      throw BoundsError("mesh: load outside the mesh");
  if (supports.size() < 3) throw ParameterError("mesh: supports cannot remove all rigid modes");
}

MacroMesh MacroMesh::half_beam(int nx, int ny, double load) {
  if (nx < 1 || ny < 1 || nx != 3 * ny) throw ParameterError("half_beam: requires nx = 3 ny");
  MacroMesh m;
  m.nx = nx;
  m.ny = ny;
  m.h = 1.0 / ny;
  m.supports.push_back({m.node_id(0, 0), 1, 0.0});
  for (int j = 0; j <= ny; ++j) m.supports.push_back({m.node_id(nx, j), 0, 0.0});
  m.loads.push_back({m.node_id(nx, ny), 1, -load});
  return m;
}

SparseMatrix filter_matrix(const MacroMesh& mesh, double radius) {
  if (radius < 0.0) throw ParameterError("filter: radius must be >= 0");
  const int n = mesh.node_count();
  SparseMatrix w(n, n);
  if (radius <= 1.0) {
    w.setIdentity();
    return w;
  }
  const int reach = static_cast<int>(std::ceil(radius));
  std::vector<Eigen::Triplet<double>> trips;
  for (int j = 0; j <= mesh.ny; ++j)
    for (int i = 0; i <= mesh.nx; ++i) {
      const int row = mesh.node_id(i, j);
      std::vector<Eigen::Triplet<double>> local;
      double total = 0.0;
      for (int dj = -reach; dj <= reach; ++dj)
        for (int di = -reach; di <= reach; ++di) {
          const int ii = i + di;
          const int jj = j + dj;
          if (ii < 0 || jj < 0 || ii > mesh.nx || jj > mesh.ny) continue;
          const double wt = radius - std::sqrt(static_cast<double>(di * di + dj * dj));
          if (wt <= 0.0) continue;
          local.emplace_back(row, mesh.node_id(ii, jj), wt);
          total += wt;
        }
      for (const auto& t : local) trips.emplace_back(t.row(), t.col(), t.value() / total);
    }
  w.setFromTriplets(trips.begin(), trips.end());
  return w;
}

Eigen::VectorXd seed_holes(const MacroMesh& mesh, int holes_x, int holes_y, double r_hole) {
  if (holes_x < 1 || holes_y < 1) throw ParameterError("seed_holes: hole counts must be >= 1");
  if (!(r_hole > 0.0)) throw ParameterError("seed_holes: hole radius must be positive");
  Eigen::VectorXd theta(mesh.node_count());
  const double dx = mesh.width() / holes_x;
  const double dy = mesh.height() / holes_y;
  for (int j = 0; j <= mesh.ny; ++j)
    for (int i = 0; i <= mesh.nx; ++i) {
      const double x = i * mesh.h;
      const double y = j * mesh.h;
      double best = -std::numeric_limits<double>::infinity();
      for (int hy = 0; hy < holes_y; ++hy)
        for (int hx = 0; hx < holes_x; ++hx) {
          const double xl = (x - (hx + 0.5) * dx) / r_hole;
          const double yl = (y - (hy + 0.5) * dy) / r_hole;
          best = std::max(best, 1.0 - std::pow(xl, 10) - std::pow(yl, 10));
        }
      theta(mesh.node_id(i, j)) = best;
    }
  return theta;
}

double smoothed_heaviside(double s, double width) {
  if (s <= -width) return 0.0;
  if (s >= width) return 1.0;
  const double r = s / width;
  return 0.5 + 0.75 * r - 0.25 * r * r * r;
}

double smoothed_delta(double s, double width) {
  if (s <= -width || s >= width) return 0.0;
  const double r = s / width;
  return 0.75 * (1.0 - r * r) / width;
}

namespace {

// d delta / ds
double smoothed_delta_prime(double s, double width) {
  if (s <= -width || s >= width) return 0.0;
  return -1.5 * s / (width * width * width);
}

}  // namespace

std::vector<QuadK> element_library(const MacroMesh& mesh, const MicrostructureCatalog& catalog) {
  if (catalog.dim != 2) throw ParameterError("element_library: the macroscale model needs a 2D catalog");
  std::vector<QuadK> lib;
  lib.reserve(catalog.size());
  for (const auto& c : catalog.entries) lib.push_back(quad_stiffness(c.voigt(), mesh.h, mesh.h));
  return lib;
}

MacroModel::MacroModel(MacroMesh mesh, ModelOptions options)
    : mesh_(std::move(mesh)), options_(options) {
  mesh_.validate();
  if (!(options_.ersatz.smoothing_width > 0.0)) throw ParameterError("ersatz: smoothing width must be positive");
  if (!(options_.ersatz.void_factor > 0.0 && options_.ersatz.void_factor < 1.0))
    throw ParameterError("ersatz: void factor must lie in (0, 1)");
  if (!(options_.bounds.lower < options_.bounds.upper)) throw ParameterError("design bounds must satisfy lower < upper");
  if (!(options_.truncation.lower < options_.truncation.upper))
    throw ParameterError("truncation bounds must satisfy lower < upper");

  filter_ = filter_matrix(mesh_, options_.filter_radius);
  filter_t_ = filter_.transpose();

  const int nn = mesh_.node_count();
  const int ne = mesh_.element_count();
  const double h2 = mesh_.h * mesh_.h;
  Eigen::Matrix4d me = Eigen::Matrix4d::Zero();
  Eigen::Matrix4d le = Eigen::Matrix4d::Zero();
  for (const auto& gp : gauss_points()) {
    me += 0.25 * gp.n * gp.n.transpose();
    le += 0.25 * gp.grad.transpose() * gp.grad;
  }
  me *= h2;
  le *= h2;  // gradients in units of h: (h grad)^2 * h^2 / h^2
  std::vector<Eigen::Triplet<double>> mt;
  std::vector<Eigen::Triplet<double>> lt;
  for (int e = 0; e < ne; ++e) {
    const auto nodes = mesh_.element_nodes(e);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        mt.emplace_back(nodes[a], nodes[b], me(a, b));
        lt.emplace_back(nodes[a], nodes[b], le(a, b));
      }
  }
  mass_.resize(nn, nn);
  mass_.setFromTriplets(mt.begin(), mt.end());
  laplacian_.resize(nn, nn);
  laplacian_.setFromTriplets(lt.begin(), lt.end());

  dof_map_.assign(static_cast<std::size_t>(mesh_.dof_count()), 0);
  for (const auto& s : mesh_.supports) dof_map_[static_cast<std::size_t>(2 * s.node + s.component)] = -1;
  reduced_dofs_ = 0;
  for (auto& d : dof_map_)
    if (d == 0) d = reduced_dofs_++;

  std::vector<Eigen::Triplet<double>> pt;
  for (int e = 0; e < ne; ++e) {
    const auto nodes = mesh_.element_nodes(e);
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) {
        const int r = dof_map_[static_cast<std::size_t>(2 * nodes[a / 2] + a % 2)];
        const int c = dof_map_[static_cast<std::size_t>(2 * nodes[b / 2] + b % 2)];
        if (r >= 0 && c >= 0) pt.emplace_back(r, c, 0.0);
      }
  }
  pattern_.resize(reduced_dofs_, reduced_dofs_);
  pattern_.setFromTriplets(pt.begin(), pt.end());
  pattern_.makeCompressed();

  slots_.resize(static_cast<std::size_t>(ne));
  for (int e = 0; e < ne; ++e) {
    const auto nodes = mesh_.element_nodes(e);
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) {
        const int r = dof_map_[static_cast<std::size_t>(2 * nodes[a / 2] + a % 2)];
        const int c = dof_map_[static_cast<std::size_t>(2 * nodes[b / 2] + b % 2)];
        int slot = -1;
        if (r >= 0 && c >= 0) {
          const int* begin = pattern_.innerIndexPtr() + pattern_.outerIndexPtr()[c];
          const int* end = pattern_.innerIndexPtr() + pattern_.outerIndexPtr()[c + 1];
          const int* it = std::lower_bound(begin, end, r);
          slot = static_cast<int>(it - pattern_.innerIndexPtr());
        }
        slots_[static_cast<std::size_t>(e)][static_cast<std::size_t>(a * 8 + b)] = slot;
      }
  }

  load_ = Eigen::VectorXd::Zero(mesh_.dof_count());
  for (const auto& l : mesh_.loads) load_(2 * l.node + l.component) += l.magnitude;
}

Eigen::VectorXd MacroModel::clamp(const Eigen::VectorXd& theta) const {
  return theta.cwiseMax(options_.bounds.lower).cwiseMin(options_.bounds.upper);
}

Eigen::VectorXd MacroModel::density(const Eigen::VectorXd& phi) const {
  const int ne = mesh_.element_count();
  const double rmin = options_.ersatz.void_factor;
  Eigen::VectorXd rho(ne);
  for (int e = 0; e < ne; ++e) {
    const auto nodes = mesh_.element_nodes(e);
    const double avg = 0.25 * (phi(nodes[0]) + phi(nodes[1]) + phi(nodes[2]) + phi(nodes[3]));
    rho(e) = rmin + (1.0 - rmin) * smoothed_heaviside(-avg, options_.ersatz.smoothing_width);
  }
  return rho;
}

DesignFields MacroModel::fields(const Eigen::VectorXd& theta, const Eigen::VectorXd* frozen_phi_tilde) const {
  if (theta.size() != mesh_.node_count()) throw ParameterError("design: theta has the wrong length");
  DesignFields f;
  f.theta = theta;
  f.phi = filter_ * theta;
  const int ne = mesh_.element_count();
  const double rmin = options_.ersatz.void_factor;
  f.phi_element.resize(ne);
  f.indicator.resize(ne);
  f.density.resize(ne);
  for (int e = 0; e < ne; ++e) {
    const auto nodes = mesh_.element_nodes(e);
    const double avg = 0.25 * (f.phi(nodes[0]) + f.phi(nodes[1]) + f.phi(nodes[2]) + f.phi(nodes[3]));
    f.phi_element(e) = avg;
    f.indicator(e) = smoothed_heaviside(-avg, options_.ersatz.smoothing_width);
    f.density(e) = rmin + (1.0 - rmin) * f.indicator(e);
  }
  if (frozen_phi_tilde) {
    if (frozen_phi_tilde->size() != f.phi.size()) throw ParameterError("design: frozen distance field has the wrong length");
    f.phi_tilde = *frozen_phi_tilde;
  } else {
    f.phi_tilde = redistance(f.phi, mesh_, options_.truncation);
  }
  return f;
}

double MacroModel::mass_ratio(const DesignFields& f) const { return f.indicator.mean(); }

double MacroModel::perimeter_penalty(const DesignFields& f) const {
  const double eps = options_.ersatz.smoothing_width;
  const double weight = 0.25 * mesh_.h * mesh_.h;
  double total = 0.0;
  for (int e = 0; e < mesh_.element_count(); ++e) {
    const auto nodes = mesh_.element_nodes(e);
    const Eigen::Vector4d pe(f.phi(nodes[0]), f.phi(nodes[1]), f.phi(nodes[2]), f.phi(nodes[3]));
    if (pe.minCoeff() >= eps || pe.maxCoeff() <= -eps) continue;
    for (const auto& gp : gauss_points()) {
      const double d = smoothed_delta(gp.n.dot(pe), eps);
      if (d == 0.0) continue;
      const Eigen::Vector2d g = gp.grad * pe / mesh_.h;
      total += weight * d * g.norm();
    }
  }
  return total / mesh_.boundary_length();
}

double MacroModel::regularization_penalty(const DesignFields& f) const {
  const Eigen::VectorXd d = f.phi - f.phi_tilde;
  const double span = options_.truncation.upper - options_.truncation.lower;
  const double w = 1.0 / mesh_.boundary_length();
  const double a = mesh_.area();
  return w * d.dot(mass_ * d) / (a * span * span) + w * d.dot(laplacian_ * d) / a;
}

SolveResult MacroModel::solve(const Eigen::VectorXd& density, const Layout& layout,
                              const std::vector<QuadK>& library) const {
  const int ne = mesh_.element_count();
  if (density.size() != ne) throw ParameterError("solve: density has the wrong length");
  if (static_cast<int>(layout.size()) != ne) throw ParameterError("solve: layout has the wrong length");
  SparseMatrix k = pattern_;
  double* values = k.valuePtr();
  for (int e = 0; e < ne; ++e) {
    const std::uint32_t id = layout[static_cast<std::size_t>(e)];
    if (id >= library.size()) throw BoundsError("solve: layout index outside the catalog");
    const QuadK& ke = library[id];
    const double rho = density(e);
    const auto& slots = slots_[static_cast<std::size_t>(e)];
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) {
        const int s = slots[static_cast<std::size_t>(a * 8 + b)];
        if (s >= 0) values[s] += rho * ke(a, b);
      }
  }
  Eigen::VectorXd f(reduced_dofs_);
  for (int d = 0; d < mesh_.dof_count(); ++d)
    if (dof_map_[static_cast<std::size_t>(d)] >= 0) f(dof_map_[static_cast<std::size_t>(d)]) = load_(d);

  Eigen::SimplicialLDLT<SparseMatrix> ldlt(k);
  if (ldlt.info() != Eigen::Success) throw SolverError("solve: stiffness factorization failed");
  if (ldlt.vectorD().minCoeff() <= 0.0) throw SolverError("solve: stiffness matrix is not positive definite");
  const Eigen::VectorXd ur = ldlt.solve(f);
  SolveResult out;
  const double fn = f.norm();
  out.residual = fn > 0.0 ? (k * ur - f).norm() / fn : 0.0;
  if (!(out.residual < 1e-10))
    throw SolverError("solve: relative residual " + std::to_string(out.residual) + " above 1e-10");
  out.u = Eigen::VectorXd::Zero(mesh_.dof_count());
  for (int d = 0; d < mesh_.dof_count(); ++d)
    if (dof_map_[static_cast<std::size_t>(d)] >= 0) out.u(d) = ur(dof_map_[static_cast<std::size_t>(d)]);
  // 2 f.u - u.K u equals f.u at the exact solution and its error is
  // quadratic in the solve error
  double energy = 0.0;
  for (int e = 0; e < ne; ++e)
    energy += density(e) * element_energy(library[layout[static_cast<std::size_t>(e)]], out.u, mesh_.element_nodes(e));
  out.strain_energy = 2.0 * load_.dot(out.u) - energy;
  return out;
}

Eigen::VectorXd MacroModel::chain_density(const DesignFields& f, const Eigen::VectorXd& d_density) const {
  const double scale = 1.0 - options_.ersatz.void_factor;
  Eigen::VectorXd d_ind = d_density * scale;
  return chain_indicator(f, d_ind);
}

Eigen::VectorXd MacroModel::chain_indicator(const DesignFields& f, const Eigen::VectorXd& d_indicator) const {
  const double eps = options_.ersatz.smoothing_width;
  Eigen::VectorXd d_phi = Eigen::VectorXd::Zero(mesh_.node_count());
  for (int e = 0; e < mesh_.element_count(); ++e) {
    if (d_indicator(e) == 0.0) continue;
    const double dh = -smoothed_delta(-f.phi_element(e), eps);  // d H(-phi_e) / d phi_e
    if (dh == 0.0) continue;
    const double v = 0.25 * d_indicator(e) * dh;
    for (int n : mesh_.element_nodes(e)) d_phi(n) += v;
  }
  return filter_t_ * d_phi;
}

Eigen::VectorXd MacroModel::grad_mass(const DesignFields& f) const {
  const int ne = mesh_.element_count();
  return chain_indicator(f, Eigen::VectorXd::Constant(ne, 1.0 / ne));
}

Eigen::VectorXd MacroModel::grad_perimeter(const DesignFields& f) const {
  const double eps = options_.ersatz.smoothing_width;
  const double weight = 0.25 * mesh_.h * mesh_.h / mesh_.boundary_length();
  Eigen::VectorXd d_phi = Eigen::VectorXd::Zero(mesh_.node_count());
  for (int e = 0; e < mesh_.element_count(); ++e) {
    const auto nodes = mesh_.element_nodes(e);
    const Eigen::Vector4d pe(f.phi(nodes[0]), f.phi(nodes[1]), f.phi(nodes[2]), f.phi(nodes[3]));
    if (pe.minCoeff() >= eps || pe.maxCoeff() <= -eps) continue;
    Eigen::Vector4d ge = Eigen::Vector4d::Zero();
    for (const auto& gp : gauss_points()) {
      const double s = gp.n.dot(pe);
      const double d = smoothed_delta(s, eps);
      if (d == 0.0) continue;
      const Eigen::Matrix<double, 2, 4> gm = gp.grad / mesh_.h;
      const Eigen::Vector2d g = gm * pe;
      const double gn = g.norm();
      ge += smoothed_delta_prime(s, eps) * gn * gp.n;
      if (gn > 0.0) ge += d * gm.transpose() * g / gn;
    }
    for (int a = 0; a < 4; ++a) d_phi(nodes[a]) += weight * ge(a);
  }
  return filter_t_ * d_phi;
}

Eigen::VectorXd MacroModel::grad_regularization(const DesignFields& f) const {
  const Eigen::VectorXd d = f.phi - f.phi_tilde;
  const double span = options_.truncation.upper - options_.truncation.lower;
  const double w = 1.0 / mesh_.boundary_length();
  const double a = mesh_.area();
  const Eigen::VectorXd d_phi = (2.0 * w / (a * span * span)) * (mass_ * d) + (2.0 * w / a) * (laplacian_ * d);
  return filter_t_ * d_phi;
}

Eigen::VectorXd MacroModel::grad_strain_energy(const DesignFields& f, const Layout& layout,
                                               const std::vector<QuadK>& library,
                                               const SolveResult& s) const {
  const int ne = mesh_.element_count();
  Eigen::VectorXd d_rho(ne);
  for (int e = 0; e < ne; ++e)
    d_rho(e) = -element_energy(library[layout[static_cast<std::size_t>(e)]], s.u, mesh_.element_nodes(e));
  return chain_density(f, d_rho);
}

Eigen::VectorXd redistance(const Eigen::VectorXd& phi, const MacroMesh& mesh, const Range& truncation) {
  if (phi.size() != mesh.node_count()) throw ParameterError("redistance: phi has the wrong length");
  std::vector<Segment> segments;
  for (int e = 0; e < mesh.element_count(); ++e) {
    const auto nodes = mesh.element_nodes(e);
    const int i = e % mesh.nx;
    const int j = e / mesh.nx;
    const Eigen::Vector2d corner[4] = {{i, j}, {i + 1, j}, {i + 1, j + 1}, {i, j + 1}};
    double v[4];
    bool pos[4];
    for (int a = 0; a < 4; ++a) {
      v[a] = phi(nodes[a]);
      pos[a] = v[a] > 0.0;
    }
    Eigen::Vector2d p[4];
    bool cut[4];
    int ncut = 0;
    for (int a = 0; a < 4; ++a) {
      const int b = (a + 1) % 4;
      cut[a] = pos[a] != pos[b];
      if (cut[a]) {
        const double t = v[a] / (v[a] - v[b]);
        p[a] = corner[a] + t * (corner[b] - corner[a]);
        ++ncut;
      }
    }
    if (ncut == 2) {
      int first = -1;
      for (int a = 0; a < 4; ++a)
        if (cut[a]) {
          if (first < 0) {
            first = a;
          } else {
            segments.push_back({p[first], p[a]});
          }
        }
    } else if (ncut == 4) {
      const bool centre = 0.25 * (v[0] + v[1] + v[2] + v[3]) > 0.0;
      if (centre == pos[0]) {
        segments.push_back({p[0], p[1]});  // isolates corner 1
        segments.push_back({p[2], p[3]});  // isolates corner 3
      } else {
        segments.push_back({p[3], p[0]});
        segments.push_back({p[1], p[2]});
      }
    }
  }

  Eigen::VectorXd out(phi.size());
  if (segments.empty()) {
    for (Eigen::Index n = 0; n < phi.size(); ++n) out(n) = clamp_range(phi(n), truncation);
    return out;
  }
  const double cap = std::max(std::abs(truncation.lower), std::abs(truncation.upper));
  for (int j = 0; j <= mesh.ny; ++j)
    for (int i = 0; i <= mesh.nx; ++i) {
      const int n = mesh.node_id(i, j);
      const Eigen::Vector2d x(i, j);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& s : segments) {
        // bounding-box rejection once the running minimum is below the cap
        const double limit = std::min(best, cap);
        if (std::min(s.a.x(), s.b.x()) - x.x() > limit || x.x() - std::max(s.a.x(), s.b.x()) > limit ||
            std::min(s.a.y(), s.b.y()) - x.y() > limit || x.y() - std::max(s.a.y(), s.b.y()) > limit)
          continue;
        best = std::min(best, point_segment_distance(x, s));
      }
      if (phi(n) == 0.0) {
        out(n) = 0.0;
        continue;
      }
      out(n) = clamp_range(phi(n) > 0.0 ? best : -best, truncation);
    }
  return out;
}

EvalResult evaluate(const MacroModel& model, const DesignFields& fields, const Layout& layout,
                    const std::vector<QuadK>& library, double psi0) {
  if (!(psi0 > 0.0)) throw ParameterError("evaluate: psi0 must be positive");
  const auto& w = model.options().weights;
  EvalResult r;
  SolveResult s = model.solve(fields.density, layout, library);
  r.strain_energy = s.strain_energy;
  r.mass_ratio = model.mass_ratio(fields);
  r.perimeter = model.perimeter_penalty(fields);
  r.regularization = model.regularization_penalty(fields);
  r.objective = w.strain_energy * r.strain_energy / psi0 + w.mass * r.mass_ratio +
                w.perimeter * r.perimeter + w.regularization * r.regularization;
  r.constraint = r.mass_ratio - model.options().mass_target;
  r.u = std::move(s.u);
  return r;
}

void write_design_vtk(const std::filesystem::path& path, const MacroMesh& mesh, const DesignFields& fields) {
  std::ofstream out(path);
  if (!out) throw FormatError("vtk: cannot open " + path.string());
  out.precision(10);
  out << "# vtk DataFile Version 3.0\nlevel-set design\nASCII\nDATASET STRUCTURED_GRID\n";
  out << "DIMENSIONS " << mesh.nx + 1 << ' ' << mesh.ny + 1 << " 1\n";
  out << "POINTS " << mesh.node_count() << " double\n";
  for (int j = 0; j <= mesh.ny; ++j)
    for (int i = 0; i <= mesh.nx; ++i) out << i * mesh.h << ' ' << j * mesh.h << " 0\n";
  out << "POINT_DATA " << mesh.node_count() << "\nSCALARS phi double 1\nLOOKUP_TABLE default\n";
  for (Eigen::Index n = 0; n < fields.phi.size(); ++n) out << fields.phi(n) << '\n';
  out << "CELL_DATA " << mesh.element_count() << "\nSCALARS rho double 1\nLOOKUP_TABLE default\n";
  for (Eigen::Index e = 0; e < fields.density.size(); ++e) out << fields.density(e) << '\n';
  if (!out) throw FormatError("vtk: write failed for " + path.string());
}

void write_density_pgm(const std::filesystem::path& path, const MacroMesh& mesh, const Eigen::VectorXd& density) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("pgm: cannot open " + path.string());
  out << "P5\n" << mesh.nx << ' ' << mesh.ny << "\n255\n";
  for (int j = mesh.ny - 1; j >= 0; --j)
    for (int i = 0; i < mesh.nx; ++i) {
      const double rho = std::clamp(density(j * mesh.nx + i), 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * (1.0 - rho)))));
    }
  if (!out) throw FormatError("pgm: write failed for " + path.string());
}

}  // namespace sgtopo
