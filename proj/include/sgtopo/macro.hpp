#pragma once

// Macroscale level-set design on a structured grid of square bilinear quads
// with an ersatz-material density, and the functionals of the compliance
// problem.
//
// Level-set values (theta, phi) are measured in units of the element size h.
// phi > 0 is void, phi < 0 is solid.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <filesystem>
#include <vector>

#include "sgtopo/fe_elements.hpp"
#include "sgtopo/homogenization.hpp"

namespace sgtopo {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Layout = std::vector<std::uint32_t>;

struct Support {
  int node = 0;
  int component = 0;  // 0 = x, 1 = y
  double value = 0.0;
};

struct PointLoad {
  int node = 0;
  int component = 0;
  double magnitude = 0.0;
};

/// nx x ny square elements of size h. Node (i, j) has id j (nx + 1) + i and
/// sits at (i h, j h); element (i, j) has id j nx + i with nodes
/// (i, j), (i+1, j), (i+1, j+1), (i, j+1).
struct MacroMesh {
  int nx = 1;
  int ny = 1;
  double h = 1.0;
  std::vector<Support> supports;
  std::vector<PointLoad> loads;

  int node_count() const { return (nx + 1) * (ny + 1); }
  int element_count() const { return nx * ny; }
  int dof_count() const { return 2 * node_count(); }
  int node_id(int i, int j) const { return j * (nx + 1) + i; }
  double width() const { return nx * h; }
  double height() const { return ny * h; }
  double area() const { return width() * height(); }
  double boundary_length() const { return 2.0 * (width() + height()); }
  std::array<int, 4> element_nodes(int e) const;

  void validate() const;

  /// Half of the three-point bending beam: 3 x 1 domain, roller at the
  /// bottom-left node, symmetry (u_x = 0) along the right edge, downward
  /// load of `load` at the top-right node. nx must equal 3 ny.
  static MacroMesh half_beam(int nx, int ny, double load = 1.0);
};

/// Row-normalized linear filter phi_bar = W theta with
/// w_ij = max(0, r - |x_i - x_j| / h); r in units of h.
SparseMatrix filter_matrix(const MacroMesh& mesh, double radius);

/// Superellipse holes 1 - (x/r)^10 - (y/r)^10 on an holes_x x holes_y grid
/// of centres ((i + 1/2) W / holes_x, (j + 1/2) H / holes_y); max over the
/// holes, evaluated at the nodes. r_hole and the returned values are
/// physical lengths; divide by h before using them as theta.
Eigen::VectorXd seed_holes(const MacroMesh& mesh, int holes_x, int holes_y, double r_hole);

struct ErsatzParams {
  /// Half-width of the smoothed Heaviside, in units of h.
  double smoothing_width = 1.5;
  double void_factor = 1e-6;
};

/// C1 smoothed Heaviside 1/2 + 3s/(4e) - s^3/(4e^3) on |s| < e.
double smoothed_heaviside(double s, double width);
/// Its derivative, the smoothed delta.
double smoothed_delta(double s, double width);

struct ObjectiveWeights {
  double strain_energy = 0.9;
  double mass = 0.0;
  double perimeter = 0.025;
  double regularization = 0.5;
};

struct ModelOptions {
  double filter_radius = 1.6;
  ErsatzParams ersatz;
  ObjectiveWeights weights;
  double mass_target = 0.4;
  /// Box bounds of theta (units of h).
  Range bounds{-1.5, 1.5};
  /// Truncation of the redistanced field (units of h).
  Range truncation{-1.5, 1.5};
};

/// Quantities derived from theta that every functional needs.
struct DesignFields {
  Eigen::VectorXd theta;
  Eigen::VectorXd phi;          // filtered nodal values
  Eigen::VectorXd phi_element;  // element averages of phi
  Eigen::VectorXd indicator;    // H(-phi_e), no void floor
  Eigen::VectorXd density;      // rho_min + (1 - rho_min) H(-phi_e)
  Eigen::VectorXd phi_tilde;    // truncated signed distance of phi
};

/// Element stiffness matrices of every catalog entry for the mesh size.
std::vector<QuadK> element_library(const MacroMesh& mesh, const MicrostructureCatalog& catalog);

struct SolveResult {
  Eigen::VectorXd u;  // full displacement vector, supports included
  double strain_energy = 0.0;
  double residual = 0.0;
};

/// Precomputed mesh data: filter, quadrature matrices for the penalties and
/// the sparsity pattern of the reduced stiffness matrix.
class MacroModel {
 public:
  MacroModel(MacroMesh mesh, ModelOptions options);

  const MacroMesh& mesh() const { return mesh_; }
  const ModelOptions& options() const { return options_; }
  const SparseMatrix& filter() const { return filter_; }
  /// Consistent mass matrix and Laplacian (h-scaled gradients) of the
  /// bilinear interpolation.
  const SparseMatrix& mass_matrix() const { return mass_; }
  const SparseMatrix& laplacian() const { return laplacian_; }
  std::size_t design_size() const { return static_cast<std::size_t>(mesh_.node_count()); }

  /// Filter, densities and (unless `frozen_phi_tilde` is given) redistancing.
  DesignFields fields(const Eigen::VectorXd& theta,
                      const Eigen::VectorXd* frozen_phi_tilde = nullptr) const;

  /// Element densities from filtered nodal values.
  Eigen::VectorXd density(const Eigen::VectorXd& phi) const;

  /// Mean of H(-phi_e) over the elements.
  double mass_ratio(const DesignFields& f) const;
  /// (1 / boundary length) * integral of delta(phi) |grad phi|.
  double perimeter_penalty(const DesignFields& f) const;
  /// Two-term distance regularization against f.phi_tilde.
  double regularization_penalty(const DesignFields& f) const;

  /// Solves K(rho, layout) u = F; element matrix rho_e * k(C[layout[e]]).
  SolveResult solve(const Eigen::VectorXd& density, const Layout& layout,
                    const std::vector<QuadK>& library) const;

  /// Gradients with respect to theta.
  Eigen::VectorXd grad_mass(const DesignFields& f) const;
  Eigen::VectorXd grad_perimeter(const DesignFields& f) const;
  Eigen::VectorXd grad_regularization(const DesignFields& f) const;
  /// Self-adjoint compliance gradient for a converged solve.
  Eigen::VectorXd grad_strain_energy(const DesignFields& f, const Layout& layout,
                                     const std::vector<QuadK>& library, const SolveResult& s) const;

  /// Chain rule from element densities / nodal phi to theta.
  Eigen::VectorXd chain_density(const DesignFields& f, const Eigen::VectorXd& d_density) const;
  Eigen::VectorXd chain_indicator(const DesignFields& f, const Eigen::VectorXd& d_indicator) const;

  Eigen::VectorXd clamp(const Eigen::VectorXd& theta) const;

 private:
  MacroMesh mesh_;
  ModelOptions options_;
  SparseMatrix filter_;
  SparseMatrix filter_t_;
  SparseMatrix mass_;
  SparseMatrix laplacian_;
  std::vector<int> dof_map_;  // full dof -> reduced dof or -1
  int reduced_dofs_ = 0;
  SparseMatrix pattern_;      // reduced stiffness pattern, zero values
  std::vector<std::array<int, 64>> slots_;  // element entry -> value index
  Eigen::VectorXd load_;      // full load vector
};

/// Truncated signed distance to the piecewise-linear zero contour of phi
/// (marching squares), brute force over all contour segments, signed like
/// phi, in units of h. Without a sign change the result is clamp(phi).
Eigen::VectorXd redistance(const Eigen::VectorXd& phi, const MacroMesh& mesh, const Range& truncation);

struct EvalResult {
  double strain_energy = 0.0;
  double mass_ratio = 0.0;
  double perimeter = 0.0;
  double regularization = 0.0;
  double objective = 0.0;
  double constraint = 0.0;
  Eigen::VectorXd u;
};

/// Objective w_psi Psi/psi0 + w_m mass + w_per P_per + w_reg P_reg and
/// constraint mass - target for one layout.
EvalResult evaluate(const MacroModel& model, const DesignFields& fields, const Layout& layout,
                    const std::vector<QuadK>& library, double psi0);

/// Legacy VTK structured grid with nodal phi and element rho.
void write_design_vtk(const std::filesystem::path& path, const MacroMesh& mesh,
                      const DesignFields& fields);
/// Graymap of the element densities, solid black, y up.
void write_density_pgm(const std::filesystem::path& path, const MacroMesh& mesh,
                       const Eigen::VectorXd& density);

}  // namespace sgtopo
