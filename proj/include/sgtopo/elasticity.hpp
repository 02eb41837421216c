#pragma once

// Constitutive tensors in Voigt form and the analytic homogenization
// (Eshelby / Mori-Tanaka) used for chopped-fiber microstructures.
//
// Voigt ordering is (11, 22, 12) in 2D and (11, 22, 33, 23, 13, 12) in 3D
// with engineering shear strains, so that sigma = C * epsilon.

#include <Eigen/Dense>

#include "sgtopo/random_field.hpp"

namespace sgtopo {

using Matrix6d = Eigen::Matrix<double, 6, 6>;

enum class Hypothesis { PlaneStress, PlaneStrain, ThreeD };

Hypothesis parse_hypothesis(const std::string& name);
std::string to_string(Hypothesis h);

struct IsotropicPhase {
  double E = 1.0;
  double nu = 0.3;

  void validate() const;
};

/// Symmetric elasticity matrix (3x3 in 2D, 6x6 in 3D).
class ConstitutiveTensor {
 public:
  ConstitutiveTensor() = default;
  ConstitutiveTensor(int dim, Eigen::MatrixXd voigt);

  int dim() const { return dim_; }
  const Eigen::MatrixXd& voigt() const { return voigt_; }
  double operator()(int i, int j) const { return voigt_(i, j); }

  bool is_symmetric(double rel_tol = 1e-10) const;
  bool is_positive_definite() const;
  double min_eigenvalue() const;

 private:
  int dim_ = 0;
  Eigen::MatrixXd voigt_;
};

ConstitutiveTensor isotropic_tensor(const IsotropicPhase& phase, int dim, Hypothesis hypothesis);

/// Voigt (engineering shear) <-> Mandel (orthonormal) conversion for 6x6
/// stiffness-type matrices.
Matrix6d voigt_to_mandel(const Matrix6d& c);
Matrix6d mandel_to_voigt(const Matrix6d& m);

/// Rotation taking the local fiber axis e1 to the global direction
/// (cos o cos i, cos o sin i, sin o) for in-plane angle i and out-of-plane
/// angle o: R = Rz(i) * Ry(-o).
Eigen::Matrix3d fiber_rotation(double angle_inplane, double angle_outplane);

/// 6x6 Mandel-basis rotation Q with C' = Q C Q^T for a rotation R.
Matrix6d mandel_rotation(const Eigen::Matrix3d& R);

ConstitutiveTensor rotate_tensor(const ConstitutiveTensor& c, const Eigen::Matrix3d& R);
ConstitutiveTensor rotate_tensor(const ConstitutiveTensor& c, double angle_inplane,
                                 double angle_outplane);

/// 3D -> 2D: plane strain keeps the (11, 22, 12) block, plane stress
/// condenses out the out-of-plane stresses.
ConstitutiveTensor reduce_to_plane(const ConstitutiveTensor& c, Hypothesis hypothesis);

/// Eshelby tensor S_ijkl with S(I, J) = S_{ij kl} for Voigt pairs I = (ij),
/// J = (kl). Minor symmetries hold by construction; the matrix is not
/// symmetric in general.
struct EshelbyTensor {
  Matrix6d components = Matrix6d::Zero();

  Matrix6d mandel() const;
};

/// Prolate spheroid with its long axis along local axis 1 in an isotropic
/// matrix. aspect_ratio = semi-axis ratio a1/a2 >= 1; values within 1e-6 of
/// one use the sphere expressions.
EshelbyTensor eshelby_spheroid(double aspect_ratio, double nu_matrix);

/// Strain concentration A = [I + S C_m^{-1} (C_f - C_m)]^{-1} (Mandel form).
Matrix6d strain_concentration(const Matrix6d& c_matrix, const Matrix6d& c_fiber,
                              const EshelbyTensor& s);

/// Mori-Tanaka estimate in the fiber frame, matrix as the reference phase:
/// C = C_m + v_f (C_f - C_m) A [(1 - v_f) I + v_f A]^{-1}.
ConstitutiveTensor mori_tanaka_local(const FiberRealization& fiber);

/// mori_tanaka_local rotated to the global frame by the fiber angles.
ConstitutiveTensor mori_tanaka(const FiberRealization& fiber);

}  // namespace sgtopo
