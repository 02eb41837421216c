#include "sgtopo/elasticity.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace sgtopo {

namespace {

constexpr std::array<std::array<int, 2>, 6> kVoigtPairs{{{0, 0}, {1, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}}};

double mandel_weight(int i) { return i < 3 ? 1.0 : std::numbers::sqrt2; }

}  // namespace

Hypothesis parse_hypothesis(const std::string& name) {
  if (name == "plane_stress") return Hypothesis::PlaneStress;
  if (name == "plane_strain") return Hypothesis::PlaneStrain;
  if (name == "3d" || name == "3D" || name == "three_d") return Hypothesis::ThreeD;
  throw ParameterError("unknown elasticity hypothesis '" + name + "'");
}

std::string to_string(Hypothesis h) {
  switch (h) {
    case Hypothesis::PlaneStress: return "plane_stress";
    case Hypothesis::PlaneStrain: return "plane_strain";
    case Hypothesis::ThreeD: return "3d";
  }
  return "unknown";
}

void IsotropicPhase::validate() const {
  if (!(E > 0.0)) throw ParameterError("isotropic phase: E must be positive");
  if (!(nu > -1.0 && nu < 0.5)) throw ParameterError("isotropic phase: nu must lie in (-1, 0.5)");
}

ConstitutiveTensor::ConstitutiveTensor(int dim, Eigen::MatrixXd voigt) : dim_(dim), voigt_(std::move(voigt)) {
  const int n = dim == 2 ? 3 : dim == 3 ? 6 : -1;
  if (n < 0) throw ParameterError("ConstitutiveTensor: dim must be 2 or 3");
  if (voigt_.rows() != n || voigt_.cols() != n)
    throw ParameterError("ConstitutiveTensor: Voigt matrix has the wrong size");
}

bool ConstitutiveTensor::is_symmetric(double rel_tol) const {
  const double scale = voigt_.cwiseAbs().maxCoeff();
  return (voigt_ - voigt_.transpose()).cwiseAbs().maxCoeff() <= rel_tol * std::max(scale, 1e-300);
}

double ConstitutiveTensor::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (voigt_ + voigt_.transpose()),
                                                     Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

bool ConstitutiveTensor::is_positive_definite() const { return min_eigenvalue() > 0.0; }

ConstitutiveTensor isotropic_tensor(const IsotropicPhase& phase, int dim, Hypothesis hypothesis) {
  phase.validate();
  const double E = phase.E;
  const double nu = phase.nu;
  const double lambda = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  const double mu = E / (2.0 * (1.0 + nu));
  if (dim == 3) {
    if (hypothesis != Hypothesis::ThreeD)
      throw ParameterError("isotropic_tensor: 3D tensors use the 3D hypothesis");
    Matrix6d c = Matrix6d::Zero();
    c.topLeftCorner<3, 3>().setConstant(lambda);
    for (int i = 0; i < 3; ++i) c(i, i) = lambda + 2.0 * mu;
    for (int i = 3; i < 6; ++i) c(i, i) = mu;
    return {3, c};
  }
  if (dim != 2) throw ParameterError("isotropic_tensor: dim must be 2 or 3");
  Eigen::Matrix3d c = Eigen::Matrix3d::Zero();
  switch (hypothesis) {
    case Hypothesis::PlaneStrain:
      c << lambda + 2.0 * mu, lambda, 0.0, lambda, lambda + 2.0 * mu, 0.0, 0.0, 0.0, mu;
      break;
    case Hypothesis::PlaneStress: {
      const double f = E / (1.0 - nu * nu);
      c << f, f * nu, 0.0, f * nu, f, 0.0, 0.0, 0.0, f * (1.0 - nu) / 2.0;
      break;
    }
    case Hypothesis::ThreeD:
      throw ParameterError("isotropic_tensor: the 3D hypothesis requires dim = 3");
  }
  return {2, c};
}

Matrix6d voigt_to_mandel(const Matrix6d& c) {
  Matrix6d m;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) m(i, j) = c(i, j) * mandel_weight(i) * mandel_weight(j);
  return m;
}

Matrix6d mandel_to_voigt(const Matrix6d& m) {
  Matrix6d c;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) c(i, j) = m(i, j) / (mandel_weight(i) * mandel_weight(j));
  return c;
}

Eigen::Matrix3d fiber_rotation(double angle_inplane, double angle_outplane) {
  const Eigen::Matrix3d rz = Eigen::AngleAxisd(angle_inplane, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const Eigen::Matrix3d ry = Eigen::AngleAxisd(-angle_outplane, Eigen::Vector3d::UnitY()).toRotationMatrix();
  return rz * ry;
}

Matrix6d mandel_rotation(const Eigen::Matrix3d& R) {
  // Q_IJ = E_I : (R E_J R^T) over the orthonormal Mandel basis E_I
  std::array<Eigen::Matrix3d, 6> basis;
  for (int I = 0; I < 6; ++I) {
    const auto [i, j] = kVoigtPairs[static_cast<std::size_t>(I)];
    Eigen::Matrix3d e = Eigen::Matrix3d::Zero();
    if (i == j) {
      e(i, j) = 1.0;
    } else {
      e(i, j) = e(j, i) = 1.0 / std::numbers::sqrt2;
    }
    basis[static_cast<std::size_t>(I)] = e;
  }
  Matrix6d q;
  for (int J = 0; J < 6; ++J) {
    const Eigen::Matrix3d rotated = R * basis[static_cast<std::size_t>(J)] * R.transpose();
    for (int I = 0; I < 6; ++I) q(I, J) = basis[static_cast<std::size_t>(I)].cwiseProduct(rotated).sum();
  }
  return q;
}

ConstitutiveTensor rotate_tensor(const ConstitutiveTensor& c, const Eigen::Matrix3d& R) {
  if (c.dim() != 3) throw ParameterError("rotate_tensor: expects a 3D tensor");
  const Matrix6d q = mandel_rotation(R);
  const Matrix6d rotated = q * voigt_to_mandel(c.voigt()) * q.transpose();
  return {3, mandel_to_voigt(rotated)};
}

ConstitutiveTensor rotate_tensor(const ConstitutiveTensor& c, double angle_inplane,
                                 double angle_outplane) {
  return rotate_tensor(c, fiber_rotation(angle_inplane, angle_outplane));
}

ConstitutiveTensor reduce_to_plane(const ConstitutiveTensor& c, Hypothesis hypothesis) {
  if (c.dim() != 3) throw ParameterError("reduce_to_plane: expects a 3D tensor");
  constexpr std::array<int, 3> in{0, 1, 5};
  constexpr std::array<int, 3> out{2, 3, 4};
  Eigen::Matrix3d cii, cio, coi, coo;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      cii(a, b) = c(in[a], in[b]);
      cio(a, b) = c(in[a], out[b]);
      coi(a, b) = c(out[a], in[b]);
      coo(a, b) = c(out[a], out[b]);
    }
  switch (hypothesis) {
    case Hypothesis::PlaneStrain: return {2, cii};
    case Hypothesis::PlaneStress: {
      Eigen::Matrix3d reduced = cii - cio * coo.ldlt().solve(coi);
      return {2, 0.5 * (reduced + reduced.transpose())};
    }
    case Hypothesis::ThreeD: break;
  }
  throw ParameterError("reduce_to_plane: hypothesis must be plane stress or plane strain");
}

Matrix6d EshelbyTensor::mandel() const { return voigt_to_mandel(components); }

EshelbyTensor eshelby_spheroid(double aspect_ratio, double nu) {
  if (!(aspect_ratio >= 1.0)) throw ParameterError("eshelby_spheroid: aspect ratio must be >= 1");
  if (!(nu > -1.0 && nu < 0.5)) throw ParameterError("eshelby_spheroid: nu must lie in (-1, 0.5)");

  double s1111, s2222, s2233, s2211, s1122, s2323, s1212;
  if (aspect_ratio - 1.0 < 1e-6) {
    const double d = 15.0 * (1.0 - nu);
    s1111 = s2222 = (7.0 - 5.0 * nu) / d;
    s2233 = s2211 = s1122 = (5.0 * nu - 1.0) / d;
    s2323 = s1212 = (4.0 - 5.0 * nu) / d;
  } else {
    const double a = aspect_ratio;
    const double a2 = a * a;
    const double am1 = a2 - 1.0;
    const double g = a / std::pow(am1, 1.5) * (a * std::sqrt(am1) - std::acosh(a));
    const double k = 1.0 - 2.0 * nu;
    const double inv = 1.0 / (1.0 - nu);
    s1111 = 0.5 * inv * (k + (3.0 * a2 - 1.0) / am1 - (k + 3.0 * a2 / am1) * g);
    s2222 = 3.0 / 8.0 * inv * a2 / am1 + 0.25 * inv * (k - 9.0 / (4.0 * am1)) * g;
    s2233 = 0.25 * inv * (a2 / (2.0 * am1) - (k + 3.0 / (4.0 * am1)) * g);
    s2211 = -0.5 * inv * a2 / am1 + 0.25 * inv * (3.0 * a2 / am1 - k) * g;
    s1122 = -0.5 * inv * (k + 1.0 / am1) + 0.5 * inv * (k + 3.0 / (2.0 * am1)) * g;
    s2323 = 0.25 * inv * (a2 / (2.0 * am1) + (k - 3.0 / (4.0 * am1)) * g);
    s1212 = 0.25 * inv * (k - (a2 + 1.0) / am1 - 0.5 * (k - 3.0 * (a2 + 1.0) / am1) * g);
  }

  EshelbyTensor s;
  auto& m = s.components;
  m(0, 0) = s1111;
  m(1, 1) = m(2, 2) = s2222;
  m(1, 2) = m(2, 1) = s2233;
  m(1, 0) = m(2, 0) = s2211;
  m(0, 1) = m(0, 2) = s1122;
  m(3, 3) = s2323;
  m(4, 4) = m(5, 5) = s1212;
  return s;
}

Matrix6d strain_concentration(const Matrix6d& c_matrix, const Matrix6d& c_fiber,
                              const EshelbyTensor& s) {
  const Matrix6d identity = Matrix6d::Identity();
  const Matrix6d inner =
      identity + s.mandel() * c_matrix.partialPivLu().solve(c_fiber - c_matrix);
  Eigen::FullPivLU<Matrix6d> lu(inner);
  if (!lu.isInvertible()) throw SolverError("mori_tanaka: singular strain concentration system");
  return lu.inverse();
}

ConstitutiveTensor mori_tanaka_local(const FiberRealization& fiber) {
  fiber.validate();
  const Matrix6d cm =
      voigt_to_mandel(isotropic_tensor({fiber.e_matrix, fiber.nu_matrix}, 3, Hypothesis::ThreeD).voigt());
  const Matrix6d cf =
      voigt_to_mandel(isotropic_tensor({fiber.e_fiber, fiber.nu_fiber}, 3, Hypothesis::ThreeD).voigt());
  const EshelbyTensor s = eshelby_spheroid(fiber.aspect_ratio, fiber.nu_matrix);
  const Matrix6d a = strain_concentration(cm, cf, s);
  const double vf = fiber.volume_fraction;
  const Matrix6d mix = (1.0 - vf) * Matrix6d::Identity() + vf * a;
  Eigen::FullPivLU<Matrix6d> lu(mix);
  if (!lu.isInvertible()) throw SolverError("mori_tanaka: singular phase-average system");
  Matrix6d chom = cm + vf * (cf - cm) * a * lu.inverse();
  chom = 0.5 * (chom + chom.transpose());
  return {3, mandel_to_voigt(chom)};
}

ConstitutiveTensor mori_tanaka(const FiberRealization& fiber) {
  return rotate_tensor(mori_tanaka_local(fiber), fiber.angle_inplane, fiber.angle_outplane);
}

}  // namespace sgtopo
