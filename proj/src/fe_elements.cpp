#include "sgtopo/fe_elements.hpp"

#include <array>
#include <cmath>

namespace sgtopo {

namespace {

constexpr std::array<double, 4> kQuadXi{-1.0, 1.0, 1.0, -1.0};
constexpr std::array<double, 4> kQuadEta{-1.0, -1.0, 1.0, 1.0};

constexpr std::array<double, 8> kHexXi{-1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0};
constexpr std::array<double, 8> kHexEta{-1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0};
constexpr std::array<double, 8> kHexZeta{-1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0};

const double kGauss = 1.0 / std::sqrt(3.0);

}  // namespace

QuadB quad_strain_matrix(double xi, double eta, double hx, double hy) {
  QuadB b = QuadB::Zero();
  for (int a = 0; a < 4; ++a) {
    const double dx = 0.25 * kQuadXi[a] * (1.0 + kQuadEta[a] * eta) * 2.0 / hx;
    const double dy = 0.25 * kQuadEta[a] * (1.0 + kQuadXi[a] * xi) * 2.0 / hy;
    b(0, 2 * a) = dx;
    b(1, 2 * a + 1) = dy;
    b(2, 2 * a) = dy;
    b(2, 2 * a + 1) = dx;
  }
  return b;
}

QuadK quad_stiffness(const Eigen::Matrix3d& c, double hx, double hy) {
  QuadK k = QuadK::Zero();
  const double w = 0.25 * hx * hy;  // detJ with unit Gauss weights
  for (double xi : {-kGauss, kGauss})
    for (double eta : {-kGauss, kGauss}) {
      const QuadB b = quad_strain_matrix(xi, eta, hx, hy);
      k.noalias() += w * b.transpose() * c * b;
    }
  return k;
}

QuadB quad_strain_integral(double hx, double hy) {
  QuadB total = QuadB::Zero();
  const double w = 0.25 * hx * hy;
  for (double xi : {-kGauss, kGauss})
    for (double eta : {-kGauss, kGauss}) total += w * quad_strain_matrix(xi, eta, hx, hy);
  return total;
}

HexB hex_strain_matrix(double xi, double eta, double zeta, double hx, double hy, double hz) {
  HexB b = HexB::Zero();
  for (int a = 0; a < 8; ++a) {
    const double dx = 0.125 * kHexXi[a] * (1.0 + kHexEta[a] * eta) * (1.0 + kHexZeta[a] * zeta) * 2.0 / hx;
    const double dy = 0.125 * kHexEta[a] * (1.0 + kHexXi[a] * xi) * (1.0 + kHexZeta[a] * zeta) * 2.0 / hy;
    const double dz = 0.125 * kHexZeta[a] * (1.0 + kHexXi[a] * xi) * (1.0 + kHexEta[a] * eta) * 2.0 / hz;
    const int c = 3 * a;
    b(0, c) = dx;
    b(1, c + 1) = dy;
    b(2, c + 2) = dz;
    b(3, c + 1) = dz;  // gamma_23
    b(3, c + 2) = dy;
    b(4, c) = dz;  // gamma_13
    b(4, c + 2) = dx;
    b(5, c) = dy;  // gamma_12
    b(5, c + 1) = dx;
  }
  return b;
}

HexK hex_stiffness(const Eigen::Matrix<double, 6, 6>& c, double hx, double hy, double hz) {
  HexK k = HexK::Zero();
  const double w = 0.125 * hx * hy * hz;
  for (double xi : {-kGauss, kGauss})
    for (double eta : {-kGauss, kGauss})
      for (double zeta : {-kGauss, kGauss}) {
        const HexB b = hex_strain_matrix(xi, eta, zeta, hx, hy, hz);
        k.noalias() += w * b.transpose() * c * b;
      }
  return k;
}

HexB hex_strain_integral(double hx, double hy, double hz) {
  HexB total = HexB::Zero();
  const double w = 0.125 * hx * hy * hz;
  for (double xi : {-kGauss, kGauss})
    for (double eta : {-kGauss, kGauss})
      for (double zeta : {-kGauss, kGauss}) total += w * hex_strain_matrix(xi, eta, zeta, hx, hy, hz);
  return total;
}

}  // namespace sgtopo
