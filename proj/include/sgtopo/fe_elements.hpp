#pragma once

// Axis-aligned bilinear quad and trilinear hex element kernels with full
// Gauss integration. Node order is counter-clockwise from the origin corner
// (hex: bottom face then top face). DOFs are interleaved per node.

#include <Eigen/Dense>

namespace sgtopo {

using QuadB = Eigen::Matrix<double, 3, 8>;
using QuadK = Eigen::Matrix<double, 8, 8>;
using HexB = Eigen::Matrix<double, 6, 24>;
using HexK = Eigen::Matrix<double, 24, 24>;

/// Strain-displacement matrix at (xi, eta) in [-1, 1]^2 of an hx x hy quad.
QuadB quad_strain_matrix(double xi, double eta, double hx, double hy);

/// Element stiffness for a 3x3 Voigt tensor, 2x2 Gauss rule, unit thickness.
QuadK quad_stiffness(const Eigen::Matrix3d& c, double hx, double hy);

/// Integral of the strain-displacement matrix over the element.
QuadB quad_strain_integral(double hx, double hy);

HexB hex_strain_matrix(double xi, double eta, double zeta, double hx, double hy, double hz);
HexK hex_stiffness(const Eigen::Matrix<double, 6, 6>& c, double hx, double hy, double hz);
HexB hex_strain_integral(double hx, double hy, double hz);

}  // namespace sgtopo
