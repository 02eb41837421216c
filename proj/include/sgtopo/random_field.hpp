#pragma once

// Random two-phase microstructures: truncated periodic Gaussian random fields,
// level cuts, slices and uncertain chopped-fiber parameters.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sgtopo/common.hpp"

namespace sgtopo {

/// Coefficients of a T-periodic zero-mean Gaussian random field
///   psi(r) = sum_{l,m,n=-N..N} c_{lmn} exp(i f_{lmn} . r),  c = a + i b,
/// with f_{lmn} = 2 pi / T (l, m, n). Coefficients with |f| >= K are zero,
/// c_{000} = 0 and c_{-l,-m,-n} = conj(c_{lmn}).
///
/// Storage is the dense (2N+1)^3 lattice, l slowest, n fastest.
struct SpectralField {
  double period = 0.0;
  double max_wavenumber = 0.0;
  double correlation_length = 1.0;
  int half_terms = 0;
  std::vector<double> a;
  std::vector<double> b;

  int side() const { return 2 * half_terms + 1; }
  std::size_t index(int l, int m, int n) const;
  double a_at(int l, int m, int n) const { return a[index(l, m, n)]; }
  double b_at(int l, int m, int n) const { return b[index(l, m, n)]; }
  /// |f_{lmn}|.
  double wavenumber(int l, int m, int n) const;
  /// Sets c_{lmn} = a + ib and its conjugate partner.
  void set_pair(int l, int m, int n, double a_value, double b_value);

  /// All-zero field with the lattice sized for (T, K).
  static SpectralField zeros(double period, double max_wavenumber,
                             double correlation_length = 1.0);
};

/// N = K T / (2 pi); throws ParameterError unless it is a positive integer.
int half_terms_for(double period, double max_wavenumber);

/// Truncated, renormalized spectral density of the squared-exponential
/// correlation exp(-|r|^2 / l^2): S(f) / int_0^K 4 pi f^2 S(f) df for f < K,
/// zero otherwise.
double truncated_spectral_density(double f, double max_wavenumber,
                                  double correlation_length = 1.0);

/// Standard deviation of a_{lmn} (and b_{lmn}): sqrt(S_K(|f|)/2 (2 pi/T)^3).
double coefficient_stddev(const SpectralField& field, int l, int m, int n);

/// True when the lattice point is on the sampled half: l > 0, or l = 0 and
/// m > 0, or l = m = 0 and n > 0.
bool in_sampled_half(int l, int m, int n);

/// Draws the coefficients. The half lattice is visited in lexicographic
/// (l, m, n) order and each retained mode consumes one a-draw then one
/// b-draw; the other half is the conjugate mirror.
SpectralField sample_spectral_coefficients(double period, double max_wavenumber,
                                           RandomStream& stream,
                                           double correlation_length = 1.0);

/// Real scalar samples on a regular grid, row-major (last axis fastest).
struct FieldGrid {
  std::vector<int> dims;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

/// psi sampled at cell centres of a dims[0] x dims[1] x dims[2] grid spanning
/// one period per axis. Uses separable partial sums, which reproduce the
/// direct triple sum to round-off.
FieldGrid evaluate_field(const SpectralField& field, const std::array<int, 3>& dims);

/// The plane `plane` across `axis` of evaluate_field(field, dims), computed
/// without evaluating the whole cube.
FieldGrid evaluate_plane(const SpectralField& field, const std::array<int, 3>& dims, int axis,
                         int plane);

/// Two-phase pixel/voxel image; phase 1 is the stiff phase.
struct RveImage {
  std::vector<int> dims;
  std::vector<std::uint8_t> phase;

  std::size_t size() const { return phase.size(); }
  int dimension() const { return static_cast<int>(dims.size()); }
  bool stiff(std::size_t flat) const { return phase[flat] != 0; }
  bool stiff(int i, int j) const;
  bool stiff(int i, int j, int k) const;
  double volume_fraction() const;

  static RveImage uniform(std::vector<int> dims, bool stiff);
};

/// phase = value > threshold.
RveImage level_cut(const FieldGrid& grid, double threshold = 0.0);

/// Cross-section of a 3D image normal to `axis` at index `plane`. The
/// remaining axes keep their relative order.
RveImage slice_2d(const RveImage& rve, int axis = 0, int plane = 0);

/// Uniform range [lower, upper].
struct Range {
  double lower = 0.0;
  double upper = 0.0;
};

/// Per-parameter uniform bounds of a chopped-fiber microstructure.
struct FiberBounds {
  Range e_fiber{0.95, 1.05};
  Range e_matrix{0.0095, 0.0105};
  Range nu_fiber{0.3, 0.3};
  Range nu_matrix{0.3, 0.3};
  Range aspect_ratio{10.0, 100.0};
  Range angle_inplane{0.0, 3.14159265358979323846};
  Range angle_outplane{0.0, 3.14159265358979323846};
  Range volume_fraction{0.2, 0.2};

  /// Bounds of the chopped-fiber beam example; fiber volume fraction and
  /// Poisson ratios are not tabulated there and default to 0.2 and 0.3.
  static FiberBounds chopped_fiber_example();
};

/// One realization of the fiber parameters; angles in radians.
struct FiberRealization {
  double e_fiber = 1.0;
  double e_matrix = 0.01;
  double nu_fiber = 0.3;
  double nu_matrix = 0.3;
  double aspect_ratio = 10.0;
  double angle_inplane = 0.0;
  double angle_outplane = 0.0;
  double volume_fraction = 0.2;

  void validate() const;
};

/// Independent uniform draws in field order. Degenerate ranges still consume
/// a draw so that stream alignment does not depend on the bounds.
FiberRealization sample_fiber(const FiberBounds& bounds, RandomStream& stream);

/// Binary PGM (P5), stiff phase white. 2D images only.
void write_pgm(const std::filesystem::path& path, const RveImage& image);

/// Little-endian voxel file: "RVE1", u32 dims[3], then the phases packed
/// eight per byte (least significant bit first) in row-major order with the
/// last axis fastest. 2D images are written with dims[2] = 1.
void write_rve_binary(const std::filesystem::path& path, const RveImage& image);
RveImage read_rve_binary(const std::filesystem::path& path);

}  // namespace sgtopo
