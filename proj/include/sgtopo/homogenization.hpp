#pragma once

// Periodic finite-element homogenization of voxel RVEs and microstructure
// catalogs built from random-field or chopped-fiber generators.

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "sgtopo/elasticity.hpp"
#include "sgtopo/random_field.hpp"

namespace sgtopo {

struct HomogenizationOptions {
  /// Used for 2D images; 3D images are always solved in 3D.
  Hypothesis hypothesis = Hypothesis::PlaneStress;
  /// Required relative residual of every unit-strain solve.
  double tolerance = 1e-10;
};

/// Effective tensor of a periodic two-phase image on the unit cell.
///
/// One bilinear/trilinear element per pixel/voxel; nodes on opposite faces
/// share degrees of freedom and one node is anchored. Each unit macroscopic
/// strain (engineering shear) gives one column as the volume-averaged
/// stress; the result is symmetrized.
ConstitutiveTensor homogenize_fe(const RveImage& rve, const IsotropicPhase& stiff,
                                 const IsotropicPhase& compliant,
                                 const HomogenizationOptions& options = {});

struct MicrostructureCatalog {
  int dim = 2;
  std::vector<ConstitutiveTensor> entries;
  std::vector<std::string> provenance;
  /// Relative mass density per entry (1 unless set otherwise).
  std::vector<double> density;
  /// Free-form generator descriptor, written to the manifest.
  std::string generator;
  std::uint64_t seed = 0;

  std::size_t size() const { return entries.size(); }
  void validate() const;

  /// Catalog with a single entry.
  static MicrostructureCatalog single(const ConstitutiveTensor& c);
};

/// Level-cut slice of a 3D random field, homogenized with homogenize_fe.
struct RandomFieldGenerator {
  double period = 12.566370614359172;  // 4 pi
  double max_wavenumber = 25.0;
  double correlation_length = 1.0;
  int resolution = 100;
  double threshold = 0.0;
  IsotropicPhase stiff{10.0, 0.3};
  IsotropicPhase compliant{1.0, 0.3};
  Hypothesis hypothesis = Hypothesis::PlaneStress;
};

/// Mori-Tanaka tensor of one chopped-fiber draw reduced to 2D (or kept 3D).
struct FiberGenerator {
  FiberBounds bounds;
  Hypothesis hypothesis = Hypothesis::PlaneStress;
};

/// Every entry is the same isotropic phase.
struct UniformGenerator {
  IsotropicPhase phase{1.0, 0.3};
  Hypothesis hypothesis = Hypothesis::PlaneStress;
};

using CatalogGenerator = std::variant<RandomFieldGenerator, FiberGenerator, UniformGenerator>;

std::string describe(const CatalogGenerator& generator);

/// Homogenized tensor of a single random-field realization.
ConstitutiveTensor random_field_entry(const RandomFieldGenerator& generator, RandomStream& stream);

/// The image homogenized by random_field_entry for the same stream.
RveImage random_field_image(const RandomFieldGenerator& generator, RandomStream& stream);

/// Entry i draws from stream.substream(stream.stream_id() + i), so the
/// catalog does not depend on the worker count. Every entry must be SPD.
MicrostructureCatalog build_catalog(std::size_t count, const CatalogGenerator& generator,
                                    const RandomStream& stream, unsigned threads = 0);

/// Binary catalog: "CTLG", u32 dim, u32 count, then count row-major Voigt
/// matrices as little-endian doubles. A text manifest is written next to it
/// as <path>.manifest.
void write_catalog(const std::filesystem::path& path, const MicrostructureCatalog& catalog);
MicrostructureCatalog read_catalog(const std::filesystem::path& path);

}  // namespace sgtopo
