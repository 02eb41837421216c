#include "sgtopo/homogenization.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sgtopo/fe_elements.hpp"

namespace sgtopo {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

// Largest system handled by the direct factorization in 3D; beyond this the
// fill of a 3D grid gets expensive and CG is used instead.
constexpr Eigen::Index kDirect3dLimit = 40000;

struct PeriodicGrid {
  std::vector<int> dims;
  int dofs_per_node = 0;
  int nodes = 0;

  int node(const std::array<int, 3>& ijk) const {
    int id = 0;
    for (std::size_t a = 0; a < dims.size(); ++a) id = id * dims[a] + (ijk[a] % dims[a]);
    return id;
  }
};

template <int NDof, int NStrain>
ConstitutiveTensor solve_periodic(const RveImage& rve, const PeriodicGrid& grid,
                                  const std::array<Eigen::Matrix<double, NStrain, NStrain>, 2>& c,
                                  const std::array<Eigen::Matrix<double, NDof, NDof>, 2>& ke,
                                  const Eigen::Matrix<double, NStrain, NDof>& b_int, double volume_e,
                                  double tolerance) {
  const int dim = static_cast<int>(grid.dims.size());
  const int dpn = grid.dofs_per_node;
  const int corners = NDof / dpn;
  const Eigen::Index n_full = static_cast<Eigen::Index>(grid.nodes) * dpn;
  const Eigen::Index n_red = n_full - dpn;  // node 0 anchored

  // element -> global dof table
  const std::size_t n_elem = rve.size();
  std::vector<std::array<int, NDof>> edofs(n_elem);
  {
    static constexpr std::array<std::array<int, 3>, 8> offs{
        {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};
    std::array<int, 3> ijk{0, 0, 0};
    for (std::size_t e = 0; e < n_elem; ++e) {
      std::size_t rest = e;
      for (int a = dim - 1; a >= 0; --a) {
        ijk[static_cast<std::size_t>(a)] = static_cast<int>(rest % static_cast<std::size_t>(grid.dims[static_cast<std::size_t>(a)]));
        rest /= static_cast<std::size_t>(grid.dims[static_cast<std::size_t>(a)]);
      }
      for (int v = 0; v < corners; ++v) {
        std::array<int, 3> p{ijk[0] + offs[v][0], ijk[1] + offs[v][1], dim == 3 ? ijk[2] + offs[v][2] : 0};
        const int nd = grid.node(p);
        for (int d = 0; d < dpn; ++d) edofs[e][static_cast<std::size_t>(v * dpn + d)] = nd * dpn + d;
      }
    }
  }

  SpMat k(n_red, n_red);
  {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(n_elem * NDof * NDof / 2 + 1);
    // triplets in two passes keep peak memory moderate for 3D grids
    const std::size_t half = n_elem / 2 + 1;
    for (std::size_t begin = 0; begin < n_elem; begin += half) {
      trips.clear();
      const std::size_t end = std::min(n_elem, begin + half);
      for (std::size_t e = begin; e < end; ++e) {
        const auto& m = ke[rve.stiff(e) ? 1 : 0];
        const auto& dofs = edofs[e];
        for (int a = 0; a < NDof; ++a) {
          const int r = dofs[static_cast<std::size_t>(a)] - dpn;
          if (r < 0) continue;
          for (int bcol = 0; bcol < NDof; ++bcol) {
            const int col = dofs[static_cast<std::size_t>(bcol)] - dpn;
            if (col < 0) continue;
            trips.emplace_back(r, col, m(a, bcol));
          }
        }
      }
      SpMat part(n_red, n_red);
      part.setFromTriplets(trips.begin(), trips.end());
      k += part;
    }
  }
  k.makeCompressed();

  // right-hand sides: f_e = -B_int^T C_e eps
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n_red, NStrain);
  Eigen::VectorXd rhs_scale = Eigen::VectorXd::Zero(NStrain);
  for (std::size_t e = 0; e < n_elem; ++e) {
    const auto& ce = c[rve.stiff(e) ? 1 : 0];
    const Eigen::Matrix<double, NDof, NStrain> fe = -b_int.transpose() * ce;
    rhs_scale += fe.colwise().squaredNorm().transpose();
    for (int a = 0; a < NDof; ++a) {
      const int r = edofs[e][static_cast<std::size_t>(a)] - dpn;
      if (r >= 0) rhs.row(r) += fe.row(a);
    }
  }

  Eigen::MatrixXd u(n_red, NStrain);
  if (dim == 2 || n_red <= kDirect3dLimit) {
    Eigen::SimplicialLDLT<SpMat> ldlt(k);
    if (ldlt.info() != Eigen::Success) throw SolverError("homogenize_fe: factorization failed");
    u = ldlt.solve(rhs);
  } else {
    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper, Eigen::IncompleteCholesky<double>> cg;
    cg.setTolerance(tolerance * 1e-2);
    cg.setMaxIterations(static_cast<Eigen::Index>(20 * std::sqrt(static_cast<double>(n_red))) + 2000);
    cg.compute(k);
    if (cg.info() != Eigen::Success) throw SolverError("homogenize_fe: preconditioner setup failed");
    for (int s = 0; s < NStrain; ++s) u.col(s) = cg.solve(rhs.col(s));
  }
  for (int s = 0; s < NStrain; ++s) {
    const double ref = std::max(std::sqrt(rhs_scale(s)), 1e-300);
    const double res = (k * u.col(s) - rhs.col(s)).norm() / ref;
    if (!(res < tolerance))
      throw SolverError("homogenize_fe: unit-strain solve " + std::to_string(s) +
                        " residual " + std::to_string(res) + " above tolerance");
  }

  // volume-averaged stresses, the unit cell has volume 1
  Eigen::MatrixXd chom = Eigen::MatrixXd::Zero(NStrain, NStrain);
  Eigen::Matrix<double, NDof, 1> ue;
  for (std::size_t e = 0; e < n_elem; ++e) {
    const auto& ce = c[rve.stiff(e) ? 1 : 0];
    for (int s = 0; s < NStrain; ++s) {
      for (int a = 0; a < NDof; ++a) {
        const int r = edofs[e][static_cast<std::size_t>(a)] - dpn;
        ue(a) = r >= 0 ? u(r, s) : 0.0;
      }
      Eigen::Matrix<double, NStrain, 1> strain = b_int * ue;
      strain(s) += volume_e;
      chom.col(s) += ce * strain;
    }
  }
  chom = 0.5 * (chom + chom.transpose());
  return {dim, chom};
}

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError("catalog: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
  out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw FormatError("catalog: truncated data");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string fmt_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

ConstitutiveTensor homogenize_fe(const RveImage& rve, const IsotropicPhase& stiff,
                                 const IsotropicPhase& compliant,
                                 const HomogenizationOptions& options) {
  stiff.validate();
  compliant.validate();
  const int dim = rve.dimension();
  if (dim != 2 && dim != 3) throw ParameterError("homogenize_fe: image must be 2D or 3D");
  for (int d : rve.dims)
    if (d < 2) throw ParameterError("homogenize_fe: every axis needs at least 2 cells");

  PeriodicGrid grid;
  grid.dims = rve.dims;
  grid.dofs_per_node = dim;
  grid.nodes = 1;
  for (int d : rve.dims) grid.nodes *= d;

  if (dim == 2) {
    if (options.hypothesis == Hypothesis::ThreeD)
      throw ParameterError("homogenize_fe: 2D images need a plane hypothesis");
    const double hx = 1.0 / rve.dims[0];
    const double hy = 1.0 / rve.dims[1];
    std::array<Eigen::Matrix3d, 2> c{isotropic_tensor(compliant, 2, options.hypothesis).voigt(),
                                     isotropic_tensor(stiff, 2, options.hypothesis).voigt()};
    std::array<QuadK, 2> ke{quad_stiffness(c[0], hx, hy), quad_stiffness(c[1], hx, hy)};
    return solve_periodic<8, 3>(rve, grid, c, ke, quad_strain_integral(hx, hy), hx * hy,
                                options.tolerance);
  }
  const double hx = 1.0 / rve.dims[0];
  const double hy = 1.0 / rve.dims[1];
  const double hz = 1.0 / rve.dims[2];
  std::array<Matrix6d, 2> c{isotropic_tensor(compliant, 3, Hypothesis::ThreeD).voigt(),
                            isotropic_tensor(stiff, 3, Hypothesis::ThreeD).voigt()};
  std::array<HexK, 2> ke{hex_stiffness(c[0], hx, hy, hz), hex_stiffness(c[1], hx, hy, hz)};
  return solve_periodic<24, 6>(rve, grid, c, ke, hex_strain_integral(hx, hy, hz), hx * hy * hz,
                               options.tolerance);
}

void MicrostructureCatalog::validate() const {
  if (entries.empty()) throw ParameterError("catalog: needs at least one entry");
  if (density.size() != entries.size()) throw ParameterError("catalog: density size mismatch");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].dim() != dim)
      throw ParameterError("catalog: entry " + std::to_string(i) + " has the wrong dimension");
    if (!entries[i].is_positive_definite())
      throw SolverError("catalog: entry " + std::to_string(i) + " is not positive definite");
  }
}

MicrostructureCatalog MicrostructureCatalog::single(const ConstitutiveTensor& c) {
  MicrostructureCatalog cat;
  cat.dim = c.dim();
  cat.entries = {c};
  cat.provenance = {"explicit"};
  cat.density = {1.0};
  cat.generator = "explicit";
  return cat;
}

std::string describe(const CatalogGenerator& generator) {
  std::ostringstream s;
  s.precision(17);
  if (const auto* g = std::get_if<RandomFieldGenerator>(&generator)) {
    s << "random_field period=" << g->period << " max_wavenumber=" << g->max_wavenumber
      << " correlation_length=" << g->correlation_length << " resolution=" << g->resolution
      << " threshold=" << g->threshold << " E_stiff=" << g->stiff.E << " nu_stiff=" << g->stiff.nu
      << " E_compliant=" << g->compliant.E << " nu_compliant=" << g->compliant.nu
      << " hypothesis=" << to_string(g->hypothesis);
  } else if (const auto* f = std::get_if<FiberGenerator>(&generator)) {
    const auto r = [&](const char* name, const Range& range) {
      s << ' ' << name << "=[" << range.lower << ',' << range.upper << ']';
    };
    s << "fiber";
    r("E_fiber", f->bounds.e_fiber);
    r("E_matrix", f->bounds.e_matrix);
    r("nu_fiber", f->bounds.nu_fiber);
    r("nu_matrix", f->bounds.nu_matrix);
    r("aspect_ratio", f->bounds.aspect_ratio);
    r("angle_inplane", f->bounds.angle_inplane);
    r("angle_outplane", f->bounds.angle_outplane);
    r("volume_fraction", f->bounds.volume_fraction);
    s << " hypothesis=" << to_string(f->hypothesis);
  } else {
    const auto& u = std::get<UniformGenerator>(generator);
    s << "uniform E=" << u.phase.E << " nu=" << u.phase.nu << " hypothesis=" << to_string(u.hypothesis);
  }
  return s.str();
}

RveImage random_field_image(const RandomFieldGenerator& g, RandomStream& stream) {
  if (g.resolution < 2) throw ParameterError("random field generator: resolution must be >= 2");
  const SpectralField field =
      sample_spectral_coefficients(g.period, g.max_wavenumber, stream, g.correlation_length);
  if (g.hypothesis == Hypothesis::ThreeD)
    return level_cut(evaluate_field(field, {g.resolution, g.resolution, g.resolution}), g.threshold);
  return level_cut(evaluate_plane(field, {g.resolution, g.resolution, g.resolution}, 0, 0), g.threshold);
}

ConstitutiveTensor random_field_entry(const RandomFieldGenerator& g, RandomStream& stream) {
  const RveImage image = random_field_image(g, stream);
  HomogenizationOptions opts;
  opts.hypothesis = g.hypothesis == Hypothesis::ThreeD ? Hypothesis::PlaneStress : g.hypothesis;
  return homogenize_fe(image, g.stiff, g.compliant, opts);
}

MicrostructureCatalog build_catalog(std::size_t count, const CatalogGenerator& generator,
                                    const RandomStream& stream, unsigned threads) {
  if (count == 0) throw ParameterError("build_catalog: count must be >= 1");
  MicrostructureCatalog cat;
  cat.generator = describe(generator);
  cat.seed = stream.seed();

  std::visit(
      [&](const auto& g) {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, FiberGenerator>) {
          // bounds are checked up front so errors do not look entry-specific
          RandomStream probe = stream;
          sample_fiber(g.bounds, probe);
        }
        cat.dim = g.hypothesis == Hypothesis::ThreeD ? 3 : 2;
      },
      generator);

  std::vector<ConstitutiveTensor> entries(count);
  std::vector<std::string> errors(count);
  parallel_for(count, threads, [&](std::size_t i) {
    RandomStream s = stream.substream(stream.stream_id() + i);
    try {
      std::visit(
          [&](const auto& g) {
            using G = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<G, RandomFieldGenerator>) {
              entries[i] = random_field_entry(g, s);
            } else if constexpr (std::is_same_v<G, FiberGenerator>) {
              const ConstitutiveTensor c3 = mori_tanaka(sample_fiber(g.bounds, s));
              entries[i] = g.hypothesis == Hypothesis::ThreeD ? c3 : reduce_to_plane(c3, g.hypothesis);
            } else {
              entries[i] = isotropic_tensor(g.phase, g.hypothesis == Hypothesis::ThreeD ? 3 : 2,
                                            g.hypothesis);
            }
          },
          generator);
      if (!entries[i].is_positive_definite()) errors[i] = "tensor is not positive definite";
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  });
  for (std::size_t i = 0; i < count; ++i)
    if (!errors[i].empty()) throw SolverError("build_catalog: entry " + std::to_string(i) + ": " + errors[i]);

  cat.entries = std::move(entries);
  cat.density.assign(count, 1.0);
  cat.provenance.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    cat.provenance[i] = "stream " + std::to_string(stream.stream_id() + i);
  return cat;
}

void write_catalog(const std::filesystem::path& path, const MicrostructureCatalog& catalog) {
  catalog.validate();
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("catalog: cannot open " + path.string() + " for writing");
    out.write("CTLG", 4);
    write_u32(out, static_cast<std::uint32_t>(catalog.dim));
    write_u32(out, static_cast<std::uint32_t>(catalog.size()));
    for (const auto& c : catalog.entries)
      for (int i = 0; i < c.voigt().rows(); ++i)
        for (int j = 0; j < c.voigt().cols(); ++j) write_f64(out, c(i, j));
    if (!out) throw FormatError("catalog: write failed for " + path.string());
  }
  std::ofstream man(path.string() + ".manifest");
  if (!man) throw FormatError("catalog: cannot write manifest for " + path.string());
  man << "generator " << catalog.generator << '\n';
  man << "seed " << catalog.seed << '\n';
  man << "dim " << catalog.dim << '\n';
  man << "count " << catalog.size() << '\n';
  for (std::size_t i = 0; i < catalog.size(); ++i)
    man << "entry " << i << " density=" << fmt_double(catalog.density[i]) << ' ' << catalog.provenance[i] << '\n';
}

MicrostructureCatalog read_catalog(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("catalog: cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CTLG", 4) != 0) throw FormatError("catalog: bad magic in " + path.string());
  MicrostructureCatalog cat;
  const std::uint32_t dim = read_u32(in);
  const std::uint32_t count = read_u32(in);
  if (dim != 2 && dim != 3) throw FormatError("catalog: unsupported dimension");
  if (count == 0) throw FormatError("catalog: empty catalog");
  cat.dim = static_cast<int>(dim);
  const int n = dim == 2 ? 3 : 6;
  cat.entries.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = read_f64(in);
    cat.entries.emplace_back(cat.dim, m);
  }
  cat.density.assign(count, 1.0);
  cat.provenance.assign(count, "file");

  std::ifstream man(path.string() + ".manifest");
  std::string line;
  while (man && std::getline(man, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "generator") {
      std::getline(ls >> std::ws, cat.generator);
    } else if (key == "seed") {
      ls >> cat.seed;
    } else if (key == "entry") {
      std::size_t idx = 0;
      std::string dens;
      ls >> idx >> dens;
      if (idx < count && dens.rfind("density=", 0) == 0) {
        cat.density[idx] = std::stod(dens.substr(8));
        std::string rest;
        std::getline(ls >> std::ws, rest);
        cat.provenance[idx] = rest;
      }
    }
  }
  cat.validate();
  return cat;
}

}  // namespace sgtopo
