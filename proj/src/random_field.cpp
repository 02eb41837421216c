#include "sgtopo/random_field.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>

namespace sgtopo {

namespace {

using cplx = std::complex<double>;

void require_positive_dims(const std::array<int, 3>& dims) {
  for (int d : dims)
    if (d <= 0) throw ParameterError("evaluate_field: grid dimensions must be positive");
}

std::vector<double> cell_centres(int count, double period) {
  std::vector<double> x(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) x[static_cast<std::size_t>(j)] = (j + 0.5) * period / count;
  return x;
}

// phases[p * side + (k + N)] = exp(i w k x_p)
std::vector<cplx> phase_table(const std::vector<double>& coords, int half, double omega) {
  const int side = 2 * half + 1;
  std::vector<cplx> table(coords.size() * static_cast<std::size_t>(side));
  for (std::size_t p = 0; p < coords.size(); ++p)
    for (int k = -half; k <= half; ++k)
      table[p * side + static_cast<std::size_t>(k + half)] = std::polar(1.0, omega * k * coords[p]);
  return table;
}

// Separable evaluation on the tensor grid xs (x) ys (x) zs, real part only.
std::vector<double> separable_sum(const SpectralField& field, const std::vector<double>& xs,
                                  const std::vector<double>& ys, const std::vector<double>& zs) {
  const int half = field.half_terms;
  const std::size_t side = static_cast<std::size_t>(field.side());
  const double omega = 2.0 * std::numbers::pi / field.period;
  const auto px = phase_table(xs, half, omega);
  const auto py = phase_table(ys, half, omega);
  const auto pz = phase_table(zs, half, omega);
  const std::size_t nx = xs.size(), ny = ys.size(), nz = zs.size();

  // Skip lattice planes that are entirely outside the truncation sphere.
  std::vector<char> l_active(side, 0);
  for (std::size_t l = 0; l < side; ++l)
    for (std::size_t mn = 0; mn < side * side && !l_active[l]; ++mn) {
      const std::size_t idx = l * side * side + mn;
      if (field.a[idx] != 0.0 || field.b[idx] != 0.0) l_active[l] = 1;
    }

  // stage1[(i * side + m) * side + n] = sum_l c_lmn e^{i w l x_i}
  std::vector<cplx> stage1(nx * side * side, cplx{});
  for (std::size_t i = 0; i < nx; ++i) {
    cplx* out = &stage1[i * side * side];
    for (std::size_t l = 0; l < side; ++l) {
      if (!l_active[l]) continue;
      const cplx e = px[i * side + l];
      const double* a = &field.a[l * side * side];
      const double* b = &field.b[l * side * side];
      for (std::size_t mn = 0; mn < side * side; ++mn) {
        if (a[mn] == 0.0 && b[mn] == 0.0) continue;
        out[mn] += cplx(a[mn], b[mn]) * e;
      }
    }
  }

  // stage2[(i * ny + j) * side + n] = sum_m stage1 e^{i w m y_j}
  std::vector<cplx> stage2(nx * ny * side, cplx{});
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) {
      cplx* out = &stage2[(i * ny + j) * side];
      for (std::size_t m = 0; m < side; ++m) {
        const cplx e = py[j * side + m];
        const cplx* in = &stage1[(i * side + m) * side];
        for (std::size_t n = 0; n < side; ++n) out[n] += in[n] * e;
      }
    }

  std::vector<double> values(nx * ny * nz);
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) {
      const cplx* in = &stage2[(i * ny + j) * side];
      for (std::size_t k = 0; k < nz; ++k) {
        double sum = 0.0;
        const cplx* e = &pz[k * side];
        for (std::size_t n = 0; n < side; ++n) sum += (in[n] * e[n]).real();
        values[(i * ny + j) * nz + k] = sum;
      }
    }
  return values;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char bytes[4] = {};
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (!in) throw FormatError("unexpected end of file");
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

}  // namespace

std::size_t SpectralField::index(int l, int m, int n) const {
  const int N = half_terms;
  if (std::abs(l) > N || std::abs(m) > N || std::abs(n) > N)
    throw BoundsError("SpectralField: lattice index out of range");
  const std::size_t s = static_cast<std::size_t>(side());
  return (static_cast<std::size_t>(l + N) * s + static_cast<std::size_t>(m + N)) * s +
         static_cast<std::size_t>(n + N);
}

double SpectralField::wavenumber(int l, int m, int n) const {
  const double w = 2.0 * std::numbers::pi / period;
  return w * std::sqrt(static_cast<double>(l * l + m * m + n * n));
}

void SpectralField::set_pair(int l, int m, int n, double a_value, double b_value) {
  if (l == 0 && m == 0 && n == 0) {
    if (a_value != 0.0 || b_value != 0.0)
      throw ParameterError("SpectralField: the (0,0,0) coefficient is fixed at zero");
    return;
  }
  a[index(l, m, n)] = a_value;
  b[index(l, m, n)] = b_value;
  a[index(-l, -m, -n)] = a_value;
  b[index(-l, -m, -n)] = -b_value;
}

SpectralField SpectralField::zeros(double period, double max_wavenumber,
                                   double correlation_length) {
  SpectralField field;
  field.period = period;
  field.max_wavenumber = max_wavenumber;
  field.correlation_length = correlation_length;
  field.half_terms = half_terms_for(period, max_wavenumber);
  const std::size_t s = static_cast<std::size_t>(field.side());
  field.a.assign(s * s * s, 0.0);
  field.b.assign(s * s * s, 0.0);
  return field;
}

int half_terms_for(double period, double max_wavenumber) {
  if (!(period > 0.0) || !(max_wavenumber > 0.0))
    throw ParameterError("random field: period and maximum wavenumber must be positive");
  const double n = max_wavenumber * period / (2.0 * std::numbers::pi);
  const double rounded = std::round(n);
  if (std::abs(n - rounded) > 1e-9 * std::max(1.0, n) || rounded < 1.0)
    throw ParameterError("random field: K*T/(2*pi) = " + std::to_string(n) +
                         " is not a positive integer");
  return static_cast<int>(rounded);
}

double truncated_spectral_density(double f, double max_wavenumber, double correlation_length) {
  if (f >= max_wavenumber) return 0.0;
  const double ell = correlation_length;
  const double density =
      ell * ell * ell * std::exp(-f * f * ell * ell / 4.0) / std::pow(4.0 * std::numbers::pi, 1.5);
  // int_0^K 4 pi f^2 S(f) df in closed form
  const double kl = max_wavenumber * ell;
  const double mass = std::erf(kl / 2.0) - kl / std::sqrt(std::numbers::pi) * std::exp(-kl * kl / 4.0);
  return density / mass;
}

double coefficient_stddev(const SpectralField& field, int l, int m, int n) {
  if (l == 0 && m == 0 && n == 0) return 0.0;
  const double f = field.wavenumber(l, m, n);
  const double cell = std::pow(2.0 * std::numbers::pi / field.period, 3);
  return std::sqrt(0.5 * truncated_spectral_density(f, field.max_wavenumber, field.correlation_length) *
                   cell);
}

bool in_sampled_half(int l, int m, int n) {
  return l > 0 || (l == 0 && m > 0) || (l == 0 && m == 0 && n > 0);
}

SpectralField sample_spectral_coefficients(double period, double max_wavenumber,
                                           RandomStream& stream, double correlation_length) {
  if (!(correlation_length > 0.0))
    throw ParameterError("random field: correlation length must be positive");
  SpectralField field = SpectralField::zeros(period, max_wavenumber, correlation_length);
  const int N = field.half_terms;
  for (int l = 0; l <= N; ++l)
    for (int m = -N; m <= N; ++m)
      for (int n = -N; n <= N; ++n) {
        if (!in_sampled_half(l, m, n)) continue;
        if (field.wavenumber(l, m, n) >= max_wavenumber) continue;
        const double sigma = coefficient_stddev(field, l, m, n);
        const double a = sigma * stream.normal();
        const double b = sigma * stream.normal();
        field.set_pair(l, m, n, a, b);
      }
  return field;
}

FieldGrid evaluate_field(const SpectralField& field, const std::array<int, 3>& dims) {
  require_positive_dims(dims);
  FieldGrid grid;
  grid.dims = {dims[0], dims[1], dims[2]};
  grid.values = separable_sum(field, cell_centres(dims[0], field.period),
                              cell_centres(dims[1], field.period),
                              cell_centres(dims[2], field.period));
  return grid;
}

FieldGrid evaluate_plane(const SpectralField& field, const std::array<int, 3>& dims, int axis,
                         int plane) {
  require_positive_dims(dims);
  if (axis < 0 || axis > 2) throw BoundsError("evaluate_plane: axis must be 0, 1 or 2");
  if (plane < 0 || plane >= dims[static_cast<std::size_t>(axis)])
    throw BoundsError("evaluate_plane: plane index out of range");
  std::array<std::vector<double>, 3> coords;
  for (int d = 0; d < 3; ++d) {
    const auto centres = cell_centres(dims[static_cast<std::size_t>(d)], field.period);
    coords[static_cast<std::size_t>(d)] =
        d == axis ? std::vector<double>{centres[static_cast<std::size_t>(plane)]} : centres;
  }
  FieldGrid grid;
  for (int d = 0; d < 3; ++d)
    if (d != axis) grid.dims.push_back(dims[static_cast<std::size_t>(d)]);
  grid.values = separable_sum(field, coords[0], coords[1], coords[2]);
  return grid;
}

bool RveImage::stiff(int i, int j) const {
  return phase[static_cast<std::size_t>(i) * static_cast<std::size_t>(dims[1]) +
               static_cast<std::size_t>(j)] != 0;
}

bool RveImage::stiff(int i, int j, int k) const {
  const std::size_t ny = static_cast<std::size_t>(dims[1]);
  const std::size_t nz = static_cast<std::size_t>(dims[2]);
  return phase[(static_cast<std::size_t>(i) * ny + static_cast<std::size_t>(j)) * nz +
               static_cast<std::size_t>(k)] != 0;
}

double RveImage::volume_fraction() const {
  if (phase.empty()) return 0.0;
  std::size_t count = 0;
  for (auto p : phase) count += p != 0;
  return static_cast<double>(count) / static_cast<double>(phase.size());
}

RveImage RveImage::uniform(std::vector<int> dims, bool stiff) {
  std::size_t total = 1;
  for (int d : dims) {
    if (d <= 0) throw ParameterError("RveImage: dimensions must be positive");
    total *= static_cast<std::size_t>(d);
  }
  RveImage image;
  image.dims = std::move(dims);
  image.phase.assign(total, stiff ? 1 : 0);
  return image;
}

RveImage level_cut(const FieldGrid& grid, double threshold) {
  RveImage image;
  image.dims = grid.dims;
  image.phase.resize(grid.values.size());
  for (std::size_t i = 0; i < grid.values.size(); ++i)
    image.phase[i] = grid.values[i] > threshold ? 1 : 0;
  return image;
}

RveImage slice_2d(const RveImage& rve, int axis, int plane) {
  if (rve.dimension() != 3) throw ParameterError("slice_2d: expects a 3D image");
  if (axis < 0 || axis > 2) throw BoundsError("slice_2d: axis must be 0, 1 or 2");
  if (plane < 0 || plane >= rve.dims[static_cast<std::size_t>(axis)])
    throw BoundsError("slice_2d: plane index out of range");
  RveImage out;
  for (int d = 0; d < 3; ++d)
    if (d != axis) out.dims.push_back(rve.dims[static_cast<std::size_t>(d)]);
  out.phase.reserve(static_cast<std::size_t>(out.dims[0]) * static_cast<std::size_t>(out.dims[1]));
  for (int p = 0; p < out.dims[0]; ++p)
    for (int q = 0; q < out.dims[1]; ++q) {
      std::array<int, 3> ijk{};
      ijk[static_cast<std::size_t>(axis)] = plane;
      ijk[axis == 0 ? 1u : 0u] = p;
      ijk[axis == 2 ? 1u : 2u] = q;
      out.phase.push_back(rve.stiff(ijk[0], ijk[1], ijk[2]) ? 1 : 0);
    }
  return out;
}

FiberBounds FiberBounds::chopped_fiber_example() { return FiberBounds{}; }

void FiberRealization::validate() const {
  if (!(e_fiber > 0.0) || !(e_matrix > 0.0))
    throw ParameterError("fiber: moduli must be positive");
  if (!(volume_fraction > 0.0 && volume_fraction < 1.0))
    throw ParameterError("fiber: volume fraction must lie in (0, 1)");
  if (!(aspect_ratio >= 1.0)) throw ParameterError("fiber: aspect ratio must be >= 1");
  const double pi = std::numbers::pi;
  if (angle_inplane < 0.0 || angle_inplane > pi || angle_outplane < 0.0 || angle_outplane > pi)
    throw ParameterError("fiber: angles must lie in [0, pi]");
  if (!(nu_fiber > -1.0 && nu_fiber < 0.5) || !(nu_matrix > -1.0 && nu_matrix < 0.5))
    throw ParameterError("fiber: Poisson ratios must lie in (-1, 0.5)");
}

FiberRealization sample_fiber(const FiberBounds& bounds, RandomStream& stream) {
  auto draw = [&stream](const Range& r) {
    if (r.lower > r.upper) throw ParameterError("sample_fiber: lower bound exceeds upper bound");
    const double v = stream.uniform(r.lower, r.upper);
    return r.lower == r.upper ? r.lower : v;
  };
  FiberRealization f;
  f.e_fiber = draw(bounds.e_fiber);
  f.e_matrix = draw(bounds.e_matrix);
  f.nu_fiber = draw(bounds.nu_fiber);
  f.nu_matrix = draw(bounds.nu_matrix);
  f.aspect_ratio = draw(bounds.aspect_ratio);
  f.angle_inplane = draw(bounds.angle_inplane);
  f.angle_outplane = draw(bounds.angle_outplane);
  f.volume_fraction = draw(bounds.volume_fraction);
  return f;
}

void write_pgm(const std::filesystem::path& path, const RveImage& image) {
  if (image.dimension() != 2) throw ParameterError("write_pgm: expects a 2D image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("write_pgm: cannot open " + path.string());
  // rows run along the second axis so the image reads as (x right, y up)
  const int width = image.dims[0];
  const int height = image.dims[1];
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (int row = height - 1; row >= 0; --row)
    for (int col = 0; col < width; ++col) out.put(image.stiff(col, row) ? char(255) : char(0));
}

void write_rve_binary(const std::filesystem::path& path, const RveImage& image) {
  if (image.dimension() != 2 && image.dimension() != 3)
    throw ParameterError("write_rve_binary: expects a 2D or 3D image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("write_rve_binary: cannot open " + path.string());
  out.write("RVE1", 4);
  write_u32(out, static_cast<std::uint32_t>(image.dims[0]));
  write_u32(out, static_cast<std::uint32_t>(image.dims[1]));
  write_u32(out, image.dimension() == 3 ? static_cast<std::uint32_t>(image.dims[2]) : 1u);
  std::vector<unsigned char> packed((image.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < image.size(); ++i)
    if (image.phase[i]) packed[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
  out.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
}

RveImage read_rve_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("read_rve_binary: cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "RVE1") throw FormatError("read_rve_binary: bad magic");
  RveImage image;
  const int nx = static_cast<int>(read_u32(in));
  const int ny = static_cast<int>(read_u32(in));
  const int nz = static_cast<int>(read_u32(in));
  image.dims = nz == 1 ? std::vector<int>{nx, ny} : std::vector<int>{nx, ny, nz};
  const std::size_t total = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
                            static_cast<std::size_t>(nz);
  std::vector<unsigned char> packed((total + 7) / 8);
  in.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
  if (!in) throw FormatError("read_rve_binary: truncated payload");
  image.phase.resize(total);
  for (std::size_t i = 0; i < total; ++i) image.phase[i] = (packed[i / 8] >> (i % 8)) & 1u;
  return image;
}

}  // namespace sgtopo
