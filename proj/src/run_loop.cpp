#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "sgtopo/optimizers.hpp"

namespace sgtopo {

std::vector<Layout> sample_layouts(RandomStream& stream, std::size_t elements, std::size_t catalog_size,
                                   std::size_t count) {
  if (catalog_size == 0) throw ParameterError("sample_layouts: empty catalog");
  std::vector<Layout> out(count, Layout(elements));
  for (auto& layout : out)
    for (auto& id : layout) id = static_cast<std::uint32_t>(stream.index(catalog_size));
  return out;
}

RunState initial_run_state(const Eigen::VectorXd& theta, std::uint64_t seed, const OptimizerSpec& spec) {
  spec.validate();
  RunState s;
  s.theta = theta;
  s.layouts = RandomStream(seed, streams::kLayouts);
  s.adam.beta_m = spec.beta_m;
  s.adam.beta_v = spec.beta_v;
  s.adam.epsilon = spec.epsilon;
  s.adam.eta = spec.eta;
  s.gcmma.params = spec.gcmma;
  return s;
}

namespace {

double window_mean(const std::vector<HistoryRow>& h, std::size_t begin, std::size_t count) {
  double s = 0.0;
  for (std::size_t i = begin; i < begin + count; ++i) s += h[i].objective;
  return s / static_cast<double>(count);
}

}  // namespace

void run_loop(const MacroModel& model, const std::vector<QuadK>& library, const OptimizerSpec& spec,
              RunState& state, const IterationCallback& callback) {
  spec.validate();
  if (state.theta.size() != static_cast<Eigen::Index>(model.design_size()))
    throw ParameterError("run_loop: design has the wrong length");
  if (spec.penalty.kappa.size() != 1) throw ParameterError("run_loop: expected one penalty factor for the mass constraint");
  if (library.empty()) throw ParameterError("run_loop: empty catalog");
  const Range bounds = model.options().bounds;
  const auto elements = static_cast<std::size_t>(model.mesh().element_count());

  while (state.iteration < spec.iterations && !state.stopped_early) {
    const auto t0 = std::chrono::steady_clock::now();
    const int it = state.iteration + 1;
    const auto layouts = sample_layouts(state.layouts, elements, library.size(), spec.samples);
    const DesignFields fields = model.fields(state.theta);
    GradientBundle b;
    try {
      if (!(state.psi0 > 0.0)) {
        state.psi0 = stochastic_gradient_bundle(model, fields, layouts, library, 1.0, spec.threads).strain_energy;
        if (!(state.psi0 > 0.0) || !std::isfinite(state.psi0))
          throw SolverError("initial strain energy is not positive");
      }
      b = stochastic_gradient_bundle(model, fields, layouts, library, state.psi0, spec.threads);
    } catch (const SolverError& e) {
      throw SolverError("iteration " + std::to_string(it) + ": " + e.what());
    }

    Eigen::VectorXd next;
    switch (spec.algorithm) {
      case Algorithm::Sgd:
        next = sgd_step(spec.eta, state.theta, penalty_descent_direction(b.d_objective, {b.d_penalty}, spec.penalty),
                        bounds);
        break;
      case Algorithm::Adam:
        next = adam_step(state.adam, state.theta,
                         penalty_descent_direction(b.d_objective, {b.d_penalty}, spec.penalty), bounds);
        break;
      case Algorithm::Gcmma:
      {
        // inner iterations re-evaluate the same layouts at the trial design
        const GcmmaEvaluator trial = [&](const Eigen::VectorXd& x, double& f, std::vector<double>& g) {
          const auto tb = stochastic_gradient_bundle(model, model.fields(x), layouts, library, state.psi0, spec.threads);
          f = tb.objective;
          g = {tb.constraint};
        };
        next = gcmma_step(state.gcmma, state.theta, b.objective, b.d_objective, {b.constraint}, {b.d_constraint},
                          bounds, nullptr, trial);
      }
        break;
    }

    HistoryRow row;
    row.iteration = it;
    row.objective = b.objective;
    row.constraints = {b.constraint};
    row.penalty = b.penalty;
    row.step_norm = (next - state.theta).norm();
    if (spec.log_wall_time)
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    state.theta = std::move(next);
    state.iteration = it;
    state.history.push_back(row);

    if (spec.early_stop) {
      const auto w = static_cast<std::size_t>(spec.early_stop_window);
      const auto& h = state.history;
      if (h.size() >= 2 * w) {
        const double last = window_mean(h, h.size() - w, w);
        const double prev = window_mean(h, h.size() - 2 * w, w);
        if (std::abs(last - prev) < spec.early_stop_tolerance * std::abs(prev)) state.stopped_early = true;
      }
    }
    if (callback && !callback(state)) break;
  }
}

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& history) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string());
  const std::size_t m = history.empty() ? 1 : history.front().constraints.size();
  out << "iteration,objective";
  for (std::size_t j = 1; j <= m; ++j) out << ",constraint_" << j;
  out << ",step_norm,wall_ms\n";
  out.precision(17);
  for (const auto& r : history) {
    out << r.iteration << ',' << r.objective;
    for (double g : r.constraints) out << ',' << g;
    out << ',' << r.step_norm << ',' << r.wall_ms << '\n';
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
    out_.write(reinterpret_cast<const char*>(b), 8);
  }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
    out_.write(reinterpret_cast<const char*>(b), 4);
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void vec(const Eigen::VectorXd& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  }
  void str(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  std::uint64_t u64() {
    unsigned char b[8];
    read(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    read(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  Eigen::VectorXd vec() {
    const std::uint64_t n = u64();
    if (n > (1ull << 32)) throw FormatError("checkpoint: implausible vector length");
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64();
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > (1ull << 24)) throw FormatError("checkpoint: implausible string length");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

 private:
  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) throw FormatError("checkpoint: truncated file");
  }
  std::istream& in_;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const RunState& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string());
  out.write("CKPT", 4);
  Writer w(out);
  w.u32(kCheckpointVersion);
  w.i64(s.iteration);
  w.f64(s.psi0);
  w.u32(s.stopped_early ? 1 : 0);
  w.vec(s.theta);
  w.str(s.layouts.serialize());
  w.i64(s.adam.k);
  w.f64(s.adam.beta_m);
  w.f64(s.adam.beta_v);
  w.f64(s.adam.epsilon);
  w.f64(s.adam.eta);
  w.vec(s.adam.m);
  w.vec(s.adam.v);
  const GcmmaParams& g = s.gcmma.params;
  for (double v : {g.asyinit, g.asyincr, g.asydecr, g.albefa, g.move, g.raa0, g.c, g.d,
                   g.subproblem_tolerance, g.infeasibility_tolerance})
    w.f64(v);
  w.i64(g.inner_iterations);
  w.i64(s.gcmma.iteration);
  w.vec(s.gcmma.low);
  w.vec(s.gcmma.upp);
  w.vec(s.gcmma.xold1);
  w.vec(s.gcmma.xold2);
  w.u64(s.history.size());
  for (const auto& r : s.history) {
    w.i64(r.iteration);
    w.f64(r.objective);
    w.u64(r.constraints.size());
    for (double v : r.constraints) w.f64(v);
    w.f64(r.penalty);
    w.f64(r.step_norm);
    w.f64(r.wall_ms);
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

RunState read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "CKPT") throw FormatError("checkpoint: bad magic in " + path.string());
  Reader r(in);
  if (r.u32() != kCheckpointVersion) throw FormatError("checkpoint: unsupported version");
  RunState s;
  s.iteration = static_cast<int>(r.i64());
  s.psi0 = r.f64();
  s.stopped_early = r.u32() != 0;
  s.theta = r.vec();
  s.layouts = RandomStream::deserialize(r.str());
  s.adam.k = r.i64();
  s.adam.beta_m = r.f64();
  s.adam.beta_v = r.f64();
  s.adam.epsilon = r.f64();
  s.adam.eta = r.f64();
  s.adam.m = r.vec();
  s.adam.v = r.vec();
  GcmmaParams& g = s.gcmma.params;
  for (double* v : {&g.asyinit, &g.asyincr, &g.asydecr, &g.albefa, &g.move, &g.raa0, &g.c, &g.d,
                    &g.subproblem_tolerance, &g.infeasibility_tolerance})
    *v = r.f64();
  g.inner_iterations = static_cast<int>(r.i64());
  s.gcmma.iteration = r.i64();
  s.gcmma.low = r.vec();
  s.gcmma.upp = r.vec();
  s.gcmma.xold1 = r.vec();
  s.gcmma.xold2 = r.vec();
  const std::uint64_t rows = r.u64();
  if (rows > (1ull << 32)) throw FormatError("checkpoint: implausible history length");
  s.history.resize(rows);
  for (auto& row : s.history) {
    row.iteration = static_cast<int>(r.i64());
    row.objective = r.f64();
    const std::uint64_t m = r.u64();
    if (m > 1024) throw FormatError("checkpoint: implausible constraint count");
    row.constraints.resize(m);
    for (auto& v : row.constraints) v = r.f64();
    row.penalty = r.f64();
    row.step_norm = r.f64();
    row.wall_ms = r.f64();
  }
  return s;
}

}  // namespace sgtopo
