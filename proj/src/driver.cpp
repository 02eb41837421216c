#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "sgtopo/driver.hpp"

namespace sgtopo {

Stats summarize(const std::vector<double>& values) {
  if (values.empty()) throw ParameterError("summarize: no values");
  const auto n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  Stats s;
  s.mean = sum / n;
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) {
    s.mean = values.front();  // sum / n may be off by an ulp
    return s;
  }
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / (n - 1.0));
  }
  s.standard_error = s.std / std::sqrt(n);
  return s;
}

namespace {

McReport evaluate_layouts(const MacroModel& model, const std::vector<QuadK>& library, const Eigen::VectorXd& theta,
                          double psi0, const std::vector<Layout>& layouts, unsigned threads, bool keep_raw) {
  if (layouts.empty()) throw ParameterError("monte carlo: need at least one layout");
  if (!(psi0 > 0.0)) throw ParameterError("monte carlo: psi0 must be positive");
  const DesignFields fields = model.fields(theta);
  const std::size_t n = layouts.size();
  std::vector<double> f(n), g(n), psi(n);
  parallel_for(n, threads, [&](std::size_t i) {
    EvalResult r;
    try {
      r = evaluate(model, fields, layouts[i], library, psi0);
    } catch (const SolverError& e) {
      throw SolverError("layout " + std::to_string(i) + ": " + e.what());
    }
    f[i] = r.objective;
    g[i] = r.constraint;
    psi[i] = r.strain_energy;
  });
  McReport rep;
  rep.samples = n;
  rep.objective = summarize(f);
  rep.constraint = summarize(g);
  rep.strain_energy = summarize(psi);
  double pen = 0.0;
  for (double v : g) pen += std::max(v, 0.0) * std::max(v, 0.0);
  rep.penalty = pen / static_cast<double>(n);
  rep.mass_ratio = model.mass_ratio(fields);
  if (keep_raw) {
    rep.raw_objective = std::move(f);
    rep.raw_constraint = std::move(g);
  }
  return rep;
}

}  // namespace

McReport monte_carlo_evaluate(const MacroModel& model, const std::vector<QuadK>& library, const Eigen::VectorXd& theta,
                              double psi0, std::size_t samples, RandomStream& stream, unsigned threads,
                              bool keep_raw) {
  if (samples < 1) throw ParameterError("monte carlo: samples must be >= 1");
  const auto layouts =
      sample_layouts(stream, static_cast<std::size_t>(model.mesh().element_count()), library.size(), samples);
  return evaluate_layouts(model, library, theta, psi0, layouts, threads, keep_raw);
}

McReport exhaustive_evaluate(const MacroModel& model, const std::vector<QuadK>& library, const Eigen::VectorXd& theta,
                             double psi0, unsigned threads) {
  const auto elements = static_cast<std::size_t>(model.mesh().element_count());
  const std::size_t k = library.size();
  if (k == 0) throw ParameterError("exhaustive: empty catalog");
  std::size_t total = 1;
  for (std::size_t e = 0; e < elements; ++e) {
    if (total > 10'000'000 / k) throw ParameterError("exhaustive: more than 1e7 layouts");
    total *= k;
  }
  // layout i lists the base-k digits of i, element 0 least significant
  std::vector<Layout> layouts(total, Layout(elements));
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t r = i;
    for (std::size_t e = 0; e < elements; ++e) {
      layouts[i][e] = static_cast<std::uint32_t>(r % k);
      r /= k;
    }
  }
  return evaluate_layouts(model, library, theta, psi0, layouts, threads, false);
}

void write_mc_report(const std::filesystem::path& path, const McReport& r) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string());
  out << std::setprecision(17);
  const auto row = [&](const char* name, const Stats& s) {
    out << name << "_mean = " << s.mean << "\n"
        << name << "_std = " << s.std << "\n"
        << name << "_se = " << s.standard_error << "\n";
  };
  out << "samples = " << r.samples << "\n";
  row("objective", r.objective);
  row("constraint", r.constraint);
  row("strain_energy", r.strain_energy);
  out << "penalty_mean = " << r.penalty << "\n";
  out << "mass_ratio = " << r.mass_ratio << "\n";
  if (!r.raw_objective.empty()) {
    out << "\n# layout objective constraint\n";
    for (std::size_t i = 0; i < r.raw_objective.size(); ++i)
      out << i << ' ' << r.raw_objective[i] << ' ' << r.raw_constraint[i] << "\n";
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

double calibrate_psi0(const MacroModel& model, const std::vector<QuadK>& library, const Eigen::VectorXd& theta,
                      const RandomStream& layouts, std::size_t samples, unsigned threads) {
  RandomStream copy = layouts;
  const auto batch =
      sample_layouts(copy, static_cast<std::size_t>(model.mesh().element_count()), library.size(), samples);
  const double psi0 = stochastic_gradient_bundle(model, model.fields(theta), batch, library, 1.0, threads).strain_energy;
  if (!(psi0 > 0.0) || !std::isfinite(psi0)) throw SolverError("initial strain energy is not positive");
  return psi0;
}

void write_design(const std::filesystem::path& path, const MacroMesh& mesh, const Eigen::VectorXd& theta) {
  if (theta.size() != mesh.node_count()) throw ParameterError("write_design: theta has the wrong length");
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string());
  out << "sgtopo-design " << mesh.nx << ' ' << mesh.ny << "\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < theta.size(); ++i) out << theta(i) << "\n";
  if (!out) throw FormatError("failed writing " + path.string());
}

Eigen::VectorXd read_design(const std::filesystem::path& path, const MacroMesh& mesh) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string magic;
  int nx = 0, ny = 0;
  in >> magic >> nx >> ny;
  if (!in || magic != "sgtopo-design") throw FormatError(path.string() + ": not a design file");
  if (nx != mesh.nx || ny != mesh.ny)
    throw FormatError(path.string() + ": design is " + std::to_string(nx) + "x" + std::to_string(ny) + ", mesh is " +
                      std::to_string(mesh.nx) + "x" + std::to_string(mesh.ny));
  Eigen::VectorXd theta(mesh.node_count());
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    if (!(in >> theta(i))) throw FormatError(path.string() + ": truncated design");
  return theta;
}

MicrostructureCatalog obtain_catalog(const ProblemConfig& config) {
  if (config.catalog.source == CatalogSource::File) return read_catalog(config.catalog.path);
  return build_catalog(config.catalog.count, config.catalog.generator(),
                       RandomStream(config.seed, streams::kCatalog), config.threads);
}

Eigen::VectorXd initial_design(const MacroModel& model, const ProblemConfig& config) {
  return model.clamp(seed_holes(model.mesh(), config.holes_x, config.holes_y, config.hole_radius) / model.mesh().h);
}

namespace {

std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

}  // namespace

std::filesystem::path new_run_directory(const ProblemConfig& config) {
  const std::string base = utc_stamp() + "-" + hex(config_hash(config));
  std::filesystem::path dir = config.output / base;
  for (int k = 2; std::filesystem::exists(dir); ++k) dir = config.output / (base + "-" + std::to_string(k));
  std::filesystem::create_directories(dir);
  return dir;
}

namespace {

class Manifest {
 public:
  Manifest(std::filesystem::path path, const ProblemConfig& config) : path_(std::move(path)), config_(to_ini(config)) {
    set("config_hash", hex(config_hash(config)));
  }
  void set(const std::string& key, const std::string& value) {
    for (auto& kv : result_)
      if (kv.first == key) {
        kv.second = value;
        return;
      }
    result_.emplace_back(key, value);
  }
  void set(const std::string& key, double value) {
    std::ostringstream s;
    s << std::setprecision(17) << value;
    set(key, s.str());
  }
  void write() const {
    std::ofstream out(path_);
    if (!out) throw FormatError("cannot open " + path_.string());
    out << "# resolved parameters; load this file as a config to replay the run\n" << config_ << "\n[result]\n";
    for (const auto& [k, v] : result_) out << k << " = " << v << "\n";
  }

 private:
  std::filesystem::path path_;
  std::string config_;
  std::vector<std::pair<std::string, std::string>> result_;
};

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

RunResult run(const ProblemConfig& config, const RunOptions& options) {
  RunResult result;
  config.validate();
  result.directory = options.directory ? *options.directory : new_run_directory(config);
  std::filesystem::create_directories(result.directory);
  const auto& dir = result.directory;
  Manifest manifest(dir / "manifest.ini", config);
  manifest.set("status", "RUNNING");
  manifest.write();
  const auto log = [&](const std::string& msg) {
    if (!options.quiet) std::cerr << msg << std::endl;
  };
  const auto started = std::chrono::steady_clock::now();

  std::optional<MacroModel> model;
  std::string stage = "catalog";
  try {
    log("catalog: " + std::string(config.catalog.source == CatalogSource::File ? "reading " + config.catalog.path.string()
                                                                               : "building " +
                                                                                     std::to_string(config.catalog.count) +
                                                                                     " entries"));
    const MicrostructureCatalog catalog = obtain_catalog(config);
    if (config.catalog.source == CatalogSource::Generate) write_catalog(dir / "catalog.bin", catalog);
    manifest.set("catalog_entries", std::to_string(catalog.size()));
    manifest.set("catalog_generator", one_line(catalog.generator));

    stage = "model";
    model.emplace(config.mesh(), config.model);
    const auto library = element_library(model->mesh(), catalog);
    OptimizerSpec spec = config.optimizer;
    spec.threads = config.threads;

    stage = "initial design";
    if (options.resume) {
      result.state = read_checkpoint(*options.resume);
      if (result.state.theta.size() != static_cast<Eigen::Index>(model->design_size()))
        throw ParameterError("checkpoint design does not match the mesh");
      manifest.set("resumed_from", options.resume->string());
      manifest.set("resumed_at_iteration", std::to_string(result.state.iteration));
    } else {
      result.state = initial_run_state(initial_design(*model, config), config.seed, spec);
      write_design(dir / "design_initial.txt", model->mesh(), result.state.theta);
      const DesignFields f0 = model->fields(result.state.theta);
      write_design_vtk(dir / "design_initial.vtk", model->mesh(), f0);
      write_density_pgm(dir / "design_initial.pgm", model->mesh(), f0.density);
      stage = "psi0 calibration";
      result.state.psi0 =
          calibrate_psi0(*model, library, result.state.theta, result.state.layouts, spec.samples, config.threads);
    }
    result.psi0 = result.state.psi0;
    manifest.set("psi0", result.psi0);
    manifest.write();

    if (config.verify_initial && !options.resume) {
      stage = "initial verification";
      log("verifying the initial design over " + std::to_string(config.verification_samples) + " layouts");
      RandomStream s(config.seed, streams::kInitialVerification);
      result.initial_mc = monte_carlo_evaluate(*model, library, result.state.theta, result.psi0,
                                               config.verification_samples, s, config.threads, config.keep_raw);
      write_mc_report(dir / "mc_initial.txt", *result.initial_mc);
      manifest.set("initial_mc_objective", result.initial_mc->objective.mean);
    }

    if (spec.iterations > 0) {
      stage = "optimization";
      const auto callback = [&](const RunState& s) {
        if (config.checkpoint_every > 0 && s.iteration % config.checkpoint_every == 0)
          write_checkpoint(dir / "checkpoint.bin", s);
        if (!options.quiet && (s.iteration % 10 == 0 || s.iteration == 1)) {
          const auto& r = s.history.back();
          std::ostringstream m;
          m << "iteration " << r.iteration << "  R = " << r.objective << "  g = " << r.constraints.front();
          log(m.str());
        }
        return true;
      };
      run_loop(*model, library, spec, result.state, callback);

      stage = "export";
      write_history_csv(dir / "history.csv", result.state.history);
      write_checkpoint(dir / "checkpoint.bin", result.state);
      write_design(dir / "design_final.txt", model->mesh(), result.state.theta);
      const DesignFields ff = model->fields(result.state.theta);
      write_design_vtk(dir / "design_final.vtk", model->mesh(), ff);
      write_density_pgm(dir / "design_final.pgm", model->mesh(), ff.density);
      manifest.set("iterations_done", std::to_string(result.state.iteration));
      manifest.set("stopped_early", result.state.stopped_early ? "true" : "false");
      manifest.set("final_mass_ratio", model->mass_ratio(ff));

      if (!options.skip_verification) {
        stage = "final verification";
        log("verifying the final design over " + std::to_string(config.verification_samples) + " layouts");
        RandomStream s(config.seed, streams::kVerification);
        result.final_mc = monte_carlo_evaluate(*model, library, result.state.theta, result.psi0,
                                               config.verification_samples, s, config.threads, config.keep_raw);
        write_mc_report(dir / "mc_final.txt", *result.final_mc);
        manifest.set("final_mc_objective", result.final_mc->objective.mean);
        manifest.set("final_mc_objective_se", result.final_mc->objective.standard_error);
      }
    }
    manifest.set("status", "COMPLETED");
  } catch (const std::exception& e) {
    result.exit_code = 1;
    result.error = stage + ": " + e.what();
    manifest.set("status", "FAILED");
    manifest.set("error", one_line(result.error));
    // keep whatever the loop produced
    try {
      if (!result.state.history.empty()) write_history_csv(dir / "history.csv", result.state.history);
      if (model && result.state.theta.size() == static_cast<Eigen::Index>(model->design_size()))
        write_checkpoint(dir / "checkpoint.bin", result.state);
    } catch (const std::exception&) {
    }
  }
  manifest.set("elapsed_seconds",
               std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
  manifest.write();
  return result;
}

}  // namespace sgtopo
