// sgtopo: catalog build, optimize, verify, fdcheck and rve sample.

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "sgtopo/driver.hpp"

using namespace sgtopo;

namespace {

struct Globals {
  std::filesystem::path config_path;
  std::string preset_name;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::optional<unsigned> threads;
  std::optional<std::filesystem::path> out;
  bool verbose = false;
};

ProblemConfig resolve(const Globals& g) {
  ProblemConfig c;
  if (!g.config_path.empty()) {
    c = load_config(g.config_path);
  } else if (!g.preset_name.empty()) {
    c = preset(g.preset_name);
  } else {
    throw ConfigError("one of --config or --preset is required");
  }
  std::vector<std::string> assignments = g.overrides;
  if (g.seed) assignments.push_back("run.seed=" + std::to_string(*g.seed));
  if (g.threads) assignments.push_back("run.threads=" + std::to_string(*g.threads));
  if (g.out) assignments.push_back("run.output=" + g.out->string());
  apply_overrides(c, assignments);
  return c;
}

// Config echo plus a [result] section; loadable again by --config.
void write_manifest(const std::filesystem::path& dir, const ProblemConfig& config, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& result) {
  std::ofstream out(dir / "manifest.ini");
  out << to_ini(config) << "\n[result]\ncommand = " << command << "\n";
  for (const auto& [k, v] : result) out << k << " = " << v << "\n";
}

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

void print_mc(const McReport& r) {
  std::cout << "samples " << r.samples << "\n"
            << "objective mean " << num(r.objective.mean) << " std " << num(r.objective.std) << " se "
            << num(r.objective.standard_error) << "\n"
            << "constraint mean " << num(r.constraint.mean) << " std " << num(r.constraint.std) << "\n"
            << "mass_ratio " << num(r.mass_ratio) << "\n";
}

int cmd_catalog_build(const ProblemConfig& config) {
  if (config.catalog.source != CatalogSource::Generate)
    throw ConfigError("catalog build needs catalog.source = generate");
  const auto dir = new_run_directory(config);
  const auto catalog = obtain_catalog(config);
  write_catalog(dir / "catalog.bin", catalog);
  write_manifest(dir, config, "catalog build",
                 {{"catalog_entries", std::to_string(catalog.size())}, {"catalog", (dir / "catalog.bin").string()}});
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_optimize(const ProblemConfig& config, const std::optional<std::filesystem::path>& resume,
                 const std::optional<std::filesystem::path>& run_dir, bool no_verify, bool verbose) {
  RunOptions options;
  options.resume = resume;
  options.directory = run_dir;
  options.skip_verification = no_verify;
  options.quiet = !verbose;
  const RunResult r = run(config, options);
  std::cout << r.directory.string() << "\n";
  if (r.exit_code != 0) {
    std::cerr << "error: " << r.error << "\n";
    return r.exit_code;
  }
  if (r.final_mc) print_mc(*r.final_mc);
  return 0;
}

int cmd_verify(const ProblemConfig& config, const std::filesystem::path& design, std::optional<std::size_t> samples,
               std::optional<double> psi0) {
  const MacroModel model(config.mesh(), config.model);
  const Eigen::VectorXd theta = read_design(design, model.mesh());
  const auto catalog = obtain_catalog(config);
  const auto library = element_library(model.mesh(), catalog);
  // Same normalizer as the run that produced the design.
  if (!psi0) {
    const RunState s0 = initial_run_state(initial_design(model, config), config.seed, config.optimizer);
    psi0 = calibrate_psi0(model, library, s0.theta, s0.layouts, config.optimizer.samples, config.threads);
  }
  const std::size_t n = samples.value_or(config.verification_samples);
  RandomStream stream(config.seed, streams::kVerification);
  const McReport report = monte_carlo_evaluate(model, library, theta, *psi0, n, stream, config.threads, config.keep_raw);
  const auto dir = new_run_directory(config);
  write_mc_report(dir / "mc.txt", report);
  write_manifest(dir, config, "verify",
                 {{"design", std::filesystem::absolute(design).string()},
                  {"psi0", num(*psi0)},
                  {"samples", std::to_string(n)},
                  {"objective_mean", num(report.objective.mean)}});
  std::cout << dir.string() << "\n";
  print_mc(report);
  return 0;
}

int cmd_fdcheck(const ProblemConfig& config, const std::optional<std::filesystem::path>& design,
                const std::vector<std::string>& functionals, std::size_t count, double step) {
  const MacroModel model(config.mesh(), config.model);
  const auto catalog = obtain_catalog(config);
  const auto library = element_library(model.mesh(), catalog);
  RandomStream stream(config.seed, streams::kFdCheck);

  Eigen::VectorXd theta(model.design_size());
  if (design) {
    theta = read_design(*design, model.mesh());
  } else {
    for (Eigen::Index i = 0; i < theta.size(); ++i)
      theta[i] = stream.uniform(config.model.bounds.lower, config.model.bounds.upper);
  }
  Layout layout(static_cast<std::size_t>(model.mesh().element_count()));
  for (auto& e : layout) e = static_cast<std::uint32_t>(stream.index(catalog.size()));
  count = std::min(count, model.design_size());
  std::set<std::size_t> picked;
  while (picked.size() < count) picked.insert(stream.index(model.design_size()));
  const std::vector<std::size_t> components(picked.begin(), picked.end());

  std::vector<Functional> which;
  for (const auto& name : functionals) {
    if (name == "all") {
      which = {Functional::StrainEnergy, Functional::Mass, Functional::Perimeter, Functional::Regularization};
      break;
    }
    which.push_back(parse_functional(name));
  }

  const auto dir = new_run_directory(config);
  std::vector<std::pair<std::string, std::string>> result{{"components", std::to_string(count)}, {"step", num(step)}};
  for (Functional f : which) {
    const FdReport rep = fd_check_functional(model, f, theta, layout, library, components, step);
    const auto name = to_string(f);
    std::ofstream csv(dir / ("fd_" + name + ".csv"));
    csv << "component,analytic,fd,rel_error\n" << std::setprecision(17);
    for (const auto& e : rep.entries) csv << e.component << ',' << e.analytic << ',' << e.fd << ',' << e.rel_error << '\n';
    result.emplace_back("max_rel_error_" + name, num(rep.max_rel_error));
    std::cout << name << " max_rel_error " << num(rep.max_rel_error) << "\n";
  }
  write_manifest(dir, config, "fdcheck", result);
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_rve_sample(const ProblemConfig& config, std::size_t count, bool catalog_entries) {
  if (config.catalog.kind != GeneratorKind::RandomField)
    throw ConfigError("rve sample needs catalog.generator = random_field");
  const auto& gen = config.catalog.random_field;
  if (config.catalog.hypothesis == Hypothesis::ThreeD)
    throw ConfigError("rve sample writes 2D images only");
  const auto dir = new_run_directory(config);
  // With --catalog-entries, image i is exactly catalog entry i.
  const RandomStream base(config.seed, catalog_entries ? streams::kCatalog : streams::kRveExport);
  double stiff_fraction = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    RandomStream s = base.substream(base.stream_id() + i);
    const RveImage img = random_field_image(gen, s);
    std::ostringstream name;
    name << "rve_" << std::setw(4) << std::setfill('0') << i << ".pgm";
    write_pgm(dir / name.str(), img);
    std::size_t stiff = 0;
    for (std::size_t k = 0; k < img.size(); ++k) stiff += img.stiff(k);
    stiff_fraction += static_cast<double>(stiff) / static_cast<double>(img.size());
  }
  write_manifest(dir, config, "rve sample",
                 {{"images", std::to_string(count)},
                  {"source", catalog_entries ? "catalog" : "export"},
                  {"mean_stiff_fraction", num(count ? stiff_fraction / static_cast<double>(count) : 0.0)}});
  std::cout << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topology optimization under random microstructure layouts"};
  app.require_subcommand(1);
  Globals g;
  auto* cfg = app.add_option("--config", g.config_path, "config file")->check(CLI::ExistingFile);
  app.add_option("--preset", g.preset_name, "built-in config: Ia, Ib, IIa, IIb, desk")->excludes(cfg);
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--set", g.overrides, "section.key=value, repeatable")->allow_extra_args(false);
  app.add_option("--threads", g.threads, "worker threads (0: all cores)");
  app.add_option("--out", g.out, "output root for run directories");
  app.add_flag("-v,--verbose", g.verbose, "progress on stderr");

  int status = 0;

  auto* catalog = app.add_subcommand("catalog", "microstructure catalogs");
  catalog->require_subcommand(1);
  auto* build = catalog->add_subcommand("build", "generate and homogenize the catalog");
  build->callback([&] { status = cmd_catalog_build(resolve(g)); });

  std::optional<std::filesystem::path> resume, run_dir;
  bool no_verify = false;
  auto* optimize = app.add_subcommand("optimize", "full optimize-and-verify run");
  optimize->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  optimize->add_option("--run-dir", run_dir, "exact run directory");
  optimize->add_flag("--no-verify", no_verify, "skip the final Monte Carlo verification");
  optimize->callback([&] { status = cmd_optimize(resolve(g), resume, run_dir, no_verify, g.verbose); });

  std::filesystem::path design;
  std::optional<std::size_t> samples;
  std::optional<double> psi0;
  auto* verify = app.add_subcommand("verify", "Monte Carlo statistics of a saved design");
  verify->add_option("design", design, "design file")->required()->check(CLI::ExistingFile);
  verify->add_option("--samples", samples, "layouts (default verification.samples)");
  verify->add_option("--psi0", psi0, "objective normalizer (default: calibrated as in optimize)");
  verify->callback([&] { status = cmd_verify(resolve(g), design, samples, psi0); });

  std::optional<std::filesystem::path> fd_design;
  std::vector<std::string> functionals{"all"};
  std::size_t components = 20;
  double step = 1e-5;
  auto* fd = app.add_subcommand("fdcheck", "finite-difference check of the design gradients");
  fd->add_option("--design", fd_design, "design file (default: random in the bounds)")->check(CLI::ExistingFile);
  fd->add_option("--functional", functionals, "strain_energy, mass, perimeter, regularization or all");
  fd->add_option("--components", components, "random components to check");
  fd->add_option("--step", step, "central-difference step")->check(CLI::PositiveNumber);
  fd->callback([&] { status = cmd_fdcheck(resolve(g), fd_design, functionals, components, step); });

  std::size_t count = 8;
  bool catalog_entries = false;
  auto* rve = app.add_subcommand("rve", "representative volume elements");
  rve->require_subcommand(1);
  auto* sample = rve->add_subcommand("sample", "export random RVE images as PGM");
  sample->add_option("--count", count, "images");
  sample->add_flag("--catalog-entries", catalog_entries, "the images behind the first catalog entries");
  sample->callback([&] { status = cmd_rve_sample(resolve(g), count, catalog_entries); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return status;
}
