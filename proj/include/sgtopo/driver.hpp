#pragma once

// Run configuration, Monte Carlo verification of a design and the full
// optimize-and-verify pipeline with its run directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgtopo/optimizers.hpp"

namespace sgtopo {

/// Config problem; line() is 0 when no single line is at fault.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, int line = 0);
  int line() const { return line_; }

 private:
  int line_;
};

enum class CatalogSource { Generate, File };

enum class GeneratorKind { RandomField, Fiber, Uniform };

struct CatalogConfig {
  CatalogSource source = CatalogSource::Generate;
  std::filesystem::path path;
  std::size_t count = 50;
  GeneratorKind kind = GeneratorKind::RandomField;
  Hypothesis hypothesis = Hypothesis::PlaneStress;
  RandomFieldGenerator random_field;
  FiberBounds fiber;
  IsotropicPhase uniform{1.0, 0.3};

  CatalogGenerator generator() const;
};

struct ProblemConfig {
  std::uint64_t seed = 1;
  std::filesystem::path output = "runs";
  unsigned threads = 1;
  /// Checkpoint every n iterations (0: only at the end).
  int checkpoint_every = 0;

  // half-beam mesh and initial holes
  int nx = 60;
  int ny = 20;
  double load = 1.0;
  int holes_x = 18;
  int holes_y = 6;
  double hole_radius = 1.0 / 15.0;

  ModelOptions model;
  CatalogConfig catalog;
  OptimizerSpec optimizer;

  std::size_t verification_samples = 200;
  bool verify_initial = true;
  bool keep_raw = false;

  void validate() const;
  MacroMesh mesh() const;
};

/// Flat `key = value` lines under [section] headers; `#` and `;` start
/// comments. Relative paths are taken relative to the file. A [result]
/// section (present in run manifests) is ignored.
ProblemConfig load_config(const std::filesystem::path& path);
ProblemConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});

/// Applies one `section.key=value` override.
void apply_override(ProblemConfig& config, const std::string& assignment);
/// All of them or none; validated once after the last.
void apply_overrides(ProblemConfig& config, const std::vector<std::string>& assignments);

/// Every key with its resolved value, loadable by parse_config.
std::string to_ini(const ProblemConfig& config);

/// Hash of the resolved config without run.output and run.threads.
std::uint64_t config_hash(const ProblemConfig& config);

/// Example I presets "Ia", "Ib", "IIa", "IIb" at full scale (120 x 40,
/// 200 entries) and "desk" (Case Ia at 60 x 20 with 50 entries).
ProblemConfig preset(const std::string& name);

struct Stats {
  double mean = 0.0;
  double std = 0.0;
  double standard_error = 0.0;
};

Stats summarize(const std::vector<double>& values);

struct McReport {
  std::size_t samples = 0;
  Stats objective;
  Stats constraint;
  Stats strain_energy;
  /// Mean of (g+)^2.
  double penalty = 0.0;
  double mass_ratio = 0.0;
  /// Per-layout values, in draw order.
  std::vector<double> raw_objective;
  std::vector<double> raw_constraint;
};

/// f and g over `samples` fresh layouts drawn from `stream`. Layouts are
/// evaluated concurrently; reductions run in draw order.
McReport monte_carlo_evaluate(const MacroModel& model, const std::vector<QuadK>& library, const Eigen::VectorXd& theta,
                              double psi0, std::size_t samples, RandomStream& stream, unsigned threads = 1,
                              bool keep_raw = false);

/// Same statistics over every layout of the catalog (catalog_size ^ elements
/// of them, at most 10^7).
McReport exhaustive_evaluate(const MacroModel& model, const std::vector<QuadK>& library, const Eigen::VectorXd& theta,
                             double psi0, unsigned threads = 1);

void write_mc_report(const std::filesystem::path& path, const McReport& report);

/// Mean strain energy of the first batch that run_loop would draw.
double calibrate_psi0(const MacroModel& model, const std::vector<QuadK>& library, const Eigen::VectorXd& theta,
                      const RandomStream& layouts, std::size_t samples, unsigned threads = 1);

/// Design file: "sgtopo-design nx ny" then one theta value per line.
void write_design(const std::filesystem::path& path, const MacroMesh& mesh, const Eigen::VectorXd& theta);
Eigen::VectorXd read_design(const std::filesystem::path& path, const MacroMesh& mesh);

/// Loads or generates the catalog described by the config.
MicrostructureCatalog obtain_catalog(const ProblemConfig& config);

/// Initial design: hole seeding clamped to the bounds.
Eigen::VectorXd initial_design(const MacroModel& model, const ProblemConfig& config);

/// Fresh <output>/<UTC timestamp>-<config hash> directory (suffixed -2,
/// -3, ... if taken), created on disk.
std::filesystem::path new_run_directory(const ProblemConfig& config);

struct RunOptions {
  /// Exact run directory; by default <output>/<UTC timestamp>-<config hash>.
  std::optional<std::filesystem::path> directory;
  /// Continue from a checkpoint instead of the seeded design.
  std::optional<std::filesystem::path> resume;
  /// Skip the final Monte Carlo verification.
  bool skip_verification = false;
  bool quiet = true;
};

struct RunResult {
  int exit_code = 0;
  std::filesystem::path directory;
  std::string error;
  double psi0 = 0.0;
  RunState state;
  std::optional<McReport> initial_mc;
  std::optional<McReport> final_mc;
};

/// Catalog -> seeded design -> psi0 -> optimizer loop -> Monte Carlo
/// verification -> exports. Failures leave partial artifacts and a FAILED
/// status in manifest.ini; exit_code is then 1.
RunResult run(const ProblemConfig& config, const RunOptions& options = {});

}  // namespace sgtopo
