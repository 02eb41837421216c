#pragma once

// Stochastic-gradient design updates: projected SGD and Adam on a penalized
// objective, and a GCMMA step (inner iterations off by default) driven by mini-batch
// estimates. run_loop ties them to fresh layout samples every iteration.

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sgtopo/sensitivity.hpp"

namespace sgtopo {

struct PenaltySpec {
  std::vector<double> kappa;
  void validate() const;
};

/// h = grad R + sum_j kappa_j 2 g_j+ grad g_j with exact (non-averaged)
/// constraint values.
Eigen::VectorXd penalty_descent_direction(const Eigen::VectorXd& d_objective,
                                          const std::vector<double>& constraints,
                                          const std::vector<Eigen::VectorXd>& d_constraints,
                                          const PenaltySpec& penalties);

/// Same direction from batch means of 2 g_j+ grad g_j.
Eigen::VectorXd penalty_descent_direction(const Eigen::VectorXd& d_objective,
                                          const std::vector<Eigen::VectorXd>& d_penalties,
                                          const PenaltySpec& penalties);

Eigen::VectorXd clamp_to(const Eigen::VectorXd& theta, const Range& bounds);

/// clamp(theta - eta h).
Eigen::VectorXd sgd_step(double eta, const Eigen::VectorXd& theta, const Eigen::VectorXd& h, const Range& bounds);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long k = 0;
  double beta_m = 0.9;
  double beta_v = 0.999;
  double epsilon = 1e-8;
  double eta = 0.05;

  void validate() const;
};

/// One Adam update (moments, bias correction, componentwise step) followed
/// by clamping. Empty moment vectors are initialized to zero.
Eigen::VectorXd adam_step(AdamState& state, const Eigen::VectorXd& theta, const Eigen::VectorXd& h,
                          const Range& bounds);

/// Asymptote and subproblem constants (Svanberg's published defaults).
struct GcmmaParams {
  double asyinit = 0.5;
  double asyincr = 1.2;
  double asydecr = 0.7;
  double albefa = 0.1;
  /// Move limit as a fraction of the box width.
  double move = 0.1;
  /// Floor of the curvature parameter rho.
  double raa0 = 1e-6;
  /// Linear and quadratic cost of the artificial variables y_j.
  double c = 1000.0;
  double d = 1.0;
  /// Dual projected-gradient tolerance of the subproblem.
  double subproblem_tolerance = 1e-10;
  /// y_j above this marks the approximate subproblem infeasible.
  double infeasibility_tolerance = 1e-6;
  /// Conservative inner iterations (rho increases until the approximations
  /// bound the true functions at the candidate). 0 gives the plain outer
  /// step; more than 0 needs an evaluator.
  int inner_iterations = 0;

  void validate() const;
};

struct GcmmaState {
  GcmmaParams params;
  Eigen::VectorXd low;
  Eigen::VectorXd upp;
  Eigen::VectorXd xold1;
  Eigen::VectorXd xold2;
  long iteration = 0;
};

struct GcmmaReport {
  /// Projected-gradient residual of the subproblem dual at exit.
  double kkt_residual = 0.0;
  /// Artificial variables y_j of the subproblem.
  std::vector<double> y;
  bool restoration = false;
};

/// Objective and constraint values at a trial point.
using GcmmaEvaluator = std::function<void(const Eigen::VectorXd& x, double& objective, std::vector<double>& constraints)>;

/// One GCMMA step around theta with objective r, constraints g_j <= 0 and
/// their gradients. If the subproblem needs y_j > 0 it is re-solved with a
/// vanishing objective, which minimizes the approximate violation.
Eigen::VectorXd gcmma_step(GcmmaState& state, const Eigen::VectorXd& theta, double objective,
                           const Eigen::VectorXd& d_objective, const std::vector<double>& constraints,
                           const std::vector<Eigen::VectorXd>& d_constraints, const Range& bounds,
                           GcmmaReport* report = nullptr, const GcmmaEvaluator& evaluate = {});

enum class Algorithm { Sgd, Adam, Gcmma };
Algorithm parse_algorithm(const std::string& name);
std::string to_string(Algorithm a);

struct OptimizerSpec {
  Algorithm algorithm = Algorithm::Adam;
  double eta = 0.05;
  PenaltySpec penalty{{1000.0}};
  std::size_t samples = 4;
  int iterations = 300;
  double beta_m = 0.9;
  double beta_v = 0.999;
  double epsilon = 1e-8;
  GcmmaParams gcmma;
  bool early_stop = false;
  int early_stop_window = 50;
  double early_stop_tolerance = 1e-3;
  unsigned threads = 1;
  bool log_wall_time = false;

  void validate() const;
};

/// `count` layouts of i.i.d. uniform catalog indices, drawn sequentially.
std::vector<Layout> sample_layouts(RandomStream& stream, std::size_t elements, std::size_t catalog_size,
                                   std::size_t count);

struct HistoryRow {
  int iteration = 0;
  double objective = 0.0;
  std::vector<double> constraints;
  double penalty = 0.0;
  double step_norm = 0.0;
  double wall_ms = 0.0;
};

/// Everything needed to resume a run bit-for-bit.
struct RunState {
  Eigen::VectorXd theta;
  int iteration = 0;
  /// Mean strain energy of the first batch; 0 until then.
  double psi0 = 0.0;
  RandomStream layouts{0, streams::kLayouts};
  AdamState adam;
  GcmmaState gcmma;
  std::vector<HistoryRow> history;
  bool stopped_early = false;
};

RunState initial_run_state(const Eigen::VectorXd& theta, std::uint64_t seed, const OptimizerSpec& spec);

/// Called after every iteration with the updated state; returning false
/// stops the loop.
using IterationCallback = std::function<bool(const RunState&)>;

/// Runs iterations until spec.iterations are done (or early stop). Each
/// iteration draws spec.samples layouts, forms the batch bundle at the
/// current design and takes one optimizer step.
void run_loop(const MacroModel& model, const std::vector<QuadK>& library, const OptimizerSpec& spec,
              RunState& state, const IterationCallback& callback = {});

/// iteration,objective,constraint_1..n,step_norm,wall_ms
void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& history);

/// Binary "CKPT" dump of a RunState; see README for the layout.
void write_checkpoint(const std::filesystem::path& path, const RunState& state);
RunState read_checkpoint(const std::filesystem::path& path);

}  // namespace sgtopo
