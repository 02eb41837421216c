#pragma once

// Design gradients per layout, their mini-batch averages and a central
// finite-difference checker.

#include <functional>
#include <string>
#include <vector>

#include "sgtopo/macro.hpp"

namespace sgtopo {

/// Value and theta-gradient of objective f and constraint g for one layout.
struct LayoutGradient {
  double objective = 0.0;
  double constraint = 0.0;
  double strain_energy = 0.0;
  double mass_ratio = 0.0;
  double perimeter = 0.0;
  double regularization = 0.0;
  Eigen::VectorXd d_objective;
  Eigen::VectorXd d_constraint;
};

/// Parts of f and g that do not depend on the layout.
struct DeterministicTerms {
  double mass_ratio = 0.0;
  double perimeter = 0.0;
  double regularization = 0.0;
  /// w_m grad mass + w_per grad P_per + w_reg grad P_reg
  Eigen::VectorXd d_objective;
  Eigen::VectorXd d_mass;
};

DeterministicTerms deterministic_terms(const MacroModel& model, const DesignFields& fields);

LayoutGradient layout_gradient(const MacroModel& model, const DesignFields& fields,
                               const DeterministicTerms& terms, const Layout& layout,
                               const std::vector<QuadK>& library, double psi0);

/// Sample means over the layouts (in layout order) of f, g, (g+)^2 and
/// their gradients.
struct GradientBundle {
  std::size_t samples = 0;
  double objective = 0.0;
  double constraint = 0.0;
  double penalty = 0.0;  // mean of (g+)^2
  double strain_energy = 0.0;
  double mass_ratio = 0.0;
  double perimeter = 0.0;
  double regularization = 0.0;
  Eigen::VectorXd d_objective;
  Eigen::VectorXd d_constraint;
  Eigen::VectorXd d_penalty;  // mean of 2 g+ grad g
  std::vector<double> layout_objective;
  std::vector<double> layout_strain_energy;
};

/// Layouts are evaluated on up to `threads` workers; averaging is a
/// sequential sum in layout order followed by one division, so the result
/// does not depend on the worker count.
GradientBundle stochastic_gradient_bundle(const MacroModel& model, const DesignFields& fields,
                                          const std::vector<Layout>& layouts,
                                          const std::vector<QuadK>& library, double psi0,
                                          unsigned threads = 1);

struct FdEntry {
  std::size_t component = 0;
  double analytic = 0.0;
  double fd = 0.0;
  double rel_error = 0.0;
};

struct FdReport {
  std::vector<FdEntry> entries;
  double max_rel_error = 0.0;
};

/// Central differences of `f` on the listed components;
/// rel_error = |analytic - fd| / max(|fd|, 1e-12).
FdReport fd_check(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& theta,
                  const Eigen::VectorXd& analytic, const std::vector<std::size_t>& components, double step);

enum class Functional { StrainEnergy, Mass, Perimeter, Regularization };

Functional parse_functional(const std::string& name);
std::string to_string(Functional f);

/// fd_check of one functional. The redistanced field is frozen at theta for
/// the regularization penalty.
FdReport fd_check_functional(const MacroModel& model, Functional functional, const Eigen::VectorXd& theta,
                             const Layout& layout, const std::vector<QuadK>& library,
                             const std::vector<std::size_t>& components, double step);

}  // namespace sgtopo
