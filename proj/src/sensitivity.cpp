#include "sgtopo/sensitivity.hpp"

#include <cmath>

namespace sgtopo {

DeterministicTerms deterministic_terms(const MacroModel& model, const DesignFields& fields) {
  const auto& w = model.options().weights;
  DeterministicTerms t;
  t.mass_ratio = model.mass_ratio(fields);
  t.perimeter = model.perimeter_penalty(fields);
  t.regularization = model.regularization_penalty(fields);
  t.d_mass = model.grad_mass(fields);
  t.d_objective = w.mass * t.d_mass;
  if (w.perimeter != 0.0) t.d_objective += w.perimeter * model.grad_perimeter(fields);
  if (w.regularization != 0.0) t.d_objective += w.regularization * model.grad_regularization(fields);
  return t;
}

LayoutGradient layout_gradient(const MacroModel& model, const DesignFields& fields,
                               const DeterministicTerms& terms, const Layout& layout,
                               const std::vector<QuadK>& library, double psi0) {
  if (!(psi0 > 0.0)) throw ParameterError("layout_gradient: psi0 must be positive");
  const auto& w = model.options().weights;
  const SolveResult s = model.solve(fields.density, layout, library);
  LayoutGradient g;
  g.strain_energy = s.strain_energy;
  g.mass_ratio = terms.mass_ratio;
  g.perimeter = terms.perimeter;
  g.regularization = terms.regularization;
  g.objective = w.strain_energy * s.strain_energy / psi0 + w.mass * terms.mass_ratio +
                w.perimeter * terms.perimeter + w.regularization * terms.regularization;
  g.constraint = terms.mass_ratio - model.options().mass_target;
  g.d_objective = (w.strain_energy / psi0) * model.grad_strain_energy(fields, layout, library, s) + terms.d_objective;
  g.d_constraint = terms.d_mass;
  return g;
}

GradientBundle stochastic_gradient_bundle(const MacroModel& model, const DesignFields& fields,
                                          const std::vector<Layout>& layouts,
                                          const std::vector<QuadK>& library, double psi0,
                                          unsigned threads) {
  if (layouts.empty()) throw ParameterError("stochastic_gradient_bundle: needs at least one layout");
  const DeterministicTerms terms = deterministic_terms(model, fields);
  std::vector<LayoutGradient> per(layouts.size());
  std::vector<std::string> errors(layouts.size());
  parallel_for(layouts.size(), threads, [&](std::size_t i) {
    try {
      per[i] = layout_gradient(model, fields, terms, layouts[i], library, psi0);
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  });
  for (std::size_t i = 0; i < layouts.size(); ++i)
    if (!errors[i].empty()) throw SolverError("layout " + std::to_string(i) + ": " + errors[i]);

  const auto n = static_cast<Eigen::Index>(model.design_size());
  GradientBundle b;
  b.samples = layouts.size();
  b.d_objective = Eigen::VectorXd::Zero(n);
  b.d_constraint = Eigen::VectorXd::Zero(n);
  b.d_penalty = Eigen::VectorXd::Zero(n);
  for (const auto& g : per) {
    const double gp = std::max(g.constraint, 0.0);
    b.objective += g.objective;
    b.constraint += g.constraint;
    b.penalty += gp * gp;
    b.strain_energy += g.strain_energy;
    b.mass_ratio += g.mass_ratio;
    b.perimeter += g.perimeter;
    b.regularization += g.regularization;
    b.d_objective += g.d_objective;
    b.d_constraint += g.d_constraint;
    if (gp > 0.0) b.d_penalty += (2.0 * gp) * g.d_constraint;
    b.layout_objective.push_back(g.objective);
    b.layout_strain_energy.push_back(g.strain_energy);
  }
  const double inv = static_cast<double>(b.samples);
  b.objective /= inv;
  b.constraint /= inv;
  b.penalty /= inv;
  b.strain_energy /= inv;
  b.mass_ratio /= inv;
  b.perimeter /= inv;
  b.regularization /= inv;
  b.d_objective /= inv;
  b.d_constraint /= inv;
  b.d_penalty /= inv;
  return b;
}

FdReport fd_check(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& theta,
                  const Eigen::VectorXd& analytic, const std::vector<std::size_t>& components, double step) {
  if (!(step > 0.0)) throw ParameterError("fd_check: step must be positive");
  if (analytic.size() != theta.size()) throw ParameterError("fd_check: gradient has the wrong length");
  FdReport r;
  for (std::size_t c : components) {
    if (c >= static_cast<std::size_t>(theta.size())) throw BoundsError("fd_check: component out of range");
    const auto idx = static_cast<Eigen::Index>(c);
    Eigen::VectorXd tp = theta;
    Eigen::VectorXd tm = theta;
    tp(idx) += step;
    tm(idx) -= step;
    FdEntry e;
    e.component = c;
    e.analytic = analytic(idx);
    e.fd = (f(tp) - f(tm)) / (2.0 * step);
    e.rel_error = std::abs(e.analytic - e.fd) / std::max(std::abs(e.fd), 1e-12);
    r.max_rel_error = std::max(r.max_rel_error, e.rel_error);
    r.entries.push_back(e);
  }
  return r;
}

Functional parse_functional(const std::string& name) {
  if (name == "strain_energy" || name == "compliance") return Functional::StrainEnergy;
  if (name == "mass") return Functional::Mass;
  if (name == "perimeter") return Functional::Perimeter;
  if (name == "regularization") return Functional::Regularization;
  throw ParameterError("unknown functional '" + name + "'");
}

std::string to_string(Functional f) {
  switch (f) {
    case Functional::StrainEnergy: return "strain_energy";
    case Functional::Mass: return "mass";
    case Functional::Perimeter: return "perimeter";
    case Functional::Regularization: return "regularization";
  }
  return "unknown";
}

FdReport fd_check_functional(const MacroModel& model, Functional functional, const Eigen::VectorXd& theta,
                             const Layout& layout, const std::vector<QuadK>& library,
                             const std::vector<std::size_t>& components, double step) {
  const DesignFields base = model.fields(theta);
  const Eigen::VectorXd frozen = base.phi_tilde;
  std::function<double(const Eigen::VectorXd&)> value;
  Eigen::VectorXd grad;
  switch (functional) {
    case Functional::StrainEnergy: {
      const SolveResult s = model.solve(base.density, layout, library);
      grad = model.grad_strain_energy(base, layout, library, s);
      value = [&](const Eigen::VectorXd& t) {
        return model.solve(model.density(model.filter() * t), layout, library).strain_energy;
      };
      break;
    }
    case Functional::Mass:
      grad = model.grad_mass(base);
      value = [&](const Eigen::VectorXd& t) { return model.mass_ratio(model.fields(t, &frozen)); };
      break;
    case Functional::Perimeter:
      grad = model.grad_perimeter(base);
      value = [&](const Eigen::VectorXd& t) { return model.perimeter_penalty(model.fields(t, &frozen)); };
      break;
    case Functional::Regularization:
      grad = model.grad_regularization(base);
      value = [&](const Eigen::VectorXd& t) { return model.regularization_penalty(model.fields(t, &frozen)); };
      break;
  }
  return fd_check(value, theta, grad, components, step);
}

}  // namespace sgtopo
