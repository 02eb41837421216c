#include "sgtopo/optimizers.hpp"

#include <cmath>
#include <limits>
#include <tuple>

namespace sgtopo {

void PenaltySpec::validate() const {
  for (double k : kappa)
    if (!(k >= 0.0) || !std::isfinite(k)) throw ParameterError("penalty: kappa must be finite and >= 0");
}

Eigen::VectorXd penalty_descent_direction(const Eigen::VectorXd& d_objective,
                                          const std::vector<double>& constraints,
                                          const std::vector<Eigen::VectorXd>& d_constraints,
                                          const PenaltySpec& penalties) {
  penalties.validate();
  if (constraints.size() != d_constraints.size() || constraints.size() != penalties.kappa.size())
    throw ParameterError("penalty_descent_direction: constraint counts differ");
  Eigen::VectorXd h = d_objective;
  for (std::size_t j = 0; j < constraints.size(); ++j) {
    if (d_constraints[j].size() != h.size()) throw ParameterError("penalty_descent_direction: gradient sizes differ");
    const double gp = std::max(constraints[j], 0.0);
    if (gp > 0.0 && penalties.kappa[j] > 0.0) h += (penalties.kappa[j] * 2.0 * gp) * d_constraints[j];
  }
  return h;
}

Eigen::VectorXd penalty_descent_direction(const Eigen::VectorXd& d_objective,
                                          const std::vector<Eigen::VectorXd>& d_penalties,
                                          const PenaltySpec& penalties) {
  penalties.validate();
  if (d_penalties.size() != penalties.kappa.size())
    throw ParameterError("penalty_descent_direction: constraint counts differ");
  Eigen::VectorXd h = d_objective;
  for (std::size_t j = 0; j < d_penalties.size(); ++j) {
    if (d_penalties[j].size() != h.size()) throw ParameterError("penalty_descent_direction: gradient sizes differ");
    if (penalties.kappa[j] > 0.0) h += penalties.kappa[j] * d_penalties[j];
  }
  return h;
}

Eigen::VectorXd clamp_to(const Eigen::VectorXd& theta, const Range& bounds) {
  return theta.cwiseMax(bounds.lower).cwiseMin(bounds.upper);
}

Eigen::VectorXd sgd_step(double eta, const Eigen::VectorXd& theta, const Eigen::VectorXd& h, const Range& bounds) {
  if (!(eta > 0.0)) throw ParameterError("sgd_step: eta must be positive");
  if (h.size() != theta.size()) throw ParameterError("sgd_step: direction has the wrong length");
  return clamp_to(theta - eta * h, bounds);
}

void AdamState::validate() const {
  if (!(beta_m >= 0.0 && beta_m < 1.0) || !(beta_v >= 0.0 && beta_v < 1.0))
    throw ParameterError("adam: decay rates must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ParameterError("adam: epsilon must be positive");
  if (!(eta > 0.0)) throw ParameterError("adam: eta must be positive");
  if (k < 0) throw ParameterError("adam: negative iteration counter");
  if (m.size() != v.size()) throw ParameterError("adam: moment vectors differ in length");
}

Eigen::VectorXd adam_step(AdamState& state, const Eigen::VectorXd& theta, const Eigen::VectorXd& h,
                          const Range& bounds) {
  state.validate();
  if (h.size() != theta.size()) throw ParameterError("adam_step: direction has the wrong length");
  if (state.m.size() == 0) {
    state.m = Eigen::VectorXd::Zero(theta.size());
    state.v = Eigen::VectorXd::Zero(theta.size());
  }
  if (state.m.size() != theta.size()) throw ParameterError("adam_step: state does not match the design length");
  state.k += 1;
  state.m = state.beta_m * state.m + (1.0 - state.beta_m) * h;
  state.v = state.beta_v * state.v + (1.0 - state.beta_v) * h.cwiseProduct(h);
  const double kk = static_cast<double>(state.k);
  const Eigen::VectorXd mhat = state.m / (1.0 - std::pow(state.beta_m, kk));
  const Eigen::VectorXd vhat = state.v / (1.0 - std::pow(state.beta_v, kk));
  const Eigen::VectorXd step = mhat.array() / (vhat.array().sqrt() + state.epsilon);
  return clamp_to(theta - state.eta * step, bounds);
}

void GcmmaParams::validate() const {
  if (!(asyinit > 0.0) || !(asyincr >= 1.0) || !(asydecr > 0.0 && asydecr <= 1.0))
    throw ParameterError("gcmma: invalid asymptote constants");
  if (!(albefa > 0.0 && albefa < 1.0)) throw ParameterError("gcmma: albefa must lie in (0, 1)");
  if (!(move > 0.0 && move <= 1.0)) throw ParameterError("gcmma: move limit must lie in (0, 1]");
  if (!(raa0 > 0.0) || !(c > 0.0) || !(d > 0.0))
    throw ParameterError("gcmma: invalid subproblem constants");
  if (inner_iterations < 0) throw ParameterError("gcmma: inner iterations must be >= 0");
  if (!(subproblem_tolerance > 0.0) || !(infeasibility_tolerance > 0.0))
    throw ParameterError("gcmma: tolerances must be positive");
}

namespace {

// Convex separable subproblem
//   min  sum_i p0_i/(upp_i - x_i) + q0_i/(x_i - low_i) + sum_j c_j y_j + d_j y_j^2 / 2
//   s.t. sum_i P_ji/(upp_i - x_i) + Q_ji/(x_i - low_i) - y_j <= b_j,
//        alfa <= x <= beta, y >= 0,
// solved through its concave dual in the multipliers lambda >= 0. For a
// given lambda the primal minimizer is explicit per component.
struct Subproblem {
  Eigen::VectorXd low, upp, alfa, beta, p0, q0, b, c, d;
  Eigen::MatrixXd P, Q;
};

struct SubSolution {
  Eigen::VectorXd x, y, lam;
  double kkt = 0.0;
};

struct DualPoint {
  double w = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  Eigen::VectorXd x, y;
};

DualPoint dual_at(const Subproblem& sp, const Eigen::VectorXd& lam) {
  const Eigen::Index n = sp.low.size();
  const Eigen::Index m = sp.b.size();
  DualPoint out;
  out.x.resize(n);
  const Eigen::VectorXd pl = sp.p0 + sp.P.transpose() * lam;
  const Eigen::VectorXd ql = sp.q0 + sp.Q.transpose() * lam;
  Eigen::VectorXd curvature_inv = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double rp = std::sqrt(pl(i));
    const double rq = std::sqrt(ql(i));
    const double xi = (rp * sp.low(i) + rq * sp.upp(i)) / (rp + rq);
    const double x = std::clamp(xi, sp.alfa(i), sp.beta(i));
    out.x(i) = x;
    const double ux = sp.upp(i) - x;
    const double xl = x - sp.low(i);
    out.w += pl(i) / ux + ql(i) / xl;
    if (x > sp.alfa(i) && x < sp.beta(i))
      curvature_inv(i) = 1.0 / (2.0 * pl(i) / (ux * ux * ux) + 2.0 * ql(i) / (xl * xl * xl));
  }
  const Eigen::ArrayXd ux = (sp.upp - out.x).array();
  const Eigen::ArrayXd xl = (out.x - sp.low).array();
  out.y = ((lam - sp.c).array() / sp.d.array()).max(0.0).matrix();
  out.grad = sp.P * (1.0 / ux).matrix() + sp.Q * (1.0 / xl).matrix() - out.y - sp.b;
  out.w += (sp.c.array() * out.y.array() + 0.5 * sp.d.array() * out.y.array().square() - lam.array() * out.y.array())
               .sum() -
           lam.dot(sp.b);
  const Eigen::MatrixXd g = sp.P * (1.0 / ux.square()).matrix().asDiagonal() - sp.Q * (1.0 / xl.square()).matrix().asDiagonal();
  out.hess = -(g * curvature_inv.asDiagonal() * g.transpose());
  for (Eigen::Index j = 0; j < m; ++j)
    if (lam(j) > sp.c(j)) out.hess(j, j) -= 1.0 / sp.d(j);
  return out;
}

// Projected-gradient residual of the dual: zero exactly at its maximizer.
double dual_residual(const Eigen::VectorXd& lam, const Eigen::VectorXd& grad) {
  if (lam.size() == 0) return 0.0;
  return (lam - (lam + grad).cwiseMax(0.0)).cwiseAbs().maxCoeff();
}

SubSolution subsolve(const Subproblem& sp, double tolerance) {
  const Eigen::Index m = sp.b.size();
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(m);
  DualPoint cur = dual_at(sp, lam);
  double res = dual_residual(lam, cur.grad);
  for (int it = 0; it < 500 && res > tolerance; ++it) {
    // Newton on the variables that are free or about to leave the bound
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < m; ++j)
      if (lam(j) > 0.0 || cur.grad(j) > 0.0) free.push_back(j);
    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd h(nf, nf);
    Eigen::VectorXd gf(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      gf(a) = cur.grad(free[static_cast<std::size_t>(a)]);
      for (Eigen::Index b = 0; b < nf; ++b)
        h(a, b) = -cur.hess(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
    }
    const double shift = 1e-12 * (1.0 + h.cwiseAbs().maxCoeff());
    h.diagonal().array() += shift;
    const Eigen::VectorXd df = h.ldlt().solve(gf);
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(m);
    for (Eigen::Index a = 0; a < nf; ++a) dir(free[static_cast<std::size_t>(a)]) = df(a);
    if (!dir.allFinite() || dir.dot(cur.grad) <= 0.0) dir = cur.grad;

    bool moved = false;
    for (int attempt = 0; attempt < 2 && !moved; ++attempt) {
      double t = 1.0;
      for (int k = 0; k < 60; ++k, t *= 0.5) {
        const Eigen::VectorXd trial = (lam + t * dir).cwiseMax(0.0);
        DualPoint next = dual_at(sp, trial);
        const double trial_res = dual_residual(trial, next.grad);
        if (next.w > cur.w || (next.w >= cur.w && trial_res < res)) {
          lam = trial;
          cur = std::move(next);
          res = trial_res;
          moved = true;
          break;
        }
      }
      dir = cur.grad;  // projected gradient ascent as the fallback
    }
    if (!moved) break;
  }
  SubSolution out;
  out.x = cur.x;
  out.y = cur.y;
  out.lam = lam;
  out.kkt = res;
  if (!out.x.allFinite() || !out.y.allFinite()) throw SolverError("gcmma: subproblem iteration diverged");
  return out;
}

}  // namespace

Eigen::VectorXd gcmma_step(GcmmaState& state, const Eigen::VectorXd& theta, double objective,
                           const Eigen::VectorXd& d_objective, const std::vector<double>& constraints,
                           const std::vector<Eigen::VectorXd>& d_constraints, const Range& bounds,
                           GcmmaReport* report, const GcmmaEvaluator& evaluate) {
  const GcmmaParams& p = state.params;
  p.validate();
  if (!std::isfinite(bounds.lower) || !std::isfinite(bounds.upper) || !(bounds.lower < bounds.upper))
    throw ParameterError("gcmma_step: needs finite box bounds");
  if (!std::isfinite(objective)) throw ParameterError("gcmma_step: objective is not finite");
  const Eigen::Index n = theta.size();
  const auto m = static_cast<Eigen::Index>(constraints.size());
  if (d_objective.size() != n || d_constraints.size() != constraints.size())
    throw ParameterError("gcmma_step: inconsistent sizes");
  for (const auto& g : d_constraints)
    if (g.size() != n) throw ParameterError("gcmma_step: constraint gradient has the wrong length");

  const Eigen::VectorXd x = clamp_to(theta, bounds);
  const double width = bounds.upper - bounds.lower;
  state.iteration += 1;
  if (state.iteration <= 2 || state.low.size() != n || state.xold1.size() != n || state.xold2.size() != n) {
    state.low = x.array() - p.asyinit * width;
    state.upp = x.array() + p.asyinit * width;
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double zzz = (x(i) - state.xold1(i)) * (state.xold1(i) - state.xold2(i));
      const double factor = zzz > 0.0 ? p.asyincr : (zzz < 0.0 ? p.asydecr : 1.0);
      double lo = x(i) - factor * (state.xold1(i) - state.low(i));
      double up = x(i) + factor * (state.upp(i) - state.xold1(i));
      lo = std::clamp(lo, x(i) - 10.0 * width, x(i) - 0.01 * width);
      up = std::clamp(up, x(i) + 0.01 * width, x(i) + 10.0 * width);
      state.low(i) = lo;
      state.upp(i) = up;
    }
  }

  Subproblem sp;
  sp.low = state.low;
  sp.upp = state.upp;
  sp.alfa.resize(n);
  sp.beta.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sp.alfa(i) = std::max({sp.low(i) + p.albefa * (x(i) - sp.low(i)), x(i) - p.move * width, bounds.lower});
    sp.beta(i) = std::min({sp.upp(i) - p.albefa * (sp.upp(i) - x(i)), x(i) + p.move * width, bounds.upper});
  }
  const double xmamiinv = 1.0 / std::max(width, 1e-5);
  const Eigen::ArrayXd ux1 = (sp.upp - x).array();
  const Eigen::ArrayXd xl1 = (x - sp.low).array();
  const Eigen::ArrayXd ux2 = ux1.square();
  const Eigen::ArrayXd xl2 = xl1.square();

  // GCMMA curvature parameters rho; initial values as in Svanberg's code
  const auto rho_init = [&](const Eigen::VectorXd& g) {
    return std::max(0.1 / static_cast<double>(n) * g.cwiseAbs().sum() * width, p.raa0);
  };
  double rho0 = rho_init(d_objective);
  std::vector<double> rho(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) rho[static_cast<std::size_t>(j)] = rho_init(d_constraints[static_cast<std::size_t>(j)]);

  const auto terms = [&](const Eigen::VectorXd& g, double r, Eigen::ArrayXd& pp, Eigen::ArrayXd& qq) {
    const Eigen::ArrayXd gp = g.array().max(0.0);
    const Eigen::ArrayXd gq = (-g.array()).max(0.0);
    const Eigen::ArrayXd pq = 0.001 * (gp + gq) + r * xmamiinv;
    pp = (gp + pq) * ux2;
    qq = (gq + pq) * xl2;
  };
  sp.c = Eigen::VectorXd::Constant(m, p.c);
  sp.d = Eigen::VectorXd::Constant(m, p.d);
  sp.P.resize(m, n);
  sp.Q.resize(m, n);
  sp.b.resize(m);
  Eigen::VectorXd r0(m);  // constant part of each constraint approximation
  const auto build = [&] {
    Eigen::ArrayXd pp, qq;
    terms(d_objective, rho0, pp, qq);
    sp.p0 = pp.matrix();
    sp.q0 = qq.matrix();
    for (Eigen::Index j = 0; j < m; ++j) {
      terms(d_constraints[static_cast<std::size_t>(j)], rho[static_cast<std::size_t>(j)], pp, qq);
      sp.P.row(j) = pp.matrix().transpose();
      sp.Q.row(j) = qq.matrix().transpose();
      r0(j) = constraints[static_cast<std::size_t>(j)] - (pp / ux1).sum() - (qq / xl1).sum();
      sp.b(j) = -r0(j);
    }
  };
  // value of a separable approximation at xn
  const auto approx = [&](const Eigen::VectorXd& pp, const Eigen::VectorXd& qq, double base, const Eigen::VectorXd& xn) {
    return base + (pp.array() / (sp.upp - xn).array()).sum() + (qq.array() / (xn - sp.low).array()).sum();
  };

  build();
  const auto solve = [&] {
    SubSolution sol = subsolve(sp, p.subproblem_tolerance);
    bool restore = false;
    if (m > 0 && sol.y.maxCoeff() > p.infeasibility_tolerance) {
      // no point of the approximation satisfies every constraint: minimize the
      // approximate violation instead
      const Eigen::ArrayXd tiny = Eigen::ArrayXd::Constant(n, p.raa0 * xmamiinv);
      const Eigen::VectorXd keep_p0 = sp.p0, keep_q0 = sp.q0;
      sp.p0 = (tiny * ux2).matrix();
      sp.q0 = (tiny * xl2).matrix();
      sol = subsolve(sp, p.subproblem_tolerance);
      sp.p0 = keep_p0;
      sp.q0 = keep_q0;
      restore = true;
    }
    return std::make_pair(sol, restore);
  };
  auto [sol, restoration] = solve();

  for (int inner = 0; inner < p.inner_iterations && evaluate; ++inner) {
    double fnew = 0.0;
    std::vector<double> gnew;
    evaluate(sol.x, fnew, gnew);
    if (gnew.size() != constraints.size()) throw ParameterError("gcmma_step: evaluator returned the wrong constraint count");
    const double base0 = objective - (sp.p0.array() / ux1).sum() - (sp.q0.array() / xl1).sum();
    const double dnorm = std::max(
        ((sp.upp - sp.low).array() * (sol.x - x).array().square() /
         ((sp.upp - sol.x).array() * (sol.x - sp.low).array() * width))
            .sum(),
        1e-12);
    bool conservative = true;
    // slack of a few roundoffs in the compared values
    const auto slack = [](double a, double b) {
      return 8.0 * std::numeric_limits<double>::epsilon() * (std::abs(a) + std::abs(b));
    };
    const double f_app = approx(sp.p0, sp.q0, base0, sol.x);
    if (f_app + slack(f_app, objective) < fnew) {
      conservative = false;
      rho0 = std::min(1.1 * (rho0 + (fnew - f_app) / dnorm), 10.0 * rho0);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      const double g_app = approx(sp.P.row(j).transpose(), sp.Q.row(j).transpose(), r0(j), sol.x);
      const double gj = gnew[static_cast<std::size_t>(j)];
      if (g_app + slack(g_app, constraints[static_cast<std::size_t>(j)]) < gj) {
        conservative = false;
        double& rj = rho[static_cast<std::size_t>(j)];
        rj = std::min(1.1 * (rj + (gj - g_app) / dnorm), 10.0 * rj);
      }
    }
    if (conservative) break;
    build();
    std::tie(sol, restoration) = solve();
  }

  if (report) {
    report->kkt_residual = sol.kkt;
    report->y.assign(sol.y.data(), sol.y.data() + sol.y.size());
    report->restoration = restoration;
  }
  state.xold2 = state.xold1.size() == n ? state.xold1 : x;
  state.xold1 = x;
  return clamp_to(sol.x, bounds);
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "sgd") return Algorithm::Sgd;
  if (name == "adam") return Algorithm::Adam;
  if (name == "gcmma") return Algorithm::Gcmma;
  throw ParameterError("unknown optimizer '" + name + "' (expected sgd, adam or gcmma)");
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Sgd: return "sgd";
    case Algorithm::Adam: return "adam";
    case Algorithm::Gcmma: return "gcmma";
  }
  return "unknown";
}

void OptimizerSpec::validate() const {
  if (!(eta > 0.0)) throw ParameterError("optimizer: eta must be positive");
  penalty.validate();
  if (samples < 1) throw ParameterError("optimizer: samples per iteration must be >= 1");
  if (iterations < 0) throw ParameterError("optimizer: iterations must be >= 0");
  AdamState probe;
  probe.beta_m = beta_m;
  probe.beta_v = beta_v;
  probe.epsilon = epsilon;
  probe.eta = eta;
  probe.validate();
  gcmma.validate();
  if (early_stop_window < 1) throw ParameterError("optimizer: early-stop window must be >= 1");
  if (!(early_stop_tolerance > 0.0)) throw ParameterError("optimizer: early-stop tolerance must be positive");
}

}  // namespace sgtopo
