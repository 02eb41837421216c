#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "sgtopo/optimizers.hpp"

using namespace sgtopo;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

const Range kWide{-1e9, 1e9};

MicrostructureCatalog iso_catalog(std::initializer_list<double> moduli) {
  MicrostructureCatalog c;
  for (double E : moduli) {
    c.entries.push_back(isotropic_tensor({E, 0.3}, 2, Hypothesis::PlaneStress));
    c.density.push_back(1.0);
    c.provenance.push_back("test");
  }
  return c;
}

}  // namespace

TEST_CASE("penalty direction") {
  const Eigen::VectorXd grad = vec({0.3, -0.2});
  const std::vector<Eigen::VectorXd> dg = {vec({1.0, 1.0})};
  CHECK(penalty_descent_direction(grad, {-0.1}, dg, PenaltySpec{{1000.0}}) == grad);
  CHECK(penalty_descent_direction(grad, {0.5}, dg, PenaltySpec{{0.0}}) == grad);
  const auto h = penalty_descent_direction(vec({0.0}), {0.1}, {vec({1.0})}, PenaltySpec{{1000.0}});
  CHECK(h(0) == doctest::Approx(200.0));
  CHECK_THROWS_AS(penalty_descent_direction(grad, {0.1}, dg, PenaltySpec{{-1.0}}), ParameterError);
  CHECK_THROWS_AS(penalty_descent_direction(grad, {0.1, 0.2}, dg, PenaltySpec{{1.0}}), ParameterError);
  // batch form
  const auto hb = penalty_descent_direction(vec({1.0}), {vec({0.5})}, PenaltySpec{{4.0}});
  CHECK(hb(0) == doctest::Approx(3.0));
}

TEST_CASE("penalty direction is the merit gradient") {
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 6;
    Eigen::VectorXd a(n), b(n), x(n);
    for (int i = 0; i < n; ++i) {
      a(i) = u(gen);
      b(i) = u(gen);
      x(i) = u(gen);
    }
    const double c = u(gen) * 0.5;
    const double kappa = 10.0;
    const auto r = [&](const Eigen::VectorXd& y) { return (a.array() * y.array().sin()).sum() + 0.5 * y.squaredNorm(); };
    const auto g = [&](const Eigen::VectorXd& y) { return b.dot(y) - c + 0.1 * y.squaredNorm(); };
    const auto merit = [&](const Eigen::VectorXd& y) {
      const double gp = std::max(g(y), 0.0);
      return r(y) + kappa * gp * gp;
    };
    const Eigen::VectorXd dr = (a.array() * x.array().cos()).matrix() + x;
    const Eigen::VectorXd dg = b + 0.2 * x;
    const Eigen::VectorXd h = penalty_descent_direction(dr, {g(x)}, {dg}, PenaltySpec{{kappa}});
    Eigen::VectorXd fd(n);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp(i) += 1e-6;
      xm(i) -= 1e-6;
      fd(i) = (merit(xp) - merit(xm)) / 2e-6;
    }
    CHECK((h - fd).norm() <= 1e-6 * (1.0 + fd.norm()));
    CHECK(h.dot(fd) > 0.0);
  }
}

TEST_CASE("projected SGD") {
  CHECK(sgd_step(0.1, vec({0.3, 0.4}), vec({0.0, 0.0}), kWide) == vec({0.3, 0.4}));
  const auto t = sgd_step(0.05, vec({0.0, 0.0}), vec({1.0, -1.0}), kWide);
  CHECK(t(0) == doctest::Approx(-0.05));
  CHECK(t(1) == doctest::Approx(0.05));
  const auto c = sgd_step(1.0, vec({1.0, -1.0}), vec({-5.0, 5.0}), Range{-1.5, 1.5});
  CHECK(c == vec({1.5, -1.5}));
  CHECK_THROWS_AS(sgd_step(0.0, vec({0.0}), vec({1.0}), kWide), ParameterError);
}

TEST_CASE("Adam") {
  SUBCASE("first step is sign-like for any decay rates") {
    for (double bm : {0.0, 0.5, 0.9}) {
      AdamState s;
      s.beta_m = bm;
      s.beta_v = 0.99;
      s.eta = 0.1;
      const Eigen::VectorXd h = vec({2.0, -3e-3, 0.0, 50.0});
      const auto t = adam_step(s, Eigen::VectorXd::Zero(4), h, kWide);
      for (Eigen::Index i = 0; i < 4; ++i)
        CHECK(t(i) == doctest::Approx(-0.1 * h(i) / (std::abs(h(i)) + 1e-8)).epsilon(1e-12));
      CHECK(s.k == 1);
    }
  }
  SUBCASE("zero direction never moves") {
    AdamState s;
    Eigen::VectorXd t = vec({0.2, -0.7});
    for (int k = 0; k < 10; ++k) t = adam_step(s, t, Eigen::VectorXd::Zero(2), kWide);
    CHECK(t == vec({0.2, -0.7}));
  }
  SUBCASE("constant gradient moves by eta per step") {
    AdamState s;
    s.eta = 0.1;
    Eigen::VectorXd t = vec({0.0});
    for (int k = 1; k <= 2; ++k) {
      const auto next = adam_step(s, t, vec({2.0}), kWide);
      CHECK(next(0) - t(0) == doctest::Approx(-0.1).epsilon(1e-7));
      t = next;
    }
  }
  SUBCASE("step magnitude bounds") {
    // Cauchy-Schwarz on the bias-corrected moment sums gives
    // |m_hat| / sqrt(v_hat) <= (1 - b_m) sqrt(sum_j (b_m^2 / b_v)^j) / sqrt(1 - b_v)
    //                          * sqrt(1 - b_v^k) / (1 - b_m^k)
    std::mt19937 gen(7);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> scale(-6.0, 3.0);
    AdamState s;
    s.eta = 0.05;
    Eigen::VectorXd t = Eigen::VectorXd::Zero(20);
    double geometric = 0.0;
    double worst = 0.0;
    for (int k = 1; k <= 300; ++k) {
      geometric += std::pow(s.beta_m * s.beta_m / s.beta_v, k - 1);
      Eigen::VectorXd h(20);
      for (Eigen::Index i = 0; i < 20; ++i) h(i) = nd(gen) * std::pow(10.0, scale(gen));
      const auto next = adam_step(s, t, h, kWide);
      const double bound = (1.0 - s.beta_m) * std::sqrt(geometric / (1.0 - s.beta_v)) *
                           std::sqrt(1.0 - std::pow(s.beta_v, k)) / (1.0 - std::pow(s.beta_m, k));
      const double step = (next - t).cwiseAbs().maxCoeff();
      CHECK(step <= s.eta * bound * (1.0 + 1e-12));
      worst = std::max(worst, step);
      t = next;
    }
    // spikes after small gradients do exceed eta
    CHECK(worst > s.eta);

    // gradients of steady magnitude stay within eta
    AdamState q;
    q.eta = 0.05;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(20);
    std::bernoulli_distribution coin(0.5);
    for (int k = 1; k <= 300; ++k) {
      Eigen::VectorXd h(20);
      for (Eigen::Index i = 0; i < 20; ++i) h(i) = coin(gen) ? 1.3 : -1.3;
      const auto next = adam_step(q, x, h, kWide);
      CHECK((next - x).cwiseAbs().maxCoeff() <= q.eta * (1.0 + 1e-8));
      x = next;
    }
  }
  SUBCASE("clamped to bounds") {
    AdamState s;
    s.eta = 1.0;
    const auto t = adam_step(s, vec({1.2}), vec({-1.0}), Range{-1.5, 1.5});
    CHECK(t(0) == 1.5);
  }
  AdamState bad;
  bad.beta_v = 1.0;
  CHECK_THROWS_AS(adam_step(bad, vec({0.0}), vec({1.0}), kWide), ParameterError);
}

TEST_CASE("GCMMA on a bound-constrained scalar problem") {
  GcmmaState s;
  Eigen::VectorXd t = vec({0.0});
  const Range box{0.0, 1.0};
  int iterations = 0;
  for (; iterations < 30; ++iterations) {
    GcmmaReport rep;
    const double x = t(0);
    t = gcmma_step(s, t, (x - 1.0) * (x - 1.0), vec({2.0 * (x - 1.0)}), {x - 0.4}, {vec({1.0})}, box, &rep);
    CHECK(rep.kkt_residual < 1e-8);
    CHECK(t(0) >= 0.0);
    CHECK(t(0) <= 1.0);
    if (std::abs(t(0) - 0.4) < 1e-5 && iterations > 3) break;
  }
  CHECK(iterations < 30);
  CHECK(std::abs(t(0) - 0.4) < 1e-4);
}

TEST_CASE("GCMMA keeps a stationary point") {
  GcmmaState s;
  const Eigen::VectorXd t0 = vec({0.3, -0.2, 0.9});
  const auto t = gcmma_step(s, t0, 1.0, Eigen::VectorXd::Zero(3), {-0.5}, {vec({1.0, 1.0, 1.0})},
                            Range{-1.5, 1.5});
  CHECK((t - t0).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("GCMMA on a convex quadratic") {
  const Eigen::VectorXd w = vec({1.0, 4.0, 0.5, 2.0, 9.0});
  const Eigen::VectorXd target = vec({0.7, -0.3, 1.2, -1.4, 0.1});
  const auto f = [&](const Eigen::VectorXd& x) { return (w.array() * (x - target).array().square()).sum(); };
  const Range box{-1.5, 1.5};
  for (bool with_slack_constraint : {false, true}) {
    CAPTURE(with_slack_constraint);
    const auto cons = [&](const Eigen::VectorXd& x) {
      return with_slack_constraint ? std::vector<double>{x.sum() - 100.0} : std::vector<double>{};
    };
    const std::vector<Eigen::VectorXd> dcons =
        with_slack_constraint ? std::vector<Eigen::VectorXd>{Eigen::VectorXd::Ones(5)} : std::vector<Eigen::VectorXd>{};
    const GcmmaEvaluator eval = [&](const Eigen::VectorXd& x, double& fx, std::vector<double>& gx) {
      fx = f(x);
      gx = cons(x);
    };

    SUBCASE("conservative inner iterations decrease the objective every step") {
      GcmmaState s;
      s.params.inner_iterations = 50;
      Eigen::VectorXd x = vec({-1.0, 1.0, -1.0, 1.0, -1.0});
      double prev = f(x);
      for (int k = 0; k < 60; ++k) {
        const Eigen::VectorXd g = 2.0 * (w.array() * (x - target).array()).matrix();
        x = gcmma_step(s, x, f(x), g, cons(x), dcons, box, nullptr, eval);
        const double now = f(x);
        CHECK(now <= prev + 1e-12);
        prev = now;
      }
      CHECK((x - target).norm() < 1e-3);
    }
    SUBCASE("plain outer steps reduce the objective") {
      // no conservative correction: the iterates end in a small two-cycle
      GcmmaState s;
      Eigen::VectorXd x = vec({-1.0, 1.0, -1.0, 1.0, -1.0});
      const double f0 = f(x);
      for (int k = 0; k < 200; ++k) {
        const Eigen::VectorXd g = 2.0 * (w.array() * (x - target).array()).matrix();
        x = gcmma_step(s, x, f(x), g, cons(x), dcons, box);
        CHECK(f(x) < f0);
      }
      CHECK(f(x) < 1e-3 * f0);
    }
  }
}

TEST_CASE("GCMMA falls back to restoration when the approximation is infeasible") {
  GcmmaState s;
  GcmmaReport rep;
  // g = 5 + x can not be brought below zero inside the move limit
  const auto t = gcmma_step(s, vec({0.0}), 0.0, vec({1.0}), {5.0}, {vec({1.0})}, Range{-1.0, 1.0}, &rep);
  CHECK(rep.restoration);
  CHECK(t(0) < 0.0);
  CHECK(t(0) >= -0.2 - 1e-9);  // move limit 0.1 of the box width
}

TEST_CASE("layout sampling is uniform") {
  RandomStream rs(42, streams::kLayouts);
  const auto layouts = sample_layouts(rs, 10000, 3, 3);
  CHECK(layouts.size() == 3);
  std::array<double, 3> counts{};
  for (const auto& l : layouts)
    for (auto id : l) counts[id] += 1.0;
  const double expected = 10000.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 13.82);  // chi-square, 2 degrees of freedom, p = 0.001
  CHECK_THROWS_AS(sample_layouts(rs, 4, 0, 1), ParameterError);
}

TEST_CASE("run loop: determinism, checkpoints and history") {
  const MacroModel model(MacroMesh::half_beam(12, 4), {});
  const auto lib = element_library(model.mesh(), iso_catalog({1.0, 0.5, 2.0}));
  const Eigen::VectorXd theta0 =
      clamp_to(model.options().bounds.upper * seed_holes(model.mesh(), 6, 2, 0.2), model.options().bounds);

  for (Algorithm alg : {Algorithm::Sgd, Algorithm::Adam, Algorithm::Gcmma}) {
    CAPTURE(to_string(alg));
    OptimizerSpec spec;
    spec.algorithm = alg;
    spec.iterations = 6;
    spec.eta = alg == Algorithm::Sgd ? 0.5 : 0.05;

    RunState a = initial_run_state(theta0, 5, spec);
    run_loop(model, lib, spec, a);
    CHECK(a.history.size() == 6);
    CHECK(a.psi0 > 0.0);
    CHECK(a.theta.maxCoeff() <= 1.5);
    CHECK(a.theta.minCoeff() >= -1.5);
    for (const auto& row : a.history) CHECK(row.wall_ms == 0.0);

    OptimizerSpec threaded = spec;
    threaded.threads = 4;
    RunState b = initial_run_state(theta0, 5, threaded);
    run_loop(model, lib, threaded, b);
    CHECK(b.theta == a.theta);
    CHECK(b.history.back().objective == a.history.back().objective);

    OptimizerSpec part = spec;
    part.iterations = 3;
    RunState c = initial_run_state(theta0, 5, part);
    run_loop(model, lib, part, c);
    const auto ck = std::filesystem::temp_directory_path() / "sgtopo_opt_test.ckpt";
    write_checkpoint(ck, c);
    RunState resumed = read_checkpoint(ck);
    std::filesystem::remove(ck);
    run_loop(model, lib, spec, resumed);
    CHECK(resumed.theta == a.theta);
    REQUIRE(resumed.history.size() == a.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
      CHECK(resumed.history[i].objective == a.history[i].objective);
      CHECK(resumed.history[i].constraints == a.history[i].constraints);
      CHECK(resumed.history[i].step_norm == a.history[i].step_norm);
    }
  }
}

TEST_CASE("single-entry catalog runs are seed independent") {
  const MacroModel model(MacroMesh::half_beam(12, 4), {});
  const auto lib = element_library(model.mesh(), iso_catalog({1.0}));
  const Eigen::VectorXd theta0 = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(model.design_size()), -0.5);
  OptimizerSpec spec;
  spec.iterations = 3;
  RunState a = initial_run_state(theta0, 1, spec);
  RunState b = initial_run_state(theta0, 2, spec);
  run_loop(model, lib, spec, a);
  run_loop(model, lib, spec, b);
  CHECK(a.theta == b.theta);
}

TEST_CASE("history CSV and early stop") {
  std::vector<HistoryRow> h = {{1, 0.5, {-0.1}, 0.0, 0.2, 0.0}, {2, 0.25, {0.05}, 0.0025, 0.1, 0.0}};
  const auto path = std::filesystem::temp_directory_path() / "sgtopo_hist.csv";
  write_history_csv(path, h);
  std::ifstream in(path);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "iteration,objective,constraint_1,step_norm,wall_ms");
  CHECK(first == "1,0.5,-0.10000000000000001,0.20000000000000001,0");
  std::filesystem::remove(path);

  const MacroModel model(MacroMesh::half_beam(6, 2), {});
  const auto lib = element_library(model.mesh(), iso_catalog({1.0}));
  OptimizerSpec spec;
  spec.iterations = 100;
  spec.eta = 1e-9;
  spec.early_stop = true;
  spec.early_stop_window = 5;
  RunState s = initial_run_state(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(model.design_size()), -0.2), 1, spec);
  run_loop(model, lib, spec, s);
  CHECK(s.stopped_early);
  CHECK(s.history.size() == 10);
}
