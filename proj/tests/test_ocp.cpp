#include <sweep/sweep.hpp>

#include <gtest/gtest.h>

using namespace sweep;

namespace {

DiscreteDecision from_paths(const OcpProblem& p, const Path& x, const Path& u) {
  DiscreteDecision z;
  z.mesh = x.mesh;
  z.x = x.values;
  z.u = u.values;
  z.eta = Mat::Zero(p.system.field.s, x.mesh.k);
  return z;
}

void expect_solution_invariants(const OcpProblem& p, const Solution& s) {
  const auto& sys = p.system;
  const Mesh& mesh = s.z.mesh;
  const double h = mesh.h();
  double dyn = 0.0, comp = 0.0;
  for (int j = 0; j < mesh.k; ++j) {
    Vec xj = s.z.x.col(j), uj = s.z.u.col(j);
    Vec rhs = xj + h * sys.drift(mesh.t(j), xj) - h * sys.field.jac_x(xj, uj).transpose() * s.z.eta.col(j);
    dyn = std::max(dyn, (s.z.x.col(j + 1) - rhs).cwiseAbs().maxCoeff());
    if (sys.theta.kind == ThetaSet::Kind::orthant) {
      Vec z = sys.field.value(xj, uj);
      for (int i = 0; i < z.size(); ++i) comp = std::max(comp, std::abs(std::min(s.z.eta(i, j), -z(i))));
    }
  }
  EXPECT_LE(dyn, 1e-6);
  EXPECT_LE(comp, 1e-6);
  EXPECT_TRUE(theta_contains(sys.theta, sys.field.value(s.z.x.col(mesh.k), s.z.u.col(mesh.k)), 1e-8));
  for (std::size_t i = 1; i < s.report.stage_costs.size(); ++i)
    EXPECT_LE(s.report.stage_costs[i], s.report.stage_costs[i - 1] + 1e-9);
}

// x' in -N(x; (-inf, -u]) started deep inside, tracking r(t) = t/2 with control energy.
OcpProblem tracking_problem() {
  OcpProblem p = remark45().problem;
  p.system.x0 = vec1(-10.0);
  p.system.T = 1.0;
  p.u0 = vec1(0.0);
  p.phi = [](const Vec&) { return 0.0; };
  p.phi_grad = [](const Vec& x) -> Vec { return Vec::Zero(x.size()); };
  p.ell = [](double t, const Vec&, const Vec& u, const Vec&, const Vec& ud) {
    double r = u(0) - 0.5 * t;
    return r * r + 0.5 * ud(0) * ud(0);
  };
  p.ell_grad = [](double t, const Vec&, const Vec& u, const Vec&, const Vec& ud) -> Vec {
    Vec g = Vec::Zero(4);
    g(1) = 2.0 * (u(0) - 0.5 * t);
    g(3) = ud(0);
    return g;
  };
  return p;
}

}  // namespace

TEST(CostEval, RemarkOptimalPairIsNearZero) {
  auto in = remark45();
  Mesh mesh(200, 2.0);
  auto z = from_paths(in.problem, in.known_solution->state(mesh), in.known_solution->control(mesh));
  EXPECT_LE(cost_eval(in.problem, z), 1e-4);
}

TEST(CostEval, UnitRunningCostIntegratesToHorizon) {
  auto in = remark45();
  in.problem.phi = [](const Vec&) { return 0.0; };
  in.problem.ell = [](double, const Vec&, const Vec&, const Vec&, const Vec&) { return 1.0; };
  Mesh mesh(37, 2.0);
  auto z = from_paths(in.problem, Path::constant(mesh, vec1(1.5)), Path::constant(mesh, vec1(-2)));
  EXPECT_NEAR(cost_eval(in.problem, z), 2.0, 1e-13);
}

TEST(CostEval, AnchorAtItselfAddsNothing) {
  auto in = remark45();
  Mesh mesh(40, 2.0);
  Path x = in.known_solution->state(mesh), u = in.known_solution->control(mesh);
  auto z = from_paths(in.problem, x, u);
  double base = cost_eval(in.problem, z);
  for (Mode mode : {Mode::w12w12, Mode::w12c}) {
    OcpProblem p = in.problem;
    p.mode = mode;
    double plain = cost_eval(p, z);
    p.anchor = Anchor{x, u, 7.0, kInf};
    EXPECT_NEAR(cost_eval(p, z), plain, 1e-10);
  }
  EXPECT_GE(base, 0.0);
}

TEST(CostEval, AnchorPenalizesDeviation) {
  auto in = remark45();
  Mesh mesh(40, 2.0);
  Path x = in.known_solution->state(mesh), u = in.known_solution->control(mesh);
  OcpProblem p = in.problem;
  p.anchor = Anchor{x, u, 1.0, kInf};
  auto z = from_paths(p, x, u);
  double at = cost_eval(p, z);
  z.u(0, 10) += 0.1;
  EXPECT_GT(cost_eval(p, z), at);
}

TEST(Transcribe, Counts) {
  auto tr = transcribe(remark45().problem, 2);
  EXPECT_EQ(tr.num_complementarity(), 2);
  EXPECT_EQ(tr.num_equalities(), 2);
  EXPECT_EQ(tr.num_variables(), 8);
  auto one = transcribe(remark45().problem, 1);
  EXPECT_EQ(one.num_equalities(), 1);
  EXPECT_EQ(one.num_variables(), 5);
  auto cx = transcribe(counterexample53().problem, 4);
  EXPECT_EQ(cx.num_complementarity(), 8);
}

TEST(Transcribe, RejectsSmoothInequality) {
  OcpProblem p = remark45().problem;
  p.system.theta = ThetaSet::smooth_inequality(
      1, 1, [](const Vec& z) { return z; }, [](const Vec&) { return Mat::Ones(1, 1); },
      [](const Vec&, const Vec&) { return Mat::Zero(1, 1); });
  try {
    transcribe(p, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::configuration);
  }
}

TEST(Smoothed, RemarkFromFrozenStart) {
  auto in = remark45();
  Mesh mesh(100, 2.0);
  auto warm = warm_start_from_control(in.problem, in.initial_guess(mesh));
  auto sol = solve_smoothed(transcribe(in.problem, 100), warm);
  ASSERT_TRUE(sol.report.converged) << sol.report.message;
  EXPECT_LE(sol.report.cost, 1e-3);
  Path ub = in.known_solution->control(mesh);
  EXPECT_LE((sol.z.u - ub.values).cwiseAbs().maxCoeff(), 5e-2);
  expect_solution_invariants(in.problem, sol);
}

TEST(Smoothed, OptimalWarmStartIsKept) {
  auto in = elastoplastic61();
  Mesh mesh(20, 1.0);
  auto warm = warm_start_from_control(in.problem, Path::constant(mesh, vec1(0.0)));
  SmoothedOptions opt;
  opt.sigma_schedule = {1e-8};
  auto sol = solve_smoothed(transcribe(in.problem, 20), warm, opt);
  ASSERT_TRUE(sol.report.converged) << sol.report.message;
  EXPECT_LE((sol.z.u - warm.u).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((sol.z.x - warm.x).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE(sol.report.cost, 1e-12);
}

TEST(Smoothed, ElastoplasticReachesTarget) {
  auto in = elastoplastic61();
  Mesh mesh(50, 1.0);
  auto warm = warm_start_from_control(in.problem, in.initial_guess(mesh));
  auto sol = solve_smoothed(transcribe(in.problem, 50), warm);
  ASSERT_TRUE(sol.report.converged) << sol.report.message;
  EXPECT_LE(in.problem.phi(sol.z.x.col(mesh.k)), 1e-4);
  Vec slopes(mesh.k);
  for (int j = 0; j < mesh.k; ++j) slopes(j) = (sol.z.u(0, j + 1) - sol.z.u(0, j)) / mesh.h();
  EXPECT_LE(slopes.maxCoeff() - slopes.minCoeff(), 1e-4);
  expect_solution_invariants(in.problem, sol);
}

TEST(Smoothed, ScheduleValidation) {
  auto in = remark45();
  Mesh mesh(4, 2.0);
  auto tr = transcribe(in.problem, 4);
  auto warm = warm_start_from_control(in.problem, in.initial_guess(mesh));
  SmoothedOptions opt;
  opt.sigma_schedule = {1e-2, 1e-1, 1e-9};
  EXPECT_THROW(solve_smoothed(tr, warm, opt), Error);
  opt.sigma_schedule = {1e-2};
  EXPECT_THROW(solve_smoothed(tr, warm, opt), Error);
}

TEST(Smoothed, InfeasibleWarmStart) {
  auto in = remark45();
  Mesh mesh(4, 2.0);
  auto warm = warm_start_from_control(in.problem, in.initial_guess(mesh));
  warm.x(0, 2) = 5.0;
  try {
    solve_smoothed(transcribe(in.problem, 4), warm);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::precondition);
  }
}

TEST(Shooting, AgreesWithSmoothedOnRemark) {
  auto in = remark45();
  const int k = 50;
  Mesh mesh(k, 2.0);
  auto smooth = solve_smoothed(transcribe(in.problem, k), warm_start_from_control(in.problem, in.initial_guess(mesh)));
  Path init = Path::sample(mesh, [&](double t) { return vec1(in.known_solution->u(t)(0) + (t > 0 ? 0.1 : 0.0)); });
  auto shoot = solve_shooting(in.problem, k, init);
  EXPECT_NEAR(shoot.report.cost, smooth.report.cost, 1e-3);
  for (std::size_t i = 1; i < shoot.report.cost_trace.size(); ++i)
    EXPECT_LE(shoot.report.cost_trace[i], shoot.report.cost_trace[i - 1]);
}

TEST(Shooting, AllNodesPinned) {
  auto in = remark45();
  const int k = 10;
  Mesh mesh(k, 2.0);
  Path u = in.initial_guess(mesh);
  ShootingOptions opt;
  opt.pinned.assign(k + 1, true);
  auto sol = solve_shooting(in.problem, k, u, opt);
  auto sim = simulate(in.problem.system, u);
  EXPECT_EQ(sol.z.u, u.values);
  EXPECT_EQ(sol.z.x, sim.state.values);
}

TEST(Shooting, MatchesUnconstrainedLq) {
  OcpProblem p = tracking_problem();
  const int k = 10;
  Mesh mesh(k, 1.0);
  const double h = mesh.h();
  // J = h sum_{j<k} (u_j - r_j)^2 + 1/(2h) sum (u_{j+1} - u_j)^2 with u_0 = 0; normal equations in u_1..u_k.
  Mat H = Mat::Zero(k, k);
  Vec b = Vec::Zero(k);
  for (int i = 1; i <= k; ++i) {
    int r = i - 1;
    if (i < k) {
      H(r, r) += 2.0 * h;
      b(r) += 2.0 * h * 0.5 * mesh.t(i);
    }
    H(r, r) += (i < k ? 2.0 : 1.0) / h;
    if (i > 1) H(r, r - 1) -= 1.0 / h;
    if (i < k) H(r, r + 1) -= 1.0 / h;
  }
  Vec uopt = H.ldlt().solve(b);
  auto sol = solve_shooting(p, k, Path::constant(mesh, vec1(0.0)));
  for (int i = 1; i <= k; ++i) EXPECT_NEAR(sol.z.u(0, i), uopt(i - 1), 1e-4);
}

TEST(Shooting, InitialControlMustStartAtU0) {
  auto in = remark45();
  EXPECT_THROW(solve_shooting(in.problem, 10, Path::constant(Mesh(10, 2.0), vec1(-3.0))), Error);
}
