#include <sweep/problems.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace sweep;

namespace {

DiscreteDecision decision(const OcpProblem& p, const Path& x, const Path& u) {
  DiscreteDecision z;
  z.mesh = x.mesh;
  z.x = x.values;
  z.u = u.values;
  z.eta = recover_eta(p.system, x, u);
  return z;
}

struct Sampled {
  NamedInstance in;
  Mesh mesh;
  Path x, u;
};

Sampled sampled(NamedInstance in, int k) {
  Mesh mesh(k, in.problem.system.T);
  Path x = in.known_solution->state(mesh), u = in.known_solution->control(mesh);
  return {std::move(in), mesh, x, u};
}

// psi = x + u with Theta = {h(z) <= 0}; the pair x = 1 - t/2, u = t/2 keeps psi = 1 and eta = 1/2.
struct LiftCase {
  OcpProblem p;
  Path x, u;
};

LiftCase lift_case(std::function<Vec(const Vec&)> h, std::function<Mat(const Vec&)> jac,
                   std::function<Mat(const Vec&, const Vec&)> hess) {
  LiftCase c;
  c.p = remark45().problem;
  c.p.system.theta = ThetaSet::smooth_inequality(1, 1, std::move(h), std::move(jac), std::move(hess));
  c.p.system.x0 = vec1(1.0);
  c.p.system.T = 1.0;
  Mesh mesh(10, 1.0);
  c.x = Path::sample(mesh, [](double t) { return vec1(1.0 - 0.5 * t); });
  c.u = Path::sample(mesh, [](double t) { return vec1(0.5 * t); });
  return c;
}

Certificate constant_p(const Mesh& mesh, int nm, double px) {
  Certificate c;
  c.mesh = mesh;
  c.lambda = 1.0;
  c.p = Mat::Zero(nm, mesh.k + 1);
  c.p.row(0).setConstant(px);
  c.gamma = VectorMeasure::zero(1, mesh.k);
  return c;
}

}  // namespace

TEST(RecoverEta, RemarkPhases) {
  auto S = sampled(remark45(), 200);
  Mat eta = recover_eta(S.in.problem.system, S.x, S.u);
  for (int j = 0; j < S.mesh.k; ++j) {
    double mid = S.mesh.t(j) + 0.5 * S.mesh.h();
    double want = (mid > 0.5 && mid < 1.0) ? 1.0 : 0.0;
    EXPECT_NEAR(eta(0, j), want, 1e-9) << "interval " << j;
  }
}

TEST(RecoverEta, ElastoplasticSticking) {
  auto S = sampled(elastoplastic61(), 50);
  Mat eta = recover_eta(S.in.problem.system, S.x, S.u);
  EXPECT_LE(eta.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(RecoverEta, MotionAwayFromTheWallIsRejected) {
  auto in = remark45();
  Mesh mesh(4, 2.0);
  Path x = Path::sample(mesh, [](double t) { return vec1(1.5 - 0.1 * t); });
  Path u = Path::constant(mesh, vec1(-2.0));
  try {
    recover_eta(in.problem.system, x, u);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::not_in_cone);
  }
}

TEST(ContinuousEL, ElastoplasticKnownCertificatePasses) {
  auto S = sampled(elastoplastic61(), 50);
  auto rep = residual_continuous_EL(S.in.problem, S.x, S.u, S.in.known_certificate(S.mesh));
  for (const auto& c : rep.checks) EXPECT_TRUE(c.pass) << c.name << " " << c.residual;
  EXPECT_TRUE(rep.all_pass());
}

TEST(ContinuousEL, RemarkAssembledPassesAtK200) {
  auto S = sampled(remark45(), 200);
  auto a = assemble_certificate(S.in.problem, S.x, S.u, 1.0);
  auto rep = residual_continuous_EL(S.in.problem, S.x, S.u, a.cert);
  for (const auto& c : rep.checks) EXPECT_LE(c.residual, 1e-6) << c.name;
  EXPECT_TRUE(rep.all_pass());
}

TEST(ContinuousEL, ZeroMultipliersFailNontriviality) {
  auto S = sampled(remark45(), 200);
  Certificate c = S.in.known_certificate(S.mesh);
  c.lambda = 0.0;
  auto rep = residual_continuous_EL(S.in.problem, S.x, S.u, c);
  EXPECT_FALSE(rep.at("nontriviality_margin").pass);
  EXPECT_FALSE(rep.all_pass());
}

TEST(ContinuousEL, QMatchesPAndGamma) {
  auto S = sampled(elastoplastic61(), 50);
  auto a = assemble_certificate(S.in.problem, S.x, S.u, 1.0);
  ASSERT_GT(a.cert.q.size(), 0);
  auto rep = residual_continuous_EL(S.in.problem, S.x, S.u, a.cert);
  EXPECT_LE(rep.at("q_gamma").residual, 1e-10);
}

TEST(ContinuousEL, ScalingKeepsVerdicts) {
  for (const char* id : {"remark45", "elastoplastic61", "counterexample53"}) {
    auto S = sampled(instance(id), 200);
    Certificate c = S.in.known_certificate(S.mesh);
    auto base = residual_continuous_EL(S.in.problem, S.x, S.u, c);
    for (double s : {0.25, 3.0}) {
      auto rep = residual_continuous_EL(S.in.problem, S.x, S.u, c.scaled(s));
      for (std::size_t i = 0; i < rep.checks.size(); ++i)
        EXPECT_EQ(rep.checks[i].pass, base.checks[i].pass) << id << " " << rep.checks[i].name << " scale " << s;
    }
  }
}

TEST(DiscreteEL, ElastoplasticCertificate) {
  auto S = sampled(elastoplastic61(), 50);
  auto d = discretize(S.in.problem, S.x, S.u, S.in.known_certificate(S.mesh));
  auto rep = residual_discrete_EL(S.in.problem, decision(S.in.problem, S.x, S.u), d);
  for (const auto& c : rep.checks) {
    if (c.name == "transversality") continue;
    EXPECT_LE(c.residual, 1e-8) << c.name;
    EXPECT_TRUE(c.pass) << c.name;
  }
  // The endpoint atom cannot be represented on the mesh: p_k = q(T) = (a, a) against -lambda grad phi = 0
  // with the endpoint inactive, so the discrete transversality misses by |(a, a)| = a sqrt(2).
  EXPECT_NEAR(rep.at("transversality").residual, 0.5 * std::sqrt(2.0), 1e-9);
}

TEST(DiscreteEL, ZeroCertificateFailsNontriviality) {
  auto S = sampled(elastoplastic61(), 50);
  DiscreteCertificate d;
  d.lambda = 0.0;
  d.p = Mat::Zero(2, S.mesh.k + 1);
  d.gamma = Mat::Zero(1, S.mesh.k);
  auto rep = residual_discrete_EL(S.in.problem, decision(S.in.problem, S.x, S.u), d);
  EXPECT_FALSE(rep.at("nontriviality_margin").pass);
}

TEST(DiscreteEL, PerturbationShowsInAdjointResidual) {
  auto S = sampled(elastoplastic61(), 50);
  auto d = discretize(S.in.problem, S.x, S.u, S.in.known_certificate(S.mesh));
  d.p(0, 20) += 1e-3;
  auto rep = residual_discrete_EL(S.in.problem, decision(S.in.problem, S.x, S.u), d);
  EXPECT_NEAR(rep.at("adjoint_ode").residual, 1e-3, 1e-9);
  EXPECT_FALSE(rep.at("adjoint_ode").pass);
}

TEST(Assemble, ElastoplasticRecoversAtom) {
  auto S = sampled(elastoplastic61(), 50);
  auto a = assemble_certificate(S.in.problem, S.x, S.u, 1.0);
  EXPECT_LE(a.cert.p.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE(a.cert.gamma.density.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(a.cert.gamma.atom_at(S.mesh.k)(0), -0.5, 1e-6);
  for (int j = 0; j < S.mesh.k; ++j) EXPECT_NEAR(a.cert.q(1, j), 0.5, 1e-6);
}

TEST(Assemble, InteriorTrajectoryHasNoMeasure) {
  auto in = remark45();
  // x + u <= -1/2 throughout, controls track the running cost exactly.
  in.problem.system.x0 = vec1(0.5);
  Mesh mesh(40, 2.0);
  Path u = Path::sample(mesh, [](double t) { return vec1(t <= 1.0 ? t - 2.0 : -1.0); });
  Path x = Path::constant(mesh, vec1(0.5));
  auto a = assemble_certificate(in.problem, x, u, 1.0);
  EXPECT_LE(a.residual, 1e-10);
  EXPECT_LE(a.cert.gamma.total_variation(mesh.h()), 1e-10);
  EXPECT_LE((a.cert.p.row(0).array() - a.cert.p(0, 0)).abs().maxCoeff(), 1e-10);
}

TEST(Assemble, PerturbedPairLeavesResidual) {
  auto in = remark45();
  Mesh mesh(200, 2.0);
  Path x = in.known_solution->state(mesh);
  Path u = Path::sample(mesh, [](double t) { return vec1(t <= 1.0 ? t - 2.0 : -1.05); });
  auto a = assemble_certificate(in.problem, x, u, 1.0);
  EXPECT_GT(a.residual, 1e-6);
}

TEST(Nondegeneracy, RemarkEndpoint) {
  auto f = FieldMap::linear(Mat::Ones(1, 1), Mat::Ones(1, 1), Vec::Zero(1));
  auto th = ThetaSet::orthant(1);
  EXPECT_TRUE(check_nondegeneracy(f, th, vec1(1), vec1(-1), vec1(0)).nondegenerate);
  EXPECT_TRUE(check_nondegeneracy(f, th, vec1(0), vec1(-1), vec1(0)).nondegenerate);
  auto d = check_nondegeneracy(f, th, vec1(1), vec1(-1), vec1(2));
  EXPECT_FALSE(d.nondegenerate);
  EXPECT_GT(d.witness.norm(), 0.0);
}

TEST(Hamiltonian, Modified) {
  auto f = FieldMap::fixed_rows(Mat::Identity(2, 2));
  auto th = ThetaSet::orthant(2);
  auto h = modified_hamiltonian(f, th, vec2(1, 1), vec2(1, 1), vec2(-1, -1), vec2(0, 0));
  EXPECT_FALSE(h.unbounded);
  EXPECT_EQ(h.value, 0.0);
  auto one = FieldMap::linear(Mat::Ones(1, 1), Mat::Ones(1, 1), Vec::Zero(1));
  EXPECT_TRUE(modified_hamiltonian(one, ThetaSet::orthant(1), vec1(1), vec1(-1), vec1(-2), vec1(1)).unbounded);
  EXPECT_EQ(modified_hamiltonian(one, ThetaSet::orthant(1), vec1(0), vec1(-1), vec1(-2), vec1(1)).value, 0.0);
  EXPECT_THROW(modified_hamiltonian(one, ThetaSet::box(vec1(-1), vec1(1)), vec1(0), vec1(0), vec1(1), vec1(1)), Error);
}

TEST(Hamiltonian, ModifiedNeverNegative) {
  std::mt19937 rng(3);
  std::normal_distribution<double> N;
  auto f = FieldMap::fixed_rows(Mat::Identity(3, 3));
  for (int i = 0; i < 200; ++i) {
    Vec x(3), p(3), nu(3);
    for (int r = 0; r < 3; ++r) {
      x(r) = N(rng) > 0 ? 1.0 : 0.0;
      p(r) = N(rng);
      nu(r) = N(rng);
    }
    auto h = modified_hamiltonian(f, ThetaSet::orthant(3), x, Vec::Ones(3), p, nu);
    EXPECT_TRUE(h.value == 0.0 || (h.unbounded && h.value == kInf));
  }
}

TEST(Hamiltonian, Conventional) {
  auto f = FieldMap::fixed_rows(Mat::Identity(2, 2));
  auto th = ThetaSet::orthant(2);
  EXPECT_TRUE(conventional_hamiltonian(f, th, vec2(1, 1), vec2(1, 1), vec2(-1, -1)).unbounded);
  EXPECT_EQ(conventional_hamiltonian(f, th, vec2(1, 1), vec2(1, 1), vec2(0, 0)).value, 0.0);
  auto h = conventional_hamiltonian(f, th, vec2(1, 1), vec2(1, 1), vec2(1, 2));
  EXPECT_FALSE(h.unbounded);
  EXPECT_EQ(h.value, 0.0);
}

TEST(MaxCondition, CounterexampleWithZeroNu) {
  auto S = sampled(counterexample53(), 20);
  auto rep = max_condition_check(S.in.problem, S.x, S.u, S.in.known_certificate(S.mesh));
  EXPECT_TRUE(rep.pass);
  EXPECT_LE(rep.worst, 1e-10);
}

TEST(MaxCondition, RemarkAssembled) {
  auto S = sampled(remark45(), 200);
  auto a = assemble_certificate(S.in.problem, S.x, S.u, 1.0);
  EXPECT_TRUE(max_condition_check(S.in.problem, S.x, S.u, a.cert).pass);
}

TEST(MaxCondition, PairingWhileMultiplierPositive) {
  auto S = sampled(remark45(), 200);
  auto rep = max_condition_check(S.in.problem, S.x, S.u, constant_p(S.mesh, 2, 0.1));
  EXPECT_FALSE(rep.pass);
  EXPECT_NEAR(rep.worst, 0.1, 1e-9);
}

TEST(Sufficiency, RemarkAndCounterexample) {
  auto S = sampled(remark45(), 200);
  auto a = assemble_certificate(S.in.problem, S.x, S.u, 1.0);
  auto rep = conventional_sufficiency_check(S.in.problem, S.x, S.u, a.cert);
  int checked = 0;
  for (int j = 0; j < S.mesh.k; ++j) {
    double mid = S.mesh.t(j) + 0.5 * S.mesh.h();
    if (mid > 0.5 && mid < 1.0) {
      EXPECT_EQ(rep.rows[j].status, SufficiencyRow::Status::checked);
      EXPECT_TRUE(rep.rows[j].pass);
      ++checked;
    }
    if (mid < 0.5) EXPECT_EQ(rep.rows[j].status, SufficiencyRow::Status::vacuous);
  }
  EXPECT_EQ(checked, 50);

  auto C = sampled(counterexample53(), 20);
  auto rc = conventional_sufficiency_check(C.in.problem, C.x, C.u, C.in.known_certificate(C.mesh));
  EXPECT_FALSE(rc.hypothesis_met);
  for (const auto& r : rc.rows) {
    EXPECT_EQ(r.status, SufficiencyRow::Status::skipped);
    EXPECT_TRUE(r.conventional.unbounded);
  }
}

TEST(Lift, ShiftedIdentity) {
  auto L = lift_case([](const Vec& z) { return vec1(z(0) - 1.0); }, [](const Vec&) { return Mat::Ones(1, 1); },
                     [](const Vec&, const Vec&) { return Mat::Zero(1, 1); });
  auto c = constant_p(L.x.mesh, 2, 0.0);
  c.gamma.density.setConstant(0.3);
  auto rep = smooth_inequality_lift(L.p, L.x, L.u, c);
  EXPECT_LE((rep.mu.array() - 0.5).abs().maxCoeff(), 1e-12);
  EXPECT_LE((rep.nu.array() - 0.3).abs().maxCoeff(), 1e-12);
  EXPECT_LE(rep.chain_residual, 1e-12);
}

TEST(Lift, ScaledRow) {
  auto L = lift_case([](const Vec& z) { return vec1(2.0 * (z(0) - 1.0)); },
                     [](const Vec&) { return Mat::Constant(1, 1, 2.0); },
                     [](const Vec&, const Vec&) { return Mat::Zero(1, 1); });
  auto c = constant_p(L.x.mesh, 2, 0.0);
  c.gamma.density.setConstant(0.3);
  auto rep = smooth_inequality_lift(L.p, L.x, L.u, c);
  EXPECT_LE((rep.mu.array() - 0.25).abs().maxCoeff(), 1e-12);
  EXPECT_LE((rep.nu.array() - 0.15).abs().maxCoeff(), 1e-12);
}

TEST(Lift, QuadraticRowChainTerm) {
  // h = z^2 - 1 at z = 1: eta = 2 mu gives mu = 1/4; with gamma = 0 and q^x = 0.2,
  // 0 = 2 mu * 0.2 + 2 nu gives nu = -0.05.
  auto L = lift_case([](const Vec& z) { return vec1(z(0) * z(0) - 1.0); },
                     [](const Vec& z) { return Mat::Constant(1, 1, 2.0 * z(0)); },
                     [](const Vec&, const Vec& mu) { return Mat::Constant(1, 1, 2.0 * mu(0)); });
  auto rep = smooth_inequality_lift(L.p, L.x, L.u, constant_p(L.x.mesh, 2, 0.2));
  EXPECT_LE((rep.mu.array() - 0.25).abs().maxCoeff(), 1e-12);
  EXPECT_LE((rep.nu.array() + 0.05).abs().maxCoeff(), 1e-12);
}

TEST(Lift, RejectsOtherVariants) {
  auto S = sampled(remark45(), 200);
  EXPECT_THROW(smooth_inequality_lift(S.in.problem, S.x, S.u, S.in.known_certificate(S.mesh)), Error);
}
