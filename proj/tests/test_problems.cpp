#include <sweep/problems.hpp>

#include <gtest/gtest.h>

using namespace sweep;

TEST(Instances, RemarkData) {
  auto in = instance("remark45");
  const auto& p = in.problem;
  EXPECT_EQ(p.n(), 1);
  EXPECT_EQ(p.m(), 1);
  EXPECT_DOUBLE_EQ(p.system.x0(0), 1.5);
  EXPECT_DOUBLE_EQ(p.u0(0), -2.0);
  EXPECT_DOUBLE_EQ(p.system.T, 2.0);
  EXPECT_DOUBLE_EQ(p.phi(vec1(3.0)), 2.0);
  EXPECT_DOUBLE_EQ(p.ell(0.5, vec1(0), vec1(-1.0), vec1(0), vec1(0)), 0.25);
  EXPECT_DOUBLE_EQ(p.ell(1.5, vec1(0), vec1(-0.5), vec1(0), vec1(0)), 0.25);
  const auto& ks = *in.known_solution;
  EXPECT_DOUBLE_EQ(ks.x(0.25)(0), 1.5);
  EXPECT_DOUBLE_EQ(ks.x(0.75)(0), 1.25);
  EXPECT_DOUBLE_EQ(ks.x(1.5)(0), 1.0);
  EXPECT_DOUBLE_EQ(ks.u(0.5)(0), -1.5);
  EXPECT_DOUBLE_EQ(ks.u(1.5)(0), -1.0);
  EXPECT_DOUBLE_EQ(psi_eval(p.system.field, vec1(1.5), vec1(-2))(0), -0.5);
}

TEST(Instances, CounterexampleData) {
  auto in = instance("counterexample53");
  const auto& p = in.problem;
  EXPECT_EQ(p.n(), 2);
  EXPECT_EQ(p.m(), 2);
  EXPECT_DOUBLE_EQ(p.phi(vec2(1, 1)), 1.0);
  EXPECT_DOUBLE_EQ(p.ell(0.0, vec2(0, 0), vec2(0, 0), vec2(0, 0), vec2(1, 2)), 2.5);
  Certificate c = in.known_certificate(Mesh(10, 1.0));
  EXPECT_EQ(c.lambda, 1.0);
  EXPECT_EQ(c.p.col(3), (Vec(4) << -1, -1, 0, 0).finished());
  EXPECT_EQ(c.gamma.total_variation(0.1), 0.0);
  EXPECT_TRUE(theta_contains(p.system.theta, psi_eval(p.system.field, vec2(1, 1), vec2(1, 1))));
}

TEST(Instances, ElastoplasticData) {
  auto in = instance("elastoplastic61");
  const auto& p = in.problem;
  EXPECT_EQ(p.system.theta.kind, ThetaSet::Kind::linear_image);
  EXPECT_TRUE(theta_contains(p.system.theta, vec1(1.0)));
  EXPECT_FALSE(theta_contains(p.system.theta, vec1(1.1)));
  EXPECT_DOUBLE_EQ(psi_eval(p.system.field, vec1(0.2), vec1(0.3))(0), 0.5);
  EXPECT_DOUBLE_EQ(p.phi(vec1(0.0)), 0.0);
  ASSERT_TRUE(in.has_certificate());
}

TEST(Instances, ElastoplasticWithoutKnownPair) {
  ElastoplasticParams prm;
  prm.slope = vec1(2.0);
  auto in = elastoplastic61(prm);
  EXPECT_FALSE(in.known_solution.has_value());
  EXPECT_FALSE(in.has_certificate());
  EXPECT_NEAR(in.problem.phi(vec1(-1.0)), 0.0, 1e-12);  // endpoint reached by eps = 2t
}

TEST(Instances, UnknownId) {
  try {
    instance("nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unknown_instance);
  }
}

TEST(Instances, KnownSolutionsSimulate) {
  for (const auto& id : instance_ids()) {
    auto in = instance(id);
    ASSERT_TRUE(in.known_solution) << id;
    Mesh mesh(200, in.problem.system.T);
    auto sim = simulate(in.problem.system, in.known_solution->control(mesh));
    double err = (sim.state.values - in.known_solution->state(mesh).values).cwiseAbs().maxCoeff();
    EXPECT_LE(err, 2.0 * mesh.h()) << id;
  }
}

TEST(Instances, KnownCertificatesPass) {
  for (const auto& id : instance_ids()) {
    auto in = instance(id);
    if (!in.has_certificate()) continue;
    Mesh mesh(200, in.problem.system.T);
    auto rep = residual_continuous_EL(in.problem, in.known_solution->state(mesh), in.known_solution->control(mesh),
                                      in.known_certificate(mesh));
    for (const auto& c : rep.checks) EXPECT_TRUE(c.pass) << id << ": " << c.name << " = " << c.residual;
  }
}

TEST(Instances, VarthetaPreservesPsi) {
  for (const auto& id : instance_ids()) {
    auto in = instance(id);
    const auto& f = in.problem.system.field;
    Vec xb = in.known_solution->x(0.3), ub = in.known_solution->u(0.3);
    Vec x = xb + 0.05 * Vec::Ones(xb.size());
    Vec u = in.vartheta(x, xb, ub);
    EXPECT_LE((psi_eval(f, x, u) - psi_eval(f, xb, ub)).norm(), 1e-12) << id;
  }
}
