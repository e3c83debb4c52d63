#pragma once

#include "sweep/certify.hpp"

namespace sweep {

/// Closed-form reference pair, sampled onto any mesh.
struct KnownPair {
  std::function<Vec(double)> x;
  std::function<Vec(double)> u;

  Path state(const Mesh& m) const { return Path::sample(m, x); }
  Path control(const Mesh& m) const { return Path::sample(m, u); }
};

struct NamedInstance {
  std::string id;
  OcpProblem problem;
  std::optional<KnownPair> known_solution;
  std::function<Certificate(const Mesh&)> known_certificate;  ///< empty when none is known
  ShiftMap vartheta;
  std::function<Path(const Mesh&)> initial_guess;
  std::string notes;

  bool has_certificate() const { return static_cast<bool>(known_certificate); }
};

inline Vec zero_drift(double, const Vec& x) { return Vec::Zero(x.size()); }

namespace detail {

inline SweepingSystem make_system(FieldMap field, ThetaSet theta, Vec x0, double T) {
  SweepingSystem sys;
  const auto n = x0.size();
  sys.f = zero_drift;
  sys.f_jac = [n](double, const Vec&) -> Mat { return Mat::Zero(n, n); };
  sys.field = std::move(field);
  sys.theta = std::move(theta);
  sys.x0 = std::move(x0);
  sys.T = T;
  return sys;
}

/// phi = 1/2 |x - target|^2
inline void set_quadratic_terminal(OcpProblem& p, const Vec& target) {
  p.phi = [target](const Vec& x) { return 0.5 * (x - target).squaredNorm(); };
  p.phi_grad = [target](const Vec& x) -> Vec { return x - target; };
}

/// ell = 1/2 |u'|^2
inline void set_control_energy(OcpProblem& p) {
  p.ell = [](double, const Vec&, const Vec&, const Vec&, const Vec& ud) { return 0.5 * ud.squaredNorm(); };
  p.ell_grad = [](double, const Vec& x, const Vec& u, const Vec&, const Vec& ud) -> Vec {
    const auto n = x.size(), m = u.size();
    Vec g = Vec::Zero(2 * (n + m));
    g.tail(m) = ud;
    return g;
  };
}

}  // namespace detail

/// x' in -N(x; C(u)), C(u) = (-inf, -u], with the tracking cost whose unique optimum is the kinked pair.
inline NamedInstance remark45() {
  NamedInstance in;
  in.id = "remark45";
  auto& p = in.problem;
  p.system = detail::make_system(FieldMap::linear(Mat::Ones(1, 1), Mat::Ones(1, 1), Vec::Zero(1)),
                                 ThetaSet::orthant(1), vec1(1.5), 2.0);
  p.u0 = vec1(-2.0);
  detail::set_quadratic_terminal(p, vec1(1.0));
  p.ell = [](double t, const Vec&, const Vec& u, const Vec&, const Vec&) {
    double r = t <= 1.0 ? u(0) + 2.0 - t : u(0) + 1.0;
    return r * r;
  };
  p.ell_grad = [](double t, const Vec&, const Vec& u, const Vec&, const Vec&) -> Vec {
    double r = t <= 1.0 ? u(0) + 2.0 - t : u(0) + 1.0;
    Vec g = Vec::Zero(4);
    g(1) = 2.0 * r;
    return g;
  };
  in.known_solution = KnownPair{
      [](double t) { return vec1(t <= 0.5 ? 1.5 : (t <= 1.0 ? 2.0 - t : 1.0)); },
      [](double t) { return vec1(t <= 1.0 ? t - 2.0 : -1.0); }};
  in.known_certificate = [](const Mesh& mesh) {
    Certificate c;
    c.mesh = mesh;
    c.lambda = 1.0;
    c.p = Mat::Zero(2, mesh.k + 1);
    c.gamma = VectorMeasure::zero(1, mesh.k);
    return c;
  };
  in.vartheta = [](const Vec& x, const Vec& xb, const Vec& ub) -> Vec { return ub - (x - xb); };
  in.initial_guess = [](const Mesh& mesh) { return Path::constant(mesh, vec1(-2.0)); };
  in.notes = "Moving set C(u) = (-inf, -u]; certificate lambda = 1 with p, q, gamma zero.";
  return in;
}

/// Fixed rows I, controlled offsets b: C(b) = {x | x <= b}. The stationary pair at b = (1,1) satisfies the
/// modified maximum condition with nu = 0 while the conventional Hamiltonian is +inf.
inline NamedInstance counterexample53() {
  NamedInstance in;
  in.id = "counterexample53";
  auto& p = in.problem;
  Mat U = Mat::Identity(2, 2);
  p.system = detail::make_system(FieldMap::fixed_rows(U), ThetaSet::orthant(2), vec2(1.0, 1.0), 1.0);
  p.u0 = vec2(1.0, 1.0);
  detail::set_quadratic_terminal(p, Vec::Zero(2));
  detail::set_control_energy(p);
  in.known_solution = KnownPair{[](double) { return vec2(1.0, 1.0); }, [](double) { return vec2(1.0, 1.0); }};
  in.known_certificate = [](const Mesh& mesh) {
    Certificate c;
    c.mesh = mesh;
    c.lambda = 1.0;
    c.p = Mat::Zero(4, mesh.k + 1);
    c.p.topRows(2).setConstant(-1.0);
    c.gamma = VectorMeasure::zero(2, mesh.k);
    c.nu = Mat::Zero(2, mesh.k);
    return c;
  };
  in.vartheta = [U](const Vec& x, const Vec& xb, const Vec& bb) -> Vec { return h4_shift_polyhedral(x, xb, U, bb); };
  in.initial_guess = [](const Mesh& mesh) { return Path::constant(mesh, vec2(1.0, 1.0)); };
  in.notes = "Rows u1 = (1,0), u2 = (0,1) and offsets b = (1,1).";
  return in;
}

struct ElastoplasticParams {
  Mat A = Mat::Ones(1, 1);
  Mat G = (Mat(2, 1) << 1.0, -1.0).finished();  ///< Z = {y | G y <= g}
  Vec g = vec2(1.0, 1.0);
  Vec slope = vec1(0.5);  ///< reference strain eps(t) = slope * t
  std::optional<Vec> target;  ///< zeta_1; the endpoint reached by the reference strain when empty
};

/// zeta' in -N(zeta; -A^{-1} eps + A Z), zeta(0) = 0, eps(0) = 0, cost int 1/2 |eps'|^2 + 1/2 |zeta(1) - zeta_1|^2.
inline NamedInstance elastoplastic61(const ElastoplasticParams& prm = {}) {
  NamedInstance in;
  in.id = "elastoplastic61";
  const auto n = prm.A.rows();
  require(prm.slope.size() == n, ErrorKind::configuration, "strain slope has wrong dimension");
  Mat Ainv = prm.A.inverse();
  auto& p = in.problem;
  p.system = detail::make_system(FieldMap::linear(Mat::Identity(n, n), Ainv, Vec::Zero(n)),
                                 ThetaSet::linear_image(prm.A, prm.G, prm.g, true), Vec::Zero(n), 1.0);
  p.u0 = Vec::Zero(n);
  Vec a = prm.slope;
  Vec target;
  if (prm.target) {
    target = *prm.target;
  } else {
    Mesh mesh(200, 1.0);
    target = simulate(p.system, Path::sample(mesh, [a](double t) -> Vec { return a * t; })).state.node(mesh.k);
  }
  detail::set_quadratic_terminal(p, target);
  detail::set_control_energy(p);
  // the reference strain keeps zeta at 0 while A^{-1} a t stays inside A Z
  Vec zA = Ainv * a;
  Vec rows = ThetaSet::linear_image(prm.A, prm.G, prm.g).M * zA;
  bool stays = (rows.array() <= prm.g.array()).all() && target.norm() <= 1e-12;
  if (stays) {
    in.known_solution = KnownPair{[n](double) { return Vec(Vec::Zero(n)); }, [a](double t) -> Vec { return a * t; }};
    in.known_certificate = [a, Ainv, n](const Mesh& mesh) {
      Certificate c;
      c.mesh = mesh;
      c.lambda = 1.0;
      c.p = Mat::Zero(2 * n, mesh.k + 1);
      c.gamma = VectorMeasure::zero(static_cast<int>(n), mesh.k);
      // q = p - grad psi^T gamma{[t,T]} = (a, a) needs grad psi^T w = -(a, a)
      c.gamma.atoms.push_back({mesh.k, Vec(-a)});
      (void)Ainv;
      return c;
    };
  }
  Mat A = prm.A;
  in.vartheta = [A](const Vec& x, const Vec& xb, const Vec& ub) -> Vec { return ub - A * (x - xb); };
  in.initial_guess = [a](const Mesh& mesh) { return Path::sample(mesh, [a](double t) -> Vec { return a * t; }); };
  in.notes = "Examples 6.1/6.2; Theta = A Z, psi(x,u) = x + A^{-1} u; certificate lambda = 1, p = 0, gamma = -a at T.";
  return in;
}

/// psi(x,u) = x^2 + u - 1, Theta = R_-: C(u) = [-sqrt(1-u), sqrt(1-u)].
inline NamedInstance nonconvex22() {
  NamedInstance in;
  in.id = "nonconvex22";
  auto& p = in.problem;
  p.system = detail::make_system(quadratic_example_field(), ThetaSet::orthant(1), vec1(1.0), 1.0);
  p.u0 = vec1(0.0);
  detail::set_quadratic_terminal(p, vec1(0.5));
  detail::set_control_energy(p);
  in.known_solution = KnownPair{[](double t) { return vec1(std::sqrt(1.0 - 0.75 * t)); },
                                [](double t) { return vec1(0.75 * t); }};
  in.vartheta = [](const Vec& x, const Vec& xb, const Vec& ub) -> Vec { return h4_shift_quadratic(x, xb, ub); };
  in.initial_guess = [](const Mesh& mesh) { return Path::sample(mesh, [](double t) { return vec1(0.75 * t); }); };
  in.notes = "Quadratic moving set; the known pair is a feasible reference (shrinking set), not an optimum.";
  return in;
}

inline std::vector<std::string> instance_ids() {
  return {"remark45", "counterexample53", "elastoplastic61", "nonconvex22"};
}

inline NamedInstance instance(const std::string& id) {
  if (id == "remark45") return remark45();
  if (id == "counterexample53") return counterexample53();
  if (id == "elastoplastic61") return elastoplastic61();
  if (id == "nonconvex22") return nonconvex22();
  throw Error(ErrorKind::unknown_instance, "unknown instance id: " + id);
}

}  // namespace sweep
