#pragma once

#include "sweep/core.hpp"
#include "sweep/geometry.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sweep {

/// Uniform mesh t_j = j T / k.
struct Mesh {
  int k = 1;
  double T = 1.0;

  Mesh() = default;
  Mesh(int k_, double T_) : k(k_), T(T_) {
    require(k >= 1, ErrorKind::configuration, "mesh needs k >= 1");
    require(T > 0.0 && std::isfinite(T), ErrorKind::configuration, "mesh needs a positive finite horizon");
  }
  double h() const { return T / k; }
  double t(int j) const { return j == k ? T : j * h(); }
  /// Interval index containing t under the left-continuous convention, (t_{i}, t_{i+1}] -> i.
  int interval_left(double t) const {
    if (t <= 0.0) return 0;
    int i = static_cast<int>(std::ceil(t / h() - 1e-12)) - 1;
    return std::clamp(i, 0, k - 1);
  }
  bool operator==(const Mesh& o) const { return k == o.k && T == o.T; }
};

/// Piecewise linear path given by node values (one column per node).
struct Path {
  Mesh mesh;
  Mat values;

  Path() = default;
  Path(const Mesh& m, const Mat& v) : mesh(m), values(v) {
    require(v.cols() == m.k + 1, ErrorKind::configuration, "path needs k+1 node values");
  }
  static Path sample(const Mesh& m, const std::function<Vec(double)>& fn) {
    Vec v0 = fn(0.0);
    Mat v(v0.size(), m.k + 1);
    for (int j = 0; j <= m.k; ++j) v.col(j) = fn(m.t(j));
    return Path(m, v);
  }
  static Path constant(const Mesh& m, const Vec& c) { return Path(m, c.replicate(1, m.k + 1)); }

  int dim() const { return static_cast<int>(values.rows()); }
  Vec node(int j) const { return values.col(j); }
  Vec slope(int j) const { return (values.col(j + 1) - values.col(j)) / mesh.h(); }

  Vec at(double t) const {
    const double h = mesh.h();
    if (t <= 0.0) return node(0);
    if (t >= mesh.T) return node(mesh.k);
    int i = std::min(static_cast<int>(t / h), mesh.k - 1);
    double a = (t - mesh.t(i)) / h;
    return (1.0 - a) * values.col(i) + a * values.col(i + 1);
  }

  /// Left-continuous representative of the derivative: slope of the interval (t_i, t_{i+1}] containing t.
  Vec velocity(double t) const { return slope(mesh.interval_left(t)); }

  Path resample(const Mesh& m) const {
    if (m == mesh) return *this;
    return sample(m, [this](double t) { return at(t); });
  }
};

struct StepRecord {
  Vec eta;
  double projection_residual = 0.0;
  double feasibility = 0.0;  ///< largest positive row violation of psi(g(x),u) against Theta
};

/// Controlled sweeping dynamics  x' in f(t,x) - N(g(x); C(u)),  C(u) = psi(., u)^{-1}(Theta).
struct SweepingSystem {
  std::function<Vec(double, const Vec&)> f;
  std::function<Mat(double, const Vec&)> f_jac;  ///< optional; finite differences otherwise
  double L_f = 0.0;
  std::optional<Mat> g;  ///< linear state map; identity when empty
  double L_g = 1.0;
  FieldMap field;
  ThetaSet theta;
  Vec x0;
  double T = 1.0;

  int n() const { return field.n; }
  int m() const { return field.m; }

  void validate() const {
    require(static_cast<bool>(f), ErrorKind::configuration, "drift callback missing");
    require(L_f >= 0.0 && L_g >= 0.0, ErrorKind::configuration, "Lipschitz constants must be nonnegative");
    require(x0.size() == field.n, ErrorKind::configuration, "x0 has wrong dimension");
    require(theta.s == field.s, ErrorKind::configuration, "Theta and psi disagree on s");
    require(T > 0.0, ErrorKind::configuration, "horizon must be positive");
    if (g) require(g->rows() == field.n && g->cols() == field.n, ErrorKind::configuration, "g must be n x n");
  }

  Vec drift(double t, const Vec& x) const { return f(t, x); }

  Mat drift_jac(double t, const Vec& x) const {
    if (f_jac) return f_jac(t, x);
    const auto nn = x.size();
    Vec f0 = f(t, x);
    Mat J(f0.size(), nn);
    for (Eigen::Index i = 0; i < nn; ++i) {
      double d = 1e-7 * (1.0 + std::abs(x(i)));
      Vec xp = x;
      xp(i) += d;
      J.col(i) = (f(t, xp) - f0) / d;
    }
    return J;
  }

  /// psi(g(x),u) as a field in (x,u).
  FieldMap composed() const {
    if (!g) return field;
    FieldMap c = field;
    const Mat G = *g;
    const FieldMap base = field;
    c.value = [base, G](const Vec& x, const Vec& u) -> Vec { return base.value(G * x, u); };
    c.jac_x = [base, G](const Vec& x, const Vec& u) -> Mat { return base.jac_x(G * x, u) * G; };
    c.jac_u = [base, G](const Vec& x, const Vec& u) -> Mat { return base.jac_u(G * x, u); };
    const int n = field.n, m = field.m;
    c.hess = [base, G, n, m](const Vec& x, const Vec& u, const Vec& p) -> Mat {
      Mat H = base.hess(G * x, u, p);
      Mat T = Mat::Identity(n + m, n + m);
      T.topLeftCorner(n, n) = G;
      return T.transpose() * H * T;
    };
    return c;
  }
};

inline double feasibility_violation(const ThetaSet& theta, const Vec& z) {
  Vec c = theta.row_values(z);
  return c.size() ? std::max(0.0, c.maxCoeff()) : 0.0;
}

struct StepResult {
  Vec x_next;
  StepRecord record;
};

/// Catching-up step: project x_j + h f(t_j, x_j) onto C(u_next).
inline StepResult step_catching_up(const SweepingSystem& sys, const Vec& x_j, const Vec& u_next, double t_j, double h,
                                   double tol = Tolerances{}.feas) {
  FieldMap fm = sys.composed();
  Vec pred = x_j + h * sys.drift(t_j, x_j);
  ProjectionResult pr = project_onto_moving_set(fm, sys.theta, u_next, pred, tol, x_j);
  StepResult out;
  out.x_next = pr.y;
  out.record.eta = pr.dec.eta;
  out.record.projection_residual = pr.dec.residual;
  out.record.feasibility = feasibility_violation(sys.theta, fm.value(pr.y, u_next));
  return out;
}

struct Simulation {
  Path state;
  std::vector<StepRecord> records;
};

inline Simulation simulate(const SweepingSystem& sys, const Path& control, double tol = Tolerances{}.feas) {
  sys.validate();
  require(control.dim() == sys.m(), ErrorKind::configuration, "control path has wrong dimension");
  require(std::abs(control.mesh.T - sys.T) <= 1e-12 * sys.T, ErrorKind::configuration,
          "control mesh horizon differs from the system horizon");
  const Mesh& mesh = control.mesh;
  FieldMap fm = sys.composed();
  Vec z0 = fm.value(sys.x0, control.node(0));
  if (!theta_contains(sys.theta, z0, tol))
    throw Error(ErrorKind::simulation, "step 0: initial state is not in C(0, u(0))");
  Mat X(sys.n(), mesh.k + 1);
  X.col(0) = sys.x0;
  Simulation out;
  out.records.reserve(mesh.k);
  for (int j = 0; j < mesh.k; ++j) {
    try {
      auto st = step_catching_up(sys, X.col(j), control.node(j + 1), mesh.t(j), mesh.h(), tol);
      X.col(j + 1) = st.x_next;
      out.records.push_back(std::move(st.record));
    } catch (const Error& e) {
      throw Error(ErrorKind::simulation, "step " + std::to_string(j + 1) + ": " + e.message());
    }
  }
  out.state = Path(mesh, X);
  return out;
}

/// Where the cone of the discrete inclusion is evaluated: at (x_j, u_j) or at (x_{j+1}, u_{j+1}).
enum class ConeAt { left, right };

/// Distance from v to N(x; C(u)) = grad_x psi^T N_Theta(psi(x,u)); +inf when psi(x,u) is outside Theta.
inline double cone_distance(const FieldMap& fm, const ThetaSet& theta, const Vec& x, const Vec& u, const Vec& v,
                            double tol = 1e-8) {
  Vec z = fm.value(x, u);
  if (!theta_contains(theta, z, tol)) return kInf;
  auto act = active_rows(theta, z, tol);
  Mat D = theta.row_jacobian(z);
  Mat Jt = fm.jac_x(x, u).transpose();
  Mat B(Jt.rows(), static_cast<Eigen::Index>(act.size()));
  for (std::size_t i = 0; i < act.size(); ++i) B.col(i) = Jt * D.row(act[i]).transpose();
  return detail::signed_lsq(B, v, std::vector<bool>(act.size(), true)).residual;
}

/// Per-step distance of -(x_{j+1}-x_j)/h + f(t_j,x_j) to the normal cone.
inline std::vector<double> inclusion_residual(const SweepingSystem& sys, const Path& state, const Path& control,
                                              ConeAt at = ConeAt::right, double tol = 1e-8) {
  require(state.mesh == control.mesh, ErrorKind::configuration, "state and control must share a mesh");
  FieldMap fm = sys.composed();
  const Mesh& mesh = state.mesh;
  std::vector<double> res(mesh.k);
  for (int j = 0; j < mesh.k; ++j) {
    Vec v = -state.slope(j) + sys.drift(mesh.t(j), state.node(j));
    int i = at == ConeAt::right ? j + 1 : j;
    res[j] = cone_distance(fm, sys.theta, state.node(i), control.node(i), v, tol);
  }
  return res;
}

/// b_j = bbar(t_j) + U (x_j - xbar(t_j)): the offsets that keep psi = U x - b along x equal to its reference values.
inline Path feasible_companion_polyhedral(const Path& state, const Path& ref_state, const Mat& U, const Path& ref_b) {
  require(U.rows() == ref_b.dim(), ErrorKind::configuration, "row count differs from offset dimension");
  const Mesh& mesh = state.mesh;
  Mat B(ref_b.dim(), mesh.k + 1);
  for (int j = 0; j <= mesh.k; ++j) {
    double t = mesh.t(j);
    B.col(j) = ref_b.at(t);
    if (U.rows() > 0) B.col(j) += U * (state.node(j) - ref_state.at(t));
  }
  return Path(mesh, B);
}

struct W12 {
  double w12 = 0.0;
  double sup = 0.0;
};

inline W12 w12_distance(const Path& a, const Path& b_in) {
  Path b = b_in.resample(a.mesh);
  require(a.dim() == b.dim(), ErrorKind::configuration, "paths differ in dimension");
  const double h = a.mesh.h();
  double s = (a.node(0) - b.node(0)).squaredNorm();
  for (int j = 0; j < a.mesh.k; ++j) s += h * (a.slope(j) - b.slope(j)).squaredNorm();
  W12 out;
  out.w12 = std::sqrt(s);
  out.sup = (a.values - b.values).colwise().norm().maxCoeff();
  return out;
}

/// Control at at state x given the reference pair (xbar, ubar) at the same time.
using ShiftMap = std::function<Vec(const Vec& x, const Vec& xbar, const Vec& ubar)>;

struct Approximation {
  Path state;
  Path control;
};

/// Constructive discrete approximation of a feasible reference pair:
/// x_{j+1} = x_j + h f(t_j,x_j) - h grad_x psi(x_j,u_j)^T w_j, where w_j decomposes -xbar'(t_j) + f(t_j, xbar(t_j))
/// at the reference point and u_j is the shifted reference control. The reference velocity at t_j is the
/// left-continuous one.
inline Approximation feasible_approximation(const SweepingSystem& sys, const Path& ref_state, const Path& ref_control,
                                            int k, const ShiftMap& vartheta, double tol = 1e-8) {
  sys.validate();
  require(static_cast<bool>(vartheta), ErrorKind::configuration, "a shift map is required");
  Mesh mesh(k, sys.T);
  FieldMap fm = sys.composed();
  Mat X(sys.n(), k + 1), U(sys.m(), k + 1);
  X.col(0) = sys.x0;
  for (int j = 0; j <= k; ++j) {
    double t = mesh.t(j);
    Vec xb = ref_state.at(t), ub = ref_control.at(t);
    Vec xj = X.col(j);
    U.col(j) = j == 0 ? ref_control.at(0.0) : vartheta(xj, xb, ub);
    if (j == k) break;
    Vec v = -ref_state.velocity(t) + sys.drift(t, xb);
    auto dec = normal_cone_decompose(fm, sys.theta, xb, ub, v, tol);
    Vec uj = U.col(j);
    X.col(j + 1) = xj + mesh.h() * sys.drift(t, xj) - mesh.h() * fm.jac_x(xj, uj).transpose() * dec.eta;
  }
  return {Path(mesh, X), Path(mesh, U)};
}

struct ConvergenceRow {
  int k = 0;
  double w12_x = 0.0;
  double sup_u = 0.0;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  bool strictly_decreasing = true;
};

/// Simulates each per-k control and measures the distance to the reference pair.
inline ConvergenceTable convergence_study(const SweepingSystem& sys, const std::function<Path(int)>& control_family,
                                          const Path& ref_state, const Path& ref_control, const std::vector<int>& ks) {
  for (std::size_t i = 1; i < ks.size(); ++i)
    require(ks[i] > ks[i - 1], ErrorKind::configuration, "mesh list must be increasing");
  ConvergenceTable tab;
  for (int k : ks) {
    Path u = control_family(k);
    require(u.mesh.k == k, ErrorKind::configuration, "control family returned the wrong mesh");
    Simulation sim = simulate(sys, u);
    ConvergenceRow r;
    r.k = k;
    r.w12_x = w12_distance(sim.state, ref_state).w12;
    r.sup_u = w12_distance(u, ref_control).sup;
    if (!tab.rows.empty() && !(r.w12_x < tab.rows.back().w12_x)) tab.strictly_decreasing = false;
    tab.rows.push_back(r);
  }
  return tab;
}

}  // namespace sweep
