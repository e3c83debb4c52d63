#pragma once

#include "sweep/core.hpp"
#include "sweep/dynamics.hpp"
#include "sweep/geometry.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sweep {

/// W12xW12: ell may depend on u'. W12xC: ell ignores u' (it is passed as zero).
enum class Mode { w12w12, w12c };

inline const char* to_string(Mode m) { return m == Mode::w12w12 ? "w12w12" : "w12c"; }

/// Reference pair used by the proximity terms and the localization tube.
struct Anchor {
  Path x;
  Path u;
  double rho = 0.0;
  double epsilon = kInf;
};

/// Running cost ell(t, x, u, x', u') and its gradient (w^x, w^u, v^x, v^u), stacked as one vector.
using RunningCost = std::function<double(double, const Vec&, const Vec&, const Vec&, const Vec&)>;
using RunningGrad = std::function<Vec(double, const Vec&, const Vec&, const Vec&, const Vec&)>;

struct OcpProblem {
  SweepingSystem system;
  Vec u0;  ///< prescribed initial control
  std::function<double(const Vec&)> phi;
  std::function<Vec(const Vec&)> phi_grad;
  RunningCost ell;
  RunningGrad ell_grad;
  Mode mode = Mode::w12w12;
  std::optional<Anchor> anchor;

  int n() const { return system.n(); }
  int m() const { return system.m(); }

  void validate() const {
    system.validate();
    require(u0.size() == system.m(), ErrorKind::configuration, "u0 has wrong dimension");
    require(phi && phi_grad && ell && ell_grad, ErrorKind::configuration, "cost callbacks missing");
    if (anchor) require(anchor->rho >= 0.0, ErrorKind::configuration, "anchor weight must be nonnegative");
  }
};

/// (x_0..x_k, u_0..u_k, eta_0..eta_{k-1}); columns are nodes.
struct DiscreteDecision {
  Mesh mesh;
  Mat x, u, eta;

  Path state() const { return Path(mesh, x); }
  Path control() const { return Path(mesh, u); }
};

struct SolveReport {
  double cost = kInf;
  double complementarity = kInf;
  double stationarity = kInf;
  double dynamics = kInf;
  int iterations = 0;
  bool converged = false;
  std::vector<double> sigma_trace;
  std::vector<double> stage_costs;
  std::vector<double> cost_trace;  ///< accepted-iterate costs
  std::string message;
};

struct Solution {
  DiscreteDecision z;
  SolveReport report;
};

namespace detail {

/// Exact integral of ||a'(t)||^2 over [t0, t1] for a piecewise linear path a.
inline double integral_sq_velocity(const Path& a, double t0, double t1) {
  double acc = 0.0;
  double t = t0;
  while (t < t1 - 1e-15 * (1.0 + t1)) {
    int i = std::min(static_cast<int>(std::floor(t / a.mesh.h() + 1e-12)), a.mesh.k - 1);
    double right = std::min(t1, a.mesh.t(i + 1));
    if (right <= t) right = t1;
    acc += (right - t) * a.slope(i).squaredNorm();
    t = right;
  }
  return acc;
}

/// Integral over [t_j, t_{j+1}] of ||d/h - a'(t)||^2 with d the discrete increment.
inline double proximity_interval(const Path& a, double t0, double t1, const Vec& d) {
  const double h = t1 - t0;
  Vec da = a.at(t1) - a.at(t0);
  return d.squaredNorm() / h - 2.0 * d.dot(da) / h + integral_sq_velocity(a, t0, t1);
}

}  // namespace detail

inline Vec ell_udot(const OcpProblem& p, const Vec& du_over_h) {
  return p.mode == Mode::w12c ? Vec::Zero(du_over_h.size()) : du_over_h;
}

/// J_k per the chosen mode, including the anchor terms when an anchor is present.
inline double cost_eval(const OcpProblem& p, const DiscreteDecision& z) {
  const Mesh& mesh = z.mesh;
  const double h = mesh.h();
  require(z.x.rows() == p.n() && z.u.rows() == p.m() && z.x.cols() == mesh.k + 1 && z.u.cols() == mesh.k + 1,
          ErrorKind::configuration, "decision has wrong shape");
  double J = p.phi(z.x.col(mesh.k));
  for (int j = 0; j < mesh.k; ++j) {
    Vec xd = (z.x.col(j + 1) - z.x.col(j)) / h;
    Vec ud = (z.u.col(j + 1) - z.u.col(j)) / h;
    J += h * p.ell(mesh.t(j), z.x.col(j), z.u.col(j), xd, ell_udot(p, ud));
  }
  if (p.anchor && p.anchor->rho > 0.0) {
    const Anchor& a = *p.anchor;
    double prox = 0.0;
    for (int j = 0; j < mesh.k; ++j) {
      double t0 = mesh.t(j), t1 = mesh.t(j + 1);
      prox += detail::proximity_interval(a.x, t0, t1, z.x.col(j + 1) - z.x.col(j));
      if (p.mode == Mode::w12w12) prox += detail::proximity_interval(a.u, t0, t1, z.u.col(j + 1) - z.u.col(j));
    }
    if (p.mode == Mode::w12w12) {
      J += a.rho * h * prox;
    } else {
      double cu = 0.0;
      for (int j = 0; j <= mesh.k; ++j) cu += (z.u.col(j) - a.u.at(mesh.t(j))).squaredNorm();
      J += a.rho * (cu + prox);
    }
  }
  return J;
}

/// Complementarity form of (P_k): variables (x, u, eta), dynamic equalities
/// x_{j+1} = x_j + h f(t_j,x_j) - h grad_x psi(x_j,u_j)^T D^T mu_j and per-row pairs
/// 0 <= mu_{j,r} perp -c_r(psi(x_j,u_j)) >= 0. For the orthant D = I and mu = eta.
struct Transcription {
  OcpProblem problem;
  Mesh mesh;
  int n = 0, m = 0, s = 0;
  int rows = 0;  ///< inequality rows of Theta, R

  int num_variables() const { return (mesh.k + 1) * (n + m) + mesh.k * rows; }
  int num_equalities() const { return mesh.k * n; }
  int num_complementarity() const { return mesh.k * rows; }
  int num_endpoint_rows() const { return rows; }
  bool localized() const { return problem.anchor && std::isfinite(problem.anchor->epsilon); }
};

inline Transcription transcribe(const OcpProblem& p, int k) {
  p.validate();
  require(p.system.theta.rows_linear(), ErrorKind::configuration,
          "transcription needs Theta with linear rows (orthant, box or polyhedral image)");
  require(!p.system.g, ErrorKind::configuration, "transcription supports g = identity only");
  Transcription tr;
  tr.problem = p;
  tr.mesh = Mesh(k, p.system.T);
  tr.n = p.n();
  tr.m = p.m();
  tr.s = p.system.field.s;
  tr.rows = p.system.theta.rows();
  return tr;
}

/// Row multipliers mu_j reproducing the dynamics of a decision in least squares.
inline Mat row_multipliers_from_dynamics(const Transcription& tr, const Mat& x, const Mat& u) {
  const auto& sys = tr.problem.system;
  const double h = tr.mesh.h();
  Mat mu = Mat::Zero(tr.rows, tr.mesh.k);
  for (int j = 0; j < tr.mesh.k; ++j) {
    Vec zj = sys.field.value(x.col(j), u.col(j));
    Mat B = h * sys.field.jac_x(x.col(j), u.col(j)).transpose() * sys.theta.row_jacobian(zj).transpose();
    Vec r = x.col(j) + h * sys.drift(tr.mesh.t(j), x.col(j)) - x.col(j + 1);
    auto act = active_rows(sys.theta, zj, 1e-8);
    std::vector<bool> sign(act.size(), true);
    Mat Ba(B.rows(), static_cast<Eigen::Index>(act.size()));
    for (std::size_t i = 0; i < act.size(); ++i) Ba.col(i) = B.col(act[i]);
    auto sol = detail::signed_lsq(Ba, r, sign);
    for (std::size_t i = 0; i < act.size(); ++i) mu(act[i], j) = sol.z(i);
  }
  return mu;
}

/// Warm start from a simulation of the given control.
inline DiscreteDecision warm_start_from_control(const OcpProblem& p, const Path& control) {
  Simulation sim = simulate(p.system, control);
  DiscreteDecision z;
  z.mesh = control.mesh;
  z.x = sim.state.values;
  z.u = control.values;
  z.eta = Mat::Zero(p.system.field.s, control.mesh.k);
  for (int j = 0; j < control.mesh.k; ++j) z.eta.col(j) = sim.records[j].eta;
  return z;
}

}  // namespace sweep
