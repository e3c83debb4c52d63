#pragma once

#include "sweep/ocp.hpp"

namespace sweep {

struct ShootingOptions {
  int max_iter = 500;
  double tol = 1e-12;                 ///< stop when the predicted decrease falls below this
  std::vector<bool> pinned;           ///< per node; node 0 is always pinned
  int max_failed_searches = 3;
};

namespace detail {

inline bool inside_tube(const OcpProblem& p, const DiscreteDecision& z) {
  if (!p.anchor || !std::isfinite(p.anchor->epsilon)) return true;
  const Anchor& a = *p.anchor;
  for (int j = 0; j <= z.mesh.k; ++j) {
    double t = z.mesh.t(j);
    double d2 = (z.x.col(j) - a.x.at(t)).squaredNorm() + (z.u.col(j) - a.u.at(t)).squaredNorm();
    if (d2 > 0.25 * a.epsilon * a.epsilon) return false;
  }
  return true;
}

}  // namespace detail

/// Minimizes cost_eval(simulate(u)) over the free control nodes with forward-difference gradients,
/// BFGS directions and Armijo backtracking. Trial points whose simulation fails are rejected.
inline Solution solve_shooting(const OcpProblem& p, int k, const Path& init_control, const ShootingOptions& opt = {}) {
  p.validate();
  Mesh mesh(k, p.system.T);
  Path u0 = init_control.resample(mesh);
  require(u0.dim() == p.m(), ErrorKind::configuration, "initial control has wrong dimension");
  require((u0.node(0) - p.u0).norm() <= 1e-9, ErrorKind::precondition, "initial control does not start at u0");
  require(opt.pinned.empty() || static_cast<int>(opt.pinned.size()) == k + 1, ErrorKind::configuration,
          "pinned mask needs k+1 entries");
  const int m = p.m();
  std::vector<int> free_nodes;
  for (int j = 1; j <= k; ++j)
    if (opt.pinned.empty() || !opt.pinned[j]) free_nodes.push_back(j);
  const int N = static_cast<int>(free_nodes.size()) * m;

  auto to_path = [&](const Vec& v) {
    Mat U = u0.values;
    for (std::size_t i = 0; i < free_nodes.size(); ++i) U.col(free_nodes[i]) = v.segment(static_cast<Eigen::Index>(i) * m, m);
    return Path(mesh, U);
  };
  auto evaluate = [&](const Vec& v, DiscreteDecision* out) -> double {
    try {
      DiscreteDecision z = warm_start_from_control(p, to_path(v));
      if (!detail::inside_tube(p, z)) return kInf;
      double J = cost_eval(p, z);
      if (out) *out = std::move(z);
      return std::isfinite(J) ? J : kInf;
    } catch (const Error&) {
      return kInf;
    }
  };

  Vec v(N);
  for (std::size_t i = 0; i < free_nodes.size(); ++i) v.segment(static_cast<Eigen::Index>(i) * m, m) = u0.node(free_nodes[i]);

  Solution out;
  SolveReport& rep = out.report;
  double F = evaluate(v, &out.z);
  if (!std::isfinite(F)) throw Error(ErrorKind::numerical_failure, "initial control cannot be simulated");
  rep.cost_trace.push_back(F);

  auto gradient = [&](const Vec& at, double Fat) {
    Vec g(N);
    const double step = 1e-6 * (1.0 + at.norm());
    for (int i = 0; i < N; ++i) {
      Vec t = at;
      t(i) += step;
      double Fp = evaluate(t, nullptr);
      if (!std::isfinite(Fp)) {
        t(i) = at(i) - step;
        Fp = 2.0 * Fat - evaluate(t, nullptr);
      }
      g(i) = (Fp - Fat) / step;
    }
    return g;
  };

  rep.converged = true;
  rep.message = "converged";
  if (N == 0) {
    rep.cost = F;
    return out;
  }
  Mat Hinv = Mat::Identity(N, N);
  Vec g = gradient(v, F);
  int failed = 0, stalled = 0;
  for (int it = 0; it < opt.max_iter; ++it) {
    if (!g.allFinite()) {
      rep.converged = false;
      rep.message = "gradient is not finite";
      break;
    }
    Vec d = -Hinv * g;
    double slope = g.dot(d);
    if (slope >= 0.0) {
      Hinv.setIdentity();
      d = -g;
      slope = -g.squaredNorm();
    }
    if (-slope < opt.tol) break;
    double alpha = 1.0;
    bool accepted = false;
    Vec vt;
    double Ft = kInf;
    DiscreteDecision zt;
    while (alpha >= 1e-12) {
      vt = v + alpha * d;
      Ft = evaluate(vt, &zt);
      if (std::isfinite(Ft) && Ft <= F + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    ++rep.iterations;
    if (!accepted) {
      if (Hinv.isIdentity() || ++failed > opt.max_failed_searches) {
        if (-slope > 1e3 * opt.tol) {
          rep.converged = false;
          rep.message = "line search failed at iteration " + std::to_string(it);
        }
        break;
      }
      Hinv.setIdentity();
      continue;
    }
    failed = 0;
    stalled = (F - Ft <= 1e-15 * (1.0 + std::abs(F))) ? stalled + 1 : 0;
    Vec gt = gradient(vt, Ft);
    Vec s = vt - v, y = gt - g;
    double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      double r = 1.0 / sy;
      Mat I = Mat::Identity(N, N);
      Hinv = (I - r * s * y.transpose()) * Hinv * (I - r * y * s.transpose()) + r * s * s.transpose();
    }
    v = vt;
    g = gt;
    F = Ft;
    out.z = std::move(zt);
    rep.cost_trace.push_back(F);
    if (stalled >= 5) break;
  }
  if (rep.converged && rep.iterations >= opt.max_iter && g.cwiseAbs().maxCoeff() > 1e-6) {
    rep.converged = false;
    rep.message = "iteration limit reached";
  }
  rep.cost = F;
  // the catching-up pair satisfies the implicit inclusion; report the explicit-form residuals for comparison
  auto res = inclusion_residual(p.system, out.z.state(), out.z.control(), ConeAt::right);
  rep.dynamics = res.empty() ? 0.0 : *std::max_element(res.begin(), res.end());
  rep.complementarity = 0.0;
  rep.stationarity = g.cwiseAbs().maxCoeff();
  return out;
}

}  // namespace sweep
