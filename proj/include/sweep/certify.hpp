#pragma once

#include "sweep/ocp.hpp"

#include <map>

namespace sweep {

struct Atom {
  int node = 0;
  Vec weight;
};

/// Piecewise-constant density on mesh intervals plus node atoms.
struct VectorMeasure {
  Mat density;  ///< s x k
  std::vector<Atom> atoms;

  static VectorMeasure zero(int s, int k) {
    VectorMeasure g;
    g.density = Mat::Zero(s, k);
    return g;
  }
  int s() const { return static_cast<int>(density.rows()); }
  Vec atom_at(int node) const {
    Vec w = Vec::Zero(s());
    for (const auto& a : atoms)
      if (a.node == node) w += a.weight;
    return w;
  }
  double total_variation(double h) const {
    double tv = 0.0;
    for (Eigen::Index j = 0; j < density.cols(); ++j) tv += h * density.col(j).norm();
    for (const auto& a : atoms) tv += a.weight.norm();
    return tv;
  }
  VectorMeasure scaled(double c) const {
    VectorMeasure g = *this;
    g.density *= c;
    for (auto& a : g.atoms) a.weight *= c;
    return g;
  }
};

/// Multipliers on a mesh. Empty eta, nu, subgrad and q are filled in by the checks
/// (recovered eta, density of gamma, gradient of ell, q from p and gamma).
struct Certificate {
  Mesh mesh;
  double lambda = 1.0;
  Mat p;        ///< (n+m) x (k+1)
  Mat q;        ///< (n+m) x (k+1), left-continuous node values
  Mat eta;      ///< s x k
  VectorMeasure gamma;
  Mat nu;       ///< s x k
  Mat subgrad;  ///< (w^x, w^u, v^x, v^u) per interval
  Mat mu;       ///< optional lifted multipliers (l x k)

  Certificate scaled(double c) const {
    Certificate o = *this;
    o.lambda *= c;
    o.p *= c;
    o.q *= c;
    o.gamma = gamma.scaled(c);
    o.nu *= c;
    return o;
  }
};

struct Check {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = true;
  std::string note;
};

struct ResidualReport {
  std::vector<Check> checks;

  void add(const std::string& name, double residual, double tol, const std::string& note = "") {
    checks.push_back({name, residual, tol, std::isfinite(residual) && residual <= tol, note});
  }
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
  const Check& at(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c;
    throw Error(ErrorKind::configuration, "no check named " + name);
  }
};

/// eta_j with grad_x psi^T eta_j = -(x_{j+1}-x_j)/h + f(t_j,x_j), eta_j in N_Theta(psi), at the chosen node.
inline Mat recover_eta(const SweepingSystem& sys, const Path& state, const Path& control, ConeAt at = ConeAt::left,
                       double tol = 1e-8) {
  require(state.mesh == control.mesh, ErrorKind::configuration, "state and control must share a mesh");
  FieldMap fm = sys.composed();
  const Mesh& mesh = state.mesh;
  Mat eta(fm.s, mesh.k);
  for (int j = 0; j < mesh.k; ++j) {
    Vec v = -state.slope(j) + sys.drift(mesh.t(j), state.node(j));
    int i = at == ConeAt::left ? j : j + 1;
    try {
      eta.col(j) = normal_cone_decompose(fm, sys.theta, state.node(i), control.node(i), v, tol).eta;
    } catch (const Error& e) {
      throw Error(e.kind(), "interval " + std::to_string(j) + ": " + e.message());
    }
  }
  return eta;
}

/// Subgradient selection (w^x, w^u, v^x, v^u) of ell on each interval; v^u = 0 in W12xC mode.
inline Mat interval_subgradients(const OcpProblem& p, const Path& state, const Path& control) {
  const Mesh& mesh = state.mesh;
  const int n = p.n(), m = p.m();
  Mat S(2 * (n + m), mesh.k);
  for (int j = 0; j < mesh.k; ++j) {
    Vec g = p.ell_grad(mesh.t(j), state.node(j), control.node(j), state.slope(j), ell_udot(p, control.slope(j)));
    if (p.mode == Mode::w12c) g.tail(m).setZero();
    S.col(j) = g;
  }
  return S;
}

struct HamiltonianValue {
  double value = 0.0;
  bool unbounded = false;
};

/// H_nu(x,u,p) for Theta the nonpositive orthant: 0 when nu_i <grad_x psi_i, p> >= 0 on every active row, +inf otherwise.
inline HamiltonianValue modified_hamiltonian(const FieldMap& field, const ThetaSet& theta, const Vec& x, const Vec& u,
                                             const Vec& p, const Vec& nu, double tol = 1e-10) {
  require(theta.kind == ThetaSet::Kind::orthant, ErrorKind::configuration, "modified Hamiltonian needs the orthant");
  Vec z = field.value(x, u);
  require(theta_contains(theta, z, 1e-8), ErrorKind::precondition, "psi(x,u) is not in Theta");
  Mat Jx = field.jac_x(x, u);
  HamiltonianValue h;
  for (int i : active_rows(theta, z, 1e-8))
    if (nu(i) * Jx.row(i).dot(p) < -tol) h.unbounded = true;
  if (h.unbounded) h.value = kInf;
  return h;
}

/// sup of <p, v> over v in -N(x; C(u)) = -grad_x psi^T N_Theta(psi(x,u)).
inline HamiltonianValue conventional_hamiltonian(const FieldMap& field, const ThetaSet& theta, const Vec& x,
                                                 const Vec& u, const Vec& p, double tol = 1e-10) {
  Vec z = field.value(x, u);
  require(theta_contains(theta, z, 1e-8), ErrorKind::precondition, "psi(x,u) is not in Theta");
  Mat Jx = field.jac_x(x, u);
  Mat D = theta.row_jacobian(z);
  HamiltonianValue h;
  for (int r : active_rows(theta, z, 1e-8))
    if (-(Jx.transpose() * D.row(r).transpose()).dot(p) > tol) h.unbounded = true;
  if (h.unbounded) h.value = kInf;
  return h;
}

struct Nondegeneracy {
  bool nondegenerate = true;
  Vec witness;  ///< nonzero theta solving both inclusions when degenerate
};

/// Decides whether theta = 0 is the only solution of theta in D*N_Theta(psi_T, eta_T)(0) and theta in -N_Theta(psi_T).
/// Requires linearly independent active rows; then an active row with a positive multiplier gives the witness -D_r^T.
inline Nondegeneracy check_nondegeneracy(const FieldMap& field, const ThetaSet& theta, const Vec& xT, const Vec& uT,
                                         const Vec& etaT, double tol = 1e-8) {
  Vec z = field.value(xT, uT);
  require(theta_contains(theta, z, tol), ErrorKind::precondition, "endpoint is not in Theta");
  auto tn = theta_normal(theta, z, etaT, tol);
  require(tn.distance <= tol * (1.0 + etaT.norm()), ErrorKind::domain, "eta(T) is not normal to Theta at the endpoint");
  Mat D = theta.row_jacobian(z);
  Mat DA(static_cast<Eigen::Index>(tn.active.size()), theta.s);
  for (std::size_t i = 0; i < tn.active.size(); ++i) DA.row(static_cast<Eigen::Index>(i)) = D.row(tn.active[i]);
  if (DA.rows() > 0) {
    Eigen::FullPivLU<Mat> lu(DA);
    lu.setThreshold(1e-10);
    require(lu.rank() == DA.rows(), ErrorKind::configuration, "active rows of Theta are linearly dependent");
  }
  Nondegeneracy out;
  for (int r : tn.active) {
    if (tn.mu(r) > tol) {
      out.nondegenerate = false;
      out.witness = -D.row(r).transpose();
      break;
    }
  }
  return out;
}

namespace detail {

/// Per-interval quantities shared by the continuous checks.
struct Frames {
  int n = 0, m = 0, s = 0, k = 0;
  double h = 0.0;
  std::vector<Vec> z;   ///< psi at nodes
  std::vector<Mat> G;   ///< full Jacobian at nodes, s x (n+m)
  std::vector<Mat> Jx;  ///< d_x psi at nodes
  Mat eta, nu, sub;
  Mat q;     ///< node values of q, left-continuous
  Mat qbar;  ///< interval averages of q
};

inline Frames frames(const OcpProblem& p, const Path& state, const Path& control, const Certificate& c) {
  const auto& sys = p.system;
  FieldMap fm = sys.composed();
  Frames F;
  F.n = p.n();
  F.m = p.m();
  F.s = fm.s;
  F.k = state.mesh.k;
  F.h = state.mesh.h();
  const int nm = F.n + F.m;
  require(state.mesh == control.mesh && c.mesh == state.mesh, ErrorKind::configuration,
          "certificate and paths must share a mesh");
  require(c.p.rows() == nm && c.p.cols() == F.k + 1, ErrorKind::configuration, "p has wrong shape");
  require(c.gamma.density.rows() == F.s && c.gamma.density.cols() == F.k, ErrorKind::configuration,
          "gamma density has wrong shape");
  for (const auto& a : c.gamma.atoms)
    require(a.node >= 0 && a.node <= F.k && a.weight.size() == F.s, ErrorKind::configuration, "bad gamma atom");
  for (int j = 0; j <= F.k; ++j) {
    F.z.push_back(fm.value(state.node(j), control.node(j)));
    F.G.push_back(fm.jac(state.node(j), control.node(j)));
    F.Jx.push_back(fm.jac_x(state.node(j), control.node(j)));
  }
  Mat rec = recover_eta(sys, state, control);
  if (c.eta.size()) {
    require(c.eta.rows() == F.s && c.eta.cols() == F.k, ErrorKind::configuration, "eta has wrong shape");
    require((c.eta - rec).cwiseAbs().maxCoeff() <= 1e-6, ErrorKind::precondition,
            "certificate eta differs from the recovered eta");
  }
  F.eta = rec;
  F.nu = c.nu.size() ? c.nu : c.gamma.density;
  require(F.nu.rows() == F.s && F.nu.cols() == F.k, ErrorKind::configuration, "nu has wrong shape");
  F.sub = c.subgrad.size() ? c.subgrad : interval_subgradients(p, state, control);
  require(F.sub.rows() == 2 * nm && F.sub.cols() == F.k, ErrorKind::configuration, "subgradients have wrong shape");
  F.q.resize(nm, F.k + 1);
  F.qbar.resize(nm, F.k);
  Vec R = F.G[F.k].transpose() * c.gamma.atom_at(F.k);  // integral over [t, T] for t in (t_{k-1}, T]
  F.q.col(F.k) = c.p.col(F.k) - R;
  for (int j = F.k - 1; j >= 0; --j) {
    Vec dens = F.G[j].transpose() * c.gamma.density.col(j);
    F.qbar.col(j) = 0.5 * (c.p.col(j) + c.p.col(j + 1)) - 0.5 * F.h * dens - R;
    R += F.h * dens + F.G[j].transpose() * c.gamma.atom_at(j);
    F.q.col(j) = c.p.col(j) - R;
  }
  return F;
}

inline bool interior(const ThetaSet& theta, const Vec& z, double tol) { return active_rows(theta, z, tol).empty(); }

}  // namespace detail

struct MaxConditionRow {
  double lhs = 0.0;          ///< <[nu, x'], q^x - lambda v^x>
  double hamiltonian = 0.0;  ///< 0 or +inf
  double sign_violation = 0.0;
  double coderivative = 0.0;
};

struct MaxConditionReport {
  std::vector<MaxConditionRow> rows;
  double worst = 0.0;
  bool pass = true;
};

/// Both equalities of the maximum condition on each interval plus the measured coderivative membership of nu.
/// Non-orthant Theta with linear rows is handled in row coordinates.
inline MaxConditionReport max_condition_check(const OcpProblem& p, const Path& state, const Path& control,
                                              const Certificate& c, double tol = Tolerances{}.residual) {
  const auto& theta = p.system.theta;
  require(theta.rows_linear(), ErrorKind::configuration, "maximum condition needs Theta with linear rows");
  auto F = detail::frames(p, state, control, c);
  MaxConditionReport rep;
  for (int j = 0; j < F.k; ++j) {
    const Vec& z = F.z[j];
    Vec pv = F.qbar.col(j).head(F.n) - c.lambda * F.sub.col(j).segment(F.n + F.m, F.n);
    auto tn = theta_normal(theta, z, F.eta.col(j), 1e-8);
    Mat D = theta.row_jacobian(z);
    const auto& A = tn.active;
    Vec nu_rows = Vec::Zero(D.rows());
    if (theta.kind == ThetaSet::Kind::orthant) {
      nu_rows = F.nu.col(j);
    } else if (!A.empty()) {
      Mat DA(theta.s, static_cast<Eigen::Index>(A.size()));
      for (std::size_t i = 0; i < A.size(); ++i) DA.col(static_cast<Eigen::Index>(i)) = D.row(A[i]).transpose();
      Vec sol = DA.completeOrthogonalDecomposition().solve(Vec(F.nu.col(j)));
      for (std::size_t i = 0; i < A.size(); ++i) nu_rows(A[i]) = sol(static_cast<Eigen::Index>(i));
    }
    MaxConditionRow row;
    for (int r : A) {
      double pair = (F.Jx[j].transpose() * D.row(r).transpose()).dot(pv);
      row.lhs -= nu_rows(r) * tn.mu(r) * pair;
      double coef = nu_rows(r) * pair;
      if (coef < -1e-10) {
        row.hamiltonian = kInf;
        row.sign_violation = std::max(row.sign_violation, -coef);
      }
    }
    Vec udir = F.Jx[j] * pv;
    row.coderivative = coderivative_residual(theta, z, F.eta.col(j), udir, F.nu.col(j), 1e-8);
    double worst = std::max({std::abs(row.lhs), row.sign_violation, row.coderivative});
    rep.worst = std::max(rep.worst, worst);
    rep.rows.push_back(row);
  }
  rep.pass = rep.worst <= tol;
  return rep;
}

/// Continuous-time extended Euler-Lagrange residuals sampled on the mesh.
inline ResidualReport residual_continuous_EL(const OcpProblem& p, const Path& state, const Path& control,
                                             const Certificate& c, const Tolerances& tol = {}) {
  const auto& sys = p.system;
  auto F = detail::frames(p, state, control, c);
  const int n = F.n, m = F.m, nm = n + m;
  FieldMap fm = sys.composed();
  ResidualReport rep;
  const double rt = tol.residual;

  double adj = 0.0, qu = 0.0;
  for (int j = 0; j < F.k; ++j) {
    Vec w = F.sub.col(j).head(nm);
    Vec vx = F.sub.col(j).segment(nm, n), vu = F.sub.col(j).segment(nm + n, m);
    Mat H = fm.hess(state.node(j), control.node(j), F.eta.col(j));
    Mat M = H.leftCols(n);
    Vec r = (c.p.col(j + 1) - c.p.col(j)) / F.h - c.lambda * w - M * (-c.lambda * vx + F.qbar.col(j).head(n));
    adj = std::max(adj, r.cwiseAbs().maxCoeff());
    if (m > 0) qu = std::max(qu, (F.qbar.col(j).tail(m) - c.lambda * vu).cwiseAbs().maxCoeff());
  }
  rep.add("adjoint_ode", adj, rt);
  rep.add("q_u", qu, rt);
  if (c.q.size()) {
    require(c.q.rows() == nm && c.q.cols() == F.k + 1, ErrorKind::configuration, "q has wrong shape");
    rep.add("q_gamma", (c.q - F.q).cwiseAbs().maxCoeff(), rt);
  } else {
    rep.add("q_gamma", 0.0, rt, "q derived from p and gamma");
  }

  {
    Vec target = -c.p.col(F.k);
    target.head(n) -= c.lambda * p.phi_grad(state.node(F.k));
    const Vec& z = F.z[F.k];
    auto act = active_rows(sys.theta, z, 1e-8);
    Mat D = sys.theta.row_jacobian(z);
    Mat B(nm, static_cast<Eigen::Index>(act.size()));
    for (std::size_t i = 0; i < act.size(); ++i) B.col(static_cast<Eigen::Index>(i)) = F.G[F.k].transpose() * D.row(act[i]).transpose();
    rep.add("transversality", detail::signed_lsq(B, target, std::vector<bool>(act.size(), true)).residual, rt);
  }

  double margin = c.lambda + c.p.colwise().norm().maxCoeff() + c.gamma.total_variation(F.h);
  rep.add("nontriviality_margin", std::max(0.0, tol.pos - margin), 0.0, "margin " + std::to_string(margin));

  try {
    auto nd = check_nondegeneracy(fm, sys.theta, state.node(F.k), control.node(F.k), F.eta.col(F.k - 1));
    rep.add("nondegeneracy", nd.nondegenerate ? 0.0 : nd.witness.norm(), rt);
  } catch (const Error& e) {
    rep.add("nondegeneracy", 0.0, rt, std::string("not evaluated: ") + e.what());
  }

  if (sys.theta.rows_linear()) {
    auto mc = max_condition_check(p, state, control, c, rt);
    double cod = 0.0, mx = 0.0;
    for (const auto& r : mc.rows) {
      cod = std::max(cod, r.coderivative);
      mx = std::max({mx, std::abs(r.lhs), r.sign_violation});
    }
    rep.add("max_condition", mx, rt);
    rep.add("measured_coderivative", cod, rt);
  } else {
    double cod = 0.0;
    for (int j = 0; j < F.k; ++j) {
      Vec pv = F.qbar.col(j).head(n) - c.lambda * F.sub.col(j).segment(nm, n);
      cod = std::max(cod, coderivative_residual(sys.theta, F.z[j], F.eta.col(j), F.Jx[j] * pv, F.nu.col(j), 1e-8));
    }
    rep.add("max_condition", 0.0, rt, "evaluated in lifted coordinates by smooth_inequality_lift");
    rep.add("measured_coderivative", cod, rt);
  }

  double mass = 0.0;
  for (int j = 0; j < F.k; ++j)
    if (detail::interior(sys.theta, F.z[j], 1e-8) && detail::interior(sys.theta, F.z[j + 1], 1e-8))
      mass += F.h * c.gamma.density.col(j).norm();
  for (const auto& a : c.gamma.atoms)
    if (a.node < F.k && detail::interior(sys.theta, F.z[a.node], 1e-8)) mass += a.weight.norm();
  rep.add("nonatomicity", mass, rt);
  return rep;
}

/// Discrete certificate of the mesh problem: p_j for j = 0..k, gamma_j per interval.
struct DiscreteCertificate {
  double lambda = 1.0;
  Mat p;        ///< (n+m) x (k+1)
  Mat gamma;    ///< s x k
  Mat subgrad;  ///< optional; computed from ell otherwise
};

/// Discrete counterpart of a continuous certificate: p_j := q(t_j), gamma_j := density_j + atom_j / h.
/// Atoms at t = T stay inside p_k.
inline DiscreteCertificate discretize(const OcpProblem& p, const Path& state, const Path& control, const Certificate& c) {
  auto F = detail::frames(p, state, control, c);
  DiscreteCertificate d;
  d.lambda = c.lambda;
  d.p = F.q;
  d.gamma = c.gamma.density;
  for (const auto& a : c.gamma.atoms)
    if (a.node < F.k) d.gamma.col(a.node) += a.weight / F.h;
  d.subgrad = F.sub;
  return d;
}

/// Residuals of the discrete Euler-Lagrange system at a decision of the mesh problem. The adjoint
/// relation is measured in difference form, p_{j+1} - p_j - h(...).
inline ResidualReport residual_discrete_EL(const OcpProblem& p, const DiscreteDecision& z, const DiscreteCertificate& c,
                                           const Tolerances& tol = {}) {
  const auto& sys = p.system;
  FieldMap fm = sys.composed();
  const Mesh& mesh = z.mesh;
  const int n = p.n(), m = p.m(), nm = n + m, k = mesh.k;
  const double h = mesh.h();
  require(c.p.rows() == nm && c.p.cols() == k + 1 && c.gamma.rows() == fm.s && c.gamma.cols() == k,
          ErrorKind::configuration, "discrete certificate has wrong shape");
  Path xs = z.state(), us = z.control();
  Mat sub = c.subgrad.size() ? c.subgrad : interval_subgradients(p, xs, us);
  Mat eta = recover_eta(sys, xs, us);
  // proximity quantities theta^x, theta^u against the anchor
  Mat thx = Mat::Zero(n, k), thu = Mat::Zero(m, k + 1);
  if (p.anchor && p.anchor->rho > 0.0) {
    const Anchor& a = *p.anchor;
    for (int j = 0; j < k; ++j) {
      double t0 = mesh.t(j), t1 = mesh.t(j + 1);
      thx.col(j) = 2.0 * a.rho * ((z.x.col(j + 1) - z.x.col(j)) - (a.x.at(t1) - a.x.at(t0)));
      if (p.mode == Mode::w12w12) thu.col(j) = 2.0 * a.rho * ((z.u.col(j + 1) - z.u.col(j)) - (a.u.at(t1) - a.u.at(t0)));
    }
    if (p.mode == Mode::w12c)
      for (int j = 0; j <= k; ++j) thu.col(j) = 2.0 * a.rho * (z.u.col(j) - a.u.at(mesh.t(j)));
  }
  ResidualReport rep;
  const double rt = tol.residual;
  double it = 0.0, pu = 0.0, cod = 0.0;
  for (int j = 0; j < k; ++j) {
    Vec xj = z.x.col(j), uj = z.u.col(j);
    Vec w = sub.col(j).head(nm), vx = sub.col(j).segment(nm, n), vu = sub.col(j).segment(nm + n, m);
    if (p.mode == Mode::w12c) w.tail(m) += thu.col(j);
    Vec U = c.p.col(j + 1).head(n) - c.lambda * (vx + thx.col(j) / h);
    Mat M = fm.hess(xj, uj, eta.col(j)).leftCols(n);
    Vec r = c.p.col(j + 1) - c.p.col(j) - h * (c.lambda * w + M * U + fm.jac(xj, uj).transpose() * c.gamma.col(j));
    it = std::max(it, r.cwiseAbs().maxCoeff());
    if (m > 0) {
      Vec target = p.mode == Mode::w12w12 ? Vec(c.lambda * (vu + thu.col(j) / h)) : Vec(Vec::Zero(m));
      pu = std::max(pu, (c.p.col(j + 1).tail(m) - target).cwiseAbs().maxCoeff());
    }
    cod = std::max(cod, coderivative_residual(sys.theta, fm.value(xj, uj), eta.col(j), fm.jac_x(xj, uj) * U,
                                              c.gamma.col(j), 1e-8));
  }
  rep.add("adjoint_ode", it, rt);
  rep.add("q_u", pu, rt);
  {
    Vec target = -c.p.col(k);
    if (p.mode == Mode::w12c) target.tail(m).setZero();
    target.head(n) -= c.lambda * p.phi_grad(z.x.col(k));
    Vec zk = fm.value(z.x.col(k), z.u.col(k));
    auto act = active_rows(sys.theta, zk, 1e-8);
    Mat D = sys.theta.row_jacobian(zk);
    Mat G = fm.jac(z.x.col(k), z.u.col(k));
    Mat B(nm, static_cast<Eigen::Index>(act.size()));
    for (std::size_t i = 0; i < act.size(); ++i) B.col(static_cast<Eigen::Index>(i)) = G.transpose() * D.row(act[i]).transpose();
    rep.add("transversality", detail::signed_lsq(B, target, std::vector<bool>(act.size(), true)).residual, rt);
  }
  double margin = c.lambda + c.p.col(0).tail(m).norm() + c.p.col(k).norm();
  for (int j = 0; j < k; ++j) margin += c.p.col(j).head(n).norm();
  rep.add("nontriviality_margin", std::max(0.0, tol.pos - margin), 0.0, "margin " + std::to_string(margin));
  rep.add("measured_coderivative", cod, rt);
  return rep;
}

struct AssembledCertificate {
  Certificate cert;
  double residual = 0.0;
  bool non_unique = false;
  Vec endpoint_mu;  ///< multipliers of the active endpoint rows
  bool endpoint_sign_ok = true;
};

/// Least-squares fit of p, gamma (density and atoms) and the endpoint multiplier for fixed lambda,
/// with gamma restricted to the support allowed by nonatomicity. The minimum-norm fit is returned.
inline AssembledCertificate assemble_certificate(const OcpProblem& p, const Path& state, const Path& control,
                                                 double lambda = 1.0, double tol_active = 1e-8) {
  const auto& sys = p.system;
  FieldMap fm = sys.composed();
  const Mesh& mesh = state.mesh;
  require(control.mesh == mesh, ErrorKind::configuration, "state and control must share a mesh");
  const int n = p.n(), m = p.m(), nm = n + m, s = fm.s, k = mesh.k;
  const double h = mesh.h();
  Mat eta = recover_eta(sys, state, control);
  Mat sub = interval_subgradients(p, state, control);

  std::vector<Vec> z;
  std::vector<Mat> G;
  std::vector<bool> act;
  for (int j = 0; j <= k; ++j) {
    z.push_back(fm.value(state.node(j), control.node(j)));
    G.push_back(fm.jac(state.node(j), control.node(j)));
    act.push_back(!detail::interior(sys.theta, z.back(), tol_active));
  }
  // unknown layout
  int N = nm * (k + 1);
  std::vector<int> dens_off(k, -1), atom_off(k + 1, -1);
  for (int j = 0; j < k; ++j)
    if (act[j] || act[j + 1]) {
      dens_off[j] = N;
      N += s;
    }
  for (int j = 0; j <= k; ++j)
    if (act[j] || j == k) {
      atom_off[j] = N;
      N += s;
    }
  auto endpoint_rows = active_rows(sys.theta, z[k], tol_active);
  const int mu_off = N;
  N += static_cast<int>(endpoint_rows.size());

  const int E = k * nm + k * m + nm;
  Mat A = Mat::Zero(E, N);
  Vec b = Vec::Zero(E);
  Mat Rc = Mat::Zero(nm, N);  // coefficients of R_{j+1}
  if (atom_off[k] >= 0) Rc.middleCols(atom_off[k], s) += G[k].transpose();
  int row = 0;
  for (int j = k - 1; j >= 0; --j) {
    Mat Q = -Rc;  // coefficients of qbar_j
    Q.middleCols(nm * j, nm) += 0.5 * Mat::Identity(nm, nm);
    Q.middleCols(nm * (j + 1), nm) += 0.5 * Mat::Identity(nm, nm);
    if (dens_off[j] >= 0) Q.middleCols(dens_off[j], s) -= 0.5 * h * G[j].transpose();
    Vec w = sub.col(j).head(nm), vx = sub.col(j).segment(nm, n), vu = sub.col(j).segment(nm + n, m);
    Mat M = fm.hess(state.node(j), control.node(j), eta.col(j)).leftCols(n);
    int r0 = j * nm;
    A.block(r0, nm * (j + 1), nm, nm) += Mat::Identity(nm, nm) / h;
    A.block(r0, nm * j, nm, nm) -= Mat::Identity(nm, nm) / h;
    A.middleRows(r0, nm) -= M * Q.topRows(n);
    b.segment(r0, nm) = lambda * w - lambda * M * vx;
    int r1 = k * nm + j * m;
    if (m > 0) {
      A.middleRows(r1, m) = Q.bottomRows(m);
      b.segment(r1, m) = lambda * vu;
    }
    if (dens_off[j] >= 0) Rc.middleCols(dens_off[j], s) += h * G[j].transpose();
    if (atom_off[j] >= 0) Rc.middleCols(atom_off[j], s) += G[j].transpose();
    row += nm + m;
  }
  {
    int r0 = k * nm + k * m;
    Mat D = sys.theta.row_jacobian(z[k]);
    A.block(r0, nm * k, nm, nm) = -Mat::Identity(nm, nm);
    for (std::size_t i = 0; i < endpoint_rows.size(); ++i)
      A.block(r0, mu_off + static_cast<int>(i), nm, 1) = -G[k].transpose() * D.row(endpoint_rows[i]).transpose();
    b.segment(r0, n) = lambda * p.phi_grad(state.node(k));
  }
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(A);
  cod.setThreshold(1e-10);
  Vec sol = cod.solve(b);

  AssembledCertificate out;
  out.residual = (A * sol - b).norm();
  out.non_unique = cod.rank() < N;
  Certificate& c = out.cert;
  c.mesh = mesh;
  c.lambda = lambda;
  c.p.resize(nm, k + 1);
  for (int j = 0; j <= k; ++j) c.p.col(j) = sol.segment(nm * j, nm);
  c.gamma = VectorMeasure::zero(s, k);
  for (int j = 0; j < k; ++j)
    if (dens_off[j] >= 0) c.gamma.density.col(j) = sol.segment(dens_off[j], s);
  for (int j = 0; j <= k; ++j)
    if (atom_off[j] >= 0) {
      Vec wgt = sol.segment(atom_off[j], s);
      if (wgt.norm() > 1e-14) c.gamma.atoms.push_back({j, wgt});
    }
  c.eta = eta;
  c.subgrad = sub;
  c.nu = c.gamma.density;
  out.endpoint_mu = sol.tail(static_cast<Eigen::Index>(endpoint_rows.size()));
  out.endpoint_sign_ok = endpoint_rows.empty() || out.endpoint_mu.minCoeff() >= -1e-8;
  c.q = detail::frames(p, state, control, c).q;
  return out;
}

struct SufficiencyRow {
  enum class Status { vacuous, checked, skipped } status = Status::vacuous;
  double lhs = 0.0;  ///< <x', q^x - lambda v^x>
  HamiltonianValue conventional;
  bool pass = true;
};

struct SufficiencyReport {
  std::vector<SufficiencyRow> rows;
  bool hypothesis_met = true;  ///< every active row carries a positive multiplier on every interval
  bool pass = true;
};

/// On intervals where every active row has a positive multiplier, checks <x', q^x - lambda v^x> = H = 0.
inline SufficiencyReport conventional_sufficiency_check(const OcpProblem& p, const Path& state, const Path& control,
                                                        const Certificate& c, const Tolerances& tol = {}) {
  const auto& theta = p.system.theta;
  require(theta.kind == ThetaSet::Kind::orthant, ErrorKind::configuration, "conventional form needs the orthant");
  auto F = detail::frames(p, state, control, c);
  FieldMap fm = p.system.composed();
  SufficiencyReport rep;
  for (int j = 0; j < F.k; ++j) {
    SufficiencyRow row;
    Vec pv = F.qbar.col(j).head(F.n) - c.lambda * F.sub.col(j).segment(F.n + F.m, F.n);
    auto act = active_rows(theta, F.z[j], 1e-8);
    row.conventional = conventional_hamiltonian(fm, theta, state.node(j), control.node(j), pv);
    if (act.empty()) {
      row.status = SufficiencyRow::Status::vacuous;
    } else {
      bool all_pos = true;
      for (int i : act) all_pos = all_pos && F.eta(i, j) > tol.pos;
      if (all_pos) {
        row.status = SufficiencyRow::Status::checked;
        row.lhs = state.slope(j).dot(pv);
        row.pass = std::abs(row.lhs) <= tol.residual && !row.conventional.unbounded;
      } else {
        row.status = SufficiencyRow::Status::skipped;
        rep.hypothesis_met = false;
      }
    }
    rep.pass = rep.pass && row.pass;
    rep.rows.push_back(row);
  }
  return rep;
}

struct LiftReport {
  Mat mu;  ///< l x k, eta = grad h^T mu
  Mat nu;  ///< l x k, resolved from the density
  double chain_residual = 0.0;
  double membership_residual = 0.0;
  double max_condition_residual = 0.0;
  bool pass = true;
};

/// Theta = {h <= 0} with surjective grad h: recovers mu from eta, resolves nu from
/// nu~ = Hess<mu,h> udir + grad h^T nu and checks the maximum condition in the rows of h.
inline LiftReport smooth_inequality_lift(const OcpProblem& p, const Path& state, const Path& control,
                                         const Certificate& c, const Tolerances& tol = {}) {
  const auto& theta = p.system.theta;
  require(theta.kind == ThetaSet::Kind::smooth_inequality, ErrorKind::configuration, "lift needs a smooth inequality");
  auto F = detail::frames(p, state, control, c);
  const int l = theta.rows();
  LiftReport rep;
  rep.mu.resize(l, F.k);
  rep.nu.resize(l, F.k);
  for (int j = 0; j < F.k; ++j) {
    const Vec& z = F.z[j];
    Mat Hh = theta.row_jacobian(z);  // l x s
    require(surjectivity_check(Hh).ok, ErrorKind::surjectivity, "grad h is not surjective on interval " + std::to_string(j));
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(Hh.transpose());
    Vec mu = cod.solve(Vec(F.eta.col(j)));
    Vec pv = F.qbar.col(j).head(F.n) - c.lambda * F.sub.col(j).segment(F.n + F.m, F.n);
    Vec udir = F.Jx[j] * pv;
    Vec rhs = F.nu.col(j) - theta.row_hessian(z, mu) * udir;
    Vec nu = cod.solve(rhs);
    rep.chain_residual = std::max({rep.chain_residual, (Hh.transpose() * mu - F.eta.col(j)).norm(),
                                   (Hh.transpose() * nu - rhs).norm()});
    rep.mu.col(j) = mu;
    rep.nu.col(j) = nu;
    Vec hv = theta.row_values(z);
    for (Eigen::Index r = 0; r < l; ++r) hv(r) = std::min(hv(r), 0.0);
    Vec hdir = Hh * udir;
    double mem = 0.0;
    auto cls = coderivative_orthant(hv, mu.cwiseMax(0.0), hdir, 1e-8);
    for (Eigen::Index r = 0; r < l; ++r) {
      switch (cls.branch[static_cast<std::size_t>(r)]) {
        case CoderivBranch::must_be_zero: mem = std::max(mem, std::abs(nu(r))); break;
        case CoderivBranch::nonnegative: mem = std::max(mem, -nu(r)); break;
        case CoderivBranch::free: break;
        case CoderivBranch::empty: mem = std::max(mem, std::abs(hdir(r))); break;
      }
    }
    rep.membership_residual = std::max(rep.membership_residual, mem);
    double lhs = 0.0, viol = 0.0;
    for (int r : active_rows(theta, z, 1e-8)) {
      double pair = (F.Jx[j].transpose() * Hh.row(r).transpose()).dot(pv);
      lhs -= nu(r) * mu(r) * pair;
      viol = std::max(viol, -nu(r) * pair);
    }
    rep.max_condition_residual = std::max({rep.max_condition_residual, std::abs(lhs), viol});
  }
  rep.pass = rep.chain_residual <= tol.residual && rep.membership_residual <= tol.residual &&
             rep.max_condition_residual <= tol.residual;
  return rep;
}

}  // namespace sweep
