#pragma once

#include "sweep/core.hpp"
#include "sweep/linalg.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sweep {

/// The closed set Theta. Every variant is exposed locally as inequality rows c_r(z) <= 0,
/// so that N_Theta(z) = { D(z)^T mu | mu >= 0, mu_r = 0 off active rows }.
struct ThetaSet {
  enum class Kind { orthant, box, smooth_inequality, linear_image };

  Kind kind = Kind::orthant;
  int s = 0;

  Vec lower, upper;  // box

  int l = 0;  // smooth inequality h: R^s -> R^l
  std::function<Vec(const Vec&)> h;
  std::function<Mat(const Vec&)> h_jac;
  std::function<Mat(const Vec&, const Vec&)> h_hess;  // Hessian of <mu, h> at z

  Mat A, G;  // linear image A Z with Z = {y | G y <= g}
  Vec g;
  Mat M;  // G A^{-1}

  static ThetaSet orthant(int s) {
    require(s >= 0, ErrorKind::configuration, "orthant dimension must be nonnegative");
    ThetaSet t;
    t.kind = Kind::orthant;
    t.s = s;
    return t;
  }

  static ThetaSet box(const Vec& lo, const Vec& hi) {
    require(lo.size() == hi.size(), ErrorKind::configuration, "box bounds differ in size");
    for (Eigen::Index i = 0; i < lo.size(); ++i)
      require(lo(i) < hi(i), ErrorKind::configuration, "box requires lower < upper in every coordinate");
    ThetaSet t;
    t.kind = Kind::box;
    t.s = static_cast<int>(lo.size());
    t.lower = lo;
    t.upper = hi;
    return t;
  }

  static ThetaSet smooth_inequality(int s, int l, std::function<Vec(const Vec&)> h,
                                    std::function<Mat(const Vec&)> jac,
                                    std::function<Mat(const Vec&, const Vec&)> hess) {
    require(h && jac && hess, ErrorKind::configuration, "smooth inequality needs value, Jacobian and Hessian callbacks");
    ThetaSet t;
    t.kind = Kind::smooth_inequality;
    t.s = s;
    t.l = l;
    t.h = std::move(h);
    t.h_jac = std::move(jac);
    t.h_hess = std::move(hess);
    return t;
  }

  /// Theta = A Z, Z = {y | G y <= g}. With require_spd, A must be symmetric positive definite.
  static ThetaSet linear_image(const Mat& A, const Mat& G, const Vec& g, bool require_spd = false) {
    require(A.rows() == A.cols(), ErrorKind::configuration, "A must be square");
    require(G.cols() == A.rows() && G.rows() == g.size(), ErrorKind::configuration, "halfspace list has wrong shape");
    if (require_spd) {
      require((A - A.transpose()).norm() <= 1e-12 * (1.0 + A.norm()), ErrorKind::configuration, "A is not symmetric");
      Eigen::LLT<Mat> llt(A);
      require(llt.info() == Eigen::Success, ErrorKind::configuration, "A is not positive definite");
    }
    Eigen::FullPivLU<Mat> lu(A);
    require(lu.isInvertible(), ErrorKind::configuration, "A must be invertible");
    ThetaSet t;
    t.kind = Kind::linear_image;
    t.s = static_cast<int>(A.rows());
    t.A = A;
    t.G = G;
    t.g = g;
    t.M = G * lu.inverse();
    return t;
  }

  bool rows_linear() const { return kind != Kind::smooth_inequality; }

  int rows() const {
    switch (kind) {
      case Kind::orthant: return s;
      case Kind::box: {
        int r = 0;
        for (int i = 0; i < s; ++i) r += std::isfinite(upper(i)) + std::isfinite(lower(i));
        return r;
      }
      case Kind::smooth_inequality: return l;
      case Kind::linear_image: return static_cast<int>(M.rows());
    }
    return 0;
  }

  /// c(z), one entry per row.
  Vec row_values(const Vec& z) const {
    require(z.size() == s, ErrorKind::configuration, "point has wrong dimension for Theta");
    switch (kind) {
      case Kind::orthant: return z;
      case Kind::box: {
        Vec c(rows());
        int r = 0;
        for (int i = 0; i < s; ++i) {
          if (std::isfinite(upper(i))) c(r++) = z(i) - upper(i);
          if (std::isfinite(lower(i))) c(r++) = lower(i) - z(i);
        }
        return c;
      }
      case Kind::smooth_inequality: return h(z);
      case Kind::linear_image: return M * z - g;
    }
    return {};
  }

  /// D(z) = dc/dz, rows x s.
  Mat row_jacobian(const Vec& z) const {
    switch (kind) {
      case Kind::orthant: return Mat::Identity(s, s);
      case Kind::box: {
        Mat D = Mat::Zero(rows(), s);
        int r = 0;
        for (int i = 0; i < s; ++i) {
          if (std::isfinite(upper(i))) D(r++, i) = 1.0;
          if (std::isfinite(lower(i))) D(r++, i) = -1.0;
        }
        return D;
      }
      case Kind::smooth_inequality: return h_jac(z);
      case Kind::linear_image: return M;
    }
    return {};
  }

  /// Hessian of <mu, c> at z (zero for the linear variants).
  Mat row_hessian(const Vec& z, const Vec& mu) const {
    if (kind == Kind::smooth_inequality) return h_hess(z, mu);
    return Mat::Zero(s, s);
  }
};

/// The field psi(x,u) with its derivatives. affine_in_x marks psi(.,u) affine for every u.
struct FieldMap {
  int n = 0, m = 0, s = 0;
  bool affine_in_x = false;
  std::function<Vec(const Vec&, const Vec&)> value;
  std::function<Mat(const Vec&, const Vec&)> jac_x;
  std::function<Mat(const Vec&, const Vec&)> jac_u;
  /// Hessian of <p, psi> in (x,u), size (n+m) x (n+m).
  std::function<Mat(const Vec&, const Vec&, const Vec&)> hess;

  /// psi(x,u) = Ax x + Bu u + c.
  static FieldMap linear(const Mat& Ax, const Mat& Bu, const Vec& c) {
    require(Ax.rows() == Bu.rows() && Ax.rows() == c.size(), ErrorKind::configuration, "linear field: row counts differ");
    FieldMap f;
    f.n = static_cast<int>(Ax.cols());
    f.m = static_cast<int>(Bu.cols());
    f.s = static_cast<int>(Ax.rows());
    f.affine_in_x = true;
    f.value = [Ax, Bu, c](const Vec& x, const Vec& u) -> Vec { return Ax * x + Bu * u + c; };
    f.jac_x = [Ax](const Vec&, const Vec&) -> Mat { return Ax; };
    f.jac_u = [Bu](const Vec&, const Vec&) -> Mat { return Bu; };
    const int N = f.n + f.m;
    f.hess = [N](const Vec&, const Vec&, const Vec&) -> Mat { return Mat::Zero(N, N); };
    return f;
  }

  /// Rows fixed, offsets controlled: psi(x,b) = U x - b.
  static FieldMap fixed_rows(const Mat& U) {
    const auto s = U.rows();
    return linear(U, -Mat::Identity(s, s), Vec::Zero(s));
  }

  /// Controlled polyhedron psi_i(x,(u,b)) = <x,u_i> - b_i with control layout (u_1,...,u_s,b).
  static FieldMap polyhedral(int n, int s) {
    FieldMap f;
    f.n = n;
    f.m = s * n + s;
    f.s = s;
    f.affine_in_x = true;
    auto rows = [n, s](const Vec& u) {
      Mat U(s, n);
      for (int i = 0; i < s; ++i) U.row(i) = u.segment(i * n, n).transpose();
      return U;
    };
    f.value = [rows, n, s](const Vec& x, const Vec& u) -> Vec { return rows(u) * x - u.segment(s * n, s); };
    f.jac_x = [rows](const Vec&, const Vec& u) -> Mat { return rows(u); };
    f.jac_u = [n, s](const Vec& x, const Vec&) -> Mat {
      Mat J = Mat::Zero(s, s * n + s);
      for (int i = 0; i < s; ++i) {
        J.block(i, i * n, 1, n) = x.transpose();
        J(i, s * n + i) = -1.0;
      }
      return J;
    };
    f.hess = [n, s](const Vec&, const Vec&, const Vec& p) -> Mat {
      const int N = n + s * n + s;
      Mat H = Mat::Zero(N, N);
      for (int i = 0; i < s; ++i) {
        H.block(0, n + i * n, n, n) = p(i) * Mat::Identity(n, n);
        H.block(n + i * n, 0, n, n) = p(i) * Mat::Identity(n, n);
      }
      return H;
    };
    return f;
  }

  static FieldMap nonlinear(int n, int m, int s, std::function<Vec(const Vec&, const Vec&)> value,
                            std::function<Mat(const Vec&, const Vec&)> jac_x,
                            std::function<Mat(const Vec&, const Vec&)> jac_u,
                            std::function<Mat(const Vec&, const Vec&, const Vec&)> hess) {
    require(value && jac_x && jac_u && hess, ErrorKind::configuration, "nonlinear field needs all callbacks");
    FieldMap f;
    f.n = n;
    f.m = m;
    f.s = s;
    f.affine_in_x = false;
    f.value = std::move(value);
    f.jac_x = std::move(jac_x);
    f.jac_u = std::move(jac_u);
    f.hess = std::move(hess);
    return f;
  }

  /// Full Jacobian [d_x psi, d_u psi], s x (n+m).
  Mat jac(const Vec& x, const Vec& u) const {
    Mat J(s, n + m);
    J << jac_x(x, u), jac_u(x, u);
    return J;
  }
};

/// Quadratic field psi(x,u) = x^2 + u - 1 (n = m = s = 1).
inline FieldMap quadratic_example_field() {
  return FieldMap::nonlinear(
      1, 1, 1, [](const Vec& x, const Vec& u) { return vec1(x(0) * x(0) + u(0) - 1.0); },
      [](const Vec& x, const Vec&) { return Mat::Constant(1, 1, 2.0 * x(0)); },
      [](const Vec&, const Vec&) { return Mat::Constant(1, 1, 1.0); },
      [](const Vec&, const Vec&, const Vec& p) {
        Mat H = Mat::Zero(2, 2);
        H(0, 0) = 2.0 * p(0);
        return H;
      });
}

struct ConeDecomposition {
  Vec eta;                  ///< multiplier in R^s
  Vec mu;                   ///< row multipliers, eta = D^T mu
  std::vector<int> active;  ///< active rows of Theta
  double residual = 0.0;    ///< || grad_x psi^T eta - v ||
};

struct ProjectionResult {
  Vec y;
  ConeDecomposition dec;
  int iterations = 0;
};

inline Vec psi_eval(const FieldMap& field, const Vec& x, const Vec& u) {
  require(x.size() == field.n, ErrorKind::configuration,
          "state has dimension " + std::to_string(x.size()) + ", field expects " + std::to_string(field.n));
  require(u.size() == field.m, ErrorKind::configuration,
          "control has dimension " + std::to_string(u.size()) + ", field expects " + std::to_string(field.m));
  Vec z = field.value(x, u);
  require(z.size() == field.s, ErrorKind::configuration, "field value has wrong dimension");
  return z;
}

inline bool theta_contains(const ThetaSet& theta, const Vec& z, double tol = Tolerances{}.feas) {
  if (z.size() != theta.s) return false;
  switch (theta.kind) {
    case ThetaSet::Kind::orthant: return (z.array() <= tol).all();
    case ThetaSet::Kind::box: return (z.array() <= theta.upper.array() + tol).all() && (z.array() >= theta.lower.array() - tol).all();
    case ThetaSet::Kind::smooth_inequality: return (theta.h(z).array() <= tol).all();
    case ThetaSet::Kind::linear_image: {
      Vec c = theta.M * z - theta.g;
      for (Eigen::Index r = 0; r < c.size(); ++r) {
        double nr = theta.M.row(r).norm();
        if (c(r) > tol * std::max(1.0, nr)) return false;
      }
      return true;
    }
  }
  return false;
}

inline std::vector<int> active_rows(const ThetaSet& theta, const Vec& z, double tol) {
  Vec c = theta.row_values(z);
  std::vector<int> act;
  for (Eigen::Index r = 0; r < c.size(); ++r)
    if (c(r) >= -tol) act.push_back(static_cast<int>(r));
  return act;
}

struct SurjectivityResult {
  bool ok = false;
  double sigma_min = 0.0;
};

/// ok iff sigma_min >= tol; tol < 0 selects 1e-8 * sigma_max.
inline SurjectivityResult surjectivity_check(const Mat& J, double tol = -1.0) {
  SurjectivityResult r;
  if (J.rows() > J.cols()) return r;
  if (J.rows() == 0) {
    r.ok = true;
    r.sigma_min = kInf;
    return r;
  }
  Eigen::JacobiSVD<Mat> svd(J);
  const auto& sv = svd.singularValues();
  double smax = sv(0);
  r.sigma_min = sv(sv.size() - 1);
  if (tol < 0) tol = Tolerances{}.rank_rel * smax;
  r.ok = smax > 0.0 && r.sigma_min >= tol;
  return r;
}

/// Distance from eta to N_Theta(z), with the row multipliers attaining it.
struct ThetaNormal {
  Vec mu;
  double distance = kInf;
  std::vector<int> active;
};

inline ThetaNormal theta_normal(const ThetaSet& theta, const Vec& z, const Vec& eta, double tol) {
  ThetaNormal out;
  out.active = active_rows(theta, z, tol);
  Mat D = theta.row_jacobian(z);
  const int R = static_cast<int>(D.rows());
  Mat B(theta.s, static_cast<Eigen::Index>(out.active.size()));
  for (std::size_t j = 0; j < out.active.size(); ++j) B.col(j) = D.row(out.active[j]).transpose();
  auto sol = detail::signed_lsq(B, eta, std::vector<bool>(out.active.size(), true));
  out.mu = Vec::Zero(R);
  for (std::size_t j = 0; j < out.active.size(); ++j) out.mu(out.active[j]) = sol.z(j);
  out.distance = sol.residual;
  return out;
}

/// Finds eta in N_Theta(psi(x,u)) with grad_x psi(x,u)^T eta = v.
inline ConeDecomposition normal_cone_decompose_jac(const ThetaSet& theta, const Vec& z, const Mat& J, const Vec& v,
                                                   double tol = 1e-8) {
  require(theta_contains(theta, z, std::max(tol, Tolerances{}.feas)), ErrorKind::precondition,
          "psi(x,u) is not in Theta");
  auto sj = surjectivity_check(J);
  require(sj.ok, ErrorKind::surjectivity, "Jacobian of psi is not surjective");
  ConeDecomposition dec;
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(J.transpose());
  dec.eta = cod.solve(v);
  dec.residual = (J.transpose() * dec.eta - v).norm();
  double scale = 1.0 + v.norm();
  require(dec.residual <= tol * scale, ErrorKind::not_in_cone,
          "v is not in the range of grad psi^T (residual " + std::to_string(dec.residual) + ")");
  auto tn = theta_normal(theta, z, dec.eta, tol);
  require(tn.distance <= tol * scale, ErrorKind::not_in_cone,
          "multiplier violates the sign pattern of N_Theta (distance " + std::to_string(tn.distance) + ")");
  dec.mu = tn.mu;
  dec.active = tn.active;
  return dec;
}

inline ConeDecomposition normal_cone_decompose(const FieldMap& field, const ThetaSet& theta, const Vec& x, const Vec& u,
                                               const Vec& v, double tol = 1e-8) {
  Vec z = psi_eval(field, x, u);
  require(v.size() == field.n, ErrorKind::configuration, "v has wrong dimension");
  return normal_cone_decompose_jac(theta, z, field.jac_x(x, u), v, tol);
}

namespace detail {

inline bool lex_greater(const Vec& a, const Vec& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) > b(i)) return true;
    if (a(i) < b(i)) return false;
  }
  return false;
}

/// Exact projection when psi is affine in x and Theta has linear rows.
inline ProjectionResult project_affine(const FieldMap& field, const ThetaSet& theta, const Vec& u, const Vec& x,
                                       double tol) {
  Vec x0 = Vec::Zero(field.n);
  Mat Ax = field.jac_x(x0, u);
  Vec c0 = field.value(x0, u);  // psi(y,u) = Ax y + c0
  Mat D = theta.row_jacobian(c0);
  Vec cz0 = theta.row_values(c0);  // c(z) = D z + (cz0 - D c0)
  Mat G = D * Ax;
  Vec g = -(cz0);
  QpResult qp = theta.rows() <= 8 ? project_polyhedron_enum(x, G, g, tol) : project_polyhedron_dual(x, G, g, tol);
  require(qp.feasible, ErrorKind::projection_failure, "moving set is empty for this control");
  ProjectionResult out;
  out.y = qp.y;
  out.iterations = qp.iterations;
  out.dec.mu = qp.mu;
  out.dec.eta = D.transpose() * qp.mu;
  for (Eigen::Index r = 0; r < qp.mu.size(); ++r)
    if (qp.mu(r) > 0.0) out.dec.active.push_back(static_cast<int>(r));
  out.dec.residual = (Ax.transpose() * out.dec.eta - (x - qp.y)).norm();
  return out;
}

/// Local projection by sequential linearization from y0.
inline std::optional<ProjectionResult> project_local(const FieldMap& field, const ThetaSet& theta, const Vec& u,
                                                     const Vec& x, const Vec& y0, double tol, int max_iter) {
  Vec y = y0;
  for (int it = 0; it < max_iter; ++it) {
    Vec z = field.value(y, u);
    Vec c = theta.row_values(z);
    Mat Jr = theta.row_jacobian(z) * field.jac_x(y, u);
    QpResult qp = project_polyhedron_enum(x, Jr, Jr * y - c, 1e-13);
    if (!qp.feasible) return std::nullopt;
    double step = (qp.y - y).norm();
    y = qp.y;
    if (!y.allFinite()) return std::nullopt;
    if (step <= 1e-14 * (1.0 + y.norm())) {
      if (!theta_contains(theta, field.value(y, u), tol)) return std::nullopt;
      ProjectionResult out;
      out.y = y;
      out.iterations = it + 1;
      Vec zy = field.value(y, u);
      Mat Dz = theta.row_jacobian(zy);
      out.dec.mu = Vec::Zero(theta.rows());
      // Multipliers of the last linearized QP are those of the projection at y.
      out.dec.mu = qp.mu;
      out.dec.eta = Dz.transpose() * qp.mu;
      out.dec.active = active_rows(theta, zy, 1e-8);
      out.dec.residual = (field.jac_x(y, u).transpose() * out.dec.eta - (x - y)).norm();
      return out;
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Projects x onto C(u) = {y | psi(y,u) in Theta}. For nonconvex data the candidate nearest to x
/// among local projections (warm start and coordinate-perturbed starts) is returned, ties broken
/// toward the lexicographically largest point.
inline ProjectionResult project_onto_moving_set(const FieldMap& field, const ThetaSet& theta, const Vec& u, const Vec& x,
                                                double tol = Tolerances{}.feas,
                                                const std::optional<Vec>& warm_start = std::nullopt,
                                                int max_iter = 200) {
  require(x.size() == field.n && u.size() == field.m, ErrorKind::configuration, "projection: dimension mismatch");
  require(theta.s == field.s, ErrorKind::configuration, "Theta and psi disagree on s");
  if (field.affine_in_x && theta.rows_linear()) return detail::project_affine(field, theta, u, x, tol);

  std::vector<Vec> starts;
  if (warm_start) starts.push_back(*warm_start);
  starts.push_back(x);
  double delta = 1e-3 * (1.0 + x.norm());
  for (int i = 0; i < field.n; ++i) {
    Vec e = Vec::Zero(field.n);
    e(i) = delta;
    starts.push_back(x + e);
    starts.push_back(x - e);
  }
  std::optional<ProjectionResult> best;
  double best_d = kInf;
  for (const auto& s0 : starts) {
    auto cand = detail::project_local(field, theta, u, x, s0, tol, max_iter);
    if (!cand) continue;
    double d = (cand->y - x).norm();
    double tie = 1e-9 * (1.0 + d);
    if (!best || d < best_d - tie || (std::abs(d - best_d) <= tie && detail::lex_greater(cand->y, best->y))) {
      best = cand;
      best_d = d;
    }
  }
  require(best.has_value(), ErrorKind::numerical_failure, "local projection did not converge from any start");
  return *best;
}

enum class CoderivBranch { must_be_zero, nonnegative, free, empty };

inline const char* to_string(CoderivBranch b) {
  switch (b) {
    case CoderivBranch::must_be_zero: return "must_be_zero";
    case CoderivBranch::nonnegative: return "nonnegative";
    case CoderivBranch::free: return "free";
    case CoderivBranch::empty: return "empty";
  }
  return "?";
}

struct CoderivativeClass {
  std::vector<CoderivBranch> branch;
  bool empty = false;
};

/// Per-index description of D*N_{R^s_-}(w, xi)(u).
inline CoderivativeClass coderivative_orthant(const Vec& w, const Vec& xi, const Vec& udir, double tol = 1e-9) {
  require(w.size() == xi.size() && w.size() == udir.size(), ErrorKind::configuration, "coderivative: dimension mismatch");
  CoderivativeClass out;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const bool w_neg = w(i) < -tol, w_zero = std::abs(w(i)) <= tol;
    const bool xi_zero = std::abs(xi(i)) <= tol, xi_pos = xi(i) > tol;
    require(w_neg || w_zero, ErrorKind::domain, "w is outside the orthant at index " + std::to_string(i));
    require(xi_zero || xi_pos, ErrorKind::domain, "xi has a negative entry at index " + std::to_string(i));
    require(!(w_neg && xi_pos), ErrorKind::domain, "xi is not normal to the orthant at w (index " + std::to_string(i) + ")");
    CoderivBranch b;
    if (w_neg) {
      b = CoderivBranch::must_be_zero;
    } else if (xi_zero) {
      b = udir(i) < -tol ? CoderivBranch::must_be_zero : CoderivBranch::nonnegative;
    } else {
      b = std::abs(udir(i)) <= tol ? CoderivBranch::free : CoderivBranch::empty;
    }
    if (b == CoderivBranch::empty) out.empty = true;
    out.branch.push_back(b);
  }
  return out;
}

/// Distance from nu to D*N_Theta(z, eta)(udir) for the variants with a row description:
/// D*N_Theta(z,eta)(u) = Hess<mu,c>(z) u + D^T D*N_{R_-}(c(z), mu)(D u).
/// An empty branch contributes |(D u)_r| to the residual.
inline double coderivative_residual(const ThetaSet& theta, const Vec& z, const Vec& eta, const Vec& udir, const Vec& nu,
                                    double tol = 1e-8) {
  auto tn = theta_normal(theta, z, eta, tol);
  require(tn.distance <= tol * (1.0 + eta.norm()), ErrorKind::domain, "eta is not normal to Theta at z");
  Vec c = theta.row_values(z);
  for (Eigen::Index r = 0; r < c.size(); ++r) c(r) = std::min(c(r), 0.0);
  Mat D = theta.row_jacobian(z);
  Vec du = D * udir;
  Vec base = theta.row_hessian(z, tn.mu) * udir;
  auto cls = coderivative_orthant(c, tn.mu, du, tol);
  double empty_res = 0.0;
  std::vector<int> cols;
  std::vector<bool> sign;
  for (std::size_t r = 0; r < cls.branch.size(); ++r) {
    switch (cls.branch[r]) {
      case CoderivBranch::must_be_zero: break;
      case CoderivBranch::empty: empty_res = std::max(empty_res, std::abs(du(static_cast<Eigen::Index>(r)))); break;
      case CoderivBranch::nonnegative: cols.push_back(static_cast<int>(r)); sign.push_back(true); break;
      case CoderivBranch::free: cols.push_back(static_cast<int>(r)); sign.push_back(false); break;
    }
  }
  Mat B(theta.s, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) B.col(j) = D.row(cols[j]).transpose();
  auto sol = detail::signed_lsq(B, nu - base, sign);
  return std::max(empty_res, sol.residual);
}

enum class H4Case { polyhedral, quadratic_example };

/// Polyhedral case: rows U fixed, offsets shifted by <x - xbar, u_i> so psi is preserved.
inline Vec h4_shift_polyhedral(const Vec& x, const Vec& xbar, const Mat& U, const Vec& bbar) {
  require(U.cols() == x.size() && x.size() == xbar.size() && U.rows() == bbar.size(), ErrorKind::configuration,
          "h4 shift: dimension mismatch");
  return bbar + U * (x - xbar);
}

/// Quadratic field: u = ubar - (x - xbar)(x + xbar) keeps x^2 + u - 1 fixed.
inline Vec h4_shift_quadratic(const Vec& x, const Vec& xbar, const Vec& ubar) {
  require(x.size() == 1 && xbar.size() == 1 && ubar.size() == 1, ErrorKind::configuration,
          "quadratic h4 shift is scalar");
  return vec1(ubar(0) - (x(0) - xbar(0)) * (x(0) + xbar(0)));
}

/// Dispatcher over the two verified cases. For the polyhedral case the control is (u_1..u_s, b)
/// with rows of length n; only b changes.
inline Vec h4_shift(H4Case c, const Vec& x, const Vec& xbar, const Vec& ubar) {
  switch (c) {
    case H4Case::quadratic_example: return h4_shift_quadratic(x, xbar, ubar);
    case H4Case::polyhedral: {
      const auto n = x.size();
      require(n > 0 && ubar.size() % (n + 1) == 0, ErrorKind::configuration, "polyhedral control has wrong layout");
      const auto s = ubar.size() / (n + 1);
      Mat U(s, n);
      for (Eigen::Index i = 0; i < s; ++i) U.row(i) = ubar.segment(i * n, n).transpose();
      Vec out = ubar;
      out.tail(s) = h4_shift_polyhedral(x, xbar, U, ubar.tail(s));
      return out;
    }
  }
  throw Error(ErrorKind::configuration, "unsupported h4 case");
}

}  // namespace sweep
