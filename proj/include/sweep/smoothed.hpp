#pragma once

#include "sweep/ocp.hpp"

#include <Eigen/Sparse>

#include <sstream>

namespace sweep {

struct SmoothedOptions {
  std::vector<double> sigma_schedule{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
  double tol_stat = 1e-8;
  double tol_dyn = 1e-10;
  int max_iter_per_stage = 200;
  int max_outer_al = 40;
  int max_inner_al = 100;
  /// Weight of the selection term sigma * tie_break * sum |u_{j+1} - u_j|^2 / (2h). It vanishes with sigma and
  /// picks the smoothest control among discrete optima (u_k, for instance, does not enter J when ell ignores u').
  double tie_break = 1.0;
};

namespace detail {

using SpMat = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

struct Fb {
  double v, da, db, daa, dab, dbb;
};

/// Smoothed complementarity a + b - sqrt(a^2 + b^2 + sigma^2) and its derivatives.
inline Fb fischer_burmeister(double a, double b, double sigma) {
  const double r = std::sqrt(a * a + b * b + sigma * sigma);
  Fb e{};
  e.v = (a + b > 0.0) ? (2.0 * a * b - sigma * sigma) / (a + b + r) : a + b - r;
  e.da = 1.0 - a / r;
  e.db = 1.0 - b / r;
  const double r3 = r * r * r;
  e.daa = -(b * b + sigma * sigma) / r3;
  e.dbb = -(a * a + sigma * sigma) / r3;
  e.dab = a * b / r3;
  return e;
}

inline Mat fd_hessian(const std::function<Vec(const Vec&)>& grad, const Vec& a) {
  const auto d = a.size();
  Mat H(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    double step = 1e-5 * (1.0 + std::abs(a(i)));
    Vec ap = a, am = a;
    ap(i) += step;
    am(i) -= step;
    H.col(i) = (grad(ap) - grad(am)) / (2.0 * step);
  }
  return 0.5 * (H + H.transpose());
}

/// Gradient of cost_eval with respect to every node value of x and u.
inline void cost_gradient(const OcpProblem& p, const Mesh& mesh, const Mat& X, const Mat& U, Mat& GX, Mat& GU) {
  const int n = p.n(), m = p.m(), k = mesh.k;
  const double h = mesh.h();
  GX = Mat::Zero(n, k + 1);
  GU = Mat::Zero(m, k + 1);
  GX.col(k) += p.phi_grad(X.col(k));
  for (int j = 0; j < k; ++j) {
    Vec xd = (X.col(j + 1) - X.col(j)) / h;
    Vec ud = ell_udot(p, (U.col(j + 1) - U.col(j)) / h);
    Vec g = p.ell_grad(mesh.t(j), X.col(j), U.col(j), xd, ud);
    Vec wx = g.segment(0, n), wu = g.segment(n, m), vx = g.segment(n + m, n), vu = g.segment(2 * n + m, m);
    if (p.mode == Mode::w12c) vu.setZero();
    GX.col(j) += h * wx - vx;
    GX.col(j + 1) += vx;
    GU.col(j) += h * wu - vu;
    GU.col(j + 1) += vu;
  }
  if (p.anchor && p.anchor->rho > 0.0) {
    const Anchor& a = *p.anchor;
    const double cx = p.mode == Mode::w12w12 ? 2.0 * a.rho : 2.0 * a.rho / h;
    for (int j = 0; j < k; ++j) {
      double t0 = mesh.t(j), t1 = mesh.t(j + 1);
      Vec dx = (X.col(j + 1) - X.col(j)) - (a.x.at(t1) - a.x.at(t0));
      GX.col(j + 1) += cx * dx;
      GX.col(j) -= cx * dx;
      if (p.mode == Mode::w12w12) {
        Vec du = (U.col(j + 1) - U.col(j)) - (a.u.at(t1) - a.u.at(t0));
        GU.col(j + 1) += cx * du;
        GU.col(j) -= cx * du;
      }
    }
    if (p.mode == Mode::w12c)
      for (int j = 0; j <= k; ++j) GU.col(j) += 2.0 * a.rho * (U.col(j) - a.u.at(mesh.t(j)));
  }
}

/// The smoothed transcription as an equality-constrained program in node-blocked variables.
/// Node 0 holds mu_0 only (x_0, u_0 fixed); node j >= 1 holds x_j, u_j, mu_j and the tube multiplier.
/// mu_k is the multiplier of the endpoint rows.
class SmoothedNlp {
 public:
  explicit SmoothedNlp(const Transcription& tr) : tr_(tr), p_(tr.problem) {
    n_ = tr.n;
    m_ = tr.m;
    R_ = tr.rows;
    k_ = tr.mesh.k;
    loc_ = tr.localized() ? 1 : 0;
    h_ = tr.mesh.h();
    {
      Vec z0 = p_.system.field.value(p_.system.x0, p_.u0);
      Vec rows0 = p_.system.theta.row_values(z0);
      act0_.assign(R_, false);
      for (int r = 0; r < R_; ++r) act0_[r] = rows0(r) >= -1e-12;
    }
    n_fb0_ = 0;
    for (int r = 0; r < R_; ++r) n_fb0_ += act0_[r] ? 0 : 1;
    voff_.resize(k_ + 2);
    voff_[0] = 0;
    for (int j = 0; j <= k_; ++j) voff_[j + 1] = voff_[j] + (j == 0 ? R_ : n_ + m_ + R_ + loc_);
    N = voff_[k_ + 1];
    coff_.resize(k_ + 2);
    coff_[0] = 0;
    for (int j = 0; j <= k_; ++j) coff_[j + 1] = coff_[j] + (j < k_ ? n_ : 0) + (j == 0 ? n_fb0_ : R_) + (j >= 1 ? loc_ : 0);
    Nc = coff_[k_ + 1];
  }

  int N = 0, Nc = 0;

  int xi(int j) const { return j == 0 ? -1 : voff_[j]; }
  int ui(int j) const { return j == 0 ? -1 : voff_[j] + n_; }
  int mi(int j) const { return j == 0 ? 0 : voff_[j] + n_ + m_; }
  int li(int j) const { return j == 0 || !loc_ ? -1 : voff_[j] + n_ + m_ + R_; }

  Vec x(const Vec& z, int j) const { return j == 0 ? Vec(p_.system.x0) : Vec(z.segment(xi(j), n_)); }
  Vec u(const Vec& z, int j) const { return j == 0 ? Vec(p_.u0) : Vec(z.segment(ui(j), m_)); }
  /// Rows active at the fixed initial pair carry mu = w^2 and no complementarity row.
  Vec mu(const Vec& z, int j) const {
    Vec v = z.segment(mi(j), R_);
    if (j == 0)
      for (int r = 0; r < R_; ++r)
        if (act0_[r]) v(r) = v(r) * v(r);
    return v;
  }
  double dmu(const Vec& z, int j, int r) const { return j == 0 && act0_[r] ? 2.0 * z(mi(0) + r) : 1.0; }
  bool fb_row(int j, int r) const { return j > 0 || !act0_[r]; }

  Vec pack(const Mat& X, const Mat& U, const Mat& MU, const Vec& L) const {
    Vec z = Vec::Zero(N);
    for (int j = 0; j <= k_; ++j) {
      if (j >= 1) {
        z.segment(xi(j), n_) = X.col(j);
        z.segment(ui(j), m_) = U.col(j);
      }
      z.segment(mi(j), R_) = MU.col(j);
      if (j == 0)
        for (int r = 0; r < R_; ++r)
          if (act0_[r]) z(mi(0) + r) = std::max(std::sqrt(std::max(MU(r, 0), 0.0)), 1e-2);
      if (li(j) >= 0) z(li(j)) = L(j);
    }
    return z;
  }

  void unpack(const Vec& z, Mat& X, Mat& U, Mat& MU) const {
    X.resize(n_, k_ + 1);
    U.resize(m_, k_ + 1);
    MU.resize(R_, k_ + 1);
    for (int j = 0; j <= k_; ++j) {
      X.col(j) = x(z, j);
      U.col(j) = u(z, j);
      MU.col(j) = mu(z, j);
    }
  }

  DiscreteDecision decision(const Vec& z) const {
    DiscreteDecision d;
    d.mesh = tr_.mesh;
    Mat MU;
    unpack(z, d.x, d.u, MU);
    d.eta = Mat::Zero(tr_.s, k_);
    for (int j = 0; j < k_; ++j) {
      Vec zj = p_.system.field.value(d.x.col(j), d.u.col(j));
      d.eta.col(j) = p_.system.theta.row_jacobian(zj).transpose() * MU.col(j);
    }
    return d;
  }

  double cost(const Vec& z) const { return cost_eval(p_, decision(z)); }

  /// Selection weight of the current continuation stage.
  double reg = 0.0;

  double objective(const Vec& z) const {
    double r = 0.0;
    if (reg > 0.0)
      for (int j = 0; j < k_; ++j) r += (u(z, j + 1) - u(z, j)).squaredNorm();
    return cost(z) + 0.5 * reg * r / h_;
  }

  Vec cost_grad(const Vec& z) const {
    Mat X, U, MU, GX, GU;
    unpack(z, X, U, MU);
    cost_gradient(p_, tr_.mesh, X, U, GX, GU);
    if (reg > 0.0)
      for (int j = 0; j < k_; ++j) {
        Vec d = (reg / h_) * (U.col(j + 1) - U.col(j));
        GU.col(j + 1) += d;
        GU.col(j) -= d;
      }
    Vec g = Vec::Zero(N);
    for (int j = 1; j <= k_; ++j) {
      g.segment(xi(j), n_) = GX.col(j);
      g.segment(ui(j), m_) = GU.col(j);
    }
    return g;
  }

  /// Tube row value eps^2/4 - ||(x_j,u_j) - anchor(t_j)||^2 and the offset w.
  double tube(const Vec& z, int j, Vec& w) const {
    const Anchor& a = *p_.anchor;
    double t = tr_.mesh.t(j);
    w.resize(n_ + m_);
    w << x(z, j) - a.x.at(t), u(z, j) - a.u.at(t);
    return 0.25 * a.epsilon * a.epsilon - w.squaredNorm();
  }

  Vec constraints(const Vec& z, double sigma) const {
    Vec c(Nc);
    const auto& sys = p_.system;
    for (int j = 0; j <= k_; ++j) {
      int r0 = coff_[j];
      Vec xj = x(z, j), uj = u(z, j), mj = mu(z, j);
      Vec zj = sys.field.value(xj, uj);
      Vec rows = sys.theta.row_values(zj);
      if (j < k_) {
        Vec eta = sys.theta.row_jacobian(zj).transpose() * mj;
        c.segment(r0, n_) = x(z, j + 1) - xj - h_ * sys.drift(tr_.mesh.t(j), xj) + h_ * sys.field.jac_x(xj, uj).transpose() * eta;
        r0 += n_;
      }
      for (int r = 0; r < R_; ++r)
        if (fb_row(j, r)) c(r0++) = fischer_burmeister(mj(r), -rows(r), sigma).v;
      if (li(j) >= 0) {
        Vec w;
        c(r0) = fischer_burmeister(z(li(j)), tube(z, j, w), sigma).v;
      }
    }
    return c;
  }

  SpMat jacobian(const Vec& z, double sigma) const {
    Triplets T;
    const auto& sys = p_.system;
    auto put_xu = [&](int row, int j, const Eigen::Ref<const Eigen::RowVectorXd>& gxu) {
      if (j == 0) return;
      for (int i = 0; i < n_; ++i) T.emplace_back(row, xi(j) + i, gxu(i));
      for (int i = 0; i < m_; ++i) T.emplace_back(row, ui(j) + i, gxu(n_ + i));
    };
    for (int j = 0; j <= k_; ++j) {
      int r0 = coff_[j];
      Vec xj = x(z, j), uj = u(z, j), mj = mu(z, j);
      Vec zj = sys.field.value(xj, uj);
      Vec rows = sys.theta.row_values(zj);
      Mat D = sys.theta.row_jacobian(zj);
      Mat Jx = sys.field.jac_x(xj, uj);
      Mat Jfull = sys.field.jac(xj, uj);
      if (j < k_) {
        Vec eta = D.transpose() * mj;
        Mat H = sys.field.hess(xj, uj, eta);
        Mat dxj = -Mat::Identity(n_, n_) - h_ * sys.drift_jac(tr_.mesh.t(j), xj) + h_ * H.topLeftCorner(n_, n_);
        Mat duj = h_ * H.topRightCorner(n_, m_);
        Mat dmu_ = h_ * Jx.transpose() * D.transpose();
        for (int a = 0; a < n_; ++a) {
          int row = r0 + a;
          for (int i = 0; i < n_; ++i) T.emplace_back(row, xi(j + 1) + i, a == i ? 1.0 : 0.0);
          if (j > 0) {
            for (int i = 0; i < n_; ++i) T.emplace_back(row, xi(j) + i, dxj(a, i));
            for (int i = 0; i < m_; ++i) T.emplace_back(row, ui(j) + i, duj(a, i));
          }
          for (int r = 0; r < R_; ++r) T.emplace_back(row, mi(j) + r, dmu_(a, r) * dmu(z, j, r));
        }
        r0 += n_;
      }
      for (int r = 0; r < R_; ++r) {
        if (!fb_row(j, r)) continue;
        Fb f = fischer_burmeister(mj(r), -rows(r), sigma);
        T.emplace_back(r0, mi(j) + r, f.da);
        Eigen::RowVectorXd gb = -(D.row(r) * Jfull);
        put_xu(r0, j, f.db * gb);
        ++r0;
      }
      if (li(j) >= 0) {
        Vec w;
        double b = tube(z, j, w);
        Fb f = fischer_burmeister(z(li(j)), b, sigma);
        T.emplace_back(r0, li(j), f.da);
        put_xu(r0, j, f.db * (-2.0 * w.transpose()));
      }
    }
    SpMat A(Nc, N);
    A.setFromTriplets(T.begin(), T.end());
    return A;
  }

  /// Hessian of J + y^T c. Third derivatives of psi are not included.
  void lagrangian_hessian(const Vec& z, const Vec& y, double sigma, Triplets& T) const {
    const auto& sys = p_.system;
    const int nm = n_ + m_;
    // global index of local (x_j,u_j) coordinate i, or -1 when fixed
    auto gidx = [&](int j, int i) { return j == 0 ? -1 : (i < n_ ? xi(j) + i : ui(j) + (i - n_)); };
    auto add = [&](int a, int b, double v) {
      if (a >= 0 && b >= 0 && v != 0.0) T.emplace_back(a, b, v);
    };
    // running cost
    for (int j = 0; j < k_; ++j) {
      Vec xj = x(z, j), uj = u(z, j), x1 = x(z, j + 1), u1 = u(z, j + 1);
      double t = tr_.mesh.t(j);
      Vec arg(2 * nm);
      arg << xj, uj, (x1 - xj) / h_, ell_udot(p_, (u1 - uj) / h_);
      auto g = [&](const Vec& a) -> Vec {
        Vec out = p_.ell_grad(t, a.segment(0, n_), a.segment(n_, m_), a.segment(nm, n_), a.segment(nm + n_, m_));
        if (p_.mode == Mode::w12c) out.tail(m_).setZero();
        return out;
      };
      Mat Hl = fd_hessian(g, arg);
      Mat P = Mat::Zero(2 * nm, 2 * nm);  // arg = P (x_j, u_j, x_{j+1}, u_{j+1})
      P.topLeftCorner(nm, nm).setIdentity();
      P.block(nm, 0, n_, n_) = -Mat::Identity(n_, n_) / h_;
      P.block(nm, nm, n_, n_) = Mat::Identity(n_, n_) / h_;
      if (p_.mode == Mode::w12w12) {
        P.block(nm + n_, n_, m_, m_) = -Mat::Identity(m_, m_) / h_;
        P.block(nm + n_, nm + n_, m_, m_) = Mat::Identity(m_, m_) / h_;
      }
      Mat Hloc = h_ * P.transpose() * Hl * P;
      for (int a = 0; a < 2 * nm; ++a)
        for (int b = 0; b < 2 * nm; ++b) add(gidx(j + a / nm, a % nm), gidx(j + b / nm, b % nm), Hloc(a, b));
    }
    if (reg > 0.0)
      for (int j = 0; j < k_; ++j)
        for (int i = 0; i < m_; ++i) {
          int a = j == 0 ? -1 : ui(j) + i, b = ui(j + 1) + i;
          add(a, a, reg / h_);
          add(b, b, reg / h_);
          add(a, b, -reg / h_);
          add(b, a, -reg / h_);
        }
    // terminal cost
    {
      Mat Hp = fd_hessian(p_.phi_grad, x(z, k_));
      for (int a = 0; a < n_; ++a)
        for (int b = 0; b < n_; ++b) add(xi(k_) + a, xi(k_) + b, Hp(a, b));
    }
    // anchor terms
    if (p_.anchor && p_.anchor->rho > 0.0) {
      const double rho = p_.anchor->rho;
      const double cx = p_.mode == Mode::w12w12 ? 2.0 * rho : 2.0 * rho / h_;
      for (int j = 0; j < k_; ++j) {
        for (int i = 0; i < n_; ++i) {
          int a = gidx(j, i), b = gidx(j + 1, i);
          add(a, a, cx);
          add(b, b, cx);
          add(a, b, -cx);
          add(b, a, -cx);
        }
        if (p_.mode == Mode::w12w12)
          for (int i = 0; i < m_; ++i) {
            int a = gidx(j, n_ + i), b = gidx(j + 1, n_ + i);
            add(a, a, cx);
            add(b, b, cx);
            add(a, b, -cx);
            add(b, a, -cx);
          }
      }
      if (p_.mode == Mode::w12c)
        for (int j = 1; j <= k_; ++j)
          for (int i = 0; i < m_; ++i) add(ui(j) + i, ui(j) + i, 2.0 * rho);
    }
    // constraints
    for (int j = 0; j <= k_; ++j) {
      int r0 = coff_[j];
      Vec xj = x(z, j), uj = u(z, j), mj = mu(z, j);
      Vec zj = sys.field.value(xj, uj);
      Vec rows = sys.theta.row_values(zj);
      Mat D = sys.theta.row_jacobian(zj);
      Mat Jfull = sys.field.jac(xj, uj);
      if (j < k_) {
        Vec yE = y.segment(r0, n_);
        // -h <yE, f(t_j, x_j)>
        if (j > 0) {
          double t = tr_.mesh.t(j);
          auto gf = [&](const Vec& xx) -> Vec { return sys.drift_jac(t, xx).transpose() * yE; };
          Mat Hf = fd_hessian(gf, xj);
          for (int a = 0; a < n_; ++a)
            for (int b = 0; b < n_; ++b) add(xi(j) + a, xi(j) + b, -h_ * Hf(a, b));
        }
        if (j == 0)
          for (int r = 0; r < R_; ++r)
            if (act0_[r]) add(mi(0) + r, mi(0) + r, 2.0 * h_ * (sys.field.jac_x(xj, uj).transpose() * D.row(r).transpose()).dot(yE));
        // h <yE, grad_x psi^T D^T mu>: cross terms between (x_j,u_j) and mu_j
        for (int r = 0; r < R_; ++r) {
          Mat Hr = sys.field.hess(xj, uj, D.row(r).transpose());
          Vec col = h_ * Hr.leftCols(n_) * yE;
          for (int i = 0; i < nm; ++i) {
            add(gidx(j, i), mi(j) + r, col(i));
            add(mi(j) + r, gidx(j, i), col(i));
          }
        }
        r0 += n_;
      }
      for (int r = 0; r < R_; ++r) {
        if (!fb_row(j, r)) continue;
        double yr = y(r0++);
        if (yr == 0.0) continue;
        Fb f = fischer_burmeister(mj(r), -rows(r), sigma);
        Vec gb = -(D.row(r) * Jfull).transpose();
        Mat Hpsi = -sys.field.hess(xj, uj, D.row(r).transpose());
        int ma = mi(j) + r;
        add(ma, ma, yr * f.daa);
        for (int i = 0; i < nm; ++i) {
          add(ma, gidx(j, i), yr * f.dab * gb(i));
          add(gidx(j, i), ma, yr * f.dab * gb(i));
          for (int q = 0; q < nm; ++q)
            add(gidx(j, i), gidx(j, q), yr * (f.dbb * gb(i) * gb(q) + f.db * Hpsi(i, q)));
        }
      }
      if (li(j) >= 0) {
        double yr = y(r0);
        Vec w;
        double b = tube(z, j, w);
        Fb f = fischer_burmeister(z(li(j)), b, sigma);
        Vec gb = -2.0 * w;
        int la = li(j);
        add(la, la, yr * f.daa);
        for (int i = 0; i < nm; ++i) {
          add(la, gidx(j, i), yr * f.dab * gb(i));
          add(gidx(j, i), la, yr * f.dab * gb(i));
          for (int q = 0; q < nm; ++q)
            add(gidx(j, i), gidx(j, q), yr * (f.dbb * gb(i) * gb(q) + (i == q ? -2.0 * f.db : 0.0)));
        }
      }
    }
  }

  double complementarity(const Vec& z) const {
    double res = 0.0;
    const auto& sys = p_.system;
    for (int j = 0; j <= k_; ++j) {
      Vec zj = sys.field.value(x(z, j), u(z, j));
      Vec rows = sys.theta.row_values(zj);
      Vec mj = mu(z, j);
      for (int r = 0; r < R_; ++r) res = std::max(res, std::abs(std::min(mj(r), -rows(r))));
      if (li(j) >= 0) {
        Vec w;
        res = std::max(res, std::abs(std::min(z(li(j)), tube(z, j, w))));
      }
    }
    return res;
  }

  double dynamics_residual(const Vec& c) const {
    double res = 0.0;
    for (int j = 0; j < k_; ++j) res = std::max(res, c.segment(coff_[j], n_).cwiseAbs().maxCoeff());
    return res;
  }

  double fb_residual(const Vec& c) const {
    double res = 0.0;
    for (int j = 0; j <= k_; ++j) {
      int r0 = coff_[j] + (j < k_ ? n_ : 0);
      int len = coff_[j + 1] - r0;
      if (len > 0) res = std::max(res, c.segment(r0, len).cwiseAbs().maxCoeff());
    }
    return res;
  }

 private:
  const Transcription& tr_;
  const OcpProblem& p_;
  int n_ = 0, m_ = 0, R_ = 0, k_ = 0, loc_ = 0, n_fb0_ = 0;
  std::vector<bool> act0_;
  double h_ = 0.0;
  std::vector<int> voff_, coff_;
};


/// Augmented Lagrangian phase: minimizes J + y^T c + rho/2 |c|^2 by regularized Newton, updating y and rho,
/// until |c| <= tol_c. Returns false when it stalls.
inline bool augmented_lagrangian_phase(const SmoothedNlp& nlp, Vec& z, Vec& y, double sigma, double tol_c,
                                       double tol_g, const SmoothedOptions& opt, int& iterations) {
  const int N = nlp.N;
  double rho = 10.0;
  auto merit = [&](const Vec& zz, double& value, Vec* grad) {
    Vec c = nlp.constraints(zz, sigma);
    value = nlp.objective(zz) + y.dot(c) + 0.5 * rho * c.squaredNorm();
    if (grad) {
      SpMat A = nlp.jacobian(zz, sigma);
      *grad = nlp.cost_grad(zz) + A.transpose() * (y + rho * c);
    }
    return c;
  };
  double viol_prev = kInf;
  for (int outer = 0; outer < opt.max_outer_al; ++outer) {
    double omega = std::max(tol_g, 1e-2 / (1.0 + outer));
    for (int inner = 0; inner < opt.max_inner_al; ++inner) {
      double phi0;
      Vec g;
      Vec c = merit(z, phi0, &g);
      if (!std::isfinite(phi0)) return false;
      if (g.cwiseAbs().maxCoeff() <= omega) break;
      SpMat A = nlp.jacobian(z, sigma);
      Triplets T;
      nlp.lagrangian_hessian(z, y + rho * c, sigma, T);
      SpMat H(N, N);
      H.setFromTriplets(T.begin(), T.end());
      H = H + rho * SpMat(A.transpose() * A);
      SpMat I(N, N);
      I.setIdentity();
      double delta = 0.0;
      Vec d;
      for (int tries = 0; tries < 30; ++tries) {
        Eigen::SimplicialLDLT<SpMat> ldlt(H + delta * I);
        if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 0.0) {
          d = ldlt.solve(-g);
          if (d.allFinite() && d.dot(g) < 0.0) break;
        }
        d.resize(0);
        delta = delta == 0.0 ? 1e-8 * (1.0 + rho) : delta * 10.0;
      }
      if (d.size() == 0) d = -g;
      ++iterations;
      double alpha = 1.0, slope = g.dot(d);
      bool ok = false;
      while (alpha >= 1e-12) {
        double phi;
        Vec zt = z + alpha * d;
        merit(zt, phi, nullptr);
        if (std::isfinite(phi) && phi <= phi0 + 1e-4 * alpha * slope) {
          z = zt;
          ok = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!ok) break;
    }
    Vec c = nlp.constraints(z, sigma);
    double viol = c.cwiseAbs().maxCoeff();
    if (viol <= tol_c) {
      y += rho * c;
      return true;
    }
    if (viol <= 0.25 * viol_prev) {
      y += rho * c;
    } else {
      rho = std::min(1e10, rho * 10.0);
    }
    viol_prev = viol;
  }
  return false;
}

}  // namespace detail

/// Smoothing continuation on the complementarity transcription: for each sigma the pairs are replaced by
/// Fischer-Burmeister residuals; an augmented Lagrangian phase brings the iterate near a minimizer and
/// damped Newton with Levenberg damping on the KKT system finishes the stage.
inline Solution solve_smoothed(const Transcription& tr, const DiscreteDecision& warm, const SmoothedOptions& opt = {}) {
  using detail::SpMat;
  const OcpProblem& p = tr.problem;
  const auto& sys = p.system;
  const int k = tr.mesh.k;
  require(!opt.sigma_schedule.empty(), ErrorKind::configuration, "sigma schedule is empty");
  for (std::size_t i = 0; i < opt.sigma_schedule.size(); ++i) {
    require(opt.sigma_schedule[i] > 0.0, ErrorKind::configuration, "sigma values must be positive");
    if (i) require(opt.sigma_schedule[i] < opt.sigma_schedule[i - 1], ErrorKind::configuration, "sigma schedule must decrease");
  }
  require(opt.tie_break >= 0.0, ErrorKind::configuration, "tie_break must be nonnegative");
  require(opt.sigma_schedule.back() <= 1e-8, ErrorKind::configuration, "final sigma must be at most 1e-8");
  require(warm.mesh == tr.mesh && warm.x.rows() == tr.n && warm.u.rows() == tr.m, ErrorKind::configuration,
          "warm start does not match the transcription");
  require((warm.x.col(0) - sys.x0).norm() <= 1e-9 && (warm.u.col(0) - p.u0).norm() <= 1e-9, ErrorKind::precondition,
          "warm start does not begin at (x0, u0)");
  for (int j = 0; j <= k; ++j)
    require(theta_contains(sys.theta, sys.field.value(warm.x.col(j), warm.u.col(j)), 1e-6), ErrorKind::precondition,
            "warm start is infeasible at node " + std::to_string(j));

  detail::SmoothedNlp nlp(tr);
  Mat MU = Mat::Zero(tr.rows, k + 1);
  MU.leftCols(k) = row_multipliers_from_dynamics(tr, warm.x, warm.u);
  Vec z = nlp.pack(warm.x, warm.u, MU, Vec::Zero(k + 1));
  const int N = nlp.N, Nc = nlp.Nc;

  auto kkt_parts = [&](const Vec& zz, const Vec& yy, double sigma, Vec& grad_l, Vec& c, SpMat& A) {
    A = nlp.jacobian(zz, sigma);
    c = nlp.constraints(zz, sigma);
    grad_l = nlp.cost_grad(zz) + A.transpose() * yy;
  };

  // least-squares multipliers for the first stage
  Vec y = Vec::Zero(Nc);
  {
    SpMat A = nlp.jacobian(z, opt.sigma_schedule.front());
    SpMat AAt = A * A.transpose();
    SpMat I(Nc, Nc);
    I.setIdentity();
    Eigen::SimplicialLDLT<SpMat> ldlt(AAt + 1e-12 * I);
    if (ldlt.info() == Eigen::Success) y = ldlt.solve(-(A * nlp.cost_grad(z)));
    if (!y.allFinite()) y.setZero();
  }

  Solution out;
  SolveReport& rep = out.report;
  rep.converged = true;
  double delta = 1e-10;
  std::ostringstream trace;

  for (double sigma : opt.sigma_schedule) {
    nlp.reg = sigma * opt.tie_break;
    bool stage_ok = false;
    int fails = 0;
    {
      Vec zs = z, ys = y;
      int its = 0;
      if (detail::augmented_lagrangian_phase(nlp, zs, ys, sigma, 1e-6, 1e-6, opt, its)) {
        z = zs;
        y = ys;
      }
      rep.iterations += its;
    }
    for (int it = 0; it <= opt.max_iter_per_stage; ++it) {
      Vec gl, c;
      SpMat A;
      kkt_parts(z, y, sigma, gl, c, A);
      double stat = gl.cwiseAbs().maxCoeff();
      double dyn = nlp.dynamics_residual(c);
      double fbr = nlp.fb_residual(c);
      if (stat <= opt.tol_stat && dyn <= opt.tol_dyn && fbr <= sigma) {
        stage_ok = true;
        break;
      }
      if (it == opt.max_iter_per_stage) break;
      detail::Triplets T;
      nlp.lagrangian_hessian(z, y, sigma, T);
      SpMat W(N, N);
      W.setFromTriplets(T.begin(), T.end());
      Vec F(N + Nc);
      F << gl, c;
      const double merit0 = 0.5 * F.squaredNorm();

      bool accepted = false;
      while (!accepted && fails < 12) {
        detail::Triplets KT;
        for (int o = 0; o < W.outerSize(); ++o)
          for (SpMat::InnerIterator itw(W, o); itw; ++itw) KT.emplace_back(itw.row(), itw.col(), itw.value());
        for (int o = 0; o < A.outerSize(); ++o)
          for (SpMat::InnerIterator ita(A, o); ita; ++ita) {
            KT.emplace_back(N + ita.row(), ita.col(), ita.value());
            KT.emplace_back(ita.col(), N + ita.row(), ita.value());
          }
        for (int i = 0; i < N; ++i) KT.emplace_back(i, i, delta);
        for (int i = 0; i < Nc; ++i) KT.emplace_back(N + i, N + i, -delta);
        SpMat K(N + Nc, N + Nc);
        K.setFromTriplets(KT.begin(), KT.end());
        Eigen::SparseLU<SpMat> lu;
        lu.analyzePattern(K);
        lu.factorize(K);
        if (lu.info() != Eigen::Success) {
          delta = std::max(1e-8, delta * 100.0);
          ++fails;
          continue;
        }
        Vec d = lu.solve(-F);
        if (!d.allFinite()) {
          delta = std::max(1e-8, delta * 100.0);
          ++fails;
          continue;
        }
        // exact KKT Jacobian times d, for the slope and the model prediction
        Vec Jd(N + Nc);
        Jd << W * d.head(N) + A.transpose() * d.tail(Nc), A * d.head(N);
        const double slope = F.dot(Jd);
        if (slope >= 0.0) {
          delta = std::max(1e-8, delta * 100.0);
          ++fails;
          continue;
        }
        double alpha = 1.0;
        while (alpha >= 1e-10) {
          Vec zt = z + alpha * d.head(N);
          Vec yt = y + alpha * d.tail(Nc);
          Vec glt, ct;
          SpMat At;
          kkt_parts(zt, yt, sigma, glt, ct, At);
          double merit = 0.5 * (glt.squaredNorm() + ct.squaredNorm());
          if (std::isfinite(merit) && merit <= merit0 + 1e-4 * alpha * slope) {
            double pred = merit0 - 0.5 * (F + alpha * Jd).squaredNorm();
            double ratio = pred > 0.0 ? (merit0 - merit) / pred : 0.0;
            if (ratio > 0.75 && alpha == 1.0) delta = std::max(1e-12, delta / 10.0);
            else if (ratio < 0.25) delta = std::min(1e6, delta * 10.0);
            z = zt;
            y = yt;
            accepted = true;
            break;
          }
          alpha *= 0.5;
        }
        if (!accepted) {
          delta = std::min(1e6, std::max(1e-8, delta * 100.0));
          ++fails;
        }
      }
      ++rep.iterations;
      if (!accepted) {
        trace << "sigma=" << sigma << ": line search failed at iteration " << it << " (stationarity " << stat
              << ", dynamics " << dyn << ")";
        break;
      }
      fails = 0;
    }
    rep.sigma_trace.push_back(sigma);
    double J = nlp.cost(z);
    rep.stage_costs.push_back(J);
    rep.cost_trace.push_back(J);
    if (!stage_ok) {
      rep.converged = false;
      if (trace.str().empty()) trace << "sigma=" << sigma << ": no convergence within " << opt.max_iter_per_stage << " iterations";
      break;
    }
  }

  Vec gl, c;
  SpMat A;
  kkt_parts(z, y, opt.sigma_schedule.back(), gl, c, A);
  out.z = nlp.decision(z);
  rep.cost = nlp.cost(z);
  rep.stationarity = gl.cwiseAbs().maxCoeff();
  rep.dynamics = nlp.dynamics_residual(c);
  rep.complementarity = nlp.complementarity(z);
  rep.message = rep.converged ? "converged" : trace.str();
  return out;
}

inline void require_converged(const Solution& s) {
  require(s.report.converged, ErrorKind::numerical_failure, s.report.message);
}

}  // namespace sweep
