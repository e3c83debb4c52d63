#pragma once

#include "sweep/core.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <vector>

namespace sweep::detail {

/// Solves min ||B z - r|| subject to z_i >= 0 for i with sign[i] == true.
/// Exhaustive over the support of the sign-constrained coordinates.
struct SignedLsq {
  Vec z;
  double residual = kInf;
};

inline SignedLsq signed_lsq(const Mat& B, const Vec& r, const std::vector<bool>& sign, double tol = 1e-12) {
  const int p = static_cast<int>(B.cols());
  std::vector<int> constrained, freecols;
  for (int i = 0; i < p; ++i) (sign[i] ? constrained : freecols).push_back(i);
  const int c = static_cast<int>(constrained.size());
  require(c <= 20, ErrorKind::numerical_failure, "signed least squares: too many sign constraints");
  SignedLsq best;
  best.z = Vec::Zero(p);
  best.residual = r.norm();
  if (p == 0) return best;
  for (std::uint32_t mask = 0; mask < (1u << c); ++mask) {
    std::vector<int> cols = freecols;
    for (int j = 0; j < c; ++j)
      if (mask & (1u << j)) cols.push_back(constrained[j]);
    if (cols.empty()) continue;
    Mat Bs(B.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) Bs.col(j) = B.col(cols[j]);
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(Bs);
    Vec zs = cod.solve(r);
    bool ok = true;
    for (std::size_t j = 0; j < cols.size(); ++j)
      if (sign[cols[j]] && zs(j) < -tol) ok = false;
    if (!ok) continue;
    double res = (Bs * zs - r).norm();
    if (res < best.residual - 1e-15) {
      best.residual = res;
      best.z.setZero();
      for (std::size_t j = 0; j < cols.size(); ++j) best.z(cols[j]) = sign[cols[j]] ? std::max(0.0, zs(j)) : zs(j);
      best.residual = (B * best.z - r).norm();
    }
  }
  return best;
}

/// Projection of x onto {y | G y <= g}. Returns y and the multipliers mu >= 0 with x - y = G^T mu.
struct QpResult {
  Vec y;
  Vec mu;
  bool feasible = false;
  int iterations = 0;
};

inline QpResult project_polyhedron_enum(const Vec& x, const Mat& G, const Vec& g, double tol) {
  const int R = static_cast<int>(G.rows());
  QpResult best;
  double best_d = kInf;
  for (std::uint32_t mask = 0; mask < (1u << R); ++mask) {
    std::vector<int> S;
    for (int r = 0; r < R; ++r)
      if (mask & (1u << r)) S.push_back(r);
    Vec y = x;
    Vec mu = Vec::Zero(R);
    if (!S.empty()) {
      Mat GS(static_cast<Eigen::Index>(S.size()), G.cols());
      Vec gS(static_cast<Eigen::Index>(S.size()));
      for (std::size_t i = 0; i < S.size(); ++i) {
        GS.row(i) = G.row(S[i]);
        gS(i) = g(S[i]);
      }
      Mat K = GS * GS.transpose();
      Eigen::FullPivLU<Mat> lu(K);
      lu.setThreshold(1e-12);
      if (lu.rank() < static_cast<Eigen::Index>(S.size())) continue;
      Vec m = lu.solve(GS * x - gS);
      bool signs = true;
      for (Eigen::Index i = 0; i < m.size(); ++i)
        if (m(i) < -tol) signs = false;
      if (!signs) continue;
      for (std::size_t i = 0; i < S.size(); ++i) mu(S[i]) = std::max(0.0, m(i));
      y = x - GS.transpose() * m;
    }
    ++best.iterations;
    if (R > 0) {
      Vec slack = G * y - g;
      bool feasible = true;
      for (int r = 0; r < R; ++r)
        if (slack(r) > tol * (1.0 + std::abs(g(r)) + G.row(r).norm() * y.norm())) feasible = false;
      if (!feasible) continue;
    }
    double d = (y - x).norm();
    if (d < best_d) {
      best_d = d;
      best.y = y;
      best.mu = mu;
      best.feasible = true;
    }
  }
  return best;
}

/// Hildreth's dual coordinate ascent for the same projection.
inline QpResult project_polyhedron_dual(const Vec& x, const Mat& G, const Vec& g, double tol, int max_sweeps = 200000) {
  const int R = static_cast<int>(G.rows());
  QpResult out;
  Vec mu = Vec::Zero(R);
  Vec y = x;
  Vec nrm2 = G.rowwise().squaredNorm();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double change = 0.0;
    for (int r = 0; r < R; ++r) {
      if (nrm2(r) == 0.0) continue;
      double delta = (G.row(r).dot(y) - g(r)) / nrm2(r);
      double next = std::max(0.0, mu(r) + delta);
      double d = next - mu(r);
      if (d != 0.0) {
        y -= d * G.row(r).transpose();
        mu(r) = next;
        change = std::max(change, std::abs(d) * std::sqrt(nrm2(r)));
      }
    }
    out.iterations = sweep + 1;
    if (change <= 1e-3 * tol) break;
  }
  out.y = y;
  out.mu = mu;
  out.feasible = (R == 0) || ((G * y - g).array() <= tol).all();
  return out;
}

}  // namespace sweep::detail
