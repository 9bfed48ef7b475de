#pragma once

// Primal-dual interior-point method (HKM direction, Mehrotra predictor-corrector)
// for problems in standard form
//
//   min c'x  s.t.  A x = b,  x = (free, nonnegative orthant, PSD blocks).
//
// Free variables are kept in a regularised saddle system instead of being split.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <tuple>
#include <vector>

#include "privbarrier/conic.hpp"

namespace privbarrier {
namespace ipm {

enum class ColKind { Free, Lin, Psd };

struct Entry {
  ColKind kind;
  int block;  // Psd only
  int p;      // index for Free/Lin, row for Psd
  int q;      // column for Psd (p <= q)
  double a;   // coefficient on the scalar x_p or X(p, q)
};

struct StdProblem {
  int nf = 0;
  int nl = 0;
  std::vector<int> dims;
  std::vector<std::vector<Entry>> rows;
  Eigen::VectorXd b;
  Eigen::VectorXd cf, cl;
  std::vector<Eigen::MatrixXd> C;
  int m() const { return static_cast<int>(rows.size()); }
};

struct Iterate {
  Eigen::VectorXd xf, xl, zl, y;
  std::vector<Eigen::MatrixXd> X, Z;
};

enum class Outcome { Optimal, PrimalInfeasible, DualInfeasible, MaxIterations, Stalled };

struct Result {
  Outcome outcome = Outcome::MaxIterations;
  Iterate it;
  int iterations = 0;
  double pobj = 0, dobj = 0, rel_gap = 0, rel_p = 0, rel_d = 0;
  /// Nearly primal-feasible iterates (rel_p <= 10 tol), best objective first.
  std::vector<std::pair<double, Iterate>> primal_candidates;
};

// ---- linear maps ---------------------------------------------------------

inline double apply_row(const std::vector<Entry>& row, const Iterate& it) {
  double s = 0.0;
  for (const auto& e : row) {
    switch (e.kind) {
      case ColKind::Free: s += e.a * it.xf[e.p]; break;
      case ColKind::Lin: s += e.a * it.xl[e.p]; break;
      case ColKind::Psd: s += e.a * it.X[static_cast<std::size_t>(e.block)](e.p, e.q); break;
    }
  }
  return s;
}

struct Dual {
  Eigen::VectorXd f, l;
  std::vector<Eigen::MatrixXd> S;
};

inline Dual zero_dual(const StdProblem& P) {
  Dual d{Eigen::VectorXd::Zero(P.nf), Eigen::VectorXd::Zero(P.nl), {}};
  for (int n : P.dims) d.S.push_back(Eigen::MatrixXd::Zero(n, n));
  return d;
}

/// A' y
inline Dual adjoint(const StdProblem& P, const Eigen::VectorXd& y) {
  Dual d = zero_dual(P);
  for (int i = 0; i < P.m(); ++i) {
    const double yi = y[i];
    if (yi == 0.0) continue;
    for (const auto& e : P.rows[static_cast<std::size_t>(i)]) {
      switch (e.kind) {
        case ColKind::Free: d.f[e.p] += e.a * yi; break;
        case ColKind::Lin: d.l[e.p] += e.a * yi; break;
        case ColKind::Psd: {
          auto& S = d.S[static_cast<std::size_t>(e.block)];
          if (e.p == e.q) {
            S(e.p, e.p) += e.a * yi;
          } else {
            S(e.p, e.q) += 0.5 * e.a * yi;
            S(e.q, e.p) += 0.5 * e.a * yi;
          }
          break;
        }
      }
    }
  }
  return d;
}

/// Frobenius norm of row i viewed as an element of the product space.
inline double row_norm(const std::vector<Entry>& row) {
  double s = 0.0;
  for (const auto& e : row) s += (e.kind == ColKind::Psd && e.p != e.q) ? 0.5 * e.a * e.a : e.a * e.a;
  return std::sqrt(s);
}

inline double max_step(const Eigen::MatrixXd& X, const Eigen::MatrixXd& dX) {
  Eigen::LLT<Eigen::MatrixXd> llt(X);
  if (llt.info() != Eigen::Success) return 0.0;
  Eigen::MatrixXd W = llt.matrixL().solve(dX);
  W = llt.matrixL().solve(W.transpose()).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (W + W.transpose()), Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  return lmin >= 0.0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
}

inline double max_step(const Eigen::VectorXd& x, const Eigen::VectorXd& dx) {
  double a = std::numeric_limits<double>::infinity();
  for (int i = 0; i < x.size(); ++i)
    if (dx[i] < 0) a = std::min(a, -x[i] / dx[i]);
  return a;
}

inline Eigen::MatrixXd sym(const Eigen::MatrixXd& A) { return 0.5 * (A + A.transpose()); }

struct Direction {
  Eigen::VectorXd dxf, dxl, dzl, dy;
  std::vector<Eigen::MatrixXd> dX, dZ;
};

class Solver {
 public:
  Solver(const StdProblem& P, double tol, int max_iter, bool verbose)
      : P_(P), tol_(tol), max_iter_(max_iter), verbose_(verbose) {
    rows_of_block_.resize(P_.dims.size());
    for (int i = 0; i < P_.m(); ++i) {
      std::vector<bool> seen(P_.dims.size(), false);
      for (const auto& e : P_.rows[static_cast<std::size_t>(i)])
        if (e.kind == ColKind::Psd && !seen[static_cast<std::size_t>(e.block)]) {
          seen[static_cast<std::size_t>(e.block)] = true;
          rows_of_block_[static_cast<std::size_t>(e.block)].push_back(i);
        }
    }
  }

  Result run(const Eigen::VectorXd* warm_free) {
    Iterate it = start(warm_free);
    Result res;
    const double bnorm = P_.b.norm();
    double cnorm2 = P_.cf.squaredNorm() + P_.cl.squaredNorm();
    for (const auto& C : P_.C) cnorm2 += C.squaredNorm();
    const double cnorm = std::sqrt(cnorm2);
    const int N = P_.nl + [&] {
      int s = 0;
      for (int n : P_.dims) s += n;
      return s;
    }();
    int stall = 0;
    double best_p = std::numeric_limits<double>::infinity();

    for (int k = 0; k <= max_iter_; ++k) {
      res.iterations = k;
      // residuals
      Eigen::VectorXd Rp(P_.m());
      for (int i = 0; i < P_.m(); ++i) Rp[i] = P_.b[i] - apply_row(P_.rows[static_cast<std::size_t>(i)], it);
      Dual Aty = adjoint(P_, it.y);
      Dual Rd;
      Rd.f = P_.cf - Aty.f;
      Rd.l = P_.cl - Aty.l - it.zl;
      for (std::size_t b = 0; b < P_.dims.size(); ++b) Rd.S.push_back(P_.C[b] - Aty.S[b] - it.Z[b]);
      double rd2 = Rd.f.squaredNorm() + Rd.l.squaredNorm();
      for (const auto& S : Rd.S) rd2 += S.squaredNorm();

      double pobj = P_.cf.dot(it.xf) + P_.cl.dot(it.xl);
      double comp = it.xl.dot(it.zl);
      for (std::size_t b = 0; b < P_.dims.size(); ++b) {
        pobj += (P_.C[b].cwiseProduct(it.X[b])).sum();
        comp += (it.X[b].cwiseProduct(it.Z[b])).sum();
      }
      const double dobj = P_.b.dot(it.y);
      const double mu = N > 0 ? comp / N : 0.0;
      res.pobj = pobj;
      res.dobj = dobj;
      res.rel_p = Rp.norm() / (1.0 + bnorm);
      res.rel_d = std::sqrt(rd2) / (1.0 + cnorm);
      res.rel_gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
      res.it = it;
      if (verbose_)
        std::cerr << "ipm " << k << " pobj " << pobj << " dobj " << dobj << " p " << res.rel_p << " d "
                  << res.rel_d << " gap " << res.rel_gap << " mu " << mu << "\n";

      if (res.rel_p <= 10 * tol_) {
        auto& c = res.primal_candidates;
        c.insert(std::upper_bound(c.begin(), c.end(), pobj, [](double v, const auto& e) { return v < e.first; }),
                 {pobj, it});
        if (c.size() > 8) c.pop_back();
      }
      // primal residual drifting away from what was already reached: the
      // Schur system has lost the accuracy needed to keep A x = b
      best_p = std::min(best_p, res.rel_p);
      if (best_p < tol_ && res.rel_p > 1e2 * tol_) {
        res.outcome = Outcome::Stalled;
        return res;
      }
      if (res.rel_p <= tol_ && res.rel_d <= tol_ && (res.rel_gap <= tol_ || N == 0)) {
        res.outcome = Outcome::Optimal;
        return res;
      }
      // Farkas certificates
      if (dobj > 0.0) {
        double r2 = Aty.f.squaredNorm() + (Aty.l + it.zl).squaredNorm();
        for (std::size_t b = 0; b < P_.dims.size(); ++b) r2 += (Aty.S[b] + it.Z[b]).squaredNorm();
        if (std::sqrt(r2) / dobj < tol_ && dobj > 1e3 * (1.0 + cnorm)) {
          res.outcome = Outcome::PrimalInfeasible;
          return res;
        }
      }
      if (pobj < 0.0) {
        Eigen::VectorXd Ax(P_.m());
        for (int i = 0; i < P_.m(); ++i) Ax[i] = apply_row(P_.rows[static_cast<std::size_t>(i)], it);
        if (Ax.norm() / -pobj < tol_ && -pobj > 1e3 * (1.0 + bnorm)) {
          res.outcome = Outcome::DualInfeasible;
          return res;
        }
      }
      if (k == max_iter_) break;

      if (!factorize(it)) {
        res.outcome = Outcome::Stalled;
        return res;
      }
      // predictor
      Direction aff = direction(it, Rp, Rd, 0.0, nullptr);
      double ap = std::min(1.0, step_primal(it, aff));
      double ad = std::min(1.0, step_dual(it, aff));
      double comp_aff = (it.xl + ap * aff.dxl).dot(it.zl + ad * aff.dzl);
      for (std::size_t b = 0; b < P_.dims.size(); ++b)
        comp_aff += ((it.X[b] + ap * aff.dX[b]).cwiseProduct(it.Z[b] + ad * aff.dZ[b])).sum();
      double sigma = N > 0 && mu > 0 ? std::pow(std::max(0.0, comp_aff / N) / mu, 3) : 0.0;
      sigma = std::clamp(sigma, 0.0, 1.0);
      // corrector
      Direction d = direction(it, Rp, Rd, sigma * mu, &aff);
      const double gamma = 0.95;
      ap = std::min(1.0, gamma * step_primal(it, d));
      ad = std::min(1.0, gamma * step_dual(it, d));
      if (!std::isfinite(ap) || !std::isfinite(ad)) {
        res.outcome = Outcome::Stalled;
        return res;
      }
      stall = (ap < 1e-8 && ad < 1e-8) ? stall + 1 : 0;
      if (stall >= 5) {
        res.outcome = Outcome::Stalled;
        return res;
      }
      it.xf += ap * d.dxf;
      it.xl += ap * d.dxl;
      it.y += ad * d.dy;
      it.zl += ad * d.dzl;
      for (std::size_t b = 0; b < P_.dims.size(); ++b) {
        it.X[b] = sym(it.X[b] + ap * d.dX[b]);
        it.Z[b] = sym(it.Z[b] + ad * d.dZ[b]);
      }
    }
    res.outcome = Outcome::MaxIterations;
    return res;
  }

 private:
  Iterate start(const Eigen::VectorXd* warm_free) const {
    // scaled identity start in the spirit of SDPT3
    const int m = P_.m();
    double xi = 10.0, eta = 10.0;
    double maxrow = 0.0;
    for (int i = 0; i < m; ++i) {
      const double rn = row_norm(P_.rows[static_cast<std::size_t>(i)]);
      maxrow = std::max(maxrow, rn);
      xi = std::max(xi, (1.0 + std::abs(P_.b[i])) / (1.0 + rn));
    }
    double cn = std::sqrt(P_.cf.squaredNorm() + P_.cl.squaredNorm());
    for (const auto& C : P_.C) cn = std::max(cn, C.norm());
    eta = std::max({eta, maxrow, cn});
    Iterate it;
    it.xf = Eigen::VectorXd::Zero(P_.nf);
    if (warm_free && warm_free->size() == P_.nf) it.xf = *warm_free;
    it.xl = Eigen::VectorXd::Constant(P_.nl, xi);
    it.zl = Eigen::VectorXd::Constant(P_.nl, eta);
    it.y = Eigen::VectorXd::Zero(m);
    for (int n : P_.dims) {
      const double s = std::max(1.0, std::sqrt(static_cast<double>(n)));
      it.X.push_back(xi * s * Eigen::MatrixXd::Identity(n, n));
      it.Z.push_back(eta * s * Eigen::MatrixXd::Identity(n, n));
    }
    return it;
  }

  // Builds and factors the regularised saddle matrix [M A_f; A_f' -delta I].
  bool factorize(const Iterate& it) {
    const int m = P_.m();
    const int nf = P_.nf;
    Zinv_.clear();
    for (std::size_t b = 0; b < P_.dims.size(); ++b) {
      Eigen::LLT<Eigen::MatrixXd> llt(it.Z[b]);
      if (llt.info() != Eigen::Success) return false;
      Zinv_.push_back(sym(llt.solve(Eigen::MatrixXd::Identity(P_.dims[b], P_.dims[b]))));
    }
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m, m);
    // orthant part
    {
      Eigen::VectorXd w = it.xl.cwiseQuotient(it.zl);
      std::vector<std::vector<std::pair<int, double>>> lin_cols(static_cast<std::size_t>(P_.nl));
      for (int i = 0; i < m; ++i)
        for (const auto& e : P_.rows[static_cast<std::size_t>(i)])
          if (e.kind == ColKind::Lin) lin_cols[static_cast<std::size_t>(e.p)].emplace_back(i, e.a);
      for (int l = 0; l < P_.nl; ++l)
        for (const auto& [i, ai] : lin_cols[static_cast<std::size_t>(l)])
          for (const auto& [j, aj] : lin_cols[static_cast<std::size_t>(l)]) M(i, j) += w[l] * ai * aj;
    }
    // semidefinite part: M_ij += tr(A_i Z^-1 A_j X)
    for (std::size_t b = 0; b < P_.dims.size(); ++b) {
      const auto& rows = rows_of_block_[b];
      const Eigen::MatrixXd& X = it.X[b];
      const Eigen::MatrixXd& Zi = Zinv_[b];
      const int n = P_.dims[b];
      for (int i : rows) {
        // G = X A_i Z^-1
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
        for (const auto& e : P_.rows[static_cast<std::size_t>(i)]) {
          if (e.kind != ColKind::Psd || e.block != static_cast<int>(b)) continue;
          if (e.p == e.q) {
            G.noalias() += e.a * X.col(e.p) * Zi.row(e.p);
          } else {
            G.noalias() += 0.5 * e.a * X.col(e.p) * Zi.row(e.q);
            G.noalias() += 0.5 * e.a * X.col(e.q) * Zi.row(e.p);
          }
        }
        for (int j : rows) {
          if (j < i) continue;
          double s = 0.0;
          for (const auto& e : P_.rows[static_cast<std::size_t>(j)]) {
            if (e.kind != ColKind::Psd || e.block != static_cast<int>(b)) continue;
            if (e.p == e.q)
              s += e.a * G(e.p, e.p);
            else
              s += 0.5 * e.a * (G(e.q, e.p) + G(e.p, e.q));
          }
          M(i, j) += s;
          if (j != i) M(j, i) += s;
        }
      }
    }
    K_ = Eigen::MatrixXd::Zero(m + nf, m + nf);
    K_.topLeftCorner(m, m) = M;
    for (int i = 0; i < m; ++i)
      for (const auto& e : P_.rows[static_cast<std::size_t>(i)])
        if (e.kind == ColKind::Free) {
          K_(i, m + e.p) += e.a;
          K_(m + e.p, i) += e.a;
        }
    Kreg_ = K_;
    for (int i = 0; i < nf; ++i) Kreg_(m + i, m + i) -= 1e-10;
    lu_.compute(Kreg_);
    use_lu_ = true;
    return true;
  }

  Eigen::VectorXd saddle_solve(const Eigen::VectorXd& rhs) const {
    auto once = [&](const Eigen::VectorXd& r) -> Eigen::VectorXd { if (use_lu_) return lu_.solve(r);
      return ldlt_.solve(r);
    };
    Eigen::VectorXd sol = once(rhs);
    for (int k = 0; k < 5; ++k) {
      Eigen::VectorXd r = rhs - K_ * sol;
      if (!r.allFinite()) break;
      sol += once(r);
    }
    return sol;
  }

  Direction direction(const Iterate& it, const Eigen::VectorXd& Rp, const Dual& Rd, double target,
                      const Direction* aff) const {
    const int m = P_.m();
    // h = cone part of dX independent of dy
    Eigen::VectorXd hl(P_.nl);
    for (int l = 0; l < P_.nl; ++l) {
      double corr = aff ? aff->dxl[l] * aff->dzl[l] : 0.0;
      hl[l] = (target - corr - Rd.l[l] * it.xl[l]) / it.zl[l] - it.xl[l];
    }
    std::vector<Eigen::MatrixXd> H;
    for (std::size_t b = 0; b < P_.dims.size(); ++b) {
      const int n = P_.dims[b];
      Eigen::MatrixXd R = target * Eigen::MatrixXd::Identity(n, n) - Rd.S[b] * it.X[b];
      if (aff) R -= aff->dZ[b] * aff->dX[b];
      H.push_back(sym(Zinv_[b] * R) - it.X[b]);
    }
    Iterate hit;
    hit.xf = Eigen::VectorXd::Zero(P_.nf);
    hit.xl = hl;
    hit.X = H;
    Eigen::VectorXd rhs(m + P_.nf);
    for (int i = 0; i < m; ++i) rhs[i] = Rp[i] - apply_row(P_.rows[static_cast<std::size_t>(i)], hit);
    rhs.tail(P_.nf) = Rd.f;
    Eigen::VectorXd sol = saddle_solve(rhs);

    Direction d;
    d.dy = sol.head(m);
    d.dxf = sol.tail(P_.nf);
    Dual Atdy = adjoint(P_, d.dy);
    d.dzl = Rd.l - Atdy.l;
    d.dxl = hl + it.xl.cwiseQuotient(it.zl).cwiseProduct(Atdy.l);
    for (std::size_t b = 0; b < P_.dims.size(); ++b) {
      d.dZ.push_back(sym(Rd.S[b] - Atdy.S[b]));
      d.dX.push_back(sym(H[b] + sym(Zinv_[b] * Atdy.S[b] * it.X[b])));
    }
    return d;
  }

  double step_primal(const Iterate& it, const Direction& d) const {
    double a = max_step(it.xl, d.dxl);
    for (std::size_t b = 0; b < P_.dims.size(); ++b) a = std::min(a, max_step(it.X[b], d.dX[b]));
    return a;
  }
  double step_dual(const Iterate& it, const Direction& d) const {
    double a = max_step(it.zl, d.dzl);
    for (std::size_t b = 0; b < P_.dims.size(); ++b) a = std::min(a, max_step(it.Z[b], d.dZ[b]));
    return a;
  }

  const StdProblem& P_;
  double tol_;
  int max_iter_;
  bool verbose_;
  std::vector<std::vector<int>> rows_of_block_;
  std::vector<Eigen::MatrixXd> Zinv_;
  Eigen::MatrixXd K_, Kreg_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  bool use_lu_ = false;
};

// ---- conversion from ConicProgram -----------------------------------------

enum class ShiftMode { None, Margin, Fixed };

/// Where an original (logical) cone quantity lives in the standard form, and
/// whether it is shifted: logical = stored + shift on diagonal / orthant entries.
struct Location {
  ColKind kind;
  int block = -1;
  int p = 0, q = 0;
  ShiftMode shift = ShiftMode::None;
};

struct Conversion {
  StdProblem P;
  std::vector<Location> var_loc;  // per ConicProgram variable
  int t_col = -1;                 // free column of the margin variable
  double fixed_shift = 0.0;
  std::vector<double> row_scale;
};

class Builder {
 public:
  Builder(Conversion& c, double fixed_shift) : c_(c) { c_.fixed_shift = fixed_shift; }

  Location new_free() { return {ColKind::Free, -1, c_.P.nf++, 0, ShiftMode::None}; }
  Location new_lin(ShiftMode s) { return {ColKind::Lin, -1, c_.P.nl++, 0, s}; }
  int new_block(int n) {
    c_.P.dims.push_back(n);
    return static_cast<int>(c_.P.dims.size() - 1);
  }

  struct Row {
    std::map<std::tuple<int, int, int, int>, double> acc;
    double rhs = 0.0;
  };

  void add(Row& r, const Location& loc, double a) const {
    if (a == 0.0) return;
    if (loc.kind == ColKind::Psd) {
      r.acc[{2, loc.block, std::min(loc.p, loc.q), std::max(loc.p, loc.q)}] += a;
    } else {
      r.acc[{loc.kind == ColKind::Free ? 0 : 1, -1, loc.p, 0}] += a;
    }
    const bool on_diag = loc.kind == ColKind::Lin || (loc.kind == ColKind::Psd && loc.p == loc.q);
    if (on_diag && loc.shift == ShiftMode::Margin) r.acc[{0, -1, c_.t_col, 0}] += a;
    if (on_diag && loc.shift == ShiftMode::Fixed) r.rhs -= a * c_.fixed_shift;
  }

  void commit(Row& r) {
    std::vector<Entry> row;
    for (const auto& [key, a] : r.acc) {
      if (a == 0.0) continue;
      const auto [k, b, p, q] = key;
      row.push_back({k == 0 ? ColKind::Free : (k == 1 ? ColKind::Lin : ColKind::Psd), b, p, q, a});
    }
    if (row.empty()) {
      if (std::abs(r.rhs) > 1e-12)
        throw_inconsistent();
      return;
    }
    c_.P.rows.push_back(std::move(row));
    rhs_.push_back(r.rhs);
  }

  void finish() {
    c_.P.b = Eigen::Map<Eigen::VectorXd>(rhs_.data(), static_cast<Eigen::Index>(rhs_.size()));
  }

  bool inconsistent = false;

 private:
  void throw_inconsistent() { inconsistent = true; }
  Conversion& c_;
  std::vector<double> rhs_;
};

enum class Mode { Margin, Elastic, Objective };

inline Conversion convert(const ConicProgram& prog, Mode mode, double t_max, double fixed_eps, bool& trivially_infeasible) {
  Conversion c;
  Builder B(c, fixed_eps);
  trivially_infeasible = false;
  const bool margin = mode != Mode::Objective;
  if (margin) c.t_col = B.new_free().p;
  const int nv = prog.n_scalar_vars();
  c.var_loc.resize(static_cast<std::size_t>(nv));
  auto strict_shift = [&](bool strict) {
    if (mode == Mode::Elastic) return ShiftMode::Margin;
    if (!strict) return ShiftMode::None;
    return mode == Mode::Margin ? ShiftMode::Margin : ShiftMode::Fixed;
  };

  // matrix variables
  const auto& blocks = prog.lmi_blocks();
  for (const auto& blk : blocks) {
    if (blk.kind != BlockKind::MatrixVariable) continue;
    const ShiftMode s = strict_shift(blk.strict);
    if (blk.dim == 1) {
      c.var_loc[static_cast<std::size_t>(blk.first_var)] = B.new_lin(s);
      continue;
    }
    const int bi = B.new_block(blk.dim);
    for (int i = 0; i < blk.dim; ++i)
      for (int j = i; j < blk.dim; ++j)
        c.var_loc[static_cast<std::size_t>(blk.first_var + LmiBlock::packed_index(blk.dim, i, j))] =
            Location{ColKind::Psd, bi, i, j, s};
  }
  for (VarId v = 0; v < nv; ++v) {
    if (prog.is_matrix_entry(v)) continue;
    c.var_loc[static_cast<std::size_t>(v)] =
        prog.is_nonneg(v) ? B.new_lin(mode == Mode::Elastic ? ShiftMode::Margin : ShiftMode::None) : B.new_free();
  }

  // pencils: F0 + sum x_i F_i - S = 0 with S the (possibly shifted) slack
  for (const auto& blk : blocks) {
    if (blk.kind != BlockKind::Pencil) continue;
    const ShiftMode s = strict_shift(blk.strict);
    std::vector<Location> slack;
    if (blk.dim == 1) {
      slack.push_back(B.new_lin(s));
    } else {
      const int bi = B.new_block(blk.dim);
      for (int i = 0; i < blk.dim; ++i)
        for (int j = i; j < blk.dim; ++j) slack.push_back({ColKind::Psd, bi, i, j, s});
    }
    int k = 0;
    for (int i = 0; i < blk.dim; ++i)
      for (int j = i; j < blk.dim; ++j, ++k) {
        Builder::Row r;
        for (const auto& [v, F] : blk.coeffs) B.add(r, c.var_loc[static_cast<std::size_t>(v)], F(i, j));
        B.add(r, slack[static_cast<std::size_t>(k)], -1.0);
        r.rhs -= blk.f0(i, j);
        B.commit(r);
      }
  }
  for (const auto& eq : prog.equalities()) {
    Builder::Row r;
    for (const auto& [v, a] : eq.coeffs) B.add(r, c.var_loc[static_cast<std::size_t>(v)], a);
    r.rhs += eq.rhs;
    B.commit(r);
  }
  for (const auto& in : prog.inequalities()) {
    Builder::Row r;
    for (const auto& [v, a] : in.coeffs) B.add(r, c.var_loc[static_cast<std::size_t>(v)], a);
    B.add(r, B.new_lin(mode == Mode::Elastic ? ShiftMode::Margin : ShiftMode::None), -1.0);
    r.rhs += in.rhs;
    B.commit(r);
  }
  if (margin) {
    // t + s = t_max
    Builder::Row r;
    B.add(r, Location{ColKind::Free, -1, c.t_col, 0, ShiftMode::None}, 1.0);
    B.add(r, B.new_lin(ShiftMode::None), 1.0);
    r.rhs += t_max;
    B.commit(r);
  }
  B.finish();
  trivially_infeasible = B.inconsistent;

  // objective (always minimisation internally)
  StdProblem& P = c.P;
  P.cf = Eigen::VectorXd::Zero(P.nf);
  P.cl = Eigen::VectorXd::Zero(P.nl);
  for (int n : P.dims) P.C.push_back(Eigen::MatrixXd::Zero(n, n));
  auto add_cost = [&](const Location& loc, double a) {
    switch (loc.kind) {
      case ColKind::Free: P.cf[loc.p] += a; break;
      case ColKind::Lin: P.cl[loc.p] += a; break;
      case ColKind::Psd:
        if (loc.p == loc.q) {
          P.C[static_cast<std::size_t>(loc.block)](loc.p, loc.p) += a;
        } else {
          P.C[static_cast<std::size_t>(loc.block)](loc.p, loc.q) += 0.5 * a;
          P.C[static_cast<std::size_t>(loc.block)](loc.q, loc.p) += 0.5 * a;
        }
        break;
    }
  };
  if (margin) {
    P.cf[c.t_col] = -1.0;
  } else if (prog.objective()) {
    const double sgn = prog.objective()->maximize ? -1.0 : 1.0;
    for (const auto& [v, a] : prog.objective()->expr.terms) add_cost(c.var_loc[static_cast<std::size_t>(v)], sgn * a);
  }

  // row equilibration
  c.row_scale.assign(static_cast<std::size_t>(P.m()), 1.0);
  for (int i = 0; i < P.m(); ++i) {
    const double n = row_norm(P.rows[static_cast<std::size_t>(i)]);
    if (n > 0) {
      for (auto& e : P.rows[static_cast<std::size_t>(i)]) e.a /= n;
      P.b[i] /= n;
      c.row_scale[static_cast<std::size_t>(i)] = n;
    }
  }
  return c;
}

/// Original variables from a standard-form iterate. `drop_margin` reads shifted
/// cones without their (negative, within tolerance) elastic shift.
inline Eigen::VectorXd recover(const Conversion& c, const Iterate& it, bool drop_margin = false) {
  const double t = c.t_col >= 0 && !drop_margin ? it.xf[c.t_col] : 0.0;
  Eigen::VectorXd x(static_cast<Eigen::Index>(c.var_loc.size()));
  for (std::size_t v = 0; v < c.var_loc.size(); ++v) {
    const Location& l = c.var_loc[v];
    double val = 0.0;
    bool diag = true;
    switch (l.kind) {
      case ColKind::Free: val = it.xf[l.p]; diag = false; break;
      case ColKind::Lin: val = it.xl[l.p]; break;
      case ColKind::Psd:
        val = it.X[static_cast<std::size_t>(l.block)](l.p, l.q);
        diag = l.p == l.q;
        break;
    }
    if (diag && l.shift == ShiftMode::Margin) val += t;
    if (diag && l.shift == ShiftMode::Fixed) val += c.fixed_shift;
    x[static_cast<Eigen::Index>(v)] = val;
  }
  return x;
}

}  // namespace ipm

/// Reference backend: dense primal-dual interior-point method.
class InteriorPointBackend : public ConicBackend {
 public:
  std::string name() const override { return "interior-point"; }

  ConicSolution solve(const ConicProgram& program, const SolverOptions& opt) const override {
    using ipm::Mode;
    Mode mode = Mode::Objective;
    if (program.has_strict_blocks() && !program.objective()) mode = Mode::Margin;
    if (!program.has_strict_blocks() && !program.objective()) mode = Mode::Elastic;
    const double t_max = mode == Mode::Elastic ? 0.0 : opt.t_max;

    ConicSolution sol;
    bool trivially_infeasible = false;
    ipm::Conversion conv = ipm::convert(program, mode, t_max, opt.strict_eps, trivially_infeasible);
    if (trivially_infeasible) {
      sol.status = SolveStatus::Infeasible;
      sol.message = "constant equality row is violated";
      sol.x = Eigen::VectorXd::Zero(program.n_scalar_vars());
      return sol;
    }
    Eigen::VectorXd warm;
    const Eigen::VectorXd* warm_ptr = nullptr;
    if (opt.warm_start && opt.warm_start->size() == program.n_scalar_vars()) {
      warm = Eigen::VectorXd::Zero(conv.P.nf);
      for (std::size_t v = 0; v < conv.var_loc.size(); ++v)
        if (conv.var_loc[v].kind == ipm::ColKind::Free) warm[conv.var_loc[v].p] = (*opt.warm_start)[static_cast<Eigen::Index>(v)];
      warm_ptr = &warm;
    }
    ipm::Solver solver(conv.P, opt.tol, opt.max_iterations, opt.verbose);
    ipm::Result r = solver.run(warm_ptr);

    sol.iterations = r.iterations;
    sol.primal_objective = r.pobj;
    sol.dual_objective = r.dobj;
    sol.rel_gap = r.rel_gap;
    sol.x = ipm::recover(conv, r.it);
    if (conv.t_col >= 0) sol.margin = r.it.xf[conv.t_col];
    if (program.objective()) sol.objective_value = program.objective()->expr.eval(sol.x);

    switch (r.outcome) {
      case ipm::Outcome::PrimalInfeasible:
        sol.status = SolveStatus::Infeasible;
        sol.message = "primal infeasibility certificate found";
        return sol;
      case ipm::Outcome::DualInfeasible:
        sol.status = SolveStatus::NumericalFailure;
        sol.message = "problem is unbounded";
        return sol;
      case ipm::Outcome::MaxIterations:
      case ipm::Outcome::Stalled:
        for (const auto& [pobj, cand] : r.primal_candidates) {
          // a nearly primal-feasible iterate may already settle feasibility
          if (mode != Mode::Margin) break;
          Eigen::VectorXd x = ipm::recover(conv, cand);
          const double t = cand.xf[conv.t_col];
          SolutionReport rep = validate_solution(program, x, opt.tol);
          if (t >= opt.strict_eps && rep.ok) {
            sol.x = x;
            sol.margin = t;
            for (const auto& b : rep.blocks) sol.block_min_eig.push_back(b.min_eig);
            sol.max_eq_residual = rep.max_eq_residual;
            sol.status = SolveStatus::Feasible;
            sol.message = "strictly feasible (inexact termination)";
            return sol;
          }
        }
        // A margin that is clearly negative at termination still decides the question.
        if (mode != Mode::Objective && -r.dobj < -std::max(10 * opt.tol, 1e-6) && r.rel_d <= 1e3 * opt.tol) {
          sol.status = SolveStatus::Infeasible;
          sol.message = "margin bounded away from zero (inexact termination)";
          return sol;
        }
        sol.status = SolveStatus::NumericalFailure;
        sol.message = r.outcome == ipm::Outcome::Stalled ? "interior-point method stalled"
                                                         : "iteration limit reached";
        return sol;
      case ipm::Outcome::Optimal: break;
    }

    SolutionReport rep = validate_solution(program, sol.x, opt.tol);
    for (const auto& b : rep.blocks) sol.block_min_eig.push_back(b.min_eig);
    sol.max_eq_residual = rep.max_eq_residual;

    switch (mode) {
      case Mode::Margin:
        if (sol.margin >= opt.strict_eps) {
          sol.status = rep.ok ? SolveStatus::Feasible : SolveStatus::MarginalFeasible;
          sol.message = rep.ok ? "strictly feasible" : "margin positive but validation failed";
        } else if (sol.margin < -opt.tol) {
          sol.status = SolveStatus::Infeasible;
          sol.message = "optimal margin is negative";
        } else {
          sol.status = SolveStatus::MarginalFeasible;
          sol.message = "optimal margin is within tolerance of zero";
        }
        break;
      case Mode::Elastic:
        if (sol.margin >= -opt.tol) {
          sol.x = ipm::recover(conv, r.it, true);
          rep = validate_solution(program, sol.x, opt.tol);
          sol.block_min_eig.clear();
          for (const auto& b : rep.blocks) sol.block_min_eig.push_back(b.min_eig);
          sol.max_eq_residual = rep.max_eq_residual;
          sol.status = rep.ok ? SolveStatus::Feasible : SolveStatus::MarginalFeasible;
          sol.message = rep.ok ? "feasible" : "feasible up to tolerance";
        } else {
          sol.status = SolveStatus::Infeasible;
          sol.message = "elastic optimum is negative";
        }
        break;
      case Mode::Objective:
        sol.status = rep.ok ? SolveStatus::Feasible : SolveStatus::MarginalFeasible;
        sol.message = "optimal";
        break;
    }
    return sol;
  }
};

/// Solves with the reference interior-point backend unless another is supplied.
inline ConicSolution solve(const ConicProgram& program, const SolverOptions& options = {},
                           const ConicBackend* backend = nullptr) {
  static const InteriorPointBackend reference;
  return (backend ? backend : &reference)->solve(program, options);
}

}  // namespace privbarrier
