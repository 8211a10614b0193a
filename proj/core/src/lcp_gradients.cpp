#include <cmath>

#include "dsim/diffsim.hpp"
#include "dsim/error.hpp"

namespace dsim {

namespace {

constexpr double kConsistencyTol = 1e-8;

void check_consistent(const Eigen::MatrixXd& B, const Eigen::VectorXd& x, const Eigen::VectorXd& rhs) {
  if (rhs.size() == 0) return;
  const double res = (B * x - rhs).norm();
  if (res > kConsistencyTol * (1.0 + rhs.norm()) * (1.0 + B.norm())) {
    throw Error(ErrorCode::SingularBlock, "active block is singular and the sensitivity system is inconsistent");
  }
}

}  // namespace

LcpDifferential::LcpDifferential(const LcpProblem& p, const LcpSolution& s) : f_(s.f) {
  if (s.dim() != p.dim() || static_cast<int>(s.classes.size()) != p.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "solution does not match the problem");
  }
  sys_ = assemble_active_system(p, s.classes);
  if (!sys_.unknowns.empty()) {
    cod_.compute(sys_.block);
    cod_t_.compute(sys_.block.transpose());
  }
}

Eigen::VectorXd LcpDifferential::forward(const Eigen::MatrixXd& dA, const Eigen::VectorXd& db) const {
  const Eigen::Index n = f_.size();
  if (dA.rows() != n || dA.cols() != n || db.size() != n) throw Error(ErrorCode::DimensionMismatch, "perturbation shape");
  if (sys_.unknowns.empty()) return Eigen::VectorXd::Zero(n);
  const Eigen::VectorXd r = dA * f_ + db;
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(sys_.unknowns.size()));
  for (std::size_t k = 0; k < sys_.unknowns.size(); ++k) rhs[static_cast<Eigen::Index>(k)] = -r[sys_.unknowns[k]];
  const Eigen::VectorXd x = cod_.solve(rhs);
  check_consistent(sys_.block, x, rhs);
  return sys_.slave * x;
}

LcpDifferential::Adjoint LcpDifferential::adjoint(const Eigen::VectorXd& lambda_f) const {
  const Eigen::Index n = f_.size();
  if (lambda_f.size() != n) throw Error(ErrorCode::DimensionMismatch, "cotangent shape");
  Adjoint out{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n)};
  if (sys_.unknowns.empty()) return out;
  const Eigen::VectorXd rhs = sys_.slave.transpose() * lambda_f;
  const Eigen::VectorXd u = cod_t_.solve(rhs);
  check_consistent(sys_.block.transpose(), u, rhs);
  Eigen::VectorXd full = Eigen::VectorXd::Zero(n);
  for (std::size_t k = 0; k < sys_.unknowns.size(); ++k) full[sys_.unknowns[k]] = u[static_cast<Eigen::Index>(k)];
  out.b = -full;
  out.A = -full * f_.transpose();
  return out;
}

LcpDifferential lcp_gradients(const LcpProblem& p, const LcpSolution& s) { return LcpDifferential(p, s); }

bool near_class_boundary(const LcpProblem& p, const LcpSolution& s, double tol) {
  const FrictionMap roles(p);
  for (int i = 0; i < p.dim(); ++i) {
    const LcpClass c = s.classes[static_cast<std::size_t>(i)];
    switch (c) {
      case LcpClass::C:
        if (s.f[i] < tol) return true;
        break;
      case LcpClass::N:
        if (s.a[i] < tol) return true;
        break;
      case LcpClass::F: {
        const int N = roles.normal_of(i);
        const double bound = roles.mu_of(i) * s.f[N];
        // A friction row with no available bound is identically zero.
        if (bound <= tol) break;
        if (bound - std::abs(s.f[i]) < tol) return true;
        break;
      }
      case LcpClass::H:
      case LcpClass::L: {
        const double bound = roles.mu_of(i) * s.f[roles.normal_of(i)];
        if (bound <= tol) break;
        if (std::abs(s.a[i]) < tol) return true;
        break;
      }
    }
  }
  return false;
}

ToiGradient toi_gradients(const ToiRecord& rec) {
  const double rate = rec.Jn.dot(rec.qd);
  const double scale = rec.Jn.norm() * rec.qd.norm();
  if (!(std::abs(rate) > 1e-9 * scale) || rate == 0.0) {
    throw Error(ErrorCode::GrazingContact, "approach speed too small for a TOI gradient");
  }
  // gap(q + s qd) = 0  =>  ds = -(Jn dq + s Jn dqd) / (Jn qd).
  ToiGradient g;
  g.dq = -rec.Jn.transpose() / rate;
  g.dqd = -rec.toi * rec.Jn.transpose() / rate;
  return g;
}

}  // namespace dsim
