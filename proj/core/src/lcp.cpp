#include "dsim/lcp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dsim/error.hpp"

namespace dsim {

namespace {

double max_abs(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

FrictionMap::FrictionMap(const LcpProblem& p)
    : normal_(static_cast<std::size_t>(p.dim()), -1), mu_(static_cast<std::size_t>(p.dim()), 0.0) {
  const int n = p.dim();
  for (const FrictionPair& fp : p.friction) {
    if (fp.index < 0 || fp.index >= n || fp.normal < 0 || fp.normal >= n) {
      throw Error(ErrorCode::InvalidProblem,
                  "friction pair (" + std::to_string(fp.index) + "," + std::to_string(fp.normal) +
                      ") out of range");
    }
    if (fp.normal >= fp.index) {
      throw Error(ErrorCode::InvalidProblem,
                  "friction index " + std::to_string(fp.index) + " must follow its normal");
    }
    if (!(fp.mu >= 0.0) || !std::isfinite(fp.mu)) {
      throw Error(ErrorCode::InvalidProblem, "friction coefficient must be finite and >= 0");
    }
    auto& slot = normal_[static_cast<std::size_t>(fp.index)];
    if (slot >= 0) {
      throw Error(ErrorCode::InvalidProblem,
                  "friction index " + std::to_string(fp.index) + " listed twice");
    }
    slot = fp.normal;
    mu_[static_cast<std::size_t>(fp.index)] = fp.mu;
  }
  for (const FrictionPair& fp : p.friction) {
    if (normal_[static_cast<std::size_t>(fp.normal)] >= 0) {
      throw Error(ErrorCode::InvalidProblem,
                  "normal index " + std::to_string(fp.normal) + " is itself a friction index");
    }
  }
}

void check_problem(const LcpProblem& p) {
  const int n = p.dim();
  if (p.A.rows() != n || p.A.cols() != n) {
    throw Error(ErrorCode::DimensionMismatch, "A must be " + std::to_string(n) + "x" +
                                                  std::to_string(n));
  }
  if (!p.A.allFinite() || !p.b.allFinite()) {
    throw Error(ErrorCode::InvalidProblem, "non-finite entries");
  }
  FrictionMap check(p);
  (void)check;
  if (n == 0) return;
  const double scale = std::max(1.0, p.A.cwiseAbs().maxCoeff());
  if ((p.A - p.A.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw Error(ErrorCode::InvalidProblem, "A is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (p.A + p.A.transpose()),
                                                     Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-9 * scale) {
    throw Error(ErrorCode::InvalidProblem, "A is not positive semidefinite");
  }
}

std::string_view to_string(LcpClass c) {
  switch (c) {
    case LcpClass::C: return "C";
    case LcpClass::N: return "N";
    case LcpClass::F: return "F";
    case LcpClass::H: return "H";
    case LcpClass::L: return "L";
  }
  return "?";
}

bool is_normal_class(LcpClass c) { return c == LcpClass::C || c == LcpClass::N; }

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::ResidualMismatch: return "residual_mismatch";
    case Condition::NormalResidual: return "normal_residual";
    case Condition::NormalForce: return "normal_force";
    case Condition::NormalComplementary: return "normal_complementarity";
    case Condition::FrictionBound: return "friction_bound";
    case Condition::FrictionDissipation: return "friction_dissipation";
    case Condition::FrictionSliding: return "friction_sliding";
    case Condition::ClassDomain: return "class_domain";
  }
  return "?";
}

ValidationReport validate_solution(const LcpProblem& p, const LcpSolution& s, double tol) {
  const int n = p.dim();
  if (s.f.size() != n || s.a.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "solution dimension " + std::to_string(s.f.size()) +
                                                  " vs problem " + std::to_string(n));
  }
  if (!s.classes.empty() && static_cast<int>(s.classes.size()) != n) {
    throw Error(ErrorCode::DimensionMismatch, "class vector has wrong length");
  }
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");

  const FrictionMap roles(p);
  ValidationReport report;
  auto record = [&](int i, Condition c, double measure) {
    if (std::isnan(measure)) measure = std::numeric_limits<double>::infinity();
    report.worst_violation = std::max(report.worst_violation, measure);
    if (measure > tol) report.violations.push_back({i, c, measure});
  };

  const Eigen::VectorXd recomputed = p.A * s.f + p.b;
  record(-1, Condition::ResidualMismatch, max_abs(recomputed - s.a) / (1.0 + max_abs(p.b)));

  for (int i = 0; i < n; ++i) {
    const double f = s.f[i];
    const double a = s.a[i];
    if (!roles.is_friction(i)) {
      record(i, Condition::NormalResidual, -a);
      record(i, Condition::NormalForce, -f);
      record(i, Condition::NormalComplementary, std::abs(f * a));
      if (!s.classes.empty() && !is_normal_class(s.classes[static_cast<std::size_t>(i)])) {
        record(i, Condition::ClassDomain, std::numeric_limits<double>::infinity());
      }
    } else {
      const double bound = roles.mu_of(i) * s.f[roles.normal_of(i)];
      record(i, Condition::FrictionBound, std::abs(f) - bound);
      record(i, Condition::FrictionDissipation, a * f);
      record(i, Condition::FrictionSliding, std::abs(a) * (bound - std::abs(f)));
      if (!s.classes.empty() && is_normal_class(s.classes[static_cast<std::size_t>(i)])) {
        record(i, Condition::ClassDomain, std::numeric_limits<double>::infinity());
      }
    }
  }
  report.valid = report.worst_violation <= tol;
  return report;
}

ActiveSystem assemble_active_system(const LcpProblem& p, const std::vector<LcpClass>& classes) {
  const int n = p.dim();
  if (static_cast<int>(classes.size()) != n) {
    throw Error(ErrorCode::DimensionMismatch, "class vector has wrong length");
  }
  const FrictionMap roles(p);
  ActiveSystem sys;
  std::vector<int> column(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    const LcpClass c = classes[static_cast<std::size_t>(i)];
    if (c == LcpClass::C || c == LcpClass::F) {
      column[static_cast<std::size_t>(i)] = static_cast<int>(sys.unknowns.size());
      sys.unknowns.push_back(i);
    }
  }
  const int m = static_cast<int>(sys.unknowns.size());
  sys.slave = Eigen::MatrixXd::Zero(n, m);
  for (int i = 0; i < n; ++i) {
    const LcpClass c = classes[static_cast<std::size_t>(i)];
    const int col = column[static_cast<std::size_t>(i)];
    if (col >= 0) {
      sys.slave(i, col) = 1.0;
    } else if (c == LcpClass::H || c == LcpClass::L) {
      const int normal_col = column[static_cast<std::size_t>(roles.normal_of(i))];
      if (normal_col >= 0) {
        sys.slave(i, normal_col) = (c == LcpClass::H ? 1.0 : -1.0) * roles.mu_of(i);
      }
    }
  }
  const Eigen::MatrixXd folded = p.A * sys.slave;
  sys.block.resize(m, m);
  for (int r = 0; r < m; ++r) sys.block.row(r) = folded.row(sys.unknowns[static_cast<std::size_t>(r)]);
  return sys;
}

std::optional<LcpSolution> solve_with_classes(const LcpProblem& p,
                                              const std::vector<LcpClass>& classes) {
  const ActiveSystem sys = assemble_active_system(p, classes);
  const int m = static_cast<int>(sys.unknowns.size());
  Eigen::VectorXd f_active(m);
  if (m > 0) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sys.block);
    if (!lu.isInvertible()) return std::nullopt;
    Eigen::VectorXd rhs(m);
    for (int r = 0; r < m; ++r) rhs[r] = -p.b[sys.unknowns[static_cast<std::size_t>(r)]];
    f_active = lu.solve(rhs);
    if (!f_active.allFinite()) return std::nullopt;
  }
  LcpSolution s;
  s.f = sys.slave * f_active;
  s.a = p.A * s.f + p.b;
  s.classes = classes;
  return s;
}

LcpProblem leading_subproblem(const LcpProblem& p, int count) {
  LcpProblem sub;
  sub.A = p.A.topLeftCorner(count, count);
  sub.b = p.b.head(count);
  for (const FrictionPair& fp : p.friction) {
    if (fp.index < count) sub.friction.push_back(fp);
  }
  return sub;
}

LcpSolution solve_enumerative(const LcpProblem& p, int limit, double tol) {
  const int n = p.dim();
  if (n > limit) {
    throw Error(ErrorCode::DimensionTooLarge,
                "enumeration limited to " + std::to_string(limit) + " indices, got " + std::to_string(n));
  }
  const FrictionMap roles(p);
  std::vector<LcpClass> first(static_cast<std::size_t>(n));
  std::vector<LcpClass> last(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    first[static_cast<std::size_t>(i)] = roles.is_friction(i) ? LcpClass::F : LcpClass::C;
    last[static_cast<std::size_t>(i)] = roles.is_friction(i) ? LcpClass::L : LcpClass::N;
  }

  std::vector<LcpClass> classes = first;
  while (true) {
    if (auto s = solve_with_classes(p, classes)) {
      if (validate_solution(p, *s, tol).valid) return *s;
    }
    // Odometer increment, index 0 most significant.
    int i = n - 1;
    while (i >= 0 && classes[static_cast<std::size_t>(i)] == last[static_cast<std::size_t>(i)]) {
      classes[static_cast<std::size_t>(i)] = first[static_cast<std::size_t>(i)];
      --i;
    }
    if (i < 0) break;
    auto& c = classes[static_cast<std::size_t>(i)];
    c = static_cast<LcpClass>(static_cast<int>(c) + 1);
  }
  throw Error(ErrorCode::NoValidAssignment, "no class assignment validates");
}

LcpSolution solve_pgs(const LcpProblem& p, int iters, double relax) {
  const int n = p.dim();
  if (p.A.rows() != n || p.A.cols() != n) {
    throw Error(ErrorCode::DimensionMismatch, "A does not match b");
  }
  if (iters < 1) throw Error(ErrorCode::InvalidArgument, "iters must be >= 1");
  if (!(relax > 0.0 && relax <= 1.0)) throw Error(ErrorCode::InvalidArgument, "relax must be in (0, 1]");
  const FrictionMap roles(p);

  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  for (int it = 0; it < iters; ++it) {
    for (int i = 0; i < n; ++i) {
      const double diag = p.A(i, i);
      if (diag <= 0.0) continue;
      const double r = p.A.row(i).dot(f) + p.b[i];
      double fi = f[i] - relax * r / diag;
      if (roles.is_friction(i)) {
        const double bound = roles.mu_of(i) * f[roles.normal_of(i)];
        fi = std::clamp(fi, -bound, bound);
      } else {
        fi = std::max(0.0, fi);
      }
      f[i] = fi;
    }
  }
  LcpSolution s;
  s.f = f;
  s.a = p.A * f + p.b;
  s.classes = infer_classes(p, s.f, s.a);
  return s;
}

std::vector<LcpClass> infer_classes(const LcpProblem& p, const Eigen::VectorXd& f,
                                    const Eigen::VectorXd& a, double zero_tol) {
  const FrictionMap roles(p);
  const int n = p.dim();
  std::vector<LcpClass> classes(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    LcpClass c;
    if (!roles.is_friction(i)) {
      c = (f[i] > zero_tol || a[i] <= zero_tol) ? LcpClass::C : LcpClass::N;
    } else {
      const double bound = roles.mu_of(i) * f[roles.normal_of(i)];
      if (f[i] >= bound - zero_tol && a[i] <= zero_tol) {
        c = LcpClass::H;
      } else if (f[i] <= -bound + zero_tol && a[i] >= -zero_tol) {
        c = LcpClass::L;
      } else {
        c = LcpClass::F;
      }
    }
    classes[static_cast<std::size_t>(i)] = c;
  }
  return classes;
}

}  // namespace dsim
