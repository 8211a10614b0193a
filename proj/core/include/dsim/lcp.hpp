#pragma once

// Linear complementarity problems with box-style Coulomb friction rows.
//
// A problem is (A, b, friction pairs). A normal index i asks for
//   f_i >= 0, a_i >= 0, f_i a_i = 0
// with a = A f + b. A friction index i, slaved to normal N(i) with
// coefficient mu, asks for
//   |f_i| <= mu f_N(i),  a_i f_i <= 0,  a_i (mu f_N(i) - |f_i|) = 0.
// The solvers never interpret units: f may be a force or an impulse.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace dsim {

struct FrictionPair {
  int index = 0;   ///< friction row
  int normal = 0;  ///< N(index), must be < index
  double mu = 0.0;
};

struct LcpProblem {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<FrictionPair> friction;

  int dim() const { return static_cast<int>(b.size()); }
};

/// Per-index role lookup built from the friction pair list.
class FrictionMap {
 public:
  FrictionMap() = default;
  explicit FrictionMap(const LcpProblem& p);

  bool is_friction(int i) const { return normal_[static_cast<std::size_t>(i)] >= 0; }
  int normal_of(int i) const { return normal_[static_cast<std::size_t>(i)]; }
  double mu_of(int i) const { return mu_[static_cast<std::size_t>(i)]; }
  int dim() const { return static_cast<int>(normal_.size()); }

 private:
  std::vector<int> normal_;
  std::vector<double> mu_;
};

/// Throws Error{InvalidProblem} when A is not square/symmetric/PSD within
/// slack or the friction structure is malformed.
void check_problem(const LcpProblem& p);

// Enumeration order matters: the oracle breaks ties lexicographically with
// C < N and F < H < L.
enum class LcpClass : std::uint8_t { C, N, F, H, L };

std::string_view to_string(LcpClass c);
bool is_normal_class(LcpClass c);

struct LcpSolution {
  Eigen::VectorXd f;
  Eigen::VectorXd a;
  std::vector<LcpClass> classes;

  int dim() const { return static_cast<int>(f.size()); }
};

enum class Condition {
  ResidualMismatch,     ///< a != A f + b
  NormalResidual,       ///< a_i >= 0
  NormalForce,          ///< f_i >= 0
  NormalComplementary,  ///< |f_i a_i| <= tol
  FrictionBound,        ///< |f_i| <= mu f_N
  FrictionDissipation,  ///< a_i f_i <= 0
  FrictionSliding,      ///< |a_i| (mu f_N - |f_i|) = 0
  ClassDomain,          ///< normal tagged F/H/L or friction tagged C/N
};

std::string_view to_string(Condition c);

struct Violation {
  int index = 0;
  Condition condition = Condition::NormalResidual;
  double amount = 0.0;
};

struct ValidationReport {
  bool valid = true;
  double worst_violation = 0.0;
  std::vector<Violation> violations;
};

ValidationReport validate_solution(const LcpProblem& p, const LcpSolution& s, double tol);

/// Solves the linear system implied by a full class assignment:
/// f over C and F is unknown with a = 0 there, H/L rows are slaved to
/// +/- mu f_N, N rows are zero. Returns nullopt when the folded block is
/// singular. The returned solution is not validated.
std::optional<LcpSolution> solve_with_classes(const LcpProblem& p,
                                              const std::vector<LcpClass>& classes);

/// Folded active system for a class assignment. `unknowns` lists C and F
/// indices in ascending order; `slave` is n x |unknowns| and maps the unknown
/// forces to the full force vector (f = slave * f_S); `block` is rows
/// `unknowns` of A * slave.
struct ActiveSystem {
  std::vector<int> unknowns;
  Eigen::MatrixXd slave;
  Eigen::MatrixXd block;
};

ActiveSystem assemble_active_system(const LcpProblem& p, const std::vector<LcpClass>& classes);

/// Restriction of p to indices [0, count). Friction pairs whose rows fall
/// outside the prefix are dropped.
LcpProblem leading_subproblem(const LcpProblem& p, int count);

inline constexpr int kDefaultEnumerationLimit = 8;

/// Exhaustive class enumeration. Returns the lexicographically smallest
/// assignment whose solution validates at `tol`.
LcpSolution solve_enumerative(const LcpProblem& p, int limit = kDefaultEnumerationLimit,
                              double tol = 1e-8);

/// Projected Gauss-Seidel. Approximate reference solver; no convergence
/// guarantee. Classes are inferred from the final iterate.
LcpSolution solve_pgs(const LcpProblem& p, int iters, double relax = 1.0);

/// Class tags consistent with (f, a), used when a solver only produces
/// forces. Near-boundary values resolve toward C and toward the bound classes.
std::vector<LcpClass> infer_classes(const LcpProblem& p, const Eigen::VectorXd& f,
                                    const Eigen::VectorXd& a, double zero_tol = 1e-10);

// Text format: first line n, then n rows of A, one row of b, then any number
// of `friction <i> <N(i)> <mu>` lines. '#' starts a comment.
LcpProblem parse_lcp(std::string_view text);
LcpProblem load_lcp_file(const std::string& path);
std::string format_lcp(const LcpProblem& p);

}  // namespace dsim
