#pragma once

// Dantzig-style principal pivoting for contact LCPs.
//
// Indices are processed in order. Each new index k is driven (|f_k|
// increased) while every already-classified index keeps its class; when some
// index reaches the boundary of its class it is moved to the neighbouring
// class and the drive continues. Friction indices carry a moving bound
// mu * f_N(i), and the step computation accounts for that motion.
//
// If a drive revisits a working-set configuration, exceeds the pivot budget,
// or hits a singular clamped block, the solver falls back to an ordered
// search over class assignments of the indices processed so far.

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "dsim/lcp.hpp"

namespace dsim::dantzig {

/// Which working set an index currently belongs to.
enum class SetId : std::uint8_t { Untouched, C, N, F, H, L };

class WorkingSets {
 public:
  WorkingSets() = default;
  explicit WorkingSets(int n) : set_(static_cast<std::size_t>(n), SetId::Untouched) {}

  int dim() const { return static_cast<int>(set_.size()); }
  SetId of(int i) const { return set_[static_cast<std::size_t>(i)]; }
  void assign(int i, SetId s) { set_[static_cast<std::size_t>(i)] = s; }
  std::vector<int> members(SetId s) const;
  std::uint64_t hash() const;

  /// Class tags of every touched index; untouched indices are reported as
  /// N (normal) or F (friction), matching their zero force.
  std::vector<LcpClass> classes(const FrictionMap& roles) const;

  const std::vector<SetId>& raw() const { return set_; }

  bool operator==(const WorkingSets&) const = default;

 private:
  std::vector<SetId> set_;
};

SetId to_set(LcpClass c);

/// Checks the structural invariants: C/N hold only normal indices, F/H/L only
/// friction indices, and the normal of every classified friction index is
/// itself classified.
bool sets_consistent(const WorkingSets& sets, const FrictionMap& roles);

enum class Bound : std::uint8_t { None, Upper, Lower };

struct StepLimit {
  double step = 0.0;
  int blocking = -1;
  /// For a friction blocker: which friction bound was reached. For the driven
  /// index, None means its residual reached zero.
  Bound bound = Bound::None;
};

enum class MaxStepRule : std::uint8_t {
  Corrected,  ///< bound motion mu * df_N enters the denominator
  Legacy,     ///< bound treated as constant over the step (regression witness)
};

// Frictionless primitives.
Eigen::VectorXd solve_df(int k, const WorkingSets& sets, const Eigen::MatrixXd& A);
StepLimit max_step(int k, const Eigen::VectorXd& f, const Eigen::VectorXd& df, const Eigen::VectorXd& a,
                   const Eigen::VectorXd& da, const WorkingSets& sets);
WorkingSets transit_set(int j, WorkingSets sets, bool driven);

// Frictional primitives. `drive_sign` is +1 when a_k < 0 and -1 otherwise.
Eigen::VectorXd solve_df_friction(int k, const WorkingSets& sets, const LcpProblem& p,
                                  const FrictionMap& roles, int drive_sign);
StepLimit max_step_friction(int k, const Eigen::VectorXd& f, const Eigen::VectorXd& df,
                            const Eigen::VectorXd& a, const Eigen::VectorXd& da, const WorkingSets& sets,
                            const FrictionMap& roles, MaxStepRule rule = MaxStepRule::Corrected);

struct TransitContext {
  int driven = -1;
  bool driven_is_friction = false;
  /// Bound reached by the blocking step (None: residual reached zero).
  Bound bound = Bound::None;
};
WorkingSets transit_set_friction(int j, WorkingSets sets, const Eigen::VectorXd& df,
                                 const TransitContext& ctx);

struct PivotStep {
  int driven = -1;
  int blocking = -1;
  double step = 0.0;
  std::uint64_t sets_hash = 0;
};

struct PivotTrace {
  std::vector<PivotStep> steps;
  bool loop_detected = false;
  bool iteration_cap_hit = false;
  bool singular_fallback = false;
  int ergodic_searches = 0;
  long ergodic_candidates = 0;
};

struct PivotObserverState {
  const Eigen::VectorXd& f;
  const Eigen::VectorXd& a;
  const WorkingSets& sets;
  int driven;
};

struct Options {
  MaxStepRule rule = MaxStepRule::Corrected;
  /// Pivot budget is this factor times n before the ordered search is forced.
  int iteration_cap_factor = 50;
  /// Values this close to a class boundary are classified onto it.
  double zero_tol = 1e-10;
  /// Validation tolerance used by the ordered class search.
  double search_tol = 1e-8;
  /// Called after every pivot; used by property tests.
  std::function<void(const PivotObserverState&)> observer;
};

struct Result {
  LcpSolution solution;
  PivotTrace trace;
};

Result solve(const LcpProblem& p, const Options& opts = {});

}  // namespace dsim::dantzig
