#pragma once

// Reverse-mode gradients through recorded steps, TOI sensitivities and a
// central-difference audit.

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dsim/contact_flow.hpp"
#include "dsim/lcp.hpp"
#include "dsim/mechanics.hpp"

namespace dsim {

/// Sensitivity of an LCP solution with its class assignment held fixed.
/// The active system is B f_S = -b_S with B = rows S of A P (see
/// assemble_active_system); rank-deficient blocks use the minimum-norm
/// solution.
class LcpDifferential {
 public:
  LcpDifferential(const LcpProblem& p, const LcpSolution& s);

  /// df for perturbations dA, db.
  Eigen::VectorXd forward(const Eigen::MatrixXd& dA, const Eigen::VectorXd& db) const;

  struct Adjoint {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
  };
  /// Pulls a cotangent on f back to A and b.
  Adjoint adjoint(const Eigen::VectorXd& lambda_f) const;

 private:
  Eigen::VectorXd f_;
  ActiveSystem sys_;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod_;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod_t_;
};

LcpDifferential lcp_gradients(const LcpProblem& p, const LcpSolution& s);

/// True when some index sits within `tol` of the edge of its class, where the
/// class-local gradient stops describing nearby solutions.
bool near_class_boundary(const LcpProblem& p, const LcpSolution& s, double tol = 1e-7);

struct ToiGradient {
  Eigen::VectorXd dq;   ///< d toi / d q at the segment start
  Eigen::VectorXd dqd;  ///< d toi / d qd at the segment start
};

/// Implicit-function derivative of the impact time along q + s qd. Throws
/// Error{GrazingContact} when the approach speed is too small.
ToiGradient toi_gradients(const ToiRecord& rec);

struct GradientBundle {
  Eigen::VectorXd dq;
  Eigen::VectorXd dqd;
  Eigen::VectorXd dtau;  ///< summed over steps when tau is shared
  Eigen::VectorXd dm;
  double ddt = 0.0;
  int grazing_segments = 0;
};

struct StateCotangent {
  Eigen::VectorXd q;
  Eigen::VectorXd qd;
};

/// Vector-Jacobian product of one outer step.
GradientBundle backward(const MechanismModel& model, const StepTape& tape, const StateCotangent& seed);

/// Chains backward over consecutive steps that share tau, m and dt.
GradientBundle backward_trajectory(const MechanismModel& model, const std::vector<StepTape>& tapes,
                                   const StateCotangent& seed);

/// A fixed-control rollout: the unit the gradient audit differentiates.
struct Rollout {
  MechanismModel model;
  SystemState initial;
  Eigen::VectorXd tau;
  double dt = 0.01;
  int steps = 1;
  StepOptions options;
};

struct Trajectory {
  std::vector<SystemState> states;  ///< steps + 1 entries
  std::vector<StepTape> tapes;
  std::vector<StepEvents> events;
};

Trajectory simulate(const Rollout& r);

/// Loss over the final state with its gradient.
struct Loss {
  std::function<double(const SystemState&)> value;
  std::function<StateCotangent(const SystemState&)> gradient;
};

/// w_q . q + w_qd . qd.
Loss linear_loss(const Eigen::VectorXd& wq, const Eigen::VectorXd& wqd);

struct FdEntry {
  std::string name;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool negligible = false;  ///< both sides below the absolute floor
};

struct FdReport {
  std::vector<FdEntry> entries;
  double max_rel_error = 0.0;  ///< over non-negligible entries
  bool boundary_proximity = false;
  bool grazing = false;
  bool flagged() const { return boundary_proximity || grazing; }
};

struct FdOptions {
  double eps = 1e-6;          ///< scaled by max(1, |p|)
  double abs_floor = 1e-8;    ///< entries with |analytic|, |numeric| below this are negligible
  bool check_inertial = true;
  bool check_dt = true;
};

/// Central differences of `loss` over q0, qd0, tau, m and dt against the
/// analytic bundle.
FdReport finite_difference_check(const Rollout& r, const Loss& loss, const FdOptions& opts = {});

}  // namespace dsim
