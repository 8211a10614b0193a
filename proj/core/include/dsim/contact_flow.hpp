#pragma once

// Forward stepping: collision-free propagation P, impulsive response C and
// the TOI-splitting full step F, with a tape of every segment.

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dsim/collision.hpp"
#include "dsim/dantzig.hpp"
#include "dsim/lcp.hpp"
#include "dsim/mechanics.hpp"

namespace dsim {

struct StepOptions {
  bool ccd = true;
  int substep_cap = 16;
  double slop = kDefaultSlop;
  dantzig::MaxStepRule rule = dantzig::MaxStepRule::Corrected;
  CcdOptions ccd_options;
  /// Tolerance of the per-segment LCP validity audit.
  double validation_tol = 1e-8;
};

enum class SegmentKind { P, C };

/// How a P segment's duration depends on the rest of the step.
enum class DtRole {
  Toi,        ///< time of impact measured from this segment's start state
  Remainder,  ///< outer dt minus every Toi segment before it
  Zero,       ///< fixed zero-length segment
};

/// Data the TOI gradient needs, captured at the impact configuration.
struct ToiRecord {
  double toi = 0.0;
  ContactPoint contact;
  double gap = 0.0;
  Eigen::RowVectorXd Jn;  ///< normal row of the impacting contact
  Eigen::VectorXd qd;     ///< velocity along the pre-impact path
};

struct Segment {
  SegmentKind kind = SegmentKind::P;
  SystemState in;
  SystemState out;
  Eigen::VectorXd tau;
  double dt = 0.0;
  DtRole role = DtRole::Remainder;
  ContactSet contacts;
  Eigen::VectorXd restitution;  ///< per LCP row; C segments only
  LcpProblem lcp;
  LcpSolution solution;
  bool lcp_valid = true;
  int pivots = 0;
  std::optional<ToiRecord> toi;  ///< C segments created by a CCD hit
};

struct StepTape {
  double dt = 0.0;
  std::vector<Segment> segments;
};

struct StepEvents {
  int collisions = 0;
  std::vector<double> tois;
  bool substep_cap_hit = false;
  int invalid_lcps = 0;
};

struct StepResult {
  SystemState next;
  StepTape tape;
  StepEvents events;
};

struct SegmentResult {
  SystemState next;
  Segment segment;
};

/// Explicit-Euler propagation over dt with an impulse LCP on the contacts
/// that are within slop and not approaching.
SegmentResult step_p(const MechanismModel& model, const SystemState& state, const Eigen::VectorXd& tau, double dt,
                     const StepOptions& opts = {});

/// Impulsive response on `contacts` (typically everything within slop at
/// the impact configuration). Restitution applies to approaching normal rows.
SegmentResult collision_response(const MechanismModel& model, const SystemState& state,
                                 std::vector<ContactPoint> contacts, const StepOptions& opts = {});

StepResult step_full(const MechanismModel& model, const SystemState& state, const Eigen::VectorXd& tau, double dt,
                     const StepOptions& opts = {});

/// Re-runs the recorded segments from the tape's first input state with the
/// recorded durations and contact pairings. Deterministic: the result equals
/// the recorded final state bit for bit.
SystemState replay(const MechanismModel& model, const StepTape& tape, const StepOptions& opts = {});

/// Solves a contact LCP with the Dantzig solver; empty problems are trivial.
LcpSolution solve_contact_lcp(const LcpProblem& p, dantzig::MaxStepRule rule, int* pivots = nullptr);

}  // namespace dsim
