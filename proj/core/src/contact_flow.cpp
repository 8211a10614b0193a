#include "dsim/contact_flow.hpp"

#include <cmath>

#include "dsim/error.hpp"

namespace dsim {

namespace {

LcpProblem contact_problem(const ContactSet& set, const Eigen::LDLT<Eigen::MatrixXd>& ldlt, const Eigen::VectorXd& b) {
  LcpProblem p;
  const Eigen::MatrixXd X = ldlt.solve(set.J.transpose());
  p.A = set.J * X;
  p.A = 0.5 * (p.A + p.A.transpose()).eval();
  p.b = b;
  p.friction = set.friction;
  return p;
}

void check_state(const Layout& layout, const SystemState& s, const Eigen::VectorXd& tau) {
  if (s.q.size() != layout.dof || s.qd.size() != layout.dof || tau.size() != layout.dof) {
    throw Error(ErrorCode::DimensionMismatch, "state or control has wrong length");
  }
}

// Shared core of P and C: qd' = v + M^-1 J^T f with f = LCP(J M^-1 J^T, b).
void apply_impulses(Segment& seg, const Eigen::LDLT<Eigen::MatrixXd>& ldlt, const Eigen::VectorXd& v,
                    const Eigen::VectorXd& b, const StepOptions& opts) {
  seg.lcp = contact_problem(seg.contacts, ldlt, b);
  seg.solution = solve_contact_lcp(seg.lcp, opts.rule, &seg.pivots);
  seg.lcp_valid = validate_solution(seg.lcp, seg.solution, opts.validation_tol).valid;
  seg.out.qd = v;
  if (seg.lcp.dim() > 0) seg.out.qd += ldlt.solve(seg.contacts.J.transpose() * seg.solution.f);
}

SegmentResult propagate(const MechanismModel& model, const SystemState& state, const Eigen::VectorXd& tau, double dt,
                        std::vector<ContactPoint> contacts, const StepOptions& opts) {
  if (!(dt >= 0.0) || !std::isfinite(dt)) throw Error(ErrorCode::InvalidArgument, "dt must be finite and non-negative");
  const Layout layout = make_layout(model);
  check_state(layout, state, tau);
  Segment seg;
  seg.kind = SegmentKind::P;
  seg.in = state;
  seg.tau = tau;
  seg.dt = dt;
  seg.contacts = make_contact_set(model, state.q, std::move(contacts));

  const Eigen::LDLT<Eigen::MatrixXd> ldlt(mass_matrix_t<double>(model, layout, state.q));
  const Eigen::VectorXd c = coriolis_t<double>(model, layout, state.q, state.qd);
  const Eigen::VectorXd v = state.qd + ldlt.solve(dt * (tau - c));
  seg.out.q = state.q + dt * state.qd;
  seg.out.t = state.t + dt;
  apply_impulses(seg, ldlt, v, seg.contacts.J * v, opts);
  return {seg.out, seg};
}

SegmentResult respond(const MechanismModel& model, const SystemState& state, std::vector<ContactPoint> contacts,
                      const Eigen::VectorXd* fixed_restitution, const StepOptions& opts) {
  const Layout layout = make_layout(model);
  check_state(layout, state, Eigen::VectorXd::Zero(layout.dof));
  Segment seg;
  seg.kind = SegmentKind::C;
  seg.in = state;
  seg.tau = Eigen::VectorXd::Zero(layout.dof);
  seg.dt = 0.0;
  seg.role = DtRole::Zero;
  seg.contacts = make_contact_set(model, state.q, std::move(contacts));

  const Eigen::VectorXd Jqd = seg.contacts.J * state.qd;
  if (fixed_restitution) {
    seg.restitution = *fixed_restitution;
  } else {
    seg.restitution = Eigen::VectorXd::Zero(Jqd.size());
    for (int i = 0; i < seg.contacts.size(); ++i) {
      const ContactPoint& cp = seg.contacts.contacts[static_cast<std::size_t>(i)];
      if (Jqd[2 * i] < opts.ccd_options.approach_threshold) {
        seg.restitution[2 * i] = pair_restitution(model, cp.body_a, cp.body_b);
      }
    }
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(mass_matrix_t<double>(model, layout, state.q));
  seg.out.q = state.q;
  seg.out.t = state.t;
  const Eigen::VectorXd b = (Eigen::VectorXd::Ones(Jqd.size()) + seg.restitution).cwiseProduct(Jqd);
  apply_impulses(seg, ldlt, state.qd, b, opts);
  return {seg.out, seg};
}

// Contacts within slop whose normal velocity is not approaching.
std::vector<ContactPoint> resting_contacts(const MechanismModel& model, const SystemState& s, const StepOptions& opts) {
  std::vector<ContactPoint> all = narrow_phase(model, s.q, opts.slop);
  if (all.empty()) return all;
  const Eigen::MatrixXd J = contact_jacobian(model, s.q, all);
  std::vector<ContactPoint> out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (J.row(2 * static_cast<Eigen::Index>(i)).dot(s.qd) >= opts.ccd_options.approach_threshold) out.push_back(all[i]);
  }
  return out;
}

std::vector<ContactPoint> approaching_contacts(const MechanismModel& model, const SystemState& s, const StepOptions& opts) {
  std::vector<ContactPoint> all = narrow_phase(model, s.q, opts.slop);
  if (all.empty()) return all;
  const Eigen::MatrixXd J = contact_jacobian(model, s.q, all);
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (J.row(2 * static_cast<Eigen::Index>(i)).dot(s.qd) < opts.ccd_options.approach_threshold) return all;
  }
  return {};
}

}  // namespace

LcpSolution solve_contact_lcp(const LcpProblem& p, dantzig::MaxStepRule rule, int* pivots) {
  if (p.dim() == 0) {
    if (pivots) *pivots = 0;
    return LcpSolution{Eigen::VectorXd(0), Eigen::VectorXd(0), {}};
  }
  dantzig::Options o;
  o.rule = rule;
  dantzig::Result r = dantzig::solve(p, o);
  if (pivots) *pivots = static_cast<int>(r.trace.steps.size());
  return std::move(r.solution);
}

SegmentResult step_p(const MechanismModel& model, const SystemState& state, const Eigen::VectorXd& tau, double dt,
                     const StepOptions& opts) {
  return propagate(model, state, tau, dt, resting_contacts(model, state, opts), opts);
}

SegmentResult collision_response(const MechanismModel& model, const SystemState& state,
                                 std::vector<ContactPoint> contacts, const StepOptions& opts) {
  return respond(model, state, std::move(contacts), nullptr, opts);
}

StepResult step_full(const MechanismModel& model, const SystemState& state, const Eigen::VectorXd& tau, double dt,
                     const StepOptions& opts) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be positive");
  StepResult res;
  res.tape.dt = dt;
  SystemState s = state;
  double used = 0.0;

  auto push = [&](SegmentResult&& r, DtRole role) {
    r.segment.role = role;
    if (!r.segment.lcp_valid) ++res.events.invalid_lcps;
    if (r.segment.kind == SegmentKind::C) ++res.events.collisions;
    s = r.next;
    res.tape.segments.push_back(std::move(r.segment));
  };
  // Discrete fallback: step the remainder, respond to whatever approaches.
  auto discrete = [&]() {
    push(step_p(model, s, tau, dt - used, opts), DtRole::Remainder);
    auto hits = approaching_contacts(model, s, opts);
    if (!hits.empty()) {
      push(collision_response(model, s, std::move(hits), opts), DtRole::Zero);
      push(step_p(model, s, tau, 0.0, opts), DtRole::Zero);
    }
  };

  if (!opts.ccd) {
    discrete();
  } else {
    for (int sub = 0;; ++sub) {
      const double remaining = dt - used;
      const std::optional<ToiResult> hit = ccd_toi(model, s, remaining, opts.ccd_options);
      if (!hit) {
        push(step_p(model, s, tau, remaining, opts), DtRole::Remainder);
        break;
      }
      if (sub == opts.substep_cap) {
        res.events.substep_cap_hit = true;
        discrete();
        break;
      }
      const Eigen::VectorXd path_qd = s.qd;
      push(step_p(model, s, tau, hit->toi, opts), DtRole::Toi);
      used += hit->toi;
      res.events.tois.push_back(hit->toi);

      ToiRecord rec;
      rec.toi = hit->toi;
      rec.contact = reevaluate(model, s.q, hit->contact);
      rec.gap = rec.contact.gap;
      rec.Jn = contact_jacobian(model, s.q, {rec.contact}).row(0);
      rec.qd = path_qd;

      std::vector<ContactPoint> at_toi = narrow_phase(model, s.q, opts.slop);
      SegmentResult c = collision_response(model, s, std::move(at_toi), opts);
      c.segment.toi = rec;
      push(std::move(c), DtRole::Zero);
    }
  }
  res.next = s;
  res.next.t = state.t + dt;
  return res;
}

SystemState replay(const MechanismModel& model, const StepTape& tape, const StepOptions& opts) {
  if (tape.segments.empty()) throw Error(ErrorCode::InvalidArgument, "empty tape");
  SystemState s = tape.segments.front().in;
  for (const Segment& seg : tape.segments) {
    if (seg.kind == SegmentKind::P) {
      s = propagate(model, s, seg.tau, seg.dt, seg.contacts.contacts, opts).next;
    } else {
      s = respond(model, s, seg.contacts.contacts, &seg.restitution, opts).next;
    }
  }
  s.t = tape.segments.front().in.t + tape.dt;
  return s;
}

}  // namespace dsim
