#include <algorithm>
#include <cmath>
#include <sstream>

#include "dsim/diffsim.hpp"
#include "dsim/error.hpp"

namespace dsim {

namespace {

// Coarse description of a run's contact structure; a change under a small
// perturbation means the finite difference straddles a mode switch.
std::string signature(const Trajectory& t) {
  std::ostringstream out;
  for (const StepTape& tape : t.tapes) {
    for (const Segment& s : tape.segments) {
      out << (s.kind == SegmentKind::P ? 'P' : 'C') << s.contacts.size();
      const FrictionMap roles(s.lcp);
      for (int i = 0; i < s.solution.dim(); ++i) {
        LcpClass c = s.solution.classes[static_cast<std::size_t>(i)];
        // With no friction bound available the H/L/F tag only reflects the
        // sign of a residual that cannot act.
        if (roles.is_friction(i) && roles.mu_of(i) * s.solution.f[roles.normal_of(i)] <= 1e-12) c = LcpClass::F;
        out << to_string(c);
      }
      out << ';';
    }
    out << '|';
  }
  return out.str();
}

bool near_boundary(const Trajectory& t) {
  for (const StepTape& tape : t.tapes) {
    for (const Segment& s : tape.segments) {
      if (s.lcp.dim() > 0 && near_class_boundary(s.lcp, s.solution)) return true;
    }
  }
  return false;
}

}  // namespace

Trajectory simulate(const Rollout& r) {
  if (r.steps < 0) throw Error(ErrorCode::InvalidArgument, "steps must be non-negative");
  Trajectory t;
  t.states.push_back(r.initial);
  SystemState s = r.initial;
  for (int k = 0; k < r.steps; ++k) {
    StepResult res = step_full(r.model, s, r.tau, r.dt, r.options);
    s = res.next;
    t.states.push_back(s);
    t.tapes.push_back(std::move(res.tape));
    t.events.push_back(std::move(res.events));
  }
  return t;
}

Loss linear_loss(const Eigen::VectorXd& wq, const Eigen::VectorXd& wqd) {
  Loss l;
  l.value = [wq, wqd](const SystemState& s) { return wq.dot(s.q) + wqd.dot(s.qd); };
  l.gradient = [wq, wqd](const SystemState&) { return StateCotangent{wq, wqd}; };
  return l;
}

FdReport finite_difference_check(const Rollout& r, const Loss& loss, const FdOptions& opts) {
  if (!(opts.eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be positive");
  const Trajectory base = simulate(r);
  const GradientBundle g = backward_trajectory(r.model, base.tapes, loss.gradient(base.states.back()));
  const std::string sig = signature(base);

  FdReport rep;
  rep.grazing = g.grazing_segments > 0;
  rep.boundary_proximity = near_boundary(base);

  auto probe = [&](const std::string& name, double value, double analytic, auto&& set) {
    const double h = opts.eps * std::max(1.0, std::abs(value));
    Rollout plus = r, minus = r;
    set(plus, value + h);
    set(minus, value - h);
    const Trajectory tp = simulate(plus), tm = simulate(minus);
    if (signature(tp) != sig || signature(tm) != sig) rep.boundary_proximity = true;
    FdEntry e;
    e.name = name;
    e.analytic = analytic;
    e.numeric = (loss.value(tp.states.back()) - loss.value(tm.states.back())) / (2.0 * h);
    e.rel_error = std::abs(e.analytic - e.numeric) / (std::abs(e.analytic) + std::abs(e.numeric) + 1e-12);
    e.negligible = std::abs(e.analytic) < opts.abs_floor && std::abs(e.numeric) < opts.abs_floor;
    if (!e.negligible) rep.max_rel_error = std::max(rep.max_rel_error, e.rel_error);
    rep.entries.push_back(e);
  };

  const Eigen::Index n = r.initial.q.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    probe("q0[" + std::to_string(i) + "]", r.initial.q[i], g.dq[i], [i](Rollout& x, double v) { x.initial.q[i] = v; });
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    probe("qd0[" + std::to_string(i) + "]", r.initial.qd[i], g.dqd[i], [i](Rollout& x, double v) { x.initial.qd[i] = v; });
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    probe("tau[" + std::to_string(i) + "]", r.tau[i], g.dtau[i], [i](Rollout& x, double v) { x.tau[i] = v; });
  }
  if (opts.check_inertial) {
    const Eigen::VectorXd m = inertial_parameters(r.model);
    for (Eigen::Index j = 0; j < m.size(); ++j) {
      // Point-mass links have zero inertia; a central difference would leave the valid domain.
      if (m[j] <= 0.0) continue;
      probe("m[" + std::to_string(j) + "]", m[j], g.dm[j], [j, m](Rollout& x, double v) {
        Eigen::VectorXd mm = m;
        mm[j] = v;
        set_inertial_parameters(x.model, mm);
      });
    }
  }
  if (opts.check_dt) {
    probe("dt", r.dt, g.ddt, [](Rollout& x, double v) { x.dt = v; });
  }
  return rep;
}

}  // namespace dsim
