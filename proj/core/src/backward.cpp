#include "dsim/collision.hpp"
#include "dsim/diffsim.hpp"
#include "dsim/error.hpp"

namespace dsim {

namespace {

struct SegmentAdjoint {
  Eigen::VectorXd q, qd, tau, m;
  double h = 0.0;
};

double contract(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return a.cwiseProduct(b).sum(); }

// Reverse pass of one segment. Both kinds share the form
//   v   = qd + h M^-1 (tau - c)
//   b   = J v + diag(e) J qd
//   f   = LCP(J M^-1 J^T, b)
//   q'  = q + h qd,   qd' = v + M^-1 J^T f
// with h = 0, tau = 0 for a response segment.
SegmentAdjoint segment_backward(const MechanismModel& model, const Layout& layout, const Segment& seg,
                                const Eigen::VectorXd& lq_out, const Eigen::VectorXd& lqd_out) {
  const Eigen::VectorXd& q = seg.in.q;
  const Eigen::VectorXd& qd = seg.in.qd;
  const double h = seg.dt;
  const int n = layout.dof;
  const int rows = 2 * seg.contacts.size();
  const Eigen::MatrixXd& J = seg.contacts.J;

  const Eigen::LDLT<Eigen::MatrixXd> ldlt(mass_matrix_t<double>(model, layout, q));
  const Eigen::VectorXd c = coriolis_t<double>(model, layout, q, qd);
  const Eigen::VectorXd accel = ldlt.solve(h * (seg.tau - c));
  const Eigen::VectorXd v = qd + accel;

  SegmentAdjoint adj;
  adj.q = lq_out;
  adj.qd = h * lq_out;
  adj.h = lq_out.dot(qd);
  adj.tau = Eigen::VectorXd::Zero(n);

  Eigen::MatrixXd lM = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd GJ = Eigen::MatrixXd::Zero(rows, n);
  Eigen::VectorXd lv = lqd_out;

  if (rows > 0) {
    const Eigen::VectorXd& f = seg.solution.f;
    const Eigen::VectorXd w = ldlt.solve(lqd_out);
    const Eigen::VectorXd impulse_vel = ldlt.solve(J.transpose() * f);
    lM -= w * impulse_vel.transpose();
    GJ += f * w.transpose();

    const LcpDifferential::Adjoint la = LcpDifferential(seg.lcp, seg.solution).adjoint(J * w);
    const Eigen::VectorXd e = seg.restitution.size() == rows ? seg.restitution : Eigen::VectorXd::Zero(rows);
    const Eigen::VectorXd elb = e.cwiseProduct(la.b);
    lv += J.transpose() * la.b;
    adj.qd += J.transpose() * elb;
    GJ += la.b * v.transpose() + elb * qd.transpose();

    const Eigen::MatrixXd X = ldlt.solve(J.transpose());
    const Eigen::MatrixXd lA = 0.5 * (la.A + la.A.transpose());
    GJ += 2.0 * lA * X.transpose();
    lM -= X * lA * X.transpose();
  }

  // v = qd + h M^-1 (tau - c)
  adj.qd += lv;
  const Eigen::VectorXd u = ldlt.solve(lv);
  adj.tau = h * u;
  adj.h += u.dot(seg.tau - c);
  lM -= u * accel.transpose();
  const Eigen::VectorXd lc = -h * u;

  const InertialDerivatives d = inertial_derivatives(model, q, qd);
  adj.q += d.dc_dq.transpose() * lc;
  adj.qd += d.dc_dqd.transpose() * lc;
  adj.m = d.dc_dm.transpose() * lc;
  for (int k = 0; k < n; ++k) adj.q[k] += contract(lM, d.dM_dq[static_cast<std::size_t>(k)]);
  for (std::size_t j = 0; j < d.dM_dm.size(); ++j) adj.m[static_cast<Eigen::Index>(j)] += contract(lM, d.dM_dm[j]);
  if (rows > 0) adj.q += jacobian_contraction_gradient(model, q, seg.contacts.contacts, GJ);
  return adj;
}

}  // namespace

GradientBundle backward(const MechanismModel& model, const StepTape& tape, const StateCotangent& seed) {
  const Layout layout = make_layout(model);
  const int n = layout.dof;
  if (seed.q.size() != n || seed.qd.size() != n) throw Error(ErrorCode::DimensionMismatch, "seed has wrong length");
  const auto& segs = tape.segments;

  GradientBundle g;
  g.dtau = Eigen::VectorXd::Zero(n);
  g.dm = Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(layout.dynamic_bodies.size()));
  Eigen::VectorXd lq = seed.q, lqd = seed.qd;
  // Cotangent of the remainder duration, which equals dt minus the TOI durations.
  double remainder = 0.0;

  for (std::size_t k = segs.size(); k-- > 0;) {
    const Segment& seg = segs[k];
    SegmentAdjoint a = segment_backward(model, layout, seg, lq, lqd);
    lq = a.q;
    lqd = a.qd;
    g.dtau += a.tau;
    g.dm += a.m;
    if (seg.kind != SegmentKind::P) continue;
    if (seg.role == DtRole::Remainder) {
      remainder += a.h;
    } else if (seg.role == DtRole::Toi) {
      const Segment& next = segs.at(k + 1);
      if (!next.toi || next.toi->toi == 0.0) continue;
      try {
        const ToiGradient tg = toi_gradients(*next.toi);
        const double ldt = a.h - remainder;
        lq += ldt * tg.dq;
        lqd += ldt * tg.dqd;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::GrazingContact) throw;
        ++g.grazing_segments;
      }
    }
  }
  g.dq = lq;
  g.dqd = lqd;
  g.ddt = remainder;
  return g;
}

GradientBundle backward_trajectory(const MechanismModel& model, const std::vector<StepTape>& tapes,
                                   const StateCotangent& seed) {
  const Layout layout = make_layout(model);
  GradientBundle total;
  total.dq = seed.q;
  total.dqd = seed.qd;
  total.dtau = Eigen::VectorXd::Zero(layout.dof);
  total.dm = Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(layout.dynamic_bodies.size()));
  for (std::size_t k = tapes.size(); k-- > 0;) {
    const GradientBundle g = backward(model, tapes[k], {total.dq, total.dqd});
    total.dq = g.dq;
    total.dqd = g.dqd;
    total.dtau += g.dtau;
    total.dm += g.dm;
    total.ddt += g.ddt;
    total.grazing_segments += g.grazing_segments;
  }
  return total;
}

}  // namespace dsim
