#include <algorithm>
#include <cmath>
#include <limits>

#include "collision_detail.hpp"
#include "dsim/collision.hpp"
#include "dsim/error.hpp"

namespace dsim {

namespace {

using Vec = Eigen::Vector2d;
constexpr double kInf = std::numeric_limits<double>::infinity();
// Penetration depth the sampled search may leave unresolved between points.
constexpr double kPenetrationSlack = 1e-9;

double cross(const Vec& a, const Vec& b) { return a.x() * b.y() - a.y() * b.x(); }

// Roots of c0 + c1 t + c2 t^2 in (0, tmax].
void quadratic_roots(double c0, double c1, double c2, double tmax, std::vector<double>& out) {
  const double scale = std::max({std::abs(c0), std::abs(c1) * tmax, std::abs(c2) * tmax * tmax});
  if (scale == 0.0) return;
  auto keep = [&](double t) {
    if (t > 0.0 && t <= tmax && std::isfinite(t)) out.push_back(t);
  };
  if (std::abs(c2) * tmax * tmax <= 1e-14 * scale) {
    if (c1 != 0.0) keep(-c0 / c1);
    return;
  }
  const double disc = c1 * c1 - 4.0 * c2 * c0;
  if (disc < 0.0) return;
  // Cancellation-free form.
  const double s = -0.5 * (c1 + std::copysign(std::sqrt(disc), c1));
  if (s != 0.0) {
    keep(s / c2);
    keep(c0 / s);
  } else {
    keep(0.0);
  }
}

struct MovingPoint {
  Vec p, v;
  double radius;
};

struct MovingEdge {
  Vec p0, v0, p1, v1;
};

struct MovingShape {
  std::vector<MovingPoint> points;
  std::vector<MovingEdge> edges;
  bool halfplane = false;
  Vec hn = Vec::Zero();
  double hoffset = 0.0;
};

// World feature positions with velocities frozen at the start of the interval.
MovingShape linearize(const MechanismModel& model, const Layout& layout, const Kinematics<double>& kin, int b,
                      const Eigen::VectorXd& qd) {
  const Body& body = model.bodies[static_cast<std::size_t>(b)];
  const BodyPose<double>& pose = kin.poses[static_cast<std::size_t>(b)];
  MovingShape ms;
  auto moving = [&](const Vec& world, double r) {
    return MovingPoint{world, point_jacobian<double>(model, layout, kin, b, world) * qd, r};
  };
  if (const auto* c = std::get_if<Circle>(&body.shape)) {
    ms.points.push_back(moving(pose.position, c->radius));
  } else if (const auto* poly = std::get_if<Polygon>(&body.shape)) {
    for (const Vec& v : poly->vertices) ms.points.push_back(moving(pose.position + rotate<double>(pose.angle, v), 0.0));
    const std::size_t m = ms.points.size();
    for (std::size_t i = 0; i < m; ++i) {
      const auto& a = ms.points[i];
      const auto& c = ms.points[(i + 1) % m];
      ms.edges.push_back({a.p, a.v, c.p, c.v});
    }
  } else {
    const auto& h = std::get<HalfPlane>(body.shape);
    ms.halfplane = true;
    ms.hn = rotate<double>(pose.angle, h.normal);
    ms.hoffset = h.offset + ms.hn.dot(pose.position);
  }
  return ms;
}

// Candidate impact times of a point (with radius) against the other shape's
// features under linear motion, filtered by witness-in-feature and approach.
void point_candidates(const MovingPoint& P, const MovingShape& other, double tmax, std::vector<double>& out) {
  std::vector<double> roots;
  if (other.halfplane) {
    const double c0 = other.hn.dot(P.p) - other.hoffset - P.radius;
    const double c1 = other.hn.dot(P.v);
    if (c1 < 0.0) quadratic_roots(c0, c1, 0.0, tmax, out);
    return;
  }
  for (const MovingEdge& e : other.edges) {
    const Vec E = e.p1 - e.p0, dE = e.v1 - e.v0;
    const Vec D = P.p - e.p0, dD = P.v - e.v0;
    const double L = E.norm();
    // Outward distance is -cross(E, D) / L for counter-clockwise polygons.
    roots.clear();
    quadratic_roots(-cross(E, D) - P.radius * L, -(cross(dE, D) + cross(E, dD)), -cross(dE, dD), tmax, roots);
    for (double t : roots) {
      const Vec Et = E + t * dE, Dt = D + t * dD;
      const double u = Dt.dot(Et) / Et.squaredNorm();
      const double rate = -(cross(dE, Dt) + cross(Et, dD));
      if (u >= 0.0 && u <= 1.0 && rate < 0.0) out.push_back(t);
    }
  }
  // Rounded point against the other shape's points (circle-circle, circle-vertex).
  for (const MovingPoint& Q : other.points) {
    const double R = P.radius + Q.radius;
    if (R == 0.0) continue;
    const Vec d = P.p - Q.p, dd = P.v - Q.v;
    roots.clear();
    quadratic_roots(d.squaredNorm() - R * R, 2.0 * d.dot(dd), dd.squaredNorm(), tmax, roots);
    for (double t : roots) {
      if ((d + t * dd).dot(dd) < 0.0) out.push_back(t);
    }
  }
}

struct Box {
  Vec lo = Vec::Constant(kInf), hi = Vec::Constant(-kInf);
  bool infinite = false;
  bool overlaps(const Box& o) const {
    if (infinite || o.infinite) return true;
    return lo.x() <= o.hi.x() && o.lo.x() <= hi.x() && lo.y() <= o.hi.y() && o.lo.y() <= hi.y();
  }
};

constexpr int kSweepSamples = 8;

std::vector<Box> swept_boxes(const MechanismModel& model, const Layout& layout, const SystemState& s, double dt) {
  std::vector<Box> boxes(model.bodies.size());
  std::vector<Vec> prev(model.bodies.size());
  std::vector<double> chord(model.bodies.size(), 0.0);
  for (int k = 0; k <= kSweepSamples; ++k) {
    const Eigen::VectorXd q = s.q + (dt * k / kSweepSamples) * s.qd;
    const Kinematics<double> kin = kinematics<double>(model, layout, q);
    for (std::size_t b = 0; b < model.bodies.size(); ++b) {
      const double r = bounding_radius(model.bodies[b].shape);
      if (!std::isfinite(r)) {
        boxes[b].infinite = true;
        continue;
      }
      const Vec c = kin.poses[b].position;
      boxes[b].lo = boxes[b].lo.cwiseMin(c - Vec::Constant(r));
      boxes[b].hi = boxes[b].hi.cwiseMax(c + Vec::Constant(r));
      if (k > 0) chord[b] = std::max(chord[b], (c - prev[b]).norm());
      prev[b] = c;
    }
  }
  // Curved center paths can bulge between samples by at most about a chord.
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    boxes[b].lo -= Vec::Constant(chord[b]);
    boxes[b].hi += Vec::Constant(chord[b]);
  }
  return boxes;
}

double normal_rate(const MechanismModel& model, const Layout& layout, const Kinematics<double>& kin,
                   const ContactPoint& c, const Eigen::VectorXd& qd) {
  Eigen::Matrix<double, 2, Eigen::Dynamic> rows;
  detail::contact_rows<double>(model, layout, kin, c, rows);
  return rows.row(0).dot(qd);
}

// Most relevant approaching contact of a pair: smallest gap among those with
// normal rate below the threshold.
std::optional<ContactPoint> approaching_contact(const MechanismModel& model, const Layout& layout,
                                                const Kinematics<double>& kin, int a, int b, double slop,
                                                const Eigen::VectorXd& qd, double threshold) {
  std::optional<ContactPoint> best;
  for (const ContactPoint& c : detail::pair_contacts(model, kin, a, b, slop)) {
    if (normal_rate(model, layout, kin, c, qd) >= threshold) continue;
    if (!best || c.gap < best->gap) best = c;
  }
  return best;
}

// Bounds on a body's motion along q + s qd, valid for every s: the speed of any
// point of the shape and the angular rate. Holds for relative and absolute
// joint angles alike.
struct MotionBound {
  double speed = 0.0;
  double omega = 0.0;
  double radius = 0.0;  ///< bounding radius, 0 for unbounded shapes
};

MotionBound motion_bound(const MechanismModel& model, const Layout& layout, int b, const Eigen::VectorXd& qd) {
  const Body& body = model.bodies[static_cast<std::size_t>(b)];
  MotionBound m;
  const double r = bounding_radius(body.shape);
  m.radius = std::isfinite(r) ? r : 0.0;
  if (body.kind == BodyKind::Free) {
    const int o = layout.body_offset[static_cast<std::size_t>(b)];
    m.omega = std::abs(qd[o + 2]);
    m.speed = qd.segment<2>(o).norm() + m.omega * m.radius;
  } else if (body.kind == BodyKind::ChainLink) {
    const Chain& ch = model.chains[static_cast<std::size_t>(body.chain)];
    const int o = layout.chain_offset[static_cast<std::size_t>(body.chain)];
    double reach = ch.com_offsets[static_cast<std::size_t>(body.link)] + m.radius;
    for (int j = body.link; j >= 0; --j) {
      if (j < body.link) reach += ch.lengths[static_cast<std::size_t>(j)];
      m.omega += std::abs(qd[o + j]);
      m.speed += std::abs(qd[o + j]) * reach;
    }
  }
  return m;
}

}  // namespace

std::optional<ToiResult> ccd_toi(const MechanismModel& model, const SystemState& state, double dt,
                                 const CcdOptions& opts) {
  const Layout layout = make_layout(model);
  if (state.q.size() != layout.dof || state.qd.size() != layout.dof) {
    throw Error(ErrorCode::DimensionMismatch, "state has wrong length");
  }
  if (!(dt >= 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be non-negative");

  const Kinematics<double> kin0 = kinematics<double>(model, layout, state.q);
  const std::vector<Box> boxes = swept_boxes(model, layout, state, dt);
  const int nb = static_cast<int>(model.bodies.size());

  auto sigma = [&](double s, int a, int b) {
    const Kinematics<double> kin = kinematics<double>(model, layout, Eigen::VectorXd(state.q + s * state.qd));
    return detail::separation(model, kin, a, b);
  };

  std::optional<ToiResult> best;
  auto offer = [&](double toi, const ContactPoint& c) {
    if (!best || toi < best->toi) best = ToiResult{toi, c};
  };

  for (int a = 0; a < nb; ++a) {
    for (int b = a + 1; b < nb; ++b) {
      if (!collidable(model, a, b)) continue;
      if (!boxes[static_cast<std::size_t>(a)].overlaps(boxes[static_cast<std::size_t>(b)])) continue;

      const double s0 = detail::separation(model, kin0, a, b);
      if (s0 <= opts.touch_tolerance) {
        // Already touching: only an approaching pair needs an immediate response.
        if (auto c = approaching_contact(model, layout, kin0, a, b, opts.touch_tolerance, state.qd,
                                         opts.approach_threshold)) {
          offer(0.0, *c);
        }
        continue;
      }
      if (dt == 0.0) continue;
      if (best && best->toi == 0.0) continue;

      std::vector<double> pts;
      const MovingShape ma = linearize(model, layout, kin0, a, state.qd);
      const MovingShape mb = linearize(model, layout, kin0, b, state.qd);
      for (const MovingPoint& p : ma.points) point_candidates(p, mb, dt, pts);
      for (const MovingPoint& p : mb.points) point_candidates(p, ma, dt, pts);
      const std::size_t n_roots = pts.size();
      for (std::size_t i = 0; i < n_roots; ++i) pts.push_back(std::min(dt, pts[i] * (1.0 + 1e-6)));
      for (int k = 1; k <= opts.samples; ++k) pts.push_back(dt * k / opts.samples);
      std::sort(pts.begin(), pts.end());

      // Separation changes no faster than the relative point speed plus the
      // swing of rotating face normals over the pair's extent.
      const MotionBound ba = motion_bound(model, layout, a, state.qd);
      const MotionBound bb = motion_bound(model, layout, b, state.qd);
      const bool unbounded = !std::isfinite(bounding_radius(model.bodies[static_cast<std::size_t>(a)].shape)) ||
                             !std::isfinite(bounding_radius(model.bodies[static_cast<std::size_t>(b)].shape));
      auto rate_bound = [&](double s0, double s1) {
        const double speed = ba.speed + bb.speed;
        if (unbounded) return speed;
        const Eigen::VectorXd q = state.q + s0 * state.qd;
        const Kinematics<double> kin = kinematics<double>(model, layout, q);
        const double extent = (kin.poses[static_cast<std::size_t>(a)].position -
                               kin.poses[static_cast<std::size_t>(b)].position)
                                  .norm() +
                              ba.radius + bb.radius + speed * (s1 - s0);
        return speed + (ba.omega + bb.omega) * extent;
      };

      // Rotation makes the polynomial candidates approximate, so a short dip
      // can hide between evaluation points. Split any interval whose endpoint
      // separations do not rule one out.
      int budget = 4096;
      auto dip = [&](auto&& self, double l, double sl, double h, double sh, double& out_lo, double& out_hi) -> bool {
        const double lower = 0.5 * (sl + sh - rate_bound(l, h) * (h - l));
        if (lower >= -kPenetrationSlack || --budget < 0) return false;
        const double m = 0.5 * (l + h);
        const double sm = sigma(m, a, b);
        if (sm <= 0.0) {
          if (!self(self, l, sl, m, sm, out_lo, out_hi)) {
            out_lo = l;
            out_hi = m;
          }
          return true;
        }
        return self(self, l, sl, m, sm, out_lo, out_hi) || self(self, m, sm, h, sh, out_lo, out_hi);
      };

      // First point on the true path with non-positive separation.
      double lo = 0.0, hi = -1.0, sig_lo = s0;
      for (double s : pts) {
        if (best && s >= best->toi) break;
        if (s <= lo) continue;
        const double sig = sigma(s, a, b);
        double dl = 0.0, dh = 0.0;
        if (dip(dip, lo, sig_lo, s, std::max(sig, 0.0), dl, dh)) {
          lo = dl;
          hi = dh;
          break;
        }
        if (sig <= 0.0) {
          hi = s;
          break;
        }
        lo = s;
        sig_lo = sig;
      }
      if (hi < 0.0) continue;
      const double tol = 1e-12 * dt;
      for (int it = 0; it < 200 && hi - lo > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        (sigma(mid, a, b) > 0.0 ? lo : hi) = mid;
      }
      const Kinematics<double> kin = kinematics<double>(model, layout, Eigen::VectorXd(state.q + lo * state.qd));
      const double slop = std::max(opts.touch_tolerance, 2.0 * (hi - lo) * state.qd.norm() + 1e-12);
      if (auto c = approaching_contact(model, layout, kin, a, b, slop, state.qd, opts.approach_threshold)) {
        offer(std::max(lo, 1e-12 * dt), *c);
      }
    }
  }
  return best;
}

}  // namespace dsim
