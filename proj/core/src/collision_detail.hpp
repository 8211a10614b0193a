#pragma once

// Shared internals of narrow_phase.cpp, contact_jacobian.cpp and ccd.cpp.

#include <vector>

#include "dsim/collision.hpp"
#include "dsim/mechanics.hpp"

namespace dsim::detail {

template <class T>
struct Evaluated {
  Vec2<T> normal;
  Vec2<T> point;
  T gap;
};

/// Frozen-feature evaluation of a contact at configuration `kin`.
template <class T>
Evaluated<T> evaluate(const Kinematics<T>& kin, const ContactPoint& c) {
  using std::sqrt;
  const BodyPose<T>& pa = kin.poses[static_cast<std::size_t>(c.body_a)];
  const BodyPose<T>& pb = kin.poses[static_cast<std::size_t>(c.body_b)];
  Evaluated<T> e;
  if (c.kind == FeatureKind::PointFace) {
    const BodyPose<T>& face = c.face_on_a ? pa : pb;
    const BodyPose<T>& pt = c.face_on_a ? pb : pa;
    const Eigen::Vector2d& local = c.face_on_a ? c.point_b : c.point_a;
    const double r = c.face_on_a ? c.radius_b : c.radius_a;
    const Vec2<T> n = rotate<T>(face.angle, c.face_normal);
    const Vec2<T> f = face.position + rotate<T>(face.angle, c.face_point);
    const Vec2<T> p = pt.position + rotate<T>(pt.angle, local);
    e.gap = n.dot(p - f) - T(r);
    e.normal = c.face_on_a ? Vec2<T>(n) : Vec2<T>(-n);
    e.point = p - n * (T(r) + e.gap * T(0.5));
  } else {
    const Vec2<T> xa = pa.position + rotate<T>(pa.angle, c.point_a);
    const Vec2<T> xb = pb.position + rotate<T>(pb.angle, c.point_b);
    const Vec2<T> d = xb - xa;
    const T len = sqrt(d.dot(d));
    e.normal = d / len;
    e.gap = len - T(c.radius_a + c.radius_b);
    e.point = xa + e.normal * (T(c.radius_a) + e.gap * T(0.5));
  }
  return e;
}

/// Normal and tangent Jacobian rows of one contact.
template <class T>
void contact_rows(const MechanismModel& model, const Layout& layout, const Kinematics<T>& kin,
                  const ContactPoint& c, Eigen::Matrix<T, 2, Eigen::Dynamic>& rows) {
  const Evaluated<T> e = evaluate<T>(kin, c);
  const Vec2<T> t = perp<T>(e.normal);
  const auto Ja = point_jacobian<T>(model, layout, kin, c.body_a, e.point);
  const auto Jb = point_jacobian<T>(model, layout, kin, c.body_b, e.point);
  rows.resize(2, layout.dof);
  for (int k = 0; k < layout.dof; ++k) {
    const T dx = Jb(0, k) - Ja(0, k);
    const T dy = Jb(1, k) - Ja(1, k);
    rows(0, k) = e.normal.x() * dx + e.normal.y() * dy;
    rows(1, k) = t.x() * dx + t.y() * dy;
  }
}

/// Contacts between bodies a < b with gap <= slop.
std::vector<ContactPoint> pair_contacts(const MechanismModel& model, const Kinematics<double>& kin, int a, int b,
                                        double slop);

double separation(const MechanismModel& model, const Kinematics<double>& kin, int a, int b);

}  // namespace dsim::detail
