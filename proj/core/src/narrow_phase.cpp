#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "collision_detail.hpp"
#include "dsim/collision.hpp"
#include "dsim/error.hpp"

namespace dsim {

namespace {

using Vec = Eigen::Vector2d;

struct Placed {
  int body;
  const Shape* shape;
  Vec position;
  double angle;

  Vec to_world(const Vec& local) const { return position + rotate<double>(angle, local); }
  Vec to_local(const Vec& world) const { return rotate<double>(-angle, world - position); }
  Vec dir_to_world(const Vec& d) const { return rotate<double>(angle, d); }
  Vec dir_to_local(const Vec& d) const { return rotate<double>(-angle, d); }
};

struct WorldPolygon {
  std::vector<Vec> v;
  std::vector<Vec> n;
};

WorldPolygon world_polygon(const Placed& p) {
  const auto& poly = std::get<Polygon>(*p.shape);
  WorldPolygon w;
  for (std::size_t i = 0; i < poly.vertices.size(); ++i) {
    w.v.push_back(p.to_world(poly.vertices[i]));
    w.n.push_back(p.dir_to_world(edge_normal(poly, static_cast<int>(i))));
  }
  return w;
}

// World-frame description of a half-plane body.
void world_halfplane(const Placed& p, Vec& n, double& offset) {
  const auto& h = std::get<HalfPlane>(*p.shape);
  n = p.dir_to_world(h.normal);
  offset = h.offset + n.dot(p.position);
}

ContactPoint point_face(const Placed& face, const Vec& face_point_world, const Vec& face_normal_world,
                        const Placed& pt, const Vec& point_world, double radius, int face_feature,
                        int point_feature) {
  ContactPoint c;
  c.kind = FeatureKind::PointFace;
  c.face_on_a = face.body < pt.body;
  c.body_a = std::min(face.body, pt.body);
  c.body_b = std::max(face.body, pt.body);
  c.face_point = face.to_local(face_point_world);
  c.face_normal = face.dir_to_local(face_normal_world);
  const Vec local = pt.to_local(point_world);
  if (c.face_on_a) {
    c.point_b = local;
    c.radius_b = radius;
    c.feature_a = face_feature;
    c.feature_b = point_feature;
  } else {
    c.point_a = local;
    c.radius_a = radius;
    c.feature_a = point_feature;
    c.feature_b = face_feature;
  }
  return c;
}

ContactPoint point_point(const Placed& x, const Vec& xw, double rx, int fx, const Placed& y, const Vec& yw,
                         double ry, int fy) {
  const bool x_first = x.body < y.body;
  const Placed& a = x_first ? x : y;
  const Placed& b = x_first ? y : x;
  ContactPoint c;
  c.kind = FeatureKind::PointPoint;
  c.body_a = a.body;
  c.body_b = b.body;
  c.point_a = a.to_local(x_first ? xw : yw);
  c.point_b = b.to_local(x_first ? yw : xw);
  c.radius_a = x_first ? rx : ry;
  c.radius_b = x_first ? ry : rx;
  c.feature_a = x_first ? fx : fy;
  c.feature_b = x_first ? fy : fx;
  return c;
}

void circle_circle(const Placed& a, const Placed& b, double slop, std::vector<ContactPoint>& out) {
  const double ra = std::get<Circle>(*a.shape).radius, rb = std::get<Circle>(*b.shape).radius;
  const double d = (b.position - a.position).norm();
  if (d - ra - rb > slop || d == 0.0) return;
  out.push_back(point_point(a, a.position, ra, -1, b, b.position, rb, -1));
}

void circle_halfplane(const Placed& c, const Placed& h, double slop, std::vector<ContactPoint>& out) {
  const double r = std::get<Circle>(*c.shape).radius;
  Vec n;
  double offset;
  world_halfplane(h, n, offset);
  const double gap = n.dot(c.position) - offset - r;
  if (gap > slop) return;
  out.push_back(point_face(h, n * offset, n, c, c.position, r, -1, -1));
}

void polygon_halfplane(const Placed& p, const Placed& h, double slop, std::vector<ContactPoint>& out) {
  Vec n;
  double offset;
  world_halfplane(h, n, offset);
  const WorldPolygon w = world_polygon(p);
  for (std::size_t i = 0; i < w.v.size(); ++i) {
    if (n.dot(w.v[i]) - offset > slop) continue;
    out.push_back(point_face(h, n * offset, n, p, w.v[i], 0.0, -1, static_cast<int>(i)));
  }
}

void circle_polygon(const Placed& c, const Placed& p, double slop, std::vector<ContactPoint>& out) {
  const double r = std::get<Circle>(*c.shape).radius;
  const WorldPolygon w = world_polygon(p);
  const std::size_t m = w.v.size();
  std::size_t face = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    const double s = w.n[i].dot(c.position - w.v[i]);
    if (s > best) {
      best = s;
      face = i;
    }
  }
  if (best > r + slop) return;
  const Vec& v1 = w.v[face];
  const Vec& v2 = w.v[(face + 1) % m];
  if (best > 0.0) {
    const double u1 = (c.position - v1).dot(v2 - v1);
    const double u2 = (c.position - v2).dot(v1 - v2);
    if (u1 <= 0.0 || u2 <= 0.0) {
      const std::size_t vid = u1 <= 0.0 ? face : (face + 1) % m;
      if ((c.position - w.v[vid]).norm() - r > slop) return;
      out.push_back(point_point(c, c.position, r, -1, p, w.v[vid], 0.0, static_cast<int>(vid)));
      return;
    }
  }
  out.push_back(point_face(p, v1, w.n[face], c, c.position, r, static_cast<int>(face), -1));
}

// Largest separation of b's vertices from a face of a, and that face.
double max_face_separation(const WorldPolygon& a, const WorldPolygon& b, std::size_t& face) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    double s = std::numeric_limits<double>::infinity();
    for (const Vec& v : b.v) s = std::min(s, a.n[i].dot(v - a.v[i]));
    if (s > best) {
      best = s;
      face = i;
    }
  }
  return best;
}

void polygon_polygon(const Placed& pa, const Placed& pb, double slop, std::vector<ContactPoint>& out) {
  const WorldPolygon wa = world_polygon(pa), wb = world_polygon(pb);
  std::size_t fa = 0, fb = 0;
  const double sa = max_face_separation(wa, wb, fa);
  if (sa > slop) return;
  const double sb = max_face_separation(wb, wa, fb);
  if (sb > slop) return;

  const bool flip = sb > sa + 1e-9;
  const Placed& ref = flip ? pb : pa;
  const Placed& inc = flip ? pa : pb;
  const WorldPolygon& wr = flip ? wb : wa;
  const WorldPolygon& wi = flip ? wa : wb;
  const std::size_t rf = flip ? fb : fa;
  const Vec n = wr.n[rf];

  // Incident edge: most anti-parallel to the reference normal.
  std::size_t ie = 0;
  double most = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < wi.n.size(); ++i) {
    const double d = wi.n[i].dot(n);
    if (d < most) {
      most = d;
      ie = i;
    }
  }
  const std::size_t mi = wi.v.size();
  struct ClipPoint {
    Vec p;
    int feature;
  };
  std::vector<ClipPoint> pts{{wi.v[ie], static_cast<int>(ie)},
                             {wi.v[(ie + 1) % mi], static_cast<int>((ie + 1) % mi)}};

  const Vec r1 = wr.v[rf], r2 = wr.v[(rf + 1) % wr.v.size()];
  const Vec t = (r2 - r1).normalized();
  // Keep the part of the incident segment between the reference side planes.
  auto clip = [&](const Vec& dir, double limit, int side) {
    std::vector<ClipPoint> kept;
    const double d0 = dir.dot(pts[0].p) - limit, d1 = dir.dot(pts[1].p) - limit;
    if (d0 <= 0.0) kept.push_back(pts[0]);
    if (d1 <= 0.0) kept.push_back(pts[1]);
    if (d0 * d1 < 0.0) {
      const double u = d0 / (d0 - d1);
      kept.push_back({pts[0].p + u * (pts[1].p - pts[0].p), -2 - side});
    }
    pts = kept;
  };
  clip(-t, -t.dot(r1), 0);
  if (pts.size() < 2) return;
  clip(t, t.dot(r2), 1);
  if (pts.size() < 2) return;

  for (const ClipPoint& cp : pts) {
    if (n.dot(cp.p - r1) > slop) continue;
    out.push_back(point_face(ref, r1, n, inc, cp.p, 0.0, static_cast<int>(rf), cp.feature));
  }
}

Placed place(const MechanismModel& model, const Kinematics<double>& kin, int b) {
  const auto& pose = kin.poses[static_cast<std::size_t>(b)];
  return Placed{b, &model.bodies[static_cast<std::size_t>(b)].shape, pose.position, pose.angle};
}

enum class Kind { Circle, Polygon, HalfPlane };

Kind kind_of(const Shape& s) {
  if (std::holds_alternative<Circle>(s)) return Kind::Circle;
  if (std::holds_alternative<Polygon>(s)) return Kind::Polygon;
  return Kind::HalfPlane;
}

double circle_polygon_distance(const Vec& c, const WorldPolygon& w) {
  double best = -std::numeric_limits<double>::infinity();
  std::size_t face = 0;
  for (std::size_t i = 0; i < w.v.size(); ++i) {
    const double s = w.n[i].dot(c - w.v[i]);
    if (s > best) {
      best = s;
      face = i;
    }
  }
  if (best <= 0.0) return best;
  // Outside: exact distance to the boundary.
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < w.v.size(); ++i) {
    const Vec& a = w.v[i];
    const Vec& b = w.v[(i + 1) % w.v.size()];
    const double u = std::clamp((c - a).dot(b - a) / (b - a).squaredNorm(), 0.0, 1.0);
    d = std::min(d, (c - (a + u * (b - a))).norm());
  }
  (void)face;
  return d;
}

}  // namespace

bool collidable(const MechanismModel& model, int a, int b) {
  const Body& x = model.bodies[static_cast<std::size_t>(a)];
  const Body& y = model.bodies[static_cast<std::size_t>(b)];
  if (a == b) return false;
  if (x.kind == BodyKind::Fixed && y.kind == BodyKind::Fixed) return false;
  if (x.kind == BodyKind::ChainLink && y.kind == BodyKind::ChainLink && x.chain == y.chain) return false;
  return true;
}

namespace detail {

std::vector<ContactPoint> pair_contacts(const MechanismModel& model, const Kinematics<double>& kin, int a, int b,
                                        double slop) {
  std::vector<ContactPoint> out;
  Placed pa = place(model, kin, a), pb = place(model, kin, b);
  Kind ka = kind_of(*pa.shape), kb = kind_of(*pb.shape);
  // Canonical order: circle < polygon < half-plane.
  if (static_cast<int>(ka) > static_cast<int>(kb)) {
    std::swap(pa, pb);
    std::swap(ka, kb);
  }
  if (ka == Kind::Circle && kb == Kind::Circle) circle_circle(pa, pb, slop, out);
  else if (ka == Kind::Circle && kb == Kind::Polygon) circle_polygon(pa, pb, slop, out);
  else if (ka == Kind::Circle && kb == Kind::HalfPlane) circle_halfplane(pa, pb, slop, out);
  else if (ka == Kind::Polygon && kb == Kind::Polygon) polygon_polygon(pa.body < pb.body ? pa : pb, pa.body < pb.body ? pb : pa, slop, out);
  else if (ka == Kind::Polygon && kb == Kind::HalfPlane) polygon_halfplane(pa, pb, slop, out);

  const Kinematics<double>& k = kin;
  for (ContactPoint& c : out) {
    const Evaluated<double> e = evaluate<double>(k, c);
    c.gap = e.gap;
    c.normal = e.normal;
    c.tangent = perp<double>(e.normal);
    c.point = e.point;
  }
  std::stable_sort(out.begin(), out.end(), [](const ContactPoint& x, const ContactPoint& y) {
    return std::tie(x.feature_a, x.feature_b) < std::tie(y.feature_a, y.feature_b);
  });
  return out;
}

double separation(const MechanismModel& model, const Kinematics<double>& kin, int a, int b) {
  Placed pa = place(model, kin, a), pb = place(model, kin, b);
  Kind ka = kind_of(*pa.shape), kb = kind_of(*pb.shape);
  if (static_cast<int>(ka) > static_cast<int>(kb)) {
    std::swap(pa, pb);
    std::swap(ka, kb);
  }
  if (ka == Kind::Circle && kb == Kind::Circle) {
    return (pb.position - pa.position).norm() - std::get<Circle>(*pa.shape).radius - std::get<Circle>(*pb.shape).radius;
  }
  if (ka == Kind::Circle && kb == Kind::Polygon) {
    return circle_polygon_distance(pa.position, world_polygon(pb)) - std::get<Circle>(*pa.shape).radius;
  }
  if (kb == Kind::HalfPlane && ka != Kind::HalfPlane) {
    Vec n;
    double offset;
    world_halfplane(pb, n, offset);
    if (ka == Kind::Circle) return n.dot(pa.position) - offset - std::get<Circle>(*pa.shape).radius;
    double s = std::numeric_limits<double>::infinity();
    for (const Vec& v : world_polygon(pa).v) s = std::min(s, n.dot(v) - offset);
    return s;
  }
  if (ka == Kind::Polygon && kb == Kind::Polygon) {
    const WorldPolygon wa = world_polygon(pa), wb = world_polygon(pb);
    std::size_t f = 0;
    return std::max(max_face_separation(wa, wb, f), max_face_separation(wb, wa, f));
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace detail

std::vector<ContactPoint> narrow_phase(const MechanismModel& model, const Eigen::VectorXd& q, double slop) {
  const Layout layout = make_layout(model);
  if (q.size() != layout.dof) throw Error(ErrorCode::DimensionMismatch, "q has wrong length");
  const Kinematics<double> kin = kinematics<double>(model, layout, q);
  std::vector<ContactPoint> out;
  const int nb = static_cast<int>(model.bodies.size());
  for (int a = 0; a < nb; ++a) {
    for (int b = a + 1; b < nb; ++b) {
      if (!collidable(model, a, b)) continue;
      auto pc = detail::pair_contacts(model, kin, a, b, slop);
      out.insert(out.end(), pc.begin(), pc.end());
    }
  }
  return out;
}

ContactPoint reevaluate(const MechanismModel& model, const Eigen::VectorXd& q, const ContactPoint& c) {
  const Layout layout = make_layout(model);
  const Kinematics<double> kin = kinematics<double>(model, layout, q);
  const detail::Evaluated<double> e = detail::evaluate<double>(kin, c);
  ContactPoint out = c;
  out.gap = e.gap;
  out.normal = e.normal;
  out.tangent = perp<double>(e.normal);
  out.point = e.point;
  return out;
}

double pair_separation(const MechanismModel& model, const Eigen::VectorXd& q, int a, int b) {
  const Layout layout = make_layout(model);
  const Kinematics<double> kin = kinematics<double>(model, layout, q);
  return detail::separation(model, kin, a, b);
}

}  // namespace dsim
