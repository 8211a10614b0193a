#include "dsim/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dsim/error.hpp"

namespace dsim {

Polygon make_box(double width, double height) {
  const double w = 0.5 * width, h = 0.5 * height;
  return Polygon{{{-w, -h}, {w, -h}, {w, h}, {-w, h}}};
}

Eigen::Vector2d edge_normal(const Polygon& p, int i) {
  const auto n = static_cast<int>(p.vertices.size());
  const Eigen::Vector2d e = p.vertices[static_cast<std::size_t>((i + 1) % n)] - p.vertices[static_cast<std::size_t>(i)];
  return Eigen::Vector2d(e.y(), -e.x()).normalized();
}

namespace {

struct ShapeChecker {
  void operator()(const Circle& c) const {
    if (!(c.radius > 0.0) || !std::isfinite(c.radius)) throw Error(ErrorCode::InvalidModel, "circle radius must be positive");
  }
  void operator()(const Polygon& p) const {
    const std::size_t n = p.vertices.size();
    if (n < 3) throw Error(ErrorCode::InvalidModel, "polygon needs at least 3 vertices");
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector2d& a = p.vertices[i];
      const Eigen::Vector2d& b = p.vertices[(i + 1) % n];
      const Eigen::Vector2d& c = p.vertices[(i + 2) % n];
      const Eigen::Vector2d e1 = b - a, e2 = c - b;
      const double cross = e1.x() * e2.y() - e1.y() * e2.x();
      if (!(cross > 1e-12 * e1.norm() * e2.norm())) {
        throw Error(ErrorCode::InvalidModel, "polygon must be strictly convex and counter-clockwise");
      }
    }
  }
  void operator()(const HalfPlane& h) const {
    if (std::abs(h.normal.norm() - 1.0) > 1e-12) throw Error(ErrorCode::InvalidModel, "half-plane normal must be unit length");
    if (!std::isfinite(h.offset)) throw Error(ErrorCode::InvalidModel, "half-plane offset must be finite");
  }
};

}  // namespace

void check_shape(const Shape& s) { std::visit(ShapeChecker{}, s); }

double bounding_radius(const Shape& s) {
  if (const auto* c = std::get_if<Circle>(&s)) return c->radius;
  if (const auto* p = std::get_if<Polygon>(&s)) {
    double r = 0.0;
    for (const auto& v : p->vertices) r = std::max(r, v.norm());
    return r;
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace dsim
