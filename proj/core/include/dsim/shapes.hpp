#pragma once

// Planar collision shapes, expressed in the owning body's frame (origin at
// the center of mass).

#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace dsim {

struct Circle {
  double radius = 0.0;
};

/// Convex polygon, counter-clockwise vertices.
struct Polygon {
  std::vector<Eigen::Vector2d> vertices;
};

/// Points x with normal . x >= offset are outside the solid. Only valid on
/// fixed bodies.
struct HalfPlane {
  Eigen::Vector2d normal = Eigen::Vector2d::UnitY();
  double offset = 0.0;
};

using Shape = std::variant<Circle, Polygon, HalfPlane>;

/// Axis-aligned w x h box centered on the body origin.
Polygon make_box(double width, double height);

/// Throws Error{InvalidModel} when the shape violates its invariants.
void check_shape(const Shape& s);

/// Outward unit normal of polygon edge i (from vertex i to i+1).
Eigen::Vector2d edge_normal(const Polygon& p, int i);

/// Distance from the body origin to the farthest point of the shape
/// (infinite for half-planes).
double bounding_radius(const Shape& s);

}  // namespace dsim
