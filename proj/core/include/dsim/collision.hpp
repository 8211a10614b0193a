#pragma once

// Contact generation, contact Jacobians and time-of-impact queries.
//
// Every contact remembers the feature pair that produced it (a point on one
// body against a face of the other, or two points with radii), expressed in
// body frames. Gap, normal and Jacobian rows can then be re-evaluated at any
// configuration with the pairing frozen; the backward pass and the TOI
// gradient differentiate through that frozen evaluation.

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dsim/lcp.hpp"
#include "dsim/mechanics.hpp"

namespace dsim {

enum class FeatureKind { PointFace, PointPoint };

struct ContactPoint {
  int body_a = -1;
  int body_b = -1;
  Eigen::Vector2d point = Eigen::Vector2d::Zero();   ///< world point where velocities are compared
  Eigen::Vector2d normal = Eigen::Vector2d::UnitY();  ///< from a to b
  Eigen::Vector2d tangent = -Eigen::Vector2d::UnitX();
  double gap = 0.0;
  int feature_a = -1;  ///< vertex or edge id on a, -1 for circles and half-planes
  int feature_b = -1;

  // Frozen pairing, body frames.
  FeatureKind kind = FeatureKind::PointFace;
  bool face_on_a = true;  ///< PointFace: which body owns the face
  Eigen::Vector2d face_point = Eigen::Vector2d::Zero();
  Eigen::Vector2d face_normal = Eigen::Vector2d::UnitY();  ///< outward from the face body
  Eigen::Vector2d point_a = Eigen::Vector2d::Zero();  ///< PointPoint anchor on a, or the PointFace point when !face_on_a
  Eigen::Vector2d point_b = Eigen::Vector2d::Zero();  ///< PointPoint anchor on b, or the PointFace point when face_on_a
  double radius_a = 0.0;
  double radius_b = 0.0;
};

struct ContactSet {
  std::vector<ContactPoint> contacts;
  /// Rows [n_1, t_1, n_2, t_2, ...].
  Eigen::MatrixXd J;
  /// Friction pair per tangent row: (2j+1 -> 2j, mu_pair).
  std::vector<FrictionPair> friction;

  int size() const { return static_cast<int>(contacts.size()); }
};

inline constexpr double kDefaultSlop = 1e-4;

/// Contacts with gap <= slop, ordered by body pair then feature ids.
std::vector<ContactPoint> narrow_phase(const MechanismModel& model, const Eigen::VectorXd& q,
                                       double slop = kDefaultSlop);

/// Gap, normal, tangent and point of a contact re-evaluated at q with its
/// feature pairing held fixed.
ContactPoint reevaluate(const MechanismModel& model, const Eigen::VectorXd& q, const ContactPoint& c);

/// Stacked Jacobian, friction map and refreshed contact data at q.
ContactSet make_contact_set(const MechanismModel& model, const Eigen::VectorXd& q,
                            std::vector<ContactPoint> contacts);

Eigen::MatrixXd contact_jacobian(const MechanismModel& model, const Eigen::VectorXd& q,
                                 const std::vector<ContactPoint>& contacts);

/// d(J^T f)/dq for fixed f, as a dof x dof matrix.
Eigen::MatrixXd jacobian_transpose_derivative(const MechanismModel& model, const Eigen::VectorXd& q,
                                              const std::vector<ContactPoint>& contacts,
                                              const Eigen::VectorXd& f);

/// Gradient over q of sum_ij G_ij J_ij(q), for a fixed weight matrix G shaped
/// like J. This is the contraction the backward pass needs.
Eigen::VectorXd jacobian_contraction_gradient(const MechanismModel& model, const Eigen::VectorXd& q,
                                              const std::vector<ContactPoint>& contacts,
                                              const Eigen::MatrixXd& G);

/// Separation of two bodies at q: positive when apart, zero when touching,
/// negative when overlapping. Lower bound of the distance for polygon pairs.
double pair_separation(const MechanismModel& model, const Eigen::VectorXd& q, int a, int b);

/// Whether bodies a and b can collide at all (not both fixed, not links of
/// the same chain).
bool collidable(const MechanismModel& model, int a, int b);

struct ToiResult {
  double toi = 0.0;
  ContactPoint contact;  ///< evaluated at the TOI configuration
};

struct CcdOptions {
  /// Immediate response when an approaching pair is already this close.
  double touch_tolerance = 1e-6;
  /// Relative normal velocity below this counts as approaching.
  double approach_threshold = -1e-9;
  /// True-path samples per pair, on top of the polynomial candidates.
  int samples = 32;
};

/// Earliest time of impact in [0, dt] along q(s) = q + s qd, which is the
/// exact path of an explicit-Euler position update over a sub-step s.
std::optional<ToiResult> ccd_toi(const MechanismModel& model, const SystemState& state, double dt,
                                 const CcdOptions& opts = {});

}  // namespace dsim
