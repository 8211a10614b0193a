#pragma once

// Generalized-coordinate planar mechanisms: free bodies (x, y, theta),
// revolute chains (relative joint angles) and fixed environment bodies.
//
// Dynamics convention: M(q) qdd = tau - c(q, qd), with gravity inside c.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dsim/shapes.hpp"

namespace dsim {

struct Material {
  double restitution = 0.0;
  double friction = 0.0;
};

enum class BodyKind { Free, ChainLink, Fixed };

struct Body {
  std::string name;
  BodyKind kind = BodyKind::Free;
  double mass = 1.0;
  double inertia = 1.0;
  Shape shape = Circle{0.5};
  Material material;
  int chain = -1;  ///< chain links only
  int link = -1;   ///< chain links only
  Eigen::Vector3d pose = Eigen::Vector3d::Zero();  ///< fixed bodies only: x, y, theta
};

/// Serial revolute chain anchored at `base`. Link i rotates about joint i;
/// its absolute angle is the sum of joint angles 0..i, measured from +x.
struct Chain {
  Eigen::Vector2d base = Eigen::Vector2d::Zero();
  std::vector<double> lengths;      ///< joint i to joint i+1
  std::vector<double> com_offsets;  ///< joint i to the link's center of mass
};

struct MechanismModel {
  std::vector<Body> bodies;
  std::vector<Chain> chains;
  Eigen::Vector2d gravity = Eigen::Vector2d::Zero();
  /// Scene-level coefficients replacing the per-pair combination rule.
  std::optional<double> friction_override;
  std::optional<double> restitution_override;
};

struct SystemState {
  Eigen::VectorXd q;
  Eigen::VectorXd qd;
  double t = 0.0;
};

/// Where each body's coordinates live in q.
struct Layout {
  int dof = 0;
  std::vector<int> body_offset;   ///< free bodies: first of 3 dofs; else -1
  std::vector<int> chain_offset;  ///< first joint dof of each chain
  std::vector<std::vector<int>> chain_bodies;  ///< body index per link
  std::vector<int> dynamic_bodies;  ///< bodies carrying inertial parameters, in order
};

/// Validates the model and computes its layout. Throws Error{InvalidModel}.
Layout make_layout(const MechanismModel& model);

/// Inertial parameter vector: [mass, inertia] per dynamic body.
Eigen::VectorXd inertial_parameters(const MechanismModel& model);
void set_inertial_parameters(MechanismModel& model, const Eigen::VectorXd& m);

/// Pair coefficients, honouring scene overrides.
double pair_restitution(const MechanismModel& model, int a, int b);
double pair_friction(const MechanismModel& model, int a, int b);

template <class T>
using Vec2 = Eigen::Matrix<T, 2, 1>;
template <class T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <class T>
struct BodyPose {
  Vec2<T> position;  ///< center of mass
  T angle;
};

template <class T>
struct Kinematics {
  std::vector<BodyPose<T>> poses;
  std::vector<std::vector<Vec2<T>>> joints;  ///< per chain, joint positions
};

template <class T>
Vec2<T> rotate(const T& angle, const Eigen::Vector2d& v) {
  using std::cos;
  using std::sin;
  const T c = cos(angle), s = sin(angle);
  Vec2<T> out;
  out << c * v.x() - s * v.y(), s * v.x() + c * v.y();
  return out;
}

template <class T>
Vec2<T> perp(const Vec2<T>& v) {
  Vec2<T> out;
  out << -v.y(), v.x();
  return out;
}

template <class T>
Kinematics<T> kinematics(const MechanismModel& model, const Layout& layout, const VecX<T>& q) {
  using std::cos;
  using std::sin;
  Kinematics<T> k;
  k.poses.resize(model.bodies.size());
  for (std::size_t b = 0; b < model.bodies.size(); ++b) {
    const Body& body = model.bodies[b];
    if (body.kind == BodyKind::Free) {
      const int o = layout.body_offset[b];
      k.poses[b].position << q[o], q[o + 1];
      k.poses[b].angle = q[o + 2];
    } else if (body.kind == BodyKind::Fixed) {
      k.poses[b].position << T(body.pose.x()), T(body.pose.y());
      k.poses[b].angle = T(body.pose.z());
    }
  }
  k.joints.resize(model.chains.size());
  for (std::size_t c = 0; c < model.chains.size(); ++c) {
    const Chain& chain = model.chains[c];
    const int o = layout.chain_offset[c];
    Vec2<T> joint;
    joint << T(chain.base.x()), T(chain.base.y());
    T phi = T(0.0);
    for (std::size_t i = 0; i < chain.lengths.size(); ++i) {
      phi = phi + q[o + static_cast<int>(i)];
      k.joints[c].push_back(joint);
      Vec2<T> u;
      u << cos(phi), sin(phi);
      BodyPose<T>& pose = k.poses[static_cast<std::size_t>(layout.chain_bodies[c][i])];
      pose.position = joint + u * T(chain.com_offsets[i]);
      pose.angle = phi;
      joint = joint + u * T(chain.lengths[i]);
    }
  }
  return k;
}

/// Jacobian of the world velocity of a point rigidly attached to `body` that
/// currently sits at `point`.
template <class T>
Eigen::Matrix<T, 2, Eigen::Dynamic> point_jacobian(const MechanismModel& model, const Layout& layout,
                                                   const Kinematics<T>& kin, int body, const Vec2<T>& point) {
  Eigen::Matrix<T, 2, Eigen::Dynamic> J(2, layout.dof);
  for (int i = 0; i < layout.dof; ++i) J(0, i) = J(1, i) = T(0.0);
  const Body& b = model.bodies[static_cast<std::size_t>(body)];
  if (b.kind == BodyKind::Free) {
    const int o = layout.body_offset[static_cast<std::size_t>(body)];
    J(0, o) = T(1.0);
    J(1, o + 1) = T(1.0);
    const Vec2<T> r = perp<T>(point - kin.poses[static_cast<std::size_t>(body)].position);
    J(0, o + 2) = r.x();
    J(1, o + 2) = r.y();
  } else if (b.kind == BodyKind::ChainLink) {
    const int o = layout.chain_offset[static_cast<std::size_t>(b.chain)];
    for (int j = 0; j <= b.link; ++j) {
      const Vec2<T> r = perp<T>(point - kin.joints[static_cast<std::size_t>(b.chain)][static_cast<std::size_t>(j)]);
      J(0, o + j) = r.x();
      J(1, o + j) = r.y();
    }
  }
  return J;
}

/// Angular-velocity row of a body.
Eigen::RowVectorXd angular_jacobian(const MechanismModel& model, const Layout& layout, int body);

template <class T>
MatX<T> mass_matrix_t(const MechanismModel& model, const Layout& layout, const VecX<T>& q) {
  const Kinematics<T> kin = kinematics<T>(model, layout, q);
  MatX<T> M(layout.dof, layout.dof);
  for (int r = 0; r < layout.dof; ++r)
    for (int c = 0; c < layout.dof; ++c) M(r, c) = T(0.0);
  for (int b : layout.dynamic_bodies) {
    const Body& body = model.bodies[static_cast<std::size_t>(b)];
    const auto J = point_jacobian<T>(model, layout, kin, b, kin.poses[static_cast<std::size_t>(b)].position);
    const Eigen::RowVectorXd w = angular_jacobian(model, layout, b);
    for (int r = 0; r < layout.dof; ++r) {
      for (int c = 0; c < layout.dof; ++c) {
        M(r, c) += T(body.mass) * (J(0, r) * J(0, c) + J(1, r) * J(1, c)) + T(body.inertia * w[r] * w[c]);
      }
    }
  }
  return M;
}

template <class T>
VecX<T> coriolis_t(const MechanismModel& model, const Layout& layout, const VecX<T>& q, const VecX<T>& qd) {
  using std::cos;
  using std::sin;
  const Kinematics<T> kin = kinematics<T>(model, layout, q);
  VecX<T> c(layout.dof);
  for (int i = 0; i < layout.dof; ++i) c[i] = T(0.0);
  const Eigen::Vector2d& g = model.gravity;
  for (int b : layout.dynamic_bodies) {
    const Body& body = model.bodies[static_cast<std::size_t>(b)];
    // Velocity-product part of the center-of-mass acceleration.
    Vec2<T> bias;
    bias << T(0.0), T(0.0);
    if (body.kind == BodyKind::ChainLink) {
      const Chain& chain = model.chains[static_cast<std::size_t>(body.chain)];
      const int o = layout.chain_offset[static_cast<std::size_t>(body.chain)];
      T phi = T(0.0), rate = T(0.0);
      for (int j = 0; j <= body.link; ++j) {
        phi = phi + q[o + j];
        rate = rate + qd[o + j];
        const double len = j < body.link ? chain.lengths[static_cast<std::size_t>(j)]
                                         : chain.com_offsets[static_cast<std::size_t>(j)];
        Vec2<T> u;
        u << cos(phi), sin(phi);
        bias -= u * (T(len) * rate * rate);
      }
    }
    const auto J = point_jacobian<T>(model, layout, kin, b, kin.poses[static_cast<std::size_t>(b)].position);
    for (int r = 0; r < layout.dof; ++r) {
      c[r] += T(body.mass) * (J(0, r) * (bias.x() - T(g.x())) + J(1, r) * (bias.y() - T(g.y())));
    }
  }
  return c;
}

Eigen::MatrixXd mass_matrix(const MechanismModel& model, const Eigen::VectorXd& q);
Eigen::VectorXd coriolis(const MechanismModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& qd);

/// Kinetic energy 0.5 qd^T M qd.
double kinetic_energy(const MechanismModel& model, const SystemState& s);

/// Raw partial derivatives of M and c. dM_dq[k] = dM/dq_k, dM_dm[j] = dM/dm_j.
struct InertialDerivatives {
  std::vector<Eigen::MatrixXd> dM_dq;
  std::vector<Eigen::MatrixXd> dM_dm;
  Eigen::MatrixXd dc_dq;
  Eigen::MatrixXd dc_dqd;
  Eigen::MatrixXd dc_dm;
};

InertialDerivatives inertial_derivatives(const MechanismModel& model, const Eigen::VectorXd& q,
                                         const Eigen::VectorXd& qd);

/// Jacobians of M^{-1} z (z held fixed) and of c.
struct InertialPartials {
  Eigen::MatrixXd dMinvz_dq;
  Eigen::MatrixXd dMinvz_dm;
  Eigen::MatrixXd dc_dq;
  Eigen::MatrixXd dc_dqd;
  Eigen::MatrixXd dc_dm;
};

InertialPartials inertial_partials(const MechanismModel& model, const Eigen::VectorXd& q,
                                   const Eigen::VectorXd& qd, const Eigen::VectorXd& z);

}  // namespace dsim
