#pragma once

// Shared generators for unit tests and the acceptance run.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "dsim/collision.hpp"
#include "dsim/diffsim.hpp"
#include "dsim/lcp.hpp"
#include "dsim/mechanics.hpp"

namespace dsim::test {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

/// Contact-structured problem A = J W J^T with random J (rows x dof) and
/// diagonal positive W. Full row rank when dof >= rows.
inline LcpProblem structured_lcp(Rng& rng, int rows, int dof) {
  Eigen::MatrixXd J(rows, dof);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < dof; ++j) J(i, j) = normal(rng);
  }
  Eigen::VectorXd w(dof);
  for (int j = 0; j < dof; ++j) w[j] = 1.0 / uniform(rng, 0.5, 2.0);
  LcpProblem p;
  p.A = J * w.asDiagonal() * J.transpose();
  p.A = 0.5 * (p.A + p.A.transpose());
  p.b.resize(rows);
  for (int i = 0; i < rows; ++i) p.b[i] = normal(rng);
  return p;
}

inline LcpProblem frictionless_lcp(Rng& rng, int n) {
  return structured_lcp(rng, n, n + static_cast<int>(rng() % 3));
}

/// Rows [n_0, t_0, n_1, t_1, ...], mu in [0.1, 1.5], full row rank.
inline LcpProblem frictional_lcp(Rng& rng, int contacts) {
  LcpProblem p = structured_lcp(rng, 2 * contacts, 2 * contacts + static_cast<int>(rng() % 3));
  for (int c = 0; c < contacts; ++c) p.friction.push_back({2 * c + 1, 2 * c, uniform(rng, 0.1, 1.5)});
  return p;
}

inline Body fixed_floor(double restitution = 0.0, double friction = 0.0) {
  Body b;
  b.name = "floor";
  b.kind = BodyKind::Fixed;
  b.shape = HalfPlane{};
  b.material = {restitution, friction};
  return b;
}

inline Body circle_body(const std::string& name, double r, double m, double restitution = 0.0, double friction = 0.0) {
  Body b;
  b.name = name;
  b.shape = Circle{r};
  b.mass = m;
  b.inertia = 0.5 * m * r * r;
  b.material = {restitution, friction};
  return b;
}

inline Body box_body(const std::string& name, double w, double h, double m, double restitution = 0.0,
                     double friction = 0.0) {
  Body b;
  b.name = name;
  b.shape = make_box(w, h);
  b.mass = m;
  b.inertia = m * (w * w + h * h) / 12.0;
  b.material = {restitution, friction};
  return b;
}

/// Ball of radius r at height y over the floor y = 0, falling at speed v.
inline Rollout ball_drop(double r, double y, double v, double restitution, double dt, int steps = 1) {
  Rollout ro;
  ro.model.bodies = {fixed_floor(restitution), circle_body("ball", r, 1.0, restitution)};
  ro.initial.q = Eigen::Vector3d(0.0, y, 0.0);
  ro.initial.qd = Eigen::Vector3d(0.0, -v, 0.0);
  ro.tau = Eigen::VectorXd::Zero(3);
  ro.dt = dt;
  ro.steps = steps;
  return ro;
}

/// Random scene whose bodies never touch over the horizon: free bodies far
/// apart plus an optional two-link chain, random gravity, torques, state.
inline Rollout random_free_scene(Rng& rng) {
  Rollout ro;
  ro.model.gravity = Eigen::Vector2d(uniform(rng, -2, 2), uniform(rng, -10, 0));
  const int bodies = 1 + static_cast<int>(rng() % 2);
  std::vector<double> q, qd;
  for (int i = 0; i < bodies; ++i) {
    Body b = (rng() % 2) ? circle_body("c" + std::to_string(i), uniform(rng, 0.1, 0.4), uniform(rng, 0.5, 3))
                         : box_body("b" + std::to_string(i), uniform(rng, 0.2, 0.6), uniform(rng, 0.2, 0.6),
                                    uniform(rng, 0.5, 3));
    ro.model.bodies.push_back(b);
    q.insert(q.end(), {10.0 * i, uniform(rng, -1, 1), uniform(rng, -3, 3)});
    qd.insert(qd.end(), {uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -2, 2)});
  }
  if (rng() % 2) {
    Chain ch;
    ch.base = Eigen::Vector2d(-20.0, 0.0);
    ch.lengths = {uniform(rng, 0.5, 1.5), uniform(rng, 0.5, 1.5)};
    ch.com_offsets = {uniform(rng, 0.2, 1.0) * ch.lengths[0], uniform(rng, 0.2, 1.0) * ch.lengths[1]};
    ro.model.chains.push_back(ch);
    for (int l = 0; l < 2; ++l) {
      Body link;
      link.name = "link" + std::to_string(l);
      link.kind = BodyKind::ChainLink;
      link.chain = 0;
      link.link = l;
      link.mass = uniform(rng, 0.5, 2);
      link.inertia = uniform(rng, 0.01, 0.2);
      link.shape = Circle{0.05};
      ro.model.bodies.push_back(link);
      q.push_back(uniform(rng, -1.5, 1.5));
      qd.push_back(uniform(rng, -1, 1));
    }
  }
  const int n = static_cast<int>(q.size());
  ro.initial.q = Eigen::Map<Eigen::VectorXd>(q.data(), n);
  ro.initial.qd = Eigen::Map<Eigen::VectorXd>(qd.data(), n);
  ro.tau.resize(n);
  for (int i = 0; i < n; ++i) ro.tau[i] = uniform(rng, -1, 1);
  ro.dt = uniform(rng, 0.005, 0.02);
  ro.steps = 5 + static_cast<int>(rng() % 6);
  return ro;
}

/// Random scene with one impact inside the first step: a ball or box hitting
/// the floor, or two balls colliding. Restitution stays away from 0 so the
/// bodies separate after the impact.
inline Rollout random_collision_scene(Rng& rng) {
  Rollout ro;
  ro.dt = uniform(rng, 0.05, 0.2);
  ro.steps = 1 + static_cast<int>(rng() % 3);
  const double eps = uniform(rng, 0.3, 1.0);
  const double mu = uniform(rng, 0.0, 0.8);
  const int kind = static_cast<int>(rng() % 3);
  if (kind == 0) {
    const double r = uniform(rng, 0.2, 0.6);
    ro.model.bodies = {fixed_floor(eps, mu), circle_body("ball", r, uniform(rng, 0.5, 2), eps, mu)};
    const double vy = -uniform(rng, 2, 5);
    const double gap = uniform(rng, 0.2, 0.8) * (-vy) * ro.dt;
    ro.initial.q = Eigen::Vector3d(0, r + gap, uniform(rng, -1, 1));
    ro.initial.qd = Eigen::Vector3d(uniform(rng, -1, 1), vy, uniform(rng, -2, 2));
  } else if (kind == 1) {
    const double w = uniform(rng, 0.3, 0.8), h = uniform(rng, 0.3, 0.8);
    ro.model.bodies = {fixed_floor(eps, mu), box_body("box", w, h, uniform(rng, 0.5, 2), eps, mu)};
    const double theta = uniform(rng, 0.2, 0.6);  // corner first
    const double low = 0.5 * (w * std::sin(theta) + h * std::cos(theta));
    const double vy = -uniform(rng, 2, 5);
    const double gap = uniform(rng, 0.2, 0.8) * (-vy) * ro.dt;
    ro.initial.q = Eigen::Vector3d(0, low + gap, theta);
    ro.initial.qd = Eigen::Vector3d(uniform(rng, -0.5, 0.5), vy, uniform(rng, -0.3, 0.3));
  } else {
    const double r = uniform(rng, 0.2, 0.5);
    ro.model.bodies = {circle_body("a", r, uniform(rng, 0.5, 2), eps, mu),
                       circle_body("b", r, uniform(rng, 0.5, 2), eps, mu)};
    const double speed = uniform(rng, 2, 5);
    const double gap = uniform(rng, 0.2, 0.8) * speed * ro.dt;
    const double offset = uniform(rng, -0.8, 0.8) * r;  // oblique, not grazing
    ro.initial.q.resize(6);
    ro.initial.qd.resize(6);
    ro.initial.q << 0, 0, 0, 0, 0, 0;
    const double dx = std::sqrt(4 * r * r - offset * offset) + gap;
    ro.initial.q << 0, 0, uniform(rng, -1, 1), dx, offset, uniform(rng, -1, 1);
    ro.initial.qd << speed, uniform(rng, -0.3, 0.3), uniform(rng, -1, 1), 0, 0, uniform(rng, -1, 1);
  }
  const Eigen::Index n = ro.initial.q.size();
  ro.tau.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) ro.tau[i] = uniform(rng, -0.5, 0.5);
  return ro;
}

inline Loss random_linear_loss(Rng& rng, Eigen::Index n) {
  Eigen::VectorXd wq(n), wqd(n);
  for (Eigen::Index i = 0; i < n; ++i) wq[i] = normal(rng);
  for (Eigen::Index i = 0; i < n; ++i) wqd[i] = normal(rng);
  return linear_loss(wq, wqd);
}

}  // namespace dsim::test
