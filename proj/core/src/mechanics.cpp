#include "dsim/mechanics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <unsupported/Eigen/AutoDiff>

#include "dsim/error.hpp"

namespace dsim {

namespace {

constexpr std::size_t kMaxChainLinks = 4;

using AD = Eigen::AutoDiffScalar<Eigen::VectorXd>;

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::InvalidModel, msg); }

void check_material(const Body& b) {
  if (!(b.material.restitution >= 0.0 && b.material.restitution <= 1.0)) {
    invalid("body '" + b.name + "': restitution must lie in [0, 1]");
  }
  if (!(b.material.friction >= 0.0)) invalid("body '" + b.name + "': friction must be non-negative");
}

}  // namespace

Layout make_layout(const MechanismModel& model) {
  Layout L;
  L.body_offset.assign(model.bodies.size(), -1);
  L.chain_offset.assign(model.chains.size(), -1);
  L.chain_bodies.resize(model.chains.size());
  for (std::size_t c = 0; c < model.chains.size(); ++c) {
    const Chain& ch = model.chains[c];
    if (ch.lengths.empty() || ch.lengths.size() > kMaxChainLinks) invalid("chain needs 1 to 4 links");
    if (ch.com_offsets.size() != ch.lengths.size()) invalid("chain needs one center-of-mass offset per link");
    L.chain_bodies[c].assign(ch.lengths.size(), -1);
  }

  for (std::size_t b = 0; b < model.bodies.size(); ++b) {
    const Body& body = model.bodies[b];
    check_shape(body.shape);
    check_material(body);
    if (std::holds_alternative<HalfPlane>(body.shape) && body.kind != BodyKind::Fixed) {
      invalid("body '" + body.name + "': half-planes must be fixed");
    }
    switch (body.kind) {
      case BodyKind::Fixed:
        break;
      case BodyKind::Free:
        if (!(body.mass > 0.0) || !(body.inertia > 0.0)) invalid("body '" + body.name + "': mass and inertia must be positive");
        L.body_offset[b] = L.dof;
        L.dof += 3;
        L.dynamic_bodies.push_back(static_cast<int>(b));
        break;
      case BodyKind::ChainLink: {
        // Point-mass links are allowed; positive-definiteness of M comes from the masses.
        if (!(body.mass > 0.0) || !(body.inertia >= 0.0)) invalid("body '" + body.name + "': bad inertial parameters");
        if (body.chain < 0 || body.chain >= static_cast<int>(model.chains.size())) invalid("body '" + body.name + "': unknown chain");
        auto& slots = L.chain_bodies[static_cast<std::size_t>(body.chain)];
        if (body.link < 0 || body.link >= static_cast<int>(slots.size())) invalid("body '" + body.name + "': link index out of range");
        if (slots[static_cast<std::size_t>(body.link)] >= 0) invalid("body '" + body.name + "': link already taken");
        slots[static_cast<std::size_t>(body.link)] = static_cast<int>(b);
        if (L.chain_offset[static_cast<std::size_t>(body.chain)] < 0) {
          L.chain_offset[static_cast<std::size_t>(body.chain)] = L.dof;
          L.dof += static_cast<int>(slots.size());
        }
        L.dynamic_bodies.push_back(static_cast<int>(b));
        break;
      }
    }
  }
  for (const auto& slots : L.chain_bodies) {
    if (std::find(slots.begin(), slots.end(), -1) != slots.end()) invalid("every chain link needs a body");
  }
  return L;
}

Eigen::VectorXd inertial_parameters(const MechanismModel& model) {
  const Layout L = make_layout(model);
  Eigen::VectorXd m(2 * static_cast<Eigen::Index>(L.dynamic_bodies.size()));
  for (std::size_t i = 0; i < L.dynamic_bodies.size(); ++i) {
    const Body& b = model.bodies[static_cast<std::size_t>(L.dynamic_bodies[i])];
    m[2 * static_cast<Eigen::Index>(i)] = b.mass;
    m[2 * static_cast<Eigen::Index>(i) + 1] = b.inertia;
  }
  return m;
}

void set_inertial_parameters(MechanismModel& model, const Eigen::VectorXd& m) {
  const Layout L = make_layout(model);
  if (m.size() != 2 * static_cast<Eigen::Index>(L.dynamic_bodies.size())) {
    throw Error(ErrorCode::DimensionMismatch, "inertial parameter vector has wrong length");
  }
  for (std::size_t i = 0; i < L.dynamic_bodies.size(); ++i) {
    Body& b = model.bodies[static_cast<std::size_t>(L.dynamic_bodies[i])];
    b.mass = m[2 * static_cast<Eigen::Index>(i)];
    b.inertia = m[2 * static_cast<Eigen::Index>(i) + 1];
  }
  make_layout(model);
}

double pair_restitution(const MechanismModel& model, int a, int b) {
  if (model.restitution_override) return *model.restitution_override;
  return std::max(model.bodies[static_cast<std::size_t>(a)].material.restitution,
                  model.bodies[static_cast<std::size_t>(b)].material.restitution);
}

double pair_friction(const MechanismModel& model, int a, int b) {
  if (model.friction_override) return *model.friction_override;
  return std::sqrt(model.bodies[static_cast<std::size_t>(a)].material.friction *
                   model.bodies[static_cast<std::size_t>(b)].material.friction);
}

Eigen::RowVectorXd angular_jacobian(const MechanismModel& model, const Layout& layout, int body) {
  Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(layout.dof);
  const Body& b = model.bodies[static_cast<std::size_t>(body)];
  if (b.kind == BodyKind::Free) {
    w[layout.body_offset[static_cast<std::size_t>(body)] + 2] = 1.0;
  } else if (b.kind == BodyKind::ChainLink) {
    const int o = layout.chain_offset[static_cast<std::size_t>(b.chain)];
    for (int j = 0; j <= b.link; ++j) w[o + j] = 1.0;
  }
  return w;
}

Eigen::MatrixXd mass_matrix(const MechanismModel& model, const Eigen::VectorXd& q) {
  const Layout L = make_layout(model);
  if (q.size() != L.dof) throw Error(ErrorCode::DimensionMismatch, "q has wrong length");
  return mass_matrix_t<double>(model, L, q);
}

Eigen::VectorXd coriolis(const MechanismModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& qd) {
  const Layout L = make_layout(model);
  if (q.size() != L.dof || qd.size() != L.dof) throw Error(ErrorCode::DimensionMismatch, "state has wrong length");
  return coriolis_t<double>(model, L, q, qd);
}

double kinetic_energy(const MechanismModel& model, const SystemState& s) {
  return 0.5 * s.qd.dot(mass_matrix(model, s.q) * s.qd);
}

InertialDerivatives inertial_derivatives(const MechanismModel& model, const Eigen::VectorXd& q,
                                         const Eigen::VectorXd& qd) {
  const Layout L = make_layout(model);
  const int n = L.dof;
  if (q.size() != n || qd.size() != n) throw Error(ErrorCode::DimensionMismatch, "state has wrong length");

  // Forward mode with q and qd as the 2n active variables.
  VecX<AD> qa(n), qda(n);
  for (int i = 0; i < n; ++i) {
    qa[i] = AD(q[i], 2 * n, i);
    qda[i] = AD(qd[i], 2 * n, n + i);
  }
  const MatX<AD> Ma = mass_matrix_t<AD>(model, L, qa);
  const VecX<AD> ca = coriolis_t<AD>(model, L, qa, qda);

  InertialDerivatives d;
  d.dM_dq.assign(static_cast<std::size_t>(n), Eigen::MatrixXd::Zero(n, n));
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const Eigen::VectorXd& g = Ma(r, c).derivatives();
      if (g.size() == 0) continue;
      for (int k = 0; k < n; ++k) d.dM_dq[static_cast<std::size_t>(k)](r, c) = g[k];
    }
  }
  d.dc_dq = Eigen::MatrixXd::Zero(n, n);
  d.dc_dqd = Eigen::MatrixXd::Zero(n, n);
  for (int r = 0; r < n; ++r) {
    const Eigen::VectorXd& g = ca[r].derivatives();
    if (g.size() == 0) continue;
    d.dc_dq.row(r) = g.head(n).transpose();
    d.dc_dqd.row(r) = g.tail(n).transpose();
  }

  // M and c are linear in the inertial parameters.
  const Kinematics<double> kin = kinematics<double>(model, L, q);
  const auto nb = L.dynamic_bodies.size();
  d.dM_dm.assign(2 * nb, Eigen::MatrixXd::Zero(n, n));
  d.dc_dm = Eigen::MatrixXd::Zero(n, 2 * static_cast<Eigen::Index>(nb));
  MechanismModel unit = model;
  for (Body& b : unit.bodies) b.mass = 1.0;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
  for (std::size_t i = 0; i < nb; ++i) {
    const int b = L.dynamic_bodies[i];
    const auto J = point_jacobian<double>(model, L, kin, b, kin.poses[static_cast<std::size_t>(b)].position);
    const Eigen::RowVectorXd w = angular_jacobian(model, L, b);
    d.dM_dm[2 * i] = J.transpose() * J;
    d.dM_dm[2 * i + 1] = w.transpose() * w;
    // c for this body alone at unit mass.
    MechanismModel single = unit;
    for (std::size_t o = 0; o < single.bodies.size(); ++o) {
      if (static_cast<int>(o) != b && single.bodies[o].kind != BodyKind::Fixed) single.bodies[o].mass = 0.0;
    }
    d.dc_dm.col(2 * static_cast<Eigen::Index>(i)) = coriolis_t<double>(single, L, q, qd);
  }
  return d;
}

InertialPartials inertial_partials(const MechanismModel& model, const Eigen::VectorXd& q,
                                   const Eigen::VectorXd& qd, const Eigen::VectorXd& z) {
  const InertialDerivatives d = inertial_derivatives(model, q, qd);
  const Eigen::MatrixXd M = mass_matrix(model, q);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  const Eigen::VectorXd y = ldlt.solve(z);
  const Eigen::Index n = q.size();
  InertialPartials p;
  p.dMinvz_dq.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) p.dMinvz_dq.col(k) = -ldlt.solve(d.dM_dq[static_cast<std::size_t>(k)] * y);
  p.dMinvz_dm.resize(n, static_cast<Eigen::Index>(d.dM_dm.size()));
  for (std::size_t j = 0; j < d.dM_dm.size(); ++j) {
    p.dMinvz_dm.col(static_cast<Eigen::Index>(j)) = -ldlt.solve(d.dM_dm[j] * y);
  }
  p.dc_dq = d.dc_dq;
  p.dc_dqd = d.dc_dqd;
  p.dc_dm = d.dc_dm;
  return p;
}

}  // namespace dsim
