#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

#include "collision_detail.hpp"
#include "dsim/collision.hpp"
#include "dsim/error.hpp"

namespace dsim {

namespace {

using AD = Eigen::AutoDiffScalar<Eigen::VectorXd>;

VecX<AD> active(const Eigen::VectorXd& q) {
  VecX<AD> qa(q.size());
  for (Eigen::Index i = 0; i < q.size(); ++i) qa[i] = AD(q[i], q.size(), i);
  return qa;
}

Eigen::VectorXd grad(const AD& x, Eigen::Index n) {
  return x.derivatives().size() == 0 ? Eigen::VectorXd::Zero(n) : Eigen::VectorXd(x.derivatives());
}

}  // namespace

Eigen::MatrixXd contact_jacobian(const MechanismModel& model, const Eigen::VectorXd& q,
                                 const std::vector<ContactPoint>& contacts) {
  const Layout layout = make_layout(model);
  if (q.size() != layout.dof) throw Error(ErrorCode::DimensionMismatch, "q has wrong length");
  const Kinematics<double> kin = kinematics<double>(model, layout, q);
  Eigen::MatrixXd J(2 * static_cast<Eigen::Index>(contacts.size()), layout.dof);
  Eigen::Matrix<double, 2, Eigen::Dynamic> rows;
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    detail::contact_rows<double>(model, layout, kin, contacts[i], rows);
    J.middleRows(2 * static_cast<Eigen::Index>(i), 2) = rows;
  }
  return J;
}

ContactSet make_contact_set(const MechanismModel& model, const Eigen::VectorXd& q,
                            std::vector<ContactPoint> contacts) {
  ContactSet set;
  for (ContactPoint& c : contacts) c = reevaluate(model, q, c);
  set.J = contact_jacobian(model, q, contacts);
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    const int row = 2 * static_cast<int>(i);
    set.friction.push_back({row + 1, row, pair_friction(model, contacts[i].body_a, contacts[i].body_b)});
  }
  set.contacts = std::move(contacts);
  return set;
}

Eigen::VectorXd jacobian_contraction_gradient(const MechanismModel& model, const Eigen::VectorXd& q,
                                              const std::vector<ContactPoint>& contacts,
                                              const Eigen::MatrixXd& G) {
  const Layout layout = make_layout(model);
  const Eigen::Index n = layout.dof;
  if (q.size() != n || G.rows() != 2 * static_cast<Eigen::Index>(contacts.size()) || G.cols() != n) {
    throw Error(ErrorCode::DimensionMismatch, "weight matrix must match the Jacobian");
  }
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  if (contacts.empty()) return g;
  const Kinematics<AD> kin = kinematics<AD>(model, layout, active(q));
  Eigen::Matrix<AD, 2, Eigen::Dynamic> rows;
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    const Eigen::Index r = 2 * static_cast<Eigen::Index>(i);
    if (G.middleRows(r, 2).isZero(0.0)) continue;
    detail::contact_rows<AD>(model, layout, kin, contacts[i], rows);
    AD s(0.0);
    for (Eigen::Index k = 0; k < n; ++k) {
      s += rows(0, k) * G(r, k) + rows(1, k) * G(r + 1, k);
    }
    g += grad(s, n);
  }
  return g;
}

Eigen::MatrixXd jacobian_transpose_derivative(const MechanismModel& model, const Eigen::VectorXd& q,
                                              const std::vector<ContactPoint>& contacts,
                                              const Eigen::VectorXd& f) {
  const Layout layout = make_layout(model);
  const Eigen::Index n = layout.dof;
  if (f.size() != 2 * static_cast<Eigen::Index>(contacts.size())) {
    throw Error(ErrorCode::DimensionMismatch, "force vector must have two entries per contact");
  }
  // Row k of J^T f is sum_i f_i J_ik; its gradient is one contraction with G = f e_k^T.
  Eigen::MatrixXd D(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(f.size(), n);
    G.col(k) = f;
    D.row(k) = jacobian_contraction_gradient(model, q, contacts, G).transpose();
  }
  return D;
}

}  // namespace dsim
