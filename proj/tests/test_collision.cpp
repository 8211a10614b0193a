#include <doctest.h>

#include "dsim/collision.hpp"
#include "dsim/error.hpp"
#include "support.hpp"

using namespace dsim;

namespace {

// World position of the material point of `body` that sits at `p` when the
// configuration is q0.
Eigen::Vector2d material_point(const MechanismModel& model, const Eigen::VectorXd& q0, const Eigen::VectorXd& q,
                               int body, const Eigen::Vector2d& p) {
  const Layout layout = make_layout(model);
  const auto k0 = kinematics<double>(model, layout, q0);
  const auto k1 = kinematics<double>(model, layout, q);
  const auto& a = k0.poses[static_cast<std::size_t>(body)];
  const auto& b = k1.poses[static_cast<std::size_t>(body)];
  return b.position + rotate<double>(b.angle - a.angle, p - a.position);
}

// Central-difference oracle for the rows of one contact along direction v.
void check_rows_against_motion(const MechanismModel& model, const Eigen::VectorXd& q, const ContactPoint& c,
                               const Eigen::VectorXd& v, const Eigen::MatrixXd& rows) {
  const double h = 1e-6;
  auto rel = [&](double s) {
    const Eigen::VectorXd qs = q + s * v;
    return Eigen::Vector2d(material_point(model, q, qs, c.body_b, c.point) -
                           material_point(model, q, qs, c.body_a, c.point));
  };
  const Eigen::Vector2d dv = (rel(h) - rel(-h)) / (2 * h);
  const double n_rate = c.normal.dot(dv), t_rate = c.tangent.dot(dv);
  CHECK(std::abs(rows.row(0).dot(v) - n_rate) <= 1e-6 * (1.0 + std::abs(n_rate)));
  CHECK(std::abs(rows.row(1).dot(v) - t_rate) <= 1e-6 * (1.0 + std::abs(t_rate)));
  const double gap_rate = (reevaluate(model, q + h * v, c).gap - reevaluate(model, q - h * v, c).gap) / (2 * h);
  CHECK(std::abs(rows.row(0).dot(v) - gap_rate) <= 1e-6 * (1.0 + std::abs(gap_rate)));
}

MechanismModel two_bodies(const Body& a, const Body& b) {
  MechanismModel m;
  m.bodies = {a, b};
  return m;
}

// Random touching or slightly overlapping configuration of a random pair.
MechanismModel random_pair(test::Rng& rng, Eigen::VectorXd& q) {
  const int kind = static_cast<int>(rng() % 4);
  auto shape = [&](const std::string& name) {
    return (rng() % 2) ? test::circle_body(name, test::uniform(rng, 0.2, 0.5), 1.0)
                       : test::box_body(name, test::uniform(rng, 0.3, 0.8), test::uniform(rng, 0.3, 0.8), 1.0);
  };
  MechanismModel m;
  if (kind == 0) {
    m.bodies = {test::fixed_floor(), shape("x")};
    q = Eigen::Vector3d(0, 0, test::uniform(rng, -3, 3));
    const double target = -test::uniform(rng, 0.0, 5e-5);
    for (int i = 0; i < 50; ++i) q[1] -= pair_separation(m, q, 0, 1) - target;
  } else {
    m.bodies = {shape("x"), shape("y")};
    q.resize(6);
    q << 0, 0, test::uniform(rng, -3, 3), 2.0, test::uniform(rng, -0.3, 0.3), test::uniform(rng, -3, 3);
    const double target = -test::uniform(rng, 0.0, 5e-5);
    for (int i = 0; i < 50; ++i) q[3] -= pair_separation(m, q, 0, 1) - target;
  }
  return m;
}

}  // namespace

TEST_CASE("narrow phase examples") {
  SUBCASE("circle sunk into the floor") {
    const MechanismModel m = two_bodies(test::fixed_floor(), test::circle_body("c", 0.5, 1.0));
    const auto cs = narrow_phase(m, Eigen::Vector3d(0, 0.4, 0));
    REQUIRE(cs.size() == 1);
    CHECK(cs[0].gap == doctest::Approx(-0.1));
    CHECK(cs[0].normal.isApprox(Eigen::Vector2d(0, 1)));
    CHECK(std::abs(cs[0].normal.norm() - 1.0) < 1e-12);
    CHECK(std::abs(cs[0].normal.dot(cs[0].tangent)) < 1e-12);
  }
  SUBCASE("unit box resting on the floor") {
    const MechanismModel m = two_bodies(test::fixed_floor(), test::box_body("b", 1, 1, 1.0));
    const auto cs = narrow_phase(m, Eigen::Vector3d(0, 0.5, 0));
    REQUIRE(cs.size() == 2);
    CHECK(std::abs(cs[0].gap) < 1e-12);
    CHECK(std::abs(cs[1].gap) < 1e-12);
    CHECK(cs[0].point.x() != cs[1].point.x());
  }
  SUBCASE("circles too far apart") {
    const MechanismModel m = two_bodies(test::circle_body("a", 1, 1), test::circle_body("b", 1, 1));
    Eigen::VectorXd q(6);
    q << 0, 0, 0, 3, 0, 0;
    CHECK(narrow_phase(m, q).empty());
  }
  SUBCASE("box stacked on box gives a two-point manifold") {
    const MechanismModel m = two_bodies(test::box_body("a", 1, 1, 1), test::box_body("b", 0.6, 0.6, 1));
    Eigen::VectorXd q(6);
    q << 0, 0, 0, 0.1, 0.8, 0;
    const auto cs = narrow_phase(m, q);
    REQUIRE(cs.size() == 2);
    for (const auto& c : cs) {
      CHECK(std::abs(c.gap) < 1e-12);
      CHECK(c.normal.isApprox(Eigen::Vector2d(0, 1)));
    }
  }
  SUBCASE("circle against a polygon corner") {
    const MechanismModel m = two_bodies(test::box_body("a", 1, 1, 1), test::circle_body("b", 0.25, 1));
    Eigen::VectorXd q(6);
    const double d = 0.25 / std::sqrt(2.0);
    q << 0, 0, 0, 0.5 + d, 0.5 + d, 0;
    const auto cs = narrow_phase(m, q);
    REQUIRE(cs.size() == 1);
    CHECK(std::abs(cs[0].gap) < 1e-12);
    CHECK(cs[0].normal.isApprox(Eigen::Vector2d(1, 1).normalized()));
  }
  SUBCASE("ordering is deterministic") {
    const MechanismModel m = two_bodies(test::fixed_floor(), test::box_body("b", 1, 1, 1.0));
    const auto a = narrow_phase(m, Eigen::Vector3d(0.3, 0.5, 0));
    const auto b = narrow_phase(m, Eigen::Vector3d(0.3, 0.5, 0));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].point == b[i].point);
  }
}

TEST_CASE("contact Jacobian rows") {
  SUBCASE("circle on the floor") {
    const MechanismModel m = two_bodies(test::fixed_floor(), test::circle_body("c", 0.5, 1.0));
    const Eigen::Vector3d q(0.2, 0.5, 0.3);
    const ContactSet cs = make_contact_set(m, q, narrow_phase(m, q));
    REQUIRE(cs.J.rows() == 2);
    const Eigen::Vector2d lever = cs.contacts[0].point - q.head<2>();
    const Eigen::Vector2d n = cs.contacts[0].normal, t = cs.contacts[0].tangent;
    CHECK(cs.J.row(0).isApprox(Eigen::RowVector3d(n.x(), n.y(), n.dot(perp<double>(lever))), 1e-12));
    CHECK(cs.J.row(1).isApprox(Eigen::RowVector3d(t.x(), t.y(), t.dot(perp<double>(lever))), 1e-12));
    CHECK(cs.J(0, 2) == doctest::Approx(0.0));
    CHECK(std::abs(cs.J(1, 2)) == doctest::Approx(0.5));
    REQUIRE(cs.friction.size() == 1);
    CHECK(cs.friction[0].index == 1);
    CHECK(cs.friction[0].normal == 0);
  }
  SUBCASE("pendulum tip touching the floor") {
    MechanismModel m;
    m.bodies.push_back(test::fixed_floor());
    Chain ch;
    ch.base = Eigen::Vector2d(0, 1.2);
    ch.lengths = {1.0};
    ch.com_offsets = {1.0};
    m.chains.push_back(ch);
    Body tip;
    tip.kind = BodyKind::ChainLink;
    tip.chain = 0;
    tip.link = 0;
    tip.inertia = 0.0;
    tip.shape = Circle{0.2};
    m.bodies.push_back(tip);
    Eigen::VectorXd q(1);
    q << -M_PI / 2 + 0.1;
    const auto contacts = narrow_phase(m, q, 0.1);
    REQUIRE(contacts.size() == 1);
    const Eigen::MatrixXd J = contact_jacobian(m, q, contacts);
    // Tip height 1.2 + sin(q): d/dq = cos(q).
    CHECK(J(0, 0) == doctest::Approx(std::cos(q[0])).epsilon(1e-10));
  }
  SUBCASE("rows match material-point motion on random pairs") {
    test::Rng rng(17);
    int checked = 0;
    for (int t = 0; t < 200; ++t) {
      Eigen::VectorXd q;
      const MechanismModel m = random_pair(rng, q);
      const auto contacts = narrow_phase(m, q);
      if (contacts.empty()) continue;
      const Eigen::MatrixXd J = contact_jacobian(m, q, contacts);
      Eigen::VectorXd v(q.size());
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = test::normal(rng);
      for (std::size_t j = 0; j < contacts.size(); ++j) {
        check_rows_against_motion(m, q, contacts[j], v, J.middleRows(2 * static_cast<Eigen::Index>(j), 2));
        ++checked;
      }
    }
    CHECK(checked > 150);
  }
}

TEST_CASE("derivative of J^T f") {
  test::Rng rng(23);
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd q;
    const MechanismModel m = random_pair(rng, q);
    const auto contacts = narrow_phase(m, q);
    if (contacts.empty()) continue;
    const Eigen::Index rows = 2 * static_cast<Eigen::Index>(contacts.size());
    CHECK(jacobian_transpose_derivative(m, q, contacts, Eigen::VectorXd::Zero(rows)).cwiseAbs().maxCoeff() == 0.0);

    Eigen::VectorXd f(rows);
    for (Eigen::Index i = 0; i < rows; ++i) f[i] = test::normal(rng);
    const Eigen::MatrixXd D = jacobian_transpose_derivative(m, q, contacts, f);
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < q.size(); ++k) {
      Eigen::VectorXd qp = q, qm = q;
      qp[k] += h;
      qm[k] -= h;
      const Eigen::VectorXd num =
          (contact_jacobian(m, qp, contacts).transpose() * f - contact_jacobian(m, qm, contacts).transpose() * f) / (2 * h);
      CHECK((D.col(k) - num).cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + num.cwiseAbs().maxCoeff()));
    }

    Eigen::MatrixXd G(rows, q.size());
    for (Eigen::Index i = 0; i < G.size(); ++i) G.data()[i] = test::normal(rng);
    const Eigen::VectorXd g = jacobian_contraction_gradient(m, q, contacts, G);
    for (Eigen::Index k = 0; k < q.size(); ++k) {
      Eigen::VectorXd qp = q, qm = q;
      qp[k] += h;
      qm[k] -= h;
      const double num = ((G.cwiseProduct(contact_jacobian(m, qp, contacts))).sum() -
                          (G.cwiseProduct(contact_jacobian(m, qm, contacts))).sum()) / (2 * h);
      CHECK(std::abs(g[k] - num) <= 1e-6 * (1.0 + std::abs(num)));
    }
  }
}

TEST_CASE("ccd examples") {
  const Rollout slow = test::ball_drop(0.5, 1.0, 1.0, 1.0, 1.0);
  auto hit = ccd_toi(slow.model, slow.initial, 1.0);
  REQUIRE(hit.has_value());
  CHECK(hit->toi == doctest::Approx(0.5).epsilon(1e-10));

  const Rollout fast = test::ball_drop(0.5, 1.0, 2.0, 1.0, 1.0);
  hit = ccd_toi(fast.model, fast.initial, 1.0);
  REQUIRE(hit.has_value());
  CHECK(hit->toi == doctest::Approx(0.25).epsilon(1e-10));

  const MechanismModel circles = two_bodies(test::circle_body("a", 1, 1), test::circle_body("b", 1, 1));
  SystemState s;
  s.q.resize(6);
  s.qd.resize(6);
  s.q << 0, 0, 0, 3, 0, 0;
  s.qd << 0.5, 0, 0, -0.5, 0, 0;
  hit = ccd_toi(circles, s, 2.0);
  REQUIRE(hit.has_value());
  CHECK(hit->toi == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(!ccd_toi(circles, s, 0.9).has_value());

  // Collinear, disjoint edges sliding along their common line.
  MechanismModel boxes = two_bodies(test::box_body("a", 1, 1, 1), test::box_body("b", 1, 1, 1));
  boxes.bodies[0].kind = BodyKind::Fixed;
  SystemState e;
  e.q.resize(3);
  e.qd.resize(3);
  e.q << 3.0, 1.0, 0.0;
  e.qd << 2.0, 0.0, 0.0;
  CHECK(!ccd_toi(boxes, e, 1.0).has_value());
}

TEST_CASE("ccd is conservative against fine substepping") {
  test::Rng rng(31);
  int hits = 0;
  for (int t = 0; t < 200; ++t) {
    const int kind = static_cast<int>(rng() % 3);
    MechanismModel m;
    auto shape = [&](const std::string& name) {
      return (rng() % 2) ? test::circle_body(name, test::uniform(rng, 0.1, 0.4), 1.0)
                         : test::box_body(name, test::uniform(rng, 0.2, 0.6), test::uniform(rng, 0.05, 0.6), 1.0);
    };
    SystemState s;
    if (kind == 0) {
      m.bodies = {test::fixed_floor(), shape("x")};
      s.q = Eigen::Vector3d(0, 1.0, test::uniform(rng, -3, 3));
      s.qd = Eigen::Vector3d(test::uniform(rng, -2, 2), -test::uniform(rng, 0.5, 4), test::uniform(rng, -4, 4));
    } else {
      m.bodies = {shape("x"), shape("y")};
      if (kind == 2) m.bodies[0].kind = BodyKind::Fixed;
      const int n = kind == 2 ? 3 : 6;
      s.q.resize(n);
      s.qd.resize(n);
      if (kind == 2) {
        m.bodies[0].pose = Eigen::Vector3d(0, 0, test::uniform(rng, -1, 1));
        s.q << 1.5, test::uniform(rng, -0.4, 0.4), test::uniform(rng, -3, 3);
        s.qd << -test::uniform(rng, 0.5, 4), test::uniform(rng, -1, 1), test::uniform(rng, -4, 4);
      } else {
        s.q << 0, 0, test::uniform(rng, -3, 3), 1.5, test::uniform(rng, -0.4, 0.4), test::uniform(rng, -3, 3);
        s.qd << test::uniform(rng, 0, 2), 0, test::uniform(rng, -4, 4), -test::uniform(rng, 0.5, 2),
            test::uniform(rng, -1, 1), test::uniform(rng, -4, 4);
      }
    }
    if (pair_separation(m, s.q, 0, 1) <= 1e-6) continue;
    const double dt = 1.0;
    const auto hit = ccd_toi(m, s, dt);
    const double end = hit ? hit->toi : dt;
    double worst = 1.0;
    for (int i = 0; i <= 1000; ++i) {
      const double tau = end * i / 1000.0;
      worst = std::min(worst, pair_separation(m, s.q + tau * s.qd, 0, 1));
    }
    CHECK_MESSAGE(worst >= -1e-6, "trial " << t << " kind " << kind << " q " << s.q.transpose() << " qd "
                                             << s.qd.transpose() << " toi " << (hit ? hit->toi : -1.0));
    if (hit) {
      ++hits;
      const double g = reevaluate(m, s.q + hit->toi * s.qd, hit->contact).gap;
      CHECK(g >= -1e-9);
      CHECK(g <= 1e-6);
      CHECK(hit->toi >= 1e-12 * dt);
    }
  }
  CHECK(hits > 50);
}

TEST_CASE("resting and immediate contacts") {
  // Touching and approaching: immediate response.
  Rollout r = test::ball_drop(0.5, 0.5, 1.0, 1.0, 1.0);
  auto hit = ccd_toi(r.model, r.initial, 1.0);
  REQUIRE(hit.has_value());
  CHECK(hit->toi == 0.0);
  // Touching and separating: left to the stepping LCP.
  r.initial.qd[1] = 1.0;
  CHECK(!ccd_toi(r.model, r.initial, 1.0).has_value());
}

TEST_CASE("shape validation") {
  CHECK_THROWS_AS(check_shape(Circle{0.0}), Error);
  Polygon cw{{Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 1), Eigen::Vector2d(1, 0)}};
  CHECK_THROWS_AS(check_shape(cw), Error);
  CHECK_THROWS_AS(check_shape(HalfPlane{Eigen::Vector2d(0, 2), 0.0}), Error);
  CHECK_NOTHROW(check_shape(make_box(1, 2)));
  CHECK(edge_normal(make_box(2, 2), 0).norm() == doctest::Approx(1.0));
}
