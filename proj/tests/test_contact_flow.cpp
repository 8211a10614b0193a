#include <doctest.h>

#include "dsim/contact_flow.hpp"
#include "dsim/error.hpp"
#include "dsim/experiments.hpp"
#include "support.hpp"

using namespace dsim;

namespace {

bool shape_ok(const StepTape& tape) {
  // P, (C, P)*
  if (tape.segments.empty() || tape.segments.size() % 2 == 0) return false;
  for (std::size_t i = 0; i < tape.segments.size(); ++i) {
    const SegmentKind want = i % 2 == 0 ? SegmentKind::P : SegmentKind::C;
    if (tape.segments[i].kind != want) return false;
  }
  return true;
}

double dt_sum(const StepTape& tape) {
  double s = 0.0;
  for (const Segment& seg : tape.segments) s += seg.dt;
  return s;
}

Eigen::Vector2d momentum(const MechanismModel& m, const Eigen::VectorXd& qd) {
  Eigen::Vector2d p = Eigen::Vector2d::Zero();
  const Layout layout = make_layout(m);
  for (std::size_t b = 0; b < m.bodies.size(); ++b) {
    if (m.bodies[b].kind != BodyKind::Free) continue;
    p += m.bodies[b].mass * qd.segment<2>(layout.body_offset[b]);
  }
  return p;
}

// Two circles meeting at an oblique angle, touching at q.
Rollout circle_pair(test::Rng& rng, double eps, double mu) {
  Rollout r;
  const double ra = test::uniform(rng, 0.2, 0.5), rb = test::uniform(rng, 0.2, 0.5);
  r.model.bodies = {test::circle_body("a", ra, test::uniform(rng, 0.5, 3), eps, mu),
                    test::circle_body("b", rb, test::uniform(rng, 0.5, 3), eps, mu)};
  const double angle = test::uniform(rng, -0.8, 0.8);
  r.initial.q.resize(6);
  r.initial.qd.resize(6);
  r.initial.q << 0, 0, 0, (ra + rb) * std::cos(angle), (ra + rb) * std::sin(angle), 0;
  r.initial.qd << test::uniform(rng, 0.5, 3), test::uniform(rng, -1, 1), test::uniform(rng, -3, 3),
      -test::uniform(rng, 0.5, 3), test::uniform(rng, -1, 1), test::uniform(rng, -3, 3);
  r.tau = Eigen::VectorXd::Zero(6);
  return r;
}

}  // namespace

TEST_CASE("P step without contact is ballistic Euler") {
  MechanismModel m;
  m.gravity = Eigen::Vector2d(0, -10);
  m.bodies.push_back(test::circle_body("c", 0.1, 1.0));
  SystemState s;
  s.q = Eigen::Vector3d(1, 2, 0.3);
  s.qd = Eigen::Vector3d(0.5, 1.0, 2.0);
  const SegmentResult r = step_p(m, s, Eigen::VectorXd::Zero(3), 0.1);
  CHECK(r.next.qd.isApprox(Eigen::Vector3d(0.5, 0.0, 2.0)));
  CHECK((r.next.q - (s.q + 0.1 * s.qd)).norm() == 0.0);
  CHECK(r.segment.lcp.dim() == 0);
  CHECK_THROWS_AS(step_p(m, s, Eigen::VectorXd::Zero(3), -0.1), Error);
}

TEST_CASE("box resting on the floor") {
  MechanismModel m;
  m.gravity = Eigen::Vector2d(0, -9.81);
  m.bodies = {test::fixed_floor(0.0, 0.5), test::box_body("box", 1, 1, 2.0, 0.0, 0.5)};
  SystemState s;
  s.q = Eigen::Vector3d(0, 0.5, 0);
  s.qd = Eigen::Vector3d::Zero();
  const double dt = 0.01;
  const SegmentResult r = step_p(m, s, Eigen::VectorXd::Zero(3), dt);
  CHECK(r.next.qd.norm() <= 1e-12);
  double normal_sum = 0.0;
  for (int i = 0; i < r.segment.lcp.dim(); i += 2) normal_sum += r.segment.solution.f[i];
  CHECK(std::abs(normal_sum - 2.0 * 9.81 * dt) <= 1e-10);

  SystemState cur = s;
  for (int k = 0; k < 100; ++k) cur = step_full(m, cur, Eigen::VectorXd::Zero(3), dt).next;
  CHECK(cur.qd.norm() <= 1e-10);
}

TEST_CASE("collision response examples") {
  SUBCASE("elastic and plastic floor impacts") {
    for (double eps : {1.0, 0.0}) {
      const Rollout r = test::ball_drop(0.5, 0.5, 2.0, eps, 1.0);
      const auto contacts = narrow_phase(r.model, r.initial.q);
      const SegmentResult c = collision_response(r.model, r.initial, contacts);
      CHECK(c.next.q == r.initial.q);
      CHECK(c.next.qd.isApprox(Eigen::Vector3d(0, 2.0 * eps, 0), 1e-12));
      CHECK(c.segment.dt == 0.0);
    }
  }
  SUBCASE("equal masses exchange velocities") {
    MechanismModel m;
    m.bodies = {test::circle_body("a", 0.5, 1.0, 1.0), test::circle_body("b", 0.5, 1.0, 1.0)};
    SystemState s;
    s.q.resize(6);
    s.qd.resize(6);
    s.q << 0, 0, 0, 1, 0, 0;
    s.qd << 1.5, 0, 0, -0.5, 0, 0;
    const SegmentResult c = collision_response(m, s, narrow_phase(m, s.q));
    CHECK(c.next.qd[0] == doctest::Approx(-0.5));
    CHECK(c.next.qd[3] == doctest::Approx(1.5));
  }
  SUBCASE("post-impact normal velocities obey restitution") {
    test::Rng rng(3);
    for (int t = 0; t < 50; ++t) {
      const double eps = test::uniform(rng, 0, 1);
      Rollout r = circle_pair(rng, eps, test::uniform(rng, 0, 1));
      const auto contacts = narrow_phase(r.model, r.initial.q);
      REQUIRE(contacts.size() == 1);
      const SegmentResult c = collision_response(r.model, r.initial, contacts);
      const Eigen::RowVectorXd Jn = c.segment.contacts.J.row(0);
      const double before = Jn.dot(r.initial.qd), after = Jn.dot(c.next.qd);
      if (before < 0.0) CHECK(after + eps * before >= -1e-9);
    }
  }
}

TEST_CASE("step_full: bounce inside one step") {
  const Rollout r = test::ball_drop(0.5, 1.0, 1.0, 1.0, 1.0);
  const StepResult res = step_full(r.model, r.initial, r.tau, 1.0);
  CHECK(res.events.collisions == 1);
  REQUIRE(res.events.tois.size() == 1);
  CHECK(res.events.tois[0] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(res.next.q[1] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(res.next.qd[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(shape_ok(res.tape));
  CHECK(res.tape.segments.size() == 3);
  CHECK(std::abs(dt_sum(res.tape) - 1.0) <= 1e-12);
  CHECK(res.next.t == doctest::Approx(1.0));

  StepOptions dcd;
  dcd.ccd = false;
  const StepResult d = step_full(r.model, r.initial, r.tau, 1.0, dcd);
  CHECK(d.next.q[1] == doctest::Approx(0.0));
}

TEST_CASE("step_full: free flight records one P segment") {
  MechanismModel m;
  m.bodies.push_back(test::circle_body("c", 0.1, 1.0));
  SystemState s;
  s.q = Eigen::Vector3d(0, 0, 0);
  s.qd = Eigen::Vector3d(1, 1, 1);
  const StepResult r = step_full(m, s, Eigen::VectorXd::Zero(3), 0.1);
  CHECK(r.tape.segments.size() == 1);
  CHECK(r.events.collisions == 0);
  CHECK_THROWS_AS(step_full(m, s, Eigen::VectorXd::Zero(3), 0.0), Error);
}

TEST_CASE("step_full: thin wall is never tunnelled") {
  SceneConfig sc = load_scene(std::string(DSIM_SCENE_DIR) + "/thin_wall.json");
  const Trajectory t = simulate_scene(sc);
  int collisions = 0;
  for (std::size_t k = 0; k < t.states.size(); ++k) {
    CHECK(min_separation(sc.model, t.states[k].q) >= -1e-6);
  }
  for (std::size_t k = 0; k < t.tapes.size(); ++k) {
    const StepTape& tape = t.tapes[k];
    CHECK(shape_ok(tape));
    CHECK(std::abs(dt_sum(tape) - sc.dt) <= 1e-12);
    int cs = 0;
    for (const Segment& seg : tape.segments) cs += seg.kind == SegmentKind::C;
    CHECK(cs == t.events[k].collisions);
    collisions += cs;
  }
  CHECK(collisions >= 1);

  sc.options.ccd = false;
  const Trajectory d = simulate_scene(sc);
  double worst = 0.0;
  for (const SystemState& s : d.states) worst = std::min(worst, min_separation(sc.model, s.q));
  CHECK(worst < -1e-3);  // the discrete control run does pass through
}

TEST_CASE("momentum and energy across responses") {
  test::Rng rng(77);
  for (int t = 0; t < 100; ++t) {
    const bool elastic_frictionless = t % 2 == 0;
    const double eps = elastic_frictionless ? 1.0 : test::uniform(rng, 0, 1);
    const double mu = elastic_frictionless ? 0.0 : test::uniform(rng, 0, 1);
    const Rollout r = circle_pair(rng, eps, mu);
    const auto contacts = narrow_phase(r.model, r.initial.q);
    const SegmentResult c = collision_response(r.model, r.initial, contacts);
    CHECK((momentum(r.model, c.next.qd) - momentum(r.model, r.initial.qd)).cwiseAbs().maxCoeff() <= 1e-10);
    const double e0 = kinetic_energy(r.model, r.initial), e1 = kinetic_energy(r.model, c.next);
    if (elastic_frictionless) CHECK(std::abs(e1 - e0) <= 1e-8 * e0);
    else CHECK(e1 <= e0 * (1.0 + 1e-12));
  }
}

TEST_CASE("tape replay is bit-for-bit") {
  for (const char* name : {"thin_wall", "push", "bounce", "slide"}) {
    const SceneConfig sc = load_scene(std::string(DSIM_SCENE_DIR) + "/" + name + ".json");
    SystemState s = sc.initial;
    const Eigen::VectorXd tau = sc.tau.size() ? sc.tau : Eigen::VectorXd::Zero(s.q.size());
    for (int k = 0; k < std::min(sc.steps, 40); ++k) {
      const StepResult r = step_full(sc.model, s, tau, sc.dt, sc.options);
      const SystemState again = replay(sc.model, r.tape, sc.options);
      CHECK(again.q == r.next.q);
      CHECK(again.qd == r.next.qd);
      s = r.next;
    }
  }
}

TEST_CASE("bundled scenes stay intersection-free with CCD") {
  for (const char* name : {"bounce", "thin_wall", "slide", "push", "two_ball", "ballistic", "pendulum", "grazing"}) {
    const SceneConfig sc = load_scene(std::string(DSIM_SCENE_DIR) + "/" + name + ".json");
    const RunMetrics m = run_simulate(sc);
    CHECK_MESSAGE(m.max_penetration <= 1e-6, name);
    CHECK_MESSAGE(m.invalid_lcps == 0, name);
  }
}
