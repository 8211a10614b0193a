#include <doctest.h>

#include "dsim/dantzig.hpp"
#include "dsim/diffsim.hpp"
#include "dsim/error.hpp"
#include "dsim/experiments.hpp"
#include "support.hpp"

using namespace dsim;

namespace {

SceneConfig scene(const char* name) { return load_scene(std::string(DSIM_SCENE_DIR) + "/" + name + ".json"); }

LcpProblem one(double A, double b) {
  LcpProblem p;
  p.A = Eigen::Matrix<double, 1, 1>(A);
  p.b = Eigen::Matrix<double, 1, 1>(b);
  return p;
}

// Dense Jacobian of the final state w.r.t. the initial state, column by
// column from unit cotangent seeds.
Eigen::MatrixXd backward_jacobian(const Rollout& r) {
  const Trajectory t = simulate(r);
  const Eigen::Index n = r.initial.q.size();
  Eigen::MatrixXd J(2 * n, 2 * n);
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    StateCotangent seed{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
    if (i < n) seed.q[i] = 1.0;
    else seed.qd[i - n] = 1.0;
    const GradientBundle g = backward_trajectory(r.model, t.tapes, seed);
    J.row(i) << g.dq.transpose(), g.dqd.transpose();
  }
  return J;
}

}  // namespace

TEST_CASE("lcp_gradients: documented examples") {
  const LcpProblem clamp = one(1, -1);
  const auto s = dantzig::solve(clamp).solution;
  const LcpDifferential d = lcp_gradients(clamp, s);
  CHECK(d.forward(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1))[0] == doctest::Approx(-1.0));

  const LcpProblem apart = one(1, 2);
  const LcpDifferential z = lcp_gradients(apart, dantzig::solve(apart).solution);
  CHECK(z.forward(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Ones(1)).norm() == 0.0);

  LcpProblem fr;
  fr.A.resize(2, 2);
  fr.A << 1, 0.2, 0.2, 1;
  fr.b = Eigen::Vector2d(-1, -3);
  fr.friction = {{1, 0, 1.0}};
  const auto fs = dantzig::solve(fr).solution;
  const Eigen::VectorXd df = lcp_gradients(fr, fs).forward(Eigen::MatrixXd::Zero(2, 2), Eigen::Vector2d(1, 0));
  CHECK(df[0] == doctest::Approx(-1.0 / 1.2));
  CHECK(df[1] == doctest::Approx(-1.0 / 1.2));
}

TEST_CASE("lcp_gradients match finite differences of the solver") {
  test::Rng rng(41);
  int checked = 0;
  for (int t = 0; t < 300 && checked < 150; ++t) {
    const LcpProblem p = (t % 2) ? test::frictional_lcp(rng, 1 + static_cast<int>(rng() % 4))
                                 : test::frictionless_lcp(rng, 1 + static_cast<int>(rng() % 8));
    const auto s = dantzig::solve(p).solution;
    if (near_class_boundary(p, s, 1e-4)) continue;
    const int n = p.dim();
    Eigen::MatrixXd dA(n, n);
    for (Eigen::Index i = 0; i < dA.size(); ++i) dA.data()[i] = test::normal(rng);
    dA = 0.5 * (dA + dA.transpose()).eval();
    Eigen::VectorXd db(n);
    for (int i = 0; i < n; ++i) db[i] = test::normal(rng);

    const double h = 1e-7;
    LcpProblem pp = p, pm = p;
    pp.A += h * dA;
    pp.b += h * db;
    pm.A -= h * dA;
    pm.b -= h * db;
    const Eigen::VectorXd num = (dantzig::solve(pp).solution.f - dantzig::solve(pm).solution.f) / (2 * h);
    const LcpDifferential d = lcp_gradients(p, s);
    const Eigen::VectorXd ana = d.forward(dA, db);
    CHECK((ana - num).cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + num.cwiseAbs().maxCoeff()));

    // The adjoint is the transpose of the forward map.
    Eigen::VectorXd lf(n);
    for (int i = 0; i < n; ++i) lf[i] = test::normal(rng);
    const auto adj = d.adjoint(lf);
    CHECK(std::abs(lf.dot(ana) - (adj.A.cwiseProduct(dA).sum() + adj.b.dot(db))) <= 1e-9 * (1.0 + std::abs(lf.dot(ana))));
    ++checked;
  }
  CHECK(checked >= 100);
}

TEST_CASE("toi_gradients") {
  ToiRecord rec;
  rec.toi = 0.5;
  rec.Jn = Eigen::RowVector3d(0, 1, 0);
  rec.qd = Eigen::Vector3d(0, -1, 0);
  const ToiGradient g = toi_gradients(rec);
  CHECK(g.dq[1] == doctest::Approx(1.0));           // d toi / d gap
  CHECK(-g.dqd[1] == doctest::Approx(-0.5));        // d toi / d closing speed
  CHECK(g.dqd.dot(rec.qd) == doctest::Approx(-rec.toi));  // doubling qd halves toi

  rec.qd = Eigen::Vector3d(1, 0, 0);
  CHECK_THROWS_AS(toi_gradients(rec), Error);
}

TEST_CASE("backward: contact-free step") {
  MechanismModel m;
  m.gravity = Eigen::Vector2d(0, -9.81);
  m.bodies = {test::circle_body("a", 0.1, 2.0), test::box_body("b", 0.3, 0.2, 1.5)};
  Rollout r;
  r.model = m;
  r.initial.q.resize(6);
  r.initial.qd.resize(6);
  r.initial.q << 0, 0, 0.1, 5, 0, 0.2;
  r.initial.qd << 1, 2, 3, -1, 0.5, 0.1;
  r.tau = Eigen::VectorXd::Zero(6);
  r.dt = 0.05;
  r.steps = 1;
  const Eigen::MatrixXd J = backward_jacobian(r);
  Eigen::MatrixXd want = Eigen::MatrixXd::Identity(12, 12);
  want.block(0, 6, 6, 6) = r.dt * Eigen::MatrixXd::Identity(6, 6);
  CHECK((J - want).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("backward: chain Jacobian matches finite differences") {
  const SceneConfig sc = scene("pendulum");
  const Rollout r = rollout_of(sc);
  const Eigen::MatrixXd J = backward_jacobian(r);
  const Eigen::Index n = r.initial.q.size();
  const double h = 1e-6;
  for (Eigen::Index j = 0; j < 2 * n; ++j) {
    Rollout p = r, m = r;
    if (j < n) {
      p.initial.q[j] += h;
      m.initial.q[j] -= h;
    } else {
      p.initial.qd[j - n] += h;
      m.initial.qd[j - n] -= h;
    }
    const auto sp = simulate(p).states.back(), sm = simulate(m).states.back();
    Eigen::VectorXd col(2 * n);
    col << (sp.q - sm.q) / (2 * h), (sp.qd - sm.qd) / (2 * h);
    CHECK((J.col(j) - col).cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + col.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("backward chains across outer steps") {
  Rollout r = rollout_of(scene("pendulum"));
  r.steps = 2;
  const Trajectory t = simulate(r);
  test::Rng rng(2);
  const Eigen::Index n = r.initial.q.size();
  StateCotangent seed{Eigen::VectorXd::Random(n), Eigen::VectorXd::Random(n)};
  const GradientBundle whole = backward_trajectory(r.model, t.tapes, seed);
  const GradientBundle last = backward(r.model, t.tapes[1], seed);
  const GradientBundle first = backward(r.model, t.tapes[0], {last.dq, last.dqd});
  CHECK((whole.dq - first.dq).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((whole.dqd - first.dqd).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((whole.dtau - (first.dtau + last.dtau)).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((whole.dm - (first.dm + last.dm)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("bounce gradient: continuous vs discrete") {
  SceneConfig sc = scene("bounce");
  CHECK(height_gradient(sc) == doctest::Approx(-1.0).epsilon(1e-9));
  sc.options.ccd = false;
  CHECK(height_gradient(sc) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("finite-difference audit") {
  SUBCASE("ballistic flight is linear") {
    const SceneConfig sc = scene("ballistic");
    const FdReport r = run_gradcheck(sc, 5);
    CHECK_FALSE(r.flagged());
    CHECK(r.max_rel_error <= 1e-7);
    for (const FdEntry& e : r.entries) CHECK(std::abs(e.analytic - e.numeric) <= 1e-7);
  }
  SUBCASE("one bounce") {
    const FdReport r = run_gradcheck(scene("bounce"), 1);
    CHECK_FALSE(r.flagged());
    CHECK(r.max_rel_error <= 1e-4);
    bool found = false;
    for (const FdEntry& e : r.entries) found |= e.name == "dt";
    CHECK(found);
  }
  SUBCASE("pendulum") {
    const FdReport r = run_gradcheck(scene("pendulum"), 1);
    CHECK_FALSE(r.flagged());
    CHECK(r.max_rel_error <= 1e-4);
  }
  SUBCASE("grazing contact is flagged") {
    CHECK(run_gradcheck(scene("grazing"), 3).flagged());
  }
  SUBCASE("relative error uses the symmetric denominator") {
    const FdReport r = run_gradcheck(scene("pendulum"), 2);
    for (const FdEntry& e : r.entries) {
      CHECK(e.rel_error == doctest::Approx(std::abs(e.analytic - e.numeric) /
                                           (std::abs(e.analytic) + std::abs(e.numeric) + 1e-12)));
    }
  }
}

TEST_CASE("random scenes: analytic vs numeric") {
  test::Rng rng(1234);
  for (int t = 0; t < 5; ++t) {
    const Rollout r = test::random_free_scene(rng);
    const FdReport rep = finite_difference_check(r, test::random_linear_loss(rng, r.initial.q.size()));
    CHECK(rep.max_rel_error <= 1e-4);
  }
  int counted = 0;
  for (int t = 0; t < 40 && counted < 5; ++t) {
    const Rollout r = test::random_collision_scene(rng);
    const FdReport rep = finite_difference_check(r, test::random_linear_loss(rng, r.initial.q.size()));
    if (rep.flagged()) continue;
    ++counted;
    CHECK(rep.max_rel_error <= 1e-4);
  }
  CHECK(counted == 5);
}
