#include "dsim/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>

#include <json.hpp>

#include "dsim/collision.hpp"
#include "dsim/error.hpp"

namespace dsim {

namespace {

using json = nlohmann::ordered_json;

constexpr double kInf = std::numeric_limits<double>::infinity();

int free_body(const MechanismModel& model, const std::string& name) {
  if (!name.empty()) {
    const int b = find_body(model, name);
    if (model.bodies[static_cast<std::size_t>(b)].kind != BodyKind::Free) {
      throw Error(ErrorCode::InvalidModel, "body '" + name + "' is not a free body");
    }
    return b;
  }
  for (std::size_t b = 0; b < model.bodies.size(); ++b) {
    if (model.bodies[b].kind == BodyKind::Free) return static_cast<int>(b);
  }
  throw Error(ErrorCode::InvalidModel, "scene has no free body");
}

// Least-squares slope of y against x.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

double gravity_friction(const SceneConfig& scene, int a, int b) {
  return pair_friction(scene.model, a, b) * scene.model.gravity.norm();
}

int first_fixed(const MechanismModel& model) {
  for (std::size_t b = 0; b < model.bodies.size(); ++b) {
    if (model.bodies[b].kind == BodyKind::Fixed) return static_cast<int>(b);
  }
  throw Error(ErrorCode::InvalidModel, "scene has no floor");
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace

Rollout rollout_of(const SceneConfig& scene) {
  Rollout r;
  r.model = scene.model;
  r.initial = scene.initial;
  r.tau = scene.tau.size() ? scene.tau : Eigen::VectorXd::Zero(scene.initial.q.size());
  r.dt = scene.dt;
  r.steps = scene.steps;
  r.options = scene.options;
  return r;
}

Trajectory simulate_scene(const SceneConfig& scene) { return simulate(rollout_of(scene)); }

double min_separation(const MechanismModel& model, const Eigen::VectorXd& q) {
  double best = kInf;
  const int nb = static_cast<int>(model.bodies.size());
  for (int a = 0; a < nb; ++a) {
    for (int b = a + 1; b < nb; ++b) {
      if (collidable(model, a, b)) best = std::min(best, pair_separation(model, q, a, b));
    }
  }
  return best;
}

RunMetrics metrics_of(const SceneConfig& scene, const Trajectory& traj) {
  RunMetrics m;
  for (const SystemState& s : traj.states) {
    m.time.push_back(s.t);
    m.q.push_back(s.q);
    m.qd.push_back(s.qd);
    const double g = min_separation(scene.model, s.q);
    m.min_gap.push_back(g);
    if (g < 0.0) m.max_penetration = std::max(m.max_penetration, -g);
  }
  for (const StepEvents& e : traj.events) {
    m.collisions += e.collisions;
    m.tois.insert(m.tois.end(), e.tois.begin(), e.tois.end());
    m.substep_cap_hits += e.substep_cap_hit ? 1 : 0;
    m.invalid_lcps += e.invalid_lcps;
  }
  return m;
}

RunMetrics run_simulate(const SceneConfig& scene) { return metrics_of(scene, simulate_scene(scene)); }

void write_trajectory_csv(const SceneConfig& scene, const RunMetrics& m, std::ostream& out) {
  const MechanismModel& model = scene.model;
  const Layout layout = make_layout(model);
  out << "t";
  for (int b : layout.dynamic_bodies) {
    const Body& body = model.bodies[static_cast<std::size_t>(b)];
    if (body.kind == BodyKind::Free) {
      for (const char* c : {"x", "y", "theta", "vx", "vy", "omega"}) out << ',' << body.name << '.' << c;
    } else {
      out << ',' << body.name << ".q," << body.name << ".qd";
    }
  }
  out << ",min_gap\n";
  out << std::setprecision(17);
  for (std::size_t r = 0; r < m.time.size(); ++r) {
    out << m.time[r];
    for (int b : layout.dynamic_bodies) {
      const Body& body = model.bodies[static_cast<std::size_t>(b)];
      if (body.kind == BodyKind::Free) {
        const int o = layout.body_offset[static_cast<std::size_t>(b)];
        for (int k = 0; k < 3; ++k) out << ',' << m.q[r][o + k];
        for (int k = 0; k < 3; ++k) out << ',' << m.qd[r][o + k];
      } else {
        const int i = layout.chain_offset[static_cast<std::size_t>(body.chain)] + body.link;
        out << ',' << m.q[r][i] << ',' << m.qd[r][i];
      }
    }
    out << ',' << m.min_gap[r] << '\n';
  }
}

std::string metrics_json(const SceneConfig& scene, const RunMetrics& m) {
  json j;
  j["scene"] = scene.name;
  j["steps"] = scene.steps;
  j["dt_s"] = scene.dt;
  j["ccd"] = scene.options.ccd;
  j["collisions"] = m.collisions;
  j["tois_s"] = m.tois;
  j["substep_cap_hits"] = m.substep_cap_hits;
  j["invalid_lcps"] = m.invalid_lcps;
  j["max_penetration_m"] = m.max_penetration;
  double lowest = kInf;
  for (double g : m.min_gap) lowest = std::min(lowest, g);
  j["min_gap_m"] = finite_or_null(lowest);
  if (!m.q.empty()) {
    j["final_q"] = vec_json(m.q.back());
    j["final_qd"] = vec_json(m.qd.back());
  }
  return j.dump(2) + "\n";
}

double height_gradient(const SceneConfig& scene, const std::string& body) {
  const int b = free_body(scene.model, body);
  const Layout layout = make_layout(scene.model);
  const int y = layout.body_offset[static_cast<std::size_t>(b)] + 1;
  const Trajectory t = simulate_scene(scene);
  StateCotangent seed{Eigen::VectorXd::Zero(layout.dof), Eigen::VectorXd::Zero(layout.dof)};
  seed.q[y] = 1.0;
  return backward_trajectory(scene.model, t.tapes, seed).dq[y];
}

namespace {

struct TwoBallSetup {
  int vx = 0, vy = 0;  ///< striker velocity dofs
  int px = 0, py = 0;  ///< object position dofs
};

TwoBallSetup two_ball_setup(const SceneConfig& scene) {
  const Layout layout = make_layout(scene.model);
  const int s = free_body(scene.model, scene.experiment.striker);
  const int o = free_body(scene.model, scene.experiment.object);
  TwoBallSetup t;
  t.vx = layout.body_offset[static_cast<std::size_t>(s)];
  t.vy = t.vx + 1;
  t.px = layout.body_offset[static_cast<std::size_t>(o)];
  t.py = t.px + 1;
  return t;
}

struct Evaluation {
  double loss;
  Eigen::Vector2d position;
  Eigen::Vector2d grad;
};

Evaluation evaluate_two_ball(const SceneConfig& scene, const TwoBallSetup& t, const Eigen::Vector2d& v) {
  SceneConfig sc = scene;
  sc.initial.qd[t.vx] = v.x();
  sc.initial.qd[t.vy] = v.y();
  const Trajectory traj = simulate_scene(sc);
  const SystemState& fin = traj.states.back();
  Evaluation e;
  e.position = Eigen::Vector2d(fin.q[t.px], fin.q[t.py]);
  const Eigen::Vector2d err = e.position - scene.experiment.target;
  e.loss = scene.experiment.loss_scale * err.squaredNorm();
  StateCotangent seed{Eigen::VectorXd::Zero(fin.q.size()), Eigen::VectorXd::Zero(fin.q.size())};
  seed.q[t.px] = 2.0 * scene.experiment.loss_scale * err.x();
  seed.q[t.py] = 2.0 * scene.experiment.loss_scale * err.y();
  const GradientBundle g = backward_trajectory(sc.model, traj.tapes, seed);
  e.grad = Eigen::Vector2d(g.dqd[t.vx], g.dqd[t.vy]);
  return e;
}

}  // namespace

Eigen::Vector2d two_ball_final_position(const SceneConfig& scene, const Eigen::Vector2d& v) {
  const TwoBallSetup t = two_ball_setup(scene);
  SceneConfig sc = scene;
  sc.initial.qd[t.vx] = v.x();
  sc.initial.qd[t.vy] = v.y();
  const Trajectory traj = simulate_scene(sc);
  return {traj.states.back().q[t.px], traj.states.back().q[t.py]};
}

TwoBallResult run_two_ball_optimize(const SceneConfig& scene, int epochs) {
  const ExperimentConfig& ex = scene.experiment;
  if (epochs < 0) epochs = ex.epochs;
  const TwoBallSetup t = two_ball_setup(scene);
  TwoBallResult r;
  r.log.push_back("restitution between the balls is taken as " +
                  std::to_string(pair_restitution(scene.model, find_body(scene.model, ex.striker), find_body(scene.model, ex.object))) +
                  " (elastic transfer assumed)");
  const Eigen::Vector2d mask(ex.optimize_vx ? 1.0 : 0.0, ex.optimize_vy ? 1.0 : 0.0);
  Eigen::Vector2d v(scene.initial.qd[t.vx], scene.initial.qd[t.vy]);
  double lr = ex.learning_rate;
  Evaluation cur = evaluate_two_ball(scene, t, v);
  for (int k = 0; k < epochs; ++k) {
    r.losses.push_back(cur.loss);
    const Eigen::Vector2d next = v - lr * cur.grad.cwiseProduct(mask);
    Evaluation e = evaluate_two_ball(scene, t, next);
    if (!std::isfinite(e.loss) || e.loss > 10.0 * cur.loss) {
      lr *= 0.5;
      ++r.lr_halvings;
      r.log.push_back("epoch " + std::to_string(k) + ": loss rose to " + std::to_string(e.loss) +
                      ", learning rate halved to " + std::to_string(lr));
      ++r.epochs_run;
      continue;
    }
    v = next;
    cur = e;
    ++r.epochs_run;
  }
  r.initial_velocity = v;
  r.final_position = cur.position;
  r.final_loss = cur.loss;
  r.error = (cur.position - ex.target).norm();
  return r;
}

std::string two_ball_json(const SceneConfig& scene, const TwoBallResult& r) {
  json j;
  j["scene"] = scene.name;
  j["epochs"] = r.epochs_run;
  j["initial_velocity_mps"] = vec_json(r.initial_velocity);
  j["final_position_m"] = vec_json(r.final_position);
  j["target_m"] = vec_json(scene.experiment.target);
  j["position_error_m"] = r.error;
  j["final_loss"] = r.final_loss;
  j["lr_halvings"] = r.lr_halvings;
  j["loss_per_epoch"] = r.losses;
  j["log"] = r.log;
  return j.dump(2) + "\n";
}

SlideResult run_slide_experiment(const SceneConfig& scene) {
  const int b = free_body(scene.model, scene.experiment.striker);
  const Layout layout = make_layout(scene.model);
  const int vx = layout.body_offset[static_cast<std::size_t>(b)];
  SlideResult r;
  r.metrics = run_simulate(scene);
  for (const auto& qd : r.metrics.qd) r.velocity.push_back(qd[vx]);
  r.expected_slope = -gravity_friction(scene, b, first_fixed(scene.model)) * scene.dt;
  // Sliding phase: rows before the velocity first reaches zero.
  std::vector<double> x, y;
  for (std::size_t k = 0; k < r.velocity.size() && std::abs(r.velocity[k]) > 1e-9; ++k) {
    x.push_back(static_cast<double>(k));
    y.push_back(std::abs(r.velocity[k]));
  }
  r.sliding_points = static_cast<int>(x.size());
  if (x.size() >= 2) {
    r.slope = fit_slope(x, y);
    r.rel_error = std::abs(r.slope - r.expected_slope) / std::abs(r.expected_slope);
  } else {
    r.rel_error = kInf;
  }
  return r;
}

std::string slide_json(const SceneConfig& scene, const SlideResult& r) {
  json j;
  j["scene"] = scene.name;
  j["slope_mps_per_step"] = r.slope;
  j["expected_slope_mps_per_step"] = r.expected_slope;
  j["relative_error"] = finite_or_null(r.rel_error);
  j["sliding_points"] = r.sliding_points;
  j["invalid_lcps"] = r.metrics.invalid_lcps;
  j["velocity_mps"] = r.velocity;
  return j.dump(2) + "\n";
}

PushResult run_push_experiment(const SceneConfig& scene) {
  const MechanismModel& model = scene.model;
  const Layout layout = make_layout(model);
  const int s = free_body(model, scene.experiment.striker);
  const int o = free_body(model, scene.experiment.object);
  const int floor = first_fixed(model);
  const int sx = layout.body_offset[static_cast<std::size_t>(s)];
  const int ox = layout.body_offset[static_cast<std::size_t>(o)];
  const double ms = model.bodies[static_cast<std::size_t>(s)].mass;
  const double mo = model.bodies[static_cast<std::size_t>(o)].mass;

  PushResult r;
  const Trajectory traj = simulate_scene(scene);
  r.metrics = metrics_of(scene, traj);
  r.invalid_lcps = r.metrics.invalid_lcps;
  for (const auto& qd : r.metrics.qd) {
    r.velocity_striker.push_back(qd[sx]);
    r.velocity_object.push_back(qd[ox]);
  }

  // Momentum across the first response that involves both boxes.
  for (const StepTape& tape : traj.tapes) {
    for (const Segment& seg : tape.segments) {
      if (seg.kind != SegmentKind::C || r.impact_found) continue;
      for (const ContactPoint& c : seg.contacts.contacts) {
        if (std::min(c.body_a, c.body_b) == std::min(s, o) && std::max(c.body_a, c.body_b) == std::max(s, o)) {
          r.impact_found = true;
          r.momentum_before = ms * seg.in.qd[sx] + mo * seg.in.qd[ox];
          r.momentum_after = ms * seg.out.qd[sx] + mo * seg.out.qd[ox];
          break;
        }
      }
    }
  }

  // Sliding phases: runs of collision-free steps with non-zero velocity at both ends.
  const double mu_g = gravity_friction(scene, s, floor);
  auto phases_of = [&](const std::string& name, const std::vector<double>& v) {
    std::size_t k = 0;
    const std::size_t n = v.size();
    while (k + 1 < n) {
      auto good = [&](std::size_t i) {
        return std::abs(v[i]) > 1e-9 && std::abs(v[i + 1]) > 1e-9 && traj.events[i].collisions == 0;
      };
      if (!good(k)) {
        ++k;
        continue;
      }
      std::size_t e = k;
      while (e + 1 < n && good(e)) ++e;
      if (e - k >= 3) {
        std::vector<double> x, y;
        for (std::size_t i = k; i <= e; ++i) {
          x.push_back(r.metrics.time[i]);
          y.push_back(std::abs(v[i]));
        }
        PhaseFit f;
        f.body = name;
        f.first = static_cast<int>(k);
        f.last = static_cast<int>(e);
        f.deceleration = -fit_slope(x, y);
        f.rel_error = std::abs(f.deceleration - mu_g) / mu_g;
        r.phases.push_back(f);
      }
      k = e;
    }
  };
  phases_of(model.bodies[static_cast<std::size_t>(s)].name, r.velocity_striker);
  phases_of(model.bodies[static_cast<std::size_t>(o)].name, r.velocity_object);
  r.both_at_rest = std::abs(r.velocity_striker.back()) < 1e-9 && std::abs(r.velocity_object.back()) < 1e-9;
  return r;
}

std::string push_json(const SceneConfig& scene, const PushResult& r) {
  json j;
  j["scene"] = scene.name;
  j["impact_found"] = r.impact_found;
  j["momentum_before_kgmps"] = r.momentum_before;
  j["momentum_after_kgmps"] = r.momentum_after;
  j["both_at_rest"] = r.both_at_rest;
  j["invalid_lcps"] = r.invalid_lcps;
  json phases = json::array();
  for (const PhaseFit& f : r.phases) {
    phases.push_back(json{{"body", f.body},
                          {"first_row", f.first},
                          {"last_row", f.last},
                          {"deceleration_mps2", f.deceleration},
                          {"relative_error", f.rel_error}});
  }
  j["sliding_phases"] = phases;
  j["time_s"] = r.metrics.time;
  j["velocity_striker_mps"] = r.velocity_striker;
  j["velocity_object_mps"] = r.velocity_object;
  return j.dump(2) + "\n";
}

FdReport run_gradcheck(const SceneConfig& scene, unsigned seed) {
  const Rollout r = rollout_of(scene);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index n = r.initial.q.size();
  Eigen::VectorXd wq(n), wqd(n);
  for (Eigen::Index i = 0; i < n; ++i) wq[i] = normal(rng);
  for (Eigen::Index i = 0; i < n; ++i) wqd[i] = normal(rng);
  return finite_difference_check(r, linear_loss(wq, wqd));
}

std::string fd_report_json(const FdReport& r) {
  json j;
  j["max_relative_error"] = r.max_rel_error;
  j["boundary_proximity"] = r.boundary_proximity;
  j["grazing"] = r.grazing;
  json entries = json::array();
  for (const FdEntry& e : r.entries) {
    entries.push_back(json{{"parameter", e.name},
                           {"analytic", e.analytic},
                           {"numeric", e.numeric},
                           {"relative_error", e.rel_error},
                           {"negligible", e.negligible}});
  }
  j["entries"] = entries;
  return j.dump(2) + "\n";
}

}  // namespace dsim
