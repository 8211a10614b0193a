#pragma once

// Experiment runners behind the CLI: plain simulation, the two-ball
// initial-velocity optimization, box slide and push, gradient audits.

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dsim/diffsim.hpp"
#include "dsim/scene.hpp"

namespace dsim {

struct RunMetrics {
  std::vector<double> time;
  std::vector<Eigen::VectorXd> q;
  std::vector<Eigen::VectorXd> qd;
  std::vector<double> min_gap;  ///< per row; +inf when nothing can collide
  int collisions = 0;
  std::vector<double> tois;
  int substep_cap_hits = 0;
  int invalid_lcps = 0;
  double max_penetration = 0.0;
};

RunMetrics run_simulate(const SceneConfig& scene);
Trajectory simulate_scene(const SceneConfig& scene);
RunMetrics metrics_of(const SceneConfig& scene, const Trajectory& traj);

void write_trajectory_csv(const SceneConfig& scene, const RunMetrics& m, std::ostream& out);
std::string metrics_json(const SceneConfig& scene, const RunMetrics& m);

/// Smallest pair separation over collidable pairs at q.
double min_separation(const MechanismModel& model, const Eigen::VectorXd& q);

/// d(final y) / d(initial y) of the named free body (first free body when empty).
double height_gradient(const SceneConfig& scene, const std::string& body = "");

struct TwoBallResult {
  std::vector<double> losses;  ///< per epoch, before the update
  Eigen::Vector2d initial_velocity = Eigen::Vector2d::Zero();
  Eigen::Vector2d final_position = Eigen::Vector2d::Zero();
  double final_loss = 0.0;
  double error = 0.0;  ///< |p_final - target|
  int epochs_run = 0;
  int lr_halvings = 0;
  std::vector<std::string> log;
};

/// Final object position when the striker starts with velocity v.
Eigen::Vector2d two_ball_final_position(const SceneConfig& scene, const Eigen::Vector2d& v);

/// Gradient descent on the striker's initial velocity. `epochs` < 0 uses the
/// scene value.
TwoBallResult run_two_ball_optimize(const SceneConfig& scene, int epochs = -1);
std::string two_ball_json(const SceneConfig& scene, const TwoBallResult& r);

struct SlideResult {
  std::vector<double> velocity;  ///< tangential velocity per row
  int sliding_points = 0;
  double slope = 0.0;            ///< least-squares dv per step during sliding
  double expected_slope = 0.0;   ///< -mu g dt
  double rel_error = 0.0;
  RunMetrics metrics;
};

SlideResult run_slide_experiment(const SceneConfig& scene);
std::string slide_json(const SceneConfig& scene, const SlideResult& r);

struct PhaseFit {
  std::string body;
  int first = 0;  ///< first row of the phase
  int last = 0;   ///< last row of the phase
  double deceleration = 0.0;
  double rel_error = 0.0;  ///< vs mu g
};

struct PushResult {
  RunMetrics metrics;
  std::vector<double> velocity_striker;
  std::vector<double> velocity_object;
  std::vector<PhaseFit> phases;
  double momentum_before = 0.0;
  double momentum_after = 0.0;
  bool impact_found = false;
  bool both_at_rest = false;
  int invalid_lcps = 0;
};

PushResult run_push_experiment(const SceneConfig& scene);
std::string push_json(const SceneConfig& scene, const PushResult& r);

/// Finite-difference audit with a random linear loss on the final state.
FdReport run_gradcheck(const SceneConfig& scene, unsigned seed = 0);
std::string fd_report_json(const FdReport& r);

Rollout rollout_of(const SceneConfig& scene);

}  // namespace dsim
