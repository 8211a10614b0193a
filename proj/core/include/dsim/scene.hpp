#pragma once

// Scene documents (JSON). Field names carry their units, e.g. dt_s,
// gravity_mps2, radius_m.

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dsim/contact_flow.hpp"
#include "dsim/mechanics.hpp"

namespace dsim {

struct ExperimentConfig {
  std::string type;        ///< "", "two_ball", "slide", "push", "gradcheck"
  std::string striker;     ///< body whose initial velocity is optimized / the moving box
  std::string object;      ///< body that must reach the target / the struck box
  Eigen::Vector2d target = Eigen::Vector2d(0.3, 0.2);
  double loss_scale = 10.0;
  double learning_rate = 1.0;
  int epochs = 1000;
  bool optimize_vx = true;
  bool optimize_vy = true;
  unsigned seed = 0;
};

struct SceneConfig {
  std::string name;
  std::string notes;
  MechanismModel model;
  SystemState initial;
  Eigen::VectorXd tau;
  double dt = 0.01;
  int steps = 1;
  StepOptions options;
  ExperimentConfig experiment;
};

/// Throws Error{ParseError} with the offending field (or line/column for
/// syntax errors), Error{InvalidModel} for semantic problems.
SceneConfig parse_scene(std::string_view json_text);
SceneConfig load_scene(const std::string& path);
std::string dump_scene(const SceneConfig& scene);

int find_body(const MechanismModel& model, const std::string& name);

}  // namespace dsim
