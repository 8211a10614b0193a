// dsim command-line front end.
//
//   dsim simulate <scene>
//   dsim optimize two-ball <scene>
//   dsim experiment slide|push <scene>
//   dsim gradcheck <scene>
//   dsim lcp solve <file>
//
// Exit codes: 0 ok, 2 validation failure, 3 parse error, 1 anything else.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsim/dantzig.hpp"
#include "dsim/error.hpp"
#include "dsim/experiments.hpp"
#include "dsim/lcp.hpp"
#include "dsim/scene.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 2;
constexpr int kParse = 3;

struct Flags {
  bool no_ccd = false;
  bool legacy = false;
  std::string out = "out";
};

dsim::SceneConfig load(const std::string& path, const Flags& flags) {
  dsim::SceneConfig sc = dsim::load_scene(path);
  if (flags.no_ccd) sc.options.ccd = false;
  if (flags.legacy) sc.options.rule = dsim::dantzig::MaxStepRule::Legacy;
  return sc;
}

void write_file(const Flags& flags, const std::string& name, const std::string& text) {
  fs::create_directories(flags.out);
  const fs::path p = fs::path(flags.out) / name;
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
  std::cerr << "wrote " << p.string() << '\n';
}

int cmd_simulate(const std::string& path, const Flags& flags) {
  const dsim::SceneConfig sc = load(path, flags);
  const dsim::RunMetrics m = dsim::run_simulate(sc);
  std::ostringstream csv;
  dsim::write_trajectory_csv(sc, m, csv);
  write_file(flags, sc.name + "_trajectory.csv", csv.str());
  const std::string js = dsim::metrics_json(sc, m);
  write_file(flags, sc.name + "_metrics.json", js);
  std::cout << js;
  return m.invalid_lcps == 0 ? kOk : kValidation;
}

int cmd_two_ball(const std::string& path, const Flags& flags, int epochs) {
  const dsim::SceneConfig sc = load(path, flags);
  const dsim::TwoBallResult r = dsim::run_two_ball_optimize(sc, epochs);
  for (const std::string& line : r.log) std::cerr << line << '\n';
  const std::string js = dsim::two_ball_json(sc, r);
  write_file(flags, sc.name + "_optimize.json", js);
  std::cout << "final position (" << r.final_position.x() << ", " << r.final_position.y() << "), error "
            << r.error << " m after " << r.epochs_run << " epochs, initial velocity (" << r.initial_velocity.x()
            << ", " << r.initial_velocity.y() << ")\n";
  return kOk;
}

int cmd_slide(const std::string& path, const Flags& flags) {
  const dsim::SceneConfig sc = load(path, flags);
  const dsim::SlideResult r = dsim::run_slide_experiment(sc);
  write_file(flags, sc.name + "_slide.json", dsim::slide_json(sc, r));
  std::cout << "slope " << r.slope << " per step, expected " << r.expected_slope << ", relative error "
            << r.rel_error << ", invalid LCPs " << r.metrics.invalid_lcps << '\n';
  return r.rel_error <= 0.01 && r.metrics.invalid_lcps == 0 ? kOk : kValidation;
}

int cmd_push(const std::string& path, const Flags& flags) {
  const dsim::SceneConfig sc = load(path, flags);
  const dsim::PushResult r = dsim::run_push_experiment(sc);
  write_file(flags, sc.name + "_push.json", dsim::push_json(sc, r));
  bool ok = r.invalid_lcps == 0 && r.both_at_rest && r.impact_found &&
            std::abs(r.momentum_after - r.momentum_before) <= 1e-10;
  for (const dsim::PhaseFit& f : r.phases) {
    std::cout << f.body << " rows " << f.first << ".." << f.last << ": deceleration " << f.deceleration
              << " m/s^2, relative error " << f.rel_error << '\n';
    ok = ok && f.rel_error <= 0.02;
  }
  std::cout << "momentum " << r.momentum_before << " -> " << r.momentum_after << ", both at rest "
            << (r.both_at_rest ? "yes" : "no") << ", invalid LCPs " << r.invalid_lcps << '\n';
  return ok ? kOk : kValidation;
}

int cmd_gradcheck(const std::string& path, const Flags& flags) {
  const dsim::SceneConfig sc = load(path, flags);
  const dsim::FdReport r = dsim::run_gradcheck(sc, sc.experiment.seed);
  write_file(flags, sc.name + "_gradcheck.json", dsim::fd_report_json(r));
  std::cout << "max relative error " << r.max_rel_error << (r.flagged() ? " (flagged: " : "")
            << (r.boundary_proximity ? "contact-mode boundary" : "")
            << (r.boundary_proximity && r.grazing ? ", " : "") << (r.grazing ? "grazing" : "")
            << (r.flagged() ? ")" : "") << '\n';
  if (r.flagged()) return kOk;
  return r.max_rel_error <= 1e-4 ? kOk : kValidation;
}

int cmd_lcp_solve(const std::string& path, bool legacy) {
  const dsim::LcpProblem p = dsim::load_lcp_file(path);
  dsim::dantzig::Options opts;
  if (legacy) opts.rule = dsim::dantzig::MaxStepRule::Legacy;
  const dsim::dantzig::Result r = dsim::dantzig::solve(p, opts);
  const dsim::ValidationReport v = dsim::validate_solution(p, r.solution, 1e-8);
  nlohmann::ordered_json j;
  const auto& f = r.solution.f;
  const auto& a = r.solution.a;
  j["f"] = std::vector<double>(f.data(), f.data() + f.size());
  j["a"] = std::vector<double>(a.data(), a.data() + a.size());
  std::vector<std::string> classes;
  for (dsim::LcpClass c : r.solution.classes) classes.emplace_back(dsim::to_string(c));
  j["classes"] = classes;
  j["pivots"] = r.trace.steps.size();
  j["ordered_searches"] = r.trace.ergodic_searches;
  j["valid"] = v.valid;
  j["worst_violation"] = v.worst_violation;
  std::cout << j.dump(2) << '\n';
  return v.valid ? kOk : kValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dsim: differentiable 2D rigid-body contact simulation"};
  app.require_subcommand(1);
  Flags flags;
  app.add_flag("--no-ccd", flags.no_ccd, "discrete stepping (control mode)");
  app.add_flag("--legacy-maxstep", flags.legacy, "uncorrected friction max-step (test only)");
  app.add_option("--out", flags.out, "output directory")->capture_default_str();

  std::string scene;
  int epochs = -1;

  auto* sim = app.add_subcommand("simulate", "run a scene, write trajectory CSV and metrics JSON");
  sim->add_option("scene", scene)->required();

  auto* opt = app.add_subcommand("optimize", "gradient-based optimizations");
  opt->require_subcommand(1);
  auto* two = opt->add_subcommand("two-ball", "optimize the striker's initial velocity");
  two->add_option("scene", scene)->required();
  two->add_option("--epochs", epochs, "override the scene's epoch count");

  auto* exp = app.add_subcommand("experiment", "desk-scale friction experiments");
  exp->require_subcommand(1);
  auto* slide = exp->add_subcommand("slide", "box slide deceleration fit");
  slide->add_option("scene", scene)->required();
  auto* push = exp->add_subcommand("push", "cube pushes cube");
  push->add_option("scene", scene)->required();

  auto* grad = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
  grad->add_option("scene", scene)->required();

  auto* lcp = app.add_subcommand("lcp", "stand-alone LCP tools");
  lcp->require_subcommand(1);
  auto* solve = lcp->add_subcommand("solve", "solve an LCP file with Dantzig pivoting");
  std::string lcp_file;
  bool lcp_bug = false;
  solve->add_option("file", lcp_file)->required();
  solve->add_flag("--frictionless-maxstep-bug", lcp_bug, "same as --legacy-maxstep");

  for (CLI::App* sub : {sim, two, slide, push, grad, solve}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*sim) return cmd_simulate(scene, flags);
    if (*two) return cmd_two_ball(scene, flags, epochs);
    if (*slide) return cmd_slide(scene, flags);
    if (*push) return cmd_push(scene, flags);
    if (*grad) return cmd_gradcheck(scene, flags);
    if (*solve) return cmd_lcp_solve(lcp_file, lcp_bug || flags.legacy);
  } catch (const dsim::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.code()) {
      case dsim::ErrorCode::ParseError:
      case dsim::ErrorCode::InvalidModel:
      case dsim::ErrorCode::InvalidProblem:
        return kParse;
      case dsim::ErrorCode::NoValidAssignment:
        return kValidation;
      default:
        return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
