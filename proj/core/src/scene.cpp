#include "dsim/scene.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dsim/error.hpp"

namespace dsim {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& path, const std::string& msg) {
  throw Error(ErrorCode::ParseError, path + ": " + msg);
}

const json& field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) bad(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) bad(path + "." + key, "missing field");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) bad(path, "expected a number");
  return j.get<double>();
}

double number_or(const json& j, const char* key, double fallback, const std::string& path) {
  auto it = j.find(key);
  return it == j.end() ? fallback : number(*it, path + "." + key);
}

int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) bad(path, "expected an integer");
  return j.get<int>();
}

bool boolean_or(const json& j, const char* key, bool fallback, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_boolean()) bad(path + "." + key, "expected true or false");
  return it->get<bool>();
}

std::string string_or(const json& j, const char* key, const std::string& fallback, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_string()) bad(path + "." + key, "expected a string");
  return it->get<std::string>();
}

std::vector<double> numbers(const json& j, const std::string& path) {
  if (!j.is_array()) bad(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

Eigen::Vector2d vec2(const json& j, const std::string& path) {
  const std::vector<double> v = numbers(j, path);
  if (v.size() != 2) bad(path, "expected two numbers");
  return {v[0], v[1]};
}

Eigen::Vector2d vec2_or(const json& j, const char* key, const Eigen::Vector2d& fallback, const std::string& path) {
  auto it = j.find(key);
  return it == j.end() ? fallback : vec2(*it, path + "." + key);
}

json to_json(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }

Shape parse_shape(const json& j, const std::string& path) {
  const std::string type = string_or(j, "type", "", path);
  if (type == "circle") return Circle{number(field(j, "radius_m", path), path + ".radius_m")};
  if (type == "box") {
    return make_box(number(field(j, "width_m", path), path + ".width_m"),
                    number(field(j, "height_m", path), path + ".height_m"));
  }
  if (type == "polygon") {
    const json& vs = field(j, "vertices_m", path);
    if (!vs.is_array()) bad(path + ".vertices_m", "expected an array of points");
    Polygon p;
    for (std::size_t i = 0; i < vs.size(); ++i) p.vertices.push_back(vec2(vs[i], path + ".vertices_m[" + std::to_string(i) + "]"));
    return p;
  }
  if (type == "halfplane") {
    HalfPlane h;
    h.normal = vec2(field(j, "normal", path), path + ".normal");
    h.offset = number_or(j, "offset_m", 0.0, path);
    return h;
  }
  bad(path + ".type", "unknown shape type '" + type + "'");
}

json shape_json(const Shape& s) {
  if (const auto* c = std::get_if<Circle>(&s)) return json{{"type", "circle"}, {"radius_m", c->radius}};
  if (const auto* p = std::get_if<Polygon>(&s)) {
    json vs = json::array();
    for (const auto& v : p->vertices) vs.push_back(to_json(v));
    return json{{"type", "polygon"}, {"vertices_m", vs}};
  }
  const auto& h = std::get<HalfPlane>(s);
  return json{{"type", "halfplane"}, {"normal", to_json(h.normal)}, {"offset_m", h.offset}};
}

struct BodyInit {
  Eigen::Vector3d q = Eigen::Vector3d::Zero();
  Eigen::Vector3d qd = Eigen::Vector3d::Zero();
};

}  // namespace

int find_body(const MechanismModel& model, const std::string& name) {
  for (std::size_t i = 0; i < model.bodies.size(); ++i) {
    if (model.bodies[i].name == name) return static_cast<int>(i);
  }
  throw Error(ErrorCode::InvalidModel, "no body named '" + name + "'");
}

SceneConfig parse_scene(std::string_view text) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  const std::string P = "scene";
  if (!root.is_object()) bad(P, "expected a JSON object");

  SceneConfig sc;
  sc.name = string_or(root, "name", "", P);
  sc.notes = string_or(root, "notes", "", P);
  sc.dt = number(field(root, "dt_s", P), P + ".dt_s");
  sc.steps = integer(field(root, "steps", P), P + ".steps");
  if (!(sc.dt > 0.0)) bad(P + ".dt_s", "must be positive");
  if (sc.steps < 0) bad(P + ".steps", "must be non-negative");
  MechanismModel& m = sc.model;
  m.gravity = vec2_or(root, "gravity_mps2", Eigen::Vector2d::Zero(), P);
  if (auto it = root.find("friction_override"); it != root.end() && !it->is_null()) m.friction_override = number(*it, P + ".friction_override");
  if (auto it = root.find("restitution_override"); it != root.end() && !it->is_null()) m.restitution_override = number(*it, P + ".restitution_override");

  std::vector<std::vector<double>> chain_q, chain_qd;
  if (auto it = root.find("chains"); it != root.end()) {
    if (!it->is_array()) bad(P + ".chains", "expected an array");
    for (std::size_t c = 0; c < it->size(); ++c) {
      const json& cj = (*it)[c];
      const std::string cp = P + ".chains[" + std::to_string(c) + "]";
      Chain ch;
      ch.base = vec2_or(cj, "base_m", Eigen::Vector2d::Zero(), cp);
      ch.lengths = numbers(field(cj, "lengths_m", cp), cp + ".lengths_m");
      ch.com_offsets = numbers(field(cj, "com_offsets_m", cp), cp + ".com_offsets_m");
      std::vector<double> q(ch.lengths.size(), 0.0), qd(ch.lengths.size(), 0.0);
      if (cj.contains("joint_angles_rad")) q = numbers(cj["joint_angles_rad"], cp + ".joint_angles_rad");
      if (cj.contains("joint_rates_radps")) qd = numbers(cj["joint_rates_radps"], cp + ".joint_rates_radps");
      if (q.size() != ch.lengths.size() || qd.size() != ch.lengths.size()) bad(cp, "one joint angle and rate per link");
      chain_q.push_back(q);
      chain_qd.push_back(qd);
      m.chains.push_back(ch);
    }
  }

  const json& bodies = field(root, "bodies", P);
  if (!bodies.is_array()) bad(P + ".bodies", "expected an array");
  std::vector<BodyInit> inits;
  for (std::size_t b = 0; b < bodies.size(); ++b) {
    const json& bj = bodies[b];
    const std::string bp = P + ".bodies[" + std::to_string(b) + "]";
    Body body;
    body.name = string_or(bj, "name", "body" + std::to_string(b), bp);
    const std::string kind = string_or(bj, "kind", "free", bp);
    if (kind == "free") body.kind = BodyKind::Free;
    else if (kind == "fixed") body.kind = BodyKind::Fixed;
    else if (kind == "link") body.kind = BodyKind::ChainLink;
    else bad(bp + ".kind", "expected free, fixed or link");
    body.mass = number_or(bj, "mass_kg", 1.0, bp);
    body.inertia = number_or(bj, "inertia_kgm2", body.kind == BodyKind::ChainLink ? 0.0 : 1.0, bp);
    body.shape = parse_shape(field(bj, "shape", bp), bp + ".shape");
    if (auto it = bj.find("material"); it != bj.end()) {
      body.material.restitution = number_or(*it, "restitution", 0.0, bp + ".material");
      body.material.friction = number_or(*it, "friction", 0.0, bp + ".material");
    }
    BodyInit init;
    const Eigen::Vector2d pos = vec2_or(bj, "position_m", Eigen::Vector2d::Zero(), bp);
    const double angle = number_or(bj, "angle_rad", 0.0, bp);
    if (body.kind == BodyKind::ChainLink) {
      body.chain = integer(field(bj, "chain", bp), bp + ".chain");
      body.link = integer(field(bj, "link", bp), bp + ".link");
    } else if (body.kind == BodyKind::Fixed) {
      body.pose << pos, angle;
    } else {
      const Eigen::Vector2d vel = vec2_or(bj, "velocity_mps", Eigen::Vector2d::Zero(), bp);
      init.q << pos, angle;
      init.qd << vel, number_or(bj, "angular_velocity_radps", 0.0, bp);
    }
    inits.push_back(init);
    m.bodies.push_back(body);
  }

  const Layout layout = make_layout(m);
  sc.initial.q = Eigen::VectorXd::Zero(layout.dof);
  sc.initial.qd = Eigen::VectorXd::Zero(layout.dof);
  for (std::size_t b = 0; b < m.bodies.size(); ++b) {
    if (layout.body_offset[b] < 0) continue;
    sc.initial.q.segment<3>(layout.body_offset[b]) = inits[b].q;
    sc.initial.qd.segment<3>(layout.body_offset[b]) = inits[b].qd;
  }
  for (std::size_t c = 0; c < m.chains.size(); ++c) {
    for (std::size_t i = 0; i < chain_q[c].size(); ++i) {
      sc.initial.q[layout.chain_offset[c] + static_cast<int>(i)] = chain_q[c][i];
      sc.initial.qd[layout.chain_offset[c] + static_cast<int>(i)] = chain_qd[c][i];
    }
  }
  sc.tau = Eigen::VectorXd::Zero(layout.dof);
  if (auto it = root.find("tau"); it != root.end()) {
    const std::vector<double> t = numbers(*it, P + ".tau");
    if (static_cast<int>(t.size()) != layout.dof) bad(P + ".tau", "needs one entry per degree of freedom (" + std::to_string(layout.dof) + ")");
    sc.tau = Eigen::Map<const Eigen::VectorXd>(t.data(), layout.dof);
  }

  if (auto it = root.find("solver"); it != root.end()) {
    const std::string sp = P + ".solver";
    sc.options.ccd = boolean_or(*it, "ccd", true, sp);
    if (it->contains("substep_cap")) sc.options.substep_cap = integer((*it)["substep_cap"], sp + ".substep_cap");
    sc.options.slop = number_or(*it, "slop_m", kDefaultSlop, sp);
    if (boolean_or(*it, "legacy_maxstep", false, sp)) sc.options.rule = dantzig::MaxStepRule::Legacy;
  }

  if (auto it = root.find("experiment"); it != root.end()) {
    const std::string ep = P + ".experiment";
    ExperimentConfig& e = sc.experiment;
    e.type = string_or(*it, "type", "", ep);
    e.striker = string_or(*it, "striker", "", ep);
    e.object = string_or(*it, "object", "", ep);
    e.target = vec2_or(*it, "target_m", e.target, ep);
    e.loss_scale = number_or(*it, "loss_scale", e.loss_scale, ep);
    e.learning_rate = number_or(*it, "learning_rate", e.learning_rate, ep);
    if (it->contains("epochs")) e.epochs = integer((*it)["epochs"], ep + ".epochs");
    e.optimize_vx = boolean_or(*it, "optimize_vx", true, ep);
    e.optimize_vy = boolean_or(*it, "optimize_vy", true, ep);
    if (it->contains("seed")) e.seed = static_cast<unsigned>(integer((*it)["seed"], ep + ".seed"));
    for (const std::string& name : {e.striker, e.object}) {
      if (!name.empty()) find_body(m, name);
    }
  }
  return sc;
}

SceneConfig load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scene(buf.str());
}

std::string dump_scene(const SceneConfig& sc) {
  const MechanismModel& m = sc.model;
  const Layout layout = make_layout(m);
  json root;
  root["name"] = sc.name;
  if (!sc.notes.empty()) root["notes"] = sc.notes;
  root["dt_s"] = sc.dt;
  root["steps"] = sc.steps;
  root["gravity_mps2"] = to_json(m.gravity);
  if (m.friction_override) root["friction_override"] = *m.friction_override;
  if (m.restitution_override) root["restitution_override"] = *m.restitution_override;
  if (!m.chains.empty()) {
    json chains = json::array();
    for (std::size_t c = 0; c < m.chains.size(); ++c) {
      const Chain& ch = m.chains[c];
      json q = json::array(), qd = json::array();
      for (std::size_t i = 0; i < ch.lengths.size(); ++i) {
        q.push_back(sc.initial.q[layout.chain_offset[c] + static_cast<int>(i)]);
        qd.push_back(sc.initial.qd[layout.chain_offset[c] + static_cast<int>(i)]);
      }
      chains.push_back(json{{"base_m", to_json(ch.base)},
                            {"lengths_m", ch.lengths},
                            {"com_offsets_m", ch.com_offsets},
                            {"joint_angles_rad", q},
                            {"joint_rates_radps", qd}});
    }
    root["chains"] = chains;
  }
  json bodies = json::array();
  for (std::size_t b = 0; b < m.bodies.size(); ++b) {
    const Body& body = m.bodies[b];
    json bj;
    bj["name"] = body.name;
    bj["kind"] = body.kind == BodyKind::Free ? "free" : body.kind == BodyKind::Fixed ? "fixed" : "link";
    if (body.kind != BodyKind::Fixed) {
      bj["mass_kg"] = body.mass;
      bj["inertia_kgm2"] = body.inertia;
    }
    bj["shape"] = shape_json(body.shape);
    bj["material"] = json{{"restitution", body.material.restitution}, {"friction", body.material.friction}};
    if (body.kind == BodyKind::ChainLink) {
      bj["chain"] = body.chain;
      bj["link"] = body.link;
    } else if (body.kind == BodyKind::Fixed) {
      bj["position_m"] = to_json(body.pose.head<2>());
      bj["angle_rad"] = body.pose.z();
    } else {
      const int o = layout.body_offset[b];
      bj["position_m"] = json::array({sc.initial.q[o], sc.initial.q[o + 1]});
      bj["angle_rad"] = sc.initial.q[o + 2];
      bj["velocity_mps"] = json::array({sc.initial.qd[o], sc.initial.qd[o + 1]});
      bj["angular_velocity_radps"] = sc.initial.qd[o + 2];
    }
    bodies.push_back(bj);
  }
  root["bodies"] = bodies;
  if (sc.tau.size() > 0 && !sc.tau.isZero(0.0)) root["tau"] = std::vector<double>(sc.tau.data(), sc.tau.data() + sc.tau.size());
  root["solver"] = json{{"ccd", sc.options.ccd},
                        {"substep_cap", sc.options.substep_cap},
                        {"slop_m", sc.options.slop},
                        {"legacy_maxstep", sc.options.rule == dantzig::MaxStepRule::Legacy}};
  if (!sc.experiment.type.empty()) {
    const ExperimentConfig& e = sc.experiment;
    root["experiment"] = json{{"type", e.type},
                              {"striker", e.striker},
                              {"object", e.object},
                              {"target_m", to_json(e.target)},
                              {"loss_scale", e.loss_scale},
                              {"learning_rate", e.learning_rate},
                              {"epochs", e.epochs},
                              {"optimize_vx", e.optimize_vx},
                              {"optimize_vy", e.optimize_vy},
                              {"seed", e.seed}};
  }
  return root.dump(2) + "\n";
}

}  // namespace dsim
