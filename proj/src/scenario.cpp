#include "ddto/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ddto {

using nlohmann::json;

void Scenario::validate() const {
  const int n = num_targets();
  if (n < 1) throw std::invalid_argument("scenario: at least one target required");
  if (!priorities.empty()) {
    if (static_cast<int>(priorities.size()) != n)
      throw std::invalid_argument("scenario: priorities must cover all targets");
    std::set<int> seen(priorities.begin(), priorities.end());
    if (static_cast<int>(seen.size()) != n || *seen.begin() != 0 || *seen.rbegin() != n - 1)
      throw std::invalid_argument("scenario: priorities must be a permutation of 0..n-1");
  }
  if (l_max <= 0.0) throw std::invalid_argument("scenario: l_max must be positive");
  if (input.point_min > input.norm_max)
    throw std::invalid_argument("scenario: input lower bound exceeds upper bound");
  if (quad.u_min > quad.u_max)
    throw std::invalid_argument("scenario: u_min exceeds u_max");

  if (system.n_x > 0) {
    if (z0.size() != system.n_x) throw std::invalid_argument("scenario: z0 dimension mismatch");
    for (const auto& z : targets)
      if (z.size() != system.n_x)
        throw std::invalid_argument("scenario: target dimension mismatch");
    if (static_cast<int>(horizons.size()) != n)
      throw std::invalid_argument("scenario: one horizon per target required");
    for (int N : horizons)
      if (N < 2) throw std::invalid_argument("scenario: horizons must be at least 2");
  }
  if (scp_horizon > 0) {
    if (z0.size() != 6 && z0.size() != 7)
      throw std::invalid_argument("scenario: continuous z0 must be (r, v[, theta])");
    for (const auto& z : targets)
      if (z.size() != 6)
        throw std::invalid_argument("scenario: continuous targets must be (r, v)");
    if (scp.epsilon <= 0.0 || scp.tr_init <= 0.0 || scp.w_pen <= 0.0 || scp.s_min <= 0.0 ||
        scp.s_min > scp.s_max)
      throw std::invalid_argument("scenario: invalid scp configuration");
  }
  if (system.n_x == 0 && scp_horizon == 0)
    throw std::invalid_argument("scenario: neither discrete system nor continuous horizon set");
}

Scenario quad_convex_scenario() {
  Scenario sc;
  sc.name = "quad_convex";
  Vec3 a(0.0, 0.0, -9.806);
  sc.system = model::double_integrator_discrete(0.5, a);
  sc.z0 = Vec::Zero(6);
  sc.z0(2) = 30.0;
  auto target = [](double x, double y, double z) {
    Vec t = Vec::Zero(6);
    t(0) = x;
    t(1) = y;
    t(2) = z;
    return t;
  };
  sc.targets = {target(39.5, -6.25, 0.0), target(39.5, 6.25, 0.0), target(28.3, 28.3, 0.0),
                target(40.0, 0.0, 0.0)};
  sc.priorities = {0, 1, 2, 3};
  sc.horizons = {20, 20, 20, 20};
  sc.input.norm_max = 20.0;
  sc.input.point_min = 8.0;
  sc.input.delta_max_deg = 60.0;
  sc.input.e_hat = Vec3(0.0, 0.0, 1.0);
  sc.l_max = 3794.0;
  return sc;
}

Scenario quad_nonconvex_scenario() {
  Scenario sc;
  sc.name = "quad_nonconvex";
  sc.z0 = Vec::Zero(7);
  sc.z0 << 10.0, -10.0, 10.0, 0.0, 0.0, 0.0, 0.0;
  auto target = [](double x, double y, double z, double vx, double vy, double vz) {
    Vec t(6);
    t << x, y, z, vx, vy, vz;
    return t;
  };
  sc.targets = {target(10.0, 30.0, 10.0, 1.0, 0.0, 0.0), target(-10.0, 35.0, 10.0, 0.0, 1.0, 0.0),
                target(-30.0, 15.0, 10.0, 0.0, 0.0, 0.0),
                target(-15.0, -15.0, 10.0, 0.0, 1.0, 0.0)};
  sc.priorities = {0, 1, 2, 3};
  sc.l_max = 1100.0;
  sc.scp_horizon = 23;

  sc.quad.gravity = Vec3(0.0, 0.0, -9.806);
  sc.quad.drag_coeff = 0.01;
  sc.quad.v_max = 8.0;
  sc.quad.u_max = 20.0;
  sc.quad.u_min = 5.0;
  sc.quad.e_hat = Vec3(0.0, 0.0, 1.0);
  sc.quad.delta_max_deg = 60.0;
  model::Obstacle ob1;
  ob1.H = Vec3(0.2, 0.1, 0.2).asDiagonal();
  ob1.q = Vec3(-5.0, 1.0, 10.0);
  model::Obstacle ob2;
  ob2.H = Vec3(0.1, 0.2, 0.2).asDiagonal();
  ob2.q = Vec3(-10.0, 20.0, 10.0);
  sc.quad.obstacles = {ob1, ob2};
  sc.scp.epsilon = 1e-5;
  sc.scp.u_inf_max = 20.0;
  return sc;
}

namespace {

void expect_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw std::invalid_argument("scenario: unknown key '" + it.key() + "' in " + where);
}

Vec to_vec(const json& j) {
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

json from_vec(const Vec& v) {
  json j = json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void maybe_vec(const json& j, const char* key, Vec& out) {
  if (j.contains(key)) out = to_vec(j.at(key));
}

void maybe_vec3(const json& j, const char* key, Vec3& out) {
  if (j.contains(key)) {
    Vec v = to_vec(j.at(key));
    if (v.size() != 3) throw std::invalid_argument(std::string("scenario: ") + key + " must have 3 entries");
    out = v;
  }
}

}  // namespace

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("scenario: cannot open " + path);
  json j = json::parse(in);
  expect_keys(j,
              {"name", "system", "z0", "targets", "priorities", "horizons", "input", "state",
               "l_max", "quad", "scp", "micp"},
              "top level");
  Scenario sc;
  maybe(j, "name", sc.name);
  maybe_vec(j, "z0", sc.z0);
  if (j.contains("targets"))
    for (const auto& t : j.at("targets")) sc.targets.push_back(to_vec(t));
  maybe(j, "priorities", sc.priorities);
  if (sc.priorities.empty())
    for (int i = 0; i < sc.num_targets(); ++i) sc.priorities.push_back(i);
  maybe(j, "horizons", sc.horizons);
  maybe(j, "l_max", sc.l_max);

  if (j.contains("system")) {
    const auto& s = j.at("system");
    expect_keys(s, {"type", "dt", "accel"}, "system");
    std::string type = s.value("type", "double_integrator");
    if (type != "double_integrator")
      throw std::invalid_argument("scenario: unsupported system type " + type);
    Vec3 a(0.0, 0.0, 0.0);
    maybe_vec3(s, "accel", a);
    sc.system = model::double_integrator_discrete(s.at("dt").get<double>(), a);
  }
  if (j.contains("input")) {
    const auto& s = j.at("input");
    expect_keys(s, {"norm_max", "point_min", "delta_max_deg", "e_hat", "box_lo", "box_hi"},
                "input");
    maybe(s, "norm_max", sc.input.norm_max);
    maybe(s, "point_min", sc.input.point_min);
    maybe(s, "delta_max_deg", sc.input.delta_max_deg);
    maybe_vec(s, "e_hat", sc.input.e_hat);
    maybe_vec(s, "box_lo", sc.input.box_lo);
    maybe_vec(s, "box_hi", sc.input.box_hi);
  }
  if (j.contains("state")) {
    const auto& s = j.at("state");
    expect_keys(s, {"box_lo", "box_hi"}, "state");
    maybe_vec(s, "box_lo", sc.state.box_lo);
    maybe_vec(s, "box_hi", sc.state.box_hi);
  }
  if (j.contains("quad")) {
    const auto& s = j.at("quad");
    expect_keys(s,
                {"gravity", "drag_coeff", "v_max", "u_max", "u_min", "e_hat", "delta_max_deg",
                 "obstacles"},
                "quad");
    maybe_vec3(s, "gravity", sc.quad.gravity);
    maybe(s, "drag_coeff", sc.quad.drag_coeff);
    maybe(s, "v_max", sc.quad.v_max);
    maybe(s, "u_max", sc.quad.u_max);
    maybe(s, "u_min", sc.quad.u_min);
    maybe_vec3(s, "e_hat", sc.quad.e_hat);
    maybe(s, "delta_max_deg", sc.quad.delta_max_deg);
    if (s.contains("obstacles"))
      for (const auto& o : s.at("obstacles")) {
        expect_keys(o, {"H_diag", "q"}, "obstacle");
        model::Obstacle ob;
        Vec3 d(0, 0, 0), q(0, 0, 0);
        maybe_vec3(o, "H_diag", d);
        maybe_vec3(o, "q", q);
        ob.H = d.asDiagonal();
        ob.q = q;
        sc.quad.obstacles.push_back(ob);
      }
  }
  if (j.contains("scp")) {
    const auto& s = j.at("scp");
    expect_keys(s,
                {"horizon", "tr_init", "w_pen", "tr_decay", "max_iterations", "convergence_tol",
                 "defect_tol", "epsilon", "s_min", "s_max", "u_inf_max", "substeps",
                 "solver_tol", "solver_max_iter"},
                "scp");
    maybe(s, "horizon", sc.scp_horizon);
    maybe(s, "tr_init", sc.scp.tr_init);
    maybe(s, "w_pen", sc.scp.w_pen);
    maybe(s, "tr_decay", sc.scp.tr_decay);
    maybe(s, "max_iterations", sc.scp.max_iterations);
    maybe(s, "convergence_tol", sc.scp.convergence_tol);
    maybe(s, "defect_tol", sc.scp.defect_tol);
    maybe(s, "epsilon", sc.scp.epsilon);
    maybe(s, "s_min", sc.scp.s_min);
    maybe(s, "s_max", sc.scp.s_max);
    maybe(s, "u_inf_max", sc.scp.u_inf_max);
    maybe(s, "substeps", sc.scp.substeps);
    maybe(s, "solver_tol", sc.scp.solver_tol);
    maybe(s, "solver_max_iter", sc.scp.solver_max_iter);
  }
  if (j.contains("micp")) {
    const auto& s = j.at("micp");
    expect_keys(s, {"big_M", "p_norm", "anchor", "gap_tol", "time_budget_s", "monotonicity_cuts"},
                "micp");
    maybe(s, "big_M", sc.micp.big_M);
    maybe(s, "p_norm", sc.micp.p_norm);
    if (s.contains("anchor")) {
      if (s.at("anchor").is_string()) {
        if (s.at("anchor").get<std::string>() != "free")
          throw std::invalid_argument("scenario: micp anchor must be an index or \"free\"");
        sc.micp.anchor = -1;
      } else {
        sc.micp.anchor = s.at("anchor").get<int>();
      }
    }
    maybe(s, "gap_tol", sc.micp.gap_tol);
    maybe(s, "time_budget_s", sc.micp.time_budget_s);
    maybe(s, "monotonicity_cuts", sc.micp.monotonicity_cuts);
  }
  sc.validate();
  return sc;
}

void save_scenario(const Scenario& sc, const std::string& path) {
  json j;
  j["name"] = sc.name;
  j["z0"] = from_vec(sc.z0);
  j["targets"] = json::array();
  for (const auto& t : sc.targets) j["targets"].push_back(from_vec(t));
  j["priorities"] = sc.priorities;
  if (!sc.horizons.empty()) j["horizons"] = sc.horizons;
  if (std::isfinite(sc.l_max)) j["l_max"] = sc.l_max;
  if (sc.system.n_x > 0) {
    // dt recoverable from the exact discretization's velocity coupling.
    double dt = sc.system.A(0, 3);
    Vec3 a = sc.system.c.tail(3) / dt;
    j["system"] = {{"type", "double_integrator"}, {"dt", dt}, {"accel", from_vec(a)}};
  }
  {
    json s;
    if (std::isfinite(sc.input.norm_max)) s["norm_max"] = sc.input.norm_max;
    if (sc.input.point_min > -kInf) s["point_min"] = sc.input.point_min;
    if (sc.input.delta_max_deg < 90.0) s["delta_max_deg"] = sc.input.delta_max_deg;
    if (sc.input.e_hat.size() > 0) s["e_hat"] = from_vec(sc.input.e_hat);
    if (sc.input.box_lo.size() > 0) s["box_lo"] = from_vec(sc.input.box_lo);
    if (sc.input.box_hi.size() > 0) s["box_hi"] = from_vec(sc.input.box_hi);
    if (!s.empty()) j["input"] = s;
  }
  if (sc.state.box_lo.size() > 0 || sc.state.box_hi.size() > 0) {
    json s;
    if (sc.state.box_lo.size() > 0) s["box_lo"] = from_vec(sc.state.box_lo);
    if (sc.state.box_hi.size() > 0) s["box_hi"] = from_vec(sc.state.box_hi);
    j["state"] = s;
  }
  if (sc.scp_horizon > 0) {
    json q;
    q["gravity"] = from_vec(sc.quad.gravity);
    q["drag_coeff"] = sc.quad.drag_coeff;
    if (std::isfinite(sc.quad.v_max)) q["v_max"] = sc.quad.v_max;
    q["u_max"] = sc.quad.u_max;
    q["u_min"] = sc.quad.u_min;
    q["e_hat"] = from_vec(sc.quad.e_hat);
    q["delta_max_deg"] = sc.quad.delta_max_deg;
    q["obstacles"] = json::array();
    for (const auto& ob : sc.quad.obstacles)
      q["obstacles"].push_back(
          {{"H_diag", from_vec(ob.H.diagonal())}, {"q", from_vec(ob.q)}});
    j["quad"] = q;
    json s;
    s["horizon"] = sc.scp_horizon;
    s["epsilon"] = sc.scp.epsilon;
    s["tr_init"] = sc.scp.tr_init;
    s["w_pen"] = sc.scp.w_pen;
    s["tr_decay"] = sc.scp.tr_decay;
    s["s_min"] = sc.scp.s_min;
    s["s_max"] = sc.scp.s_max;
    s["u_inf_max"] = sc.scp.u_inf_max;
    j["scp"] = s;
  }
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

}  // namespace ddto
