#include "ddto/tree_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ddto {

FullPath full_path(const DdtoTree& tree, int target) {
  const BranchSegment* branch = nullptr;
  for (const auto& br : tree.branches)
    if (br.target == target) branch = &br;
  if (!branch) throw std::invalid_argument("full_path: no branch for target");

  FullPath out;
  auto append = [&out](const std::vector<Vec>& states, const std::vector<Vec>& inputs,
                       const std::vector<double>& times, int upto) {
    // upto = number of leading states to keep (-1 = all); drops the shared
    // knot when the path already ends there.
    int count = upto < 0 ? static_cast<int>(states.size()) : upto;
    int skip = out.states.empty() ? 0 : 1;
    for (int i = skip; i < count; ++i) out.states.push_back(states[i]);
    for (int i = 0; i < count - 1 && i < static_cast<int>(inputs.size()); ++i)
      out.inputs.push_back(inputs[i]);
    if (!times.empty())
      for (int i = skip; i < count; ++i) out.times.push_back(times[i]);
  };

  for (const auto& trunk : tree.trunks) {
    if (trunk.start_index >= branch->branch_time) break;
    int keep = std::min(trunk.end_index, branch->branch_time) - trunk.start_index + 1;
    append(trunk.states, trunk.inputs, trunk.times, keep);
    if (trunk.end_index >= branch->branch_time) break;
  }
  append(branch->states, branch->inputs, branch->times, -1);
  return out;
}

}  // namespace ddto

namespace ddto::io {

using nlohmann::json;

namespace {

json vec_to_json(const Vec& v) {
  json j = json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

Vec vec_from_json(const json& j) {
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

json vecs_to_json(const std::vector<Vec>& vs) {
  json j = json::array();
  for (const auto& v : vs) j.push_back(vec_to_json(v));
  return j;
}

std::vector<Vec> vecs_from_json(const json& j) {
  std::vector<Vec> vs;
  for (const auto& e : j) vs.push_back(vec_from_json(e));
  return vs;
}

}  // namespace

std::string tree_to_json(const DdtoTree& tree) {
  json j;
  j["trunks"] = json::array();
  for (const auto& tr : tree.trunks) {
    json t;
    t["start_index"] = tr.start_index;
    t["end_index"] = tr.end_index;
    t["states"] = vecs_to_json(tr.states);
    t["inputs"] = vecs_to_json(tr.inputs);
    t["times"] = tr.times;
    j["trunks"].push_back(t);
  }
  j["branches"] = json::array();
  for (const auto& br : tree.branches) {
    json b;
    b["target"] = br.target;
    b["branch_time"] = br.branch_time;
    b["branch_time_continuous"] = br.branch_time_continuous;
    b["branch_point"] = vec_to_json(br.branch_point);
    b["states"] = vecs_to_json(br.states);
    b["inputs"] = vecs_to_json(br.inputs);
    b["times"] = br.times;
    j["branches"].push_back(b);
  }
  json bt = json::object(), btc = json::object();
  for (const auto& [k, v] : tree.branch_times) bt[std::to_string(k)] = v;
  for (const auto& [k, v] : tree.branch_times_continuous) btc[std::to_string(k)] = v;
  j["branch_times"] = bt;
  j["branch_times_continuous"] = btc;
  return j.dump(2);
}

DdtoTree tree_from_json(const std::string& text) {
  json j = json::parse(text);
  DdtoTree tree;
  for (const auto& t : j.at("trunks")) {
    TrunkSegment tr;
    tr.start_index = t.at("start_index").get<int>();
    tr.end_index = t.at("end_index").get<int>();
    tr.states = vecs_from_json(t.at("states"));
    tr.inputs = vecs_from_json(t.at("inputs"));
    tr.times = t.at("times").get<std::vector<double>>();
    tree.trunks.push_back(std::move(tr));
  }
  for (const auto& b : j.at("branches")) {
    BranchSegment br;
    br.target = b.at("target").get<int>();
    br.branch_time = b.at("branch_time").get<int>();
    br.branch_time_continuous = b.at("branch_time_continuous").get<double>();
    br.branch_point = vec_from_json(b.at("branch_point"));
    br.states = vecs_from_json(b.at("states"));
    br.inputs = vecs_from_json(b.at("inputs"));
    br.times = b.at("times").get<std::vector<double>>();
    tree.branches.push_back(std::move(br));
  }
  for (auto it = j.at("branch_times").begin(); it != j.at("branch_times").end(); ++it)
    tree.branch_times[std::stoi(it.key())] = it.value().get<int>();
  for (auto it = j.at("branch_times_continuous").begin();
       it != j.at("branch_times_continuous").end(); ++it)
    tree.branch_times_continuous[std::stoi(it.key())] = it.value().get<double>();
  return tree;
}

void write_tree(const DdtoTree& tree, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_tree: cannot open " + path);
  out << tree_to_json(tree) << "\n";
}

DdtoTree read_tree(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_tree: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return tree_from_json(text);
}

namespace {

// Time stamp and cumulative input cost for row k of a path. Discrete trees
// carry no time stamps; physical time follows from the sampling step, cost
// from the running sum of squared inputs. Continuous trees carry both.
struct RowAnnotator {
  const Scenario& sc;
  const FullPath& path;
  double dt = 0.0;
  std::vector<double> cost;

  RowAnnotator(const Scenario& s, const FullPath& p) : sc(s), path(p) {
    if (s.system.n_x > 0 && s.system.A.rows() >= 4) dt = s.system.A(0, 3);
    cost.assign(path.states.size(), 0.0);
    if (!path.states.empty() && path.states[0].size() == 7) {
      for (size_t k = 0; k < path.states.size(); ++k) cost[k] = path.states[k](6);
    } else {
      double acc = 0.0;
      for (size_t k = 1; k < path.states.size(); ++k) {
        acc += path.inputs[k - 1].head(std::min<Eigen::Index>(3, path.inputs[k - 1].size()))
                   .squaredNorm();
        cost[k] = acc;
      }
    }
  }
  double time(size_t k) const {
    if (!path.times.empty()) return path.times[k];
    return dt * static_cast<double>(k);
  }
};

}  // namespace

void write_trajectory_csv(const FullPath& path_data, const Scenario& sc,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trajectory_csv: cannot open " + path);
  if (path_data.states.empty()) throw std::invalid_argument("write_trajectory_csv: empty path");
  RowAnnotator ann(sc, path_data);
  int n_x = static_cast<int>(path_data.states[0].size());
  int n_u = path_data.inputs.empty() ? 0 : static_cast<int>(path_data.inputs[0].size());
  out << "k,t";
  for (int i = 0; i < n_x; ++i) out << ",x" << i;
  for (int i = 0; i < n_u; ++i) out << ",u" << i;
  out << ",cost\n";
  out.precision(17);
  for (size_t k = 0; k < path_data.states.size(); ++k) {
    out << k + 1 << "," << ann.time(k);
    for (int i = 0; i < n_x; ++i) out << "," << path_data.states[k](i);
    for (int i = 0; i < n_u; ++i)
      out << "," << (k < path_data.inputs.size() ? path_data.inputs[k](i) : 0.0);
    out << "," << ann.cost[k] << "\n";
  }
}

void write_plotdata(const DdtoTree& tree, const Scenario& sc, const std::string& dir) {
  std::filesystem::create_directories(dir);
  Vec e_hat = sc.input.e_hat.size() == 3 ? Vec(sc.input.e_hat) : Vec(sc.quad.e_hat);
  for (const auto& br : tree.branches) {
    FullPath p = full_path(tree, br.target);
    RowAnnotator ann(sc, p);
    std::ofstream out(dir + "/target_" + std::to_string(br.target) + ".csv");
    out << "k,t,px,py,pz,speed,cost,thrust,pointing_deg\n";
    out.precision(17);
    for (size_t k = 0; k < p.states.size(); ++k) {
      const Vec& x = p.states[k];
      double speed = x.size() >= 6 ? x.segment(3, 3).norm() : 0.0;
      double thrust = 0.0, pointing = 0.0;
      if (k < p.inputs.size()) {
        Vec u = p.inputs[k].head(3);
        thrust = u.norm();
        if (thrust > 0.0)
          pointing = std::acos(std::clamp(e_hat.dot(u) / thrust, -1.0, 1.0)) * 180.0 / M_PI;
      }
      out << k + 1 << "," << ann.time(k) << "," << x(0) << "," << x(1) << "," << x(2) << ","
          << speed << "," << ann.cost[k] << "," << thrust << "," << pointing << "\n";
    }
  }
}

}  // namespace ddto::io
