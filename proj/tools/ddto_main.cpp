#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "ddto/micp.hpp"
#include "ddto/oracle.hpp"
#include "ddto/qcvx.hpp"
#include "ddto/scenario.hpp"
#include "ddto/scp.hpp"
#include "ddto/tree_io.hpp"
#include "ddto/verify.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("DDTO_LOG");
  if (!env) return LogLevel::Error;
  std::string v(env);
  if (v == "debug") return LogLevel::Debug;
  if (v == "info") return LogLevel::Info;
  return LogLevel::Error;
}

void log(LogLevel lvl, const std::string& msg) {
  if (static_cast<int>(lvl) <= static_cast<int>(log_level())) std::cerr << "[ddto] " << msg << "\n";
}

void write_json_file(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << "\n";
}

void export_tree(const ddto::DdtoTree& tree, const ddto::Scenario& sc, const fs::path& dir) {
  ddto::io::write_tree(tree, (dir / "tree.json").string());
  for (const auto& br : tree.branches) {
    auto p = ddto::full_path(tree, br.target);
    ddto::io::write_trajectory_csv(
        p, sc, (dir / ("traj_" + std::to_string(br.target) + ".csv")).string());
  }
  ddto::io::write_plotdata(tree, sc, (dir / "plotdata").string());
}

json tree_summary(const ddto::DdtoTree& tree) {
  json j;
  j["branch_times"] = json::object();
  for (const auto& [k, v] : tree.branch_times) j["branch_times"][std::to_string(k)] = v;
  if (!tree.branch_times_continuous.empty()) {
    j["branch_times_continuous"] = json::object();
    for (const auto& [k, v] : tree.branch_times_continuous)
      j["branch_times_continuous"][std::to_string(k)] = v;
  }
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deferred-decision trajectory optimization"};
  std::string method, scenario_path, out_dir = "out", anchor = "";
  double tol = -1.0;
  int max_iter = -1;
  unsigned seed = 1;
  app.add_option("method", method, "qcvx | micp | scp | oracle | verify")->required();
  app.add_option("scenario", scenario_path, "scenario JSON file (unused by verify)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--tol", tol, "solver tolerance override");
  app.add_option("--max-iter", max_iter, "solver iteration cap override");
  app.add_option("--seed", seed, "seed for randomized corpora");
  app.add_option("--anchor", anchor, "micp anchor target index or 'free'");
  CLI11_PARSE(app, argc, argv);

  fs::create_directories(out_dir);
  fs::path dir(out_dir);
  auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  try {
    json summary;
    summary["method"] = method;

    if (method == "verify") {
      auto theorems = ddto::verify::run_theorem_battery(50, seed);
      auto qcvx_eq = ddto::verify::run_qcvx_equivalence(12, seed + 1000);
      summary["theorem_instances"] = theorems.instances;
      summary["theorem_failures"] = theorems.failures;
      summary["qcvx_equivalence_instances"] = qcvx_eq.instances;
      summary["qcvx_equivalence_failures"] = qcvx_eq.failures;
      summary["messages"] = json::array();
      for (const auto& m : theorems.messages) summary["messages"].push_back(m);
      for (const auto& m : qcvx_eq.messages) summary["messages"].push_back(m);
      summary["elapsed_s"] = elapsed();
      write_json_file(summary, dir / "summary.json");
      bool ok = theorems.pass() && qcvx_eq.pass();
      std::cout << (ok ? "verify: all checks passed" : "verify: FAILURES, see summary.json")
                << "\n";
      return ok ? 0 : 1;
    }

    if (scenario_path.empty()) throw std::runtime_error("a scenario file is required");

    if (method == "oracle") {
      std::ifstream in(scenario_path);
      if (!in) throw std::runtime_error("cannot open " + scenario_path);
      std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      auto sys = ddto::oracle::from_json(text);
      auto sol = ddto::oracle::exhaustive_ddto(sys);
      auto rep = ddto::oracle::check_theorems(sys);
      summary["anchor"] = sol.anchor;
      summary["objective"] = sol.objective;
      summary["theorems_pass"] = rep.all_pass();
      if (!rep.all_pass()) summary["counterexample"] = rep.counterexample;
      summary["elapsed_s"] = elapsed();
      write_json_file(summary, dir / "summary.json");
      std::cout << "oracle: objective " << sol.objective << ", theorems "
                << (rep.all_pass() ? "pass" : "FAIL") << "\n";
      return rep.all_pass() ? 0 : 1;
    }

    auto sc = ddto::load_scenario(scenario_path);
    summary["scenario"] = sc.name;
    log(LogLevel::Info, "loaded scenario " + sc.name);

    if (method == "qcvx") {
      ddto::qcvx::SolveOptions opt;
      if (tol > 0.0) opt.tol = tol;
      if (max_iter > 0) opt.max_iter = max_iter;
      auto tree = ddto::qcvx::run_ddto_qcvx(sc, opt);
      export_tree(tree, sc, dir);
      summary.update(tree_summary(tree));
      summary["cumulative_reachable"] = ddto::qcvx::cumulative_reachable_count(tree, sc);
    } else if (method == "micp") {
      if (anchor == "free")
        sc.micp.anchor = -1;
      else if (!anchor.empty())
        sc.micp.anchor = std::stoi(anchor);
      auto res = ddto::micp::run_ddto_micp(sc);
      export_tree(res.tree, sc, dir);
      ddto::micp::write_node_log(res.log, (dir / "micp_nodes.csv").string());
      summary.update(tree_summary(res.tree));
      summary["anchor"] = res.anchor;
      summary["objective"] = res.objective;
      summary["best_bound"] = res.best_bound;
      summary["gap"] = res.gap;
      summary["nodes"] = res.nodes;
      summary["converged"] = res.converged;
      int cum = 0;
      for (const auto& Jk : res.target_sets) cum += static_cast<int>(Jk.size());
      summary["cumulative_reachable"] = cum;
    } else if (method == "scp") {
      ddto::ScpConfig cfg = sc.scp;
      if (tol > 0.0) cfg.solver_tol = tol;
      if (max_iter > 0) cfg.max_iterations = max_iter;
      std::vector<std::vector<ddto::scp::IterRecord>> traces;
      auto tree = ddto::scp::run_ddto_scp(sc, cfg, &traces);
      export_tree(tree, sc, dir);
      for (size_t r = 0; r < traces.size(); ++r)
        ddto::scp::write_iteration_trace(
            traces[r], (dir / ("scp_trace_round" + std::to_string(r + 1) + ".csv")).string());
      summary.update(tree_summary(tree));
      auto rep = ddto::scp::validate_continuous(tree, sc, 50);
      summary["max_inequality_violation"] = rep.max_inequality;
      summary["min_obstacle_margin"] = rep.min_obstacle_margin;
      summary["max_speed"] = rep.max_speed;
      summary["max_cost"] = rep.max_cost;
    } else {
      throw std::runtime_error("unknown method " + method);
    }

    summary["elapsed_s"] = elapsed();
    write_json_file(summary, dir / "summary.json");
    std::cout << method << ": done in " << summary["elapsed_s"].get<double>() << " s, outputs in "
              << out_dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::ofstream diag(dir / "error.txt");
    diag << e.what() << "\n";
    return 1;
  }
}
