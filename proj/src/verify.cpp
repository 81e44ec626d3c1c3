#include "ddto/verify.hpp"

#include <sstream>
#include <stdexcept>

#include "ddto/micp.hpp"
#include "ddto/qcvx.hpp"

namespace ddto::verify {

std::vector<oracle::GridSystem> bundled_corpus(int count, unsigned seed0, bool embeddable_only,
                                               int min_targets) {
  std::vector<oracle::GridSystem> out;
  unsigned seed = seed0;
  while (static_cast<int>(out.size()) < count) {
    auto sys = oracle::random_integrator_instance(seed++);
    if (embeddable_only && sys.z0.size() != 1) continue;
    if (sys.num_targets() < min_targets) continue;
    out.push_back(std::move(sys));
  }
  return out;
}

Scenario scenario_from_grid(const oracle::GridSystem& sys) {
  if (sys.z0.size() != 1)
    throw std::invalid_argument("scenario_from_grid: only the 1-D integrator family embeds");
  Scenario sc;
  sc.name = "grid_embed";
  sc.system.A = Mat::Identity(1, 1);
  sc.system.B = Mat::Identity(1, 1);
  sc.system.c = Vec::Zero(1);
  sc.system.n_x = 1;
  sc.system.n_u = 1;
  sc.z0 = Vec::Constant(1, static_cast<double>(sys.z0[0]));
  for (const auto& tgt : sys.targets) {
    if (tgt.size() != 1) throw std::invalid_argument("scenario_from_grid: singleton targets only");
    sc.targets.push_back(Vec::Constant(1, static_cast<double>(tgt.begin()->at(0))));
    sc.horizons.push_back(sys.N);
    sc.priorities.push_back(static_cast<int>(sc.priorities.size()));
  }
  int lo = sys.states.front()[0], hi = sys.states.back()[0];
  sc.state.box_lo = Vec::Constant(1, static_cast<double>(lo));
  sc.state.box_hi = Vec::Constant(1, static_cast<double>(hi));
  int ulo = sys.inputs.front()[0], uhi = sys.inputs.back()[0];
  sc.input.box_lo = Vec::Constant(1, static_cast<double>(ulo));
  sc.input.box_hi = Vec::Constant(1, static_cast<double>(uhi));
  return sc;
}

BatteryReport run_theorem_battery(int count, unsigned seed0) {
  BatteryReport rep;
  for (const auto& sys : bundled_corpus(count, seed0, false)) {
    ++rep.instances;
    auto tr = oracle::check_theorems(sys);
    if (!tr.all_pass()) {
      ++rep.failures;
      rep.messages.push_back(tr.counterexample);
    }
  }
  return rep;
}

BatteryReport run_qcvx_equivalence(int count, unsigned seed0) {
  BatteryReport rep;
  for (const auto& sys : bundled_corpus(count, seed0, true, 2)) {
    ++rep.instances;
    Scenario sc = scenario_from_grid(sys);
    const int n = sys.num_targets();
    bool ok = true;
    std::ostringstream why;
    for (unsigned mask = 1; mask < (1u << n) && ok; ++mask) {
      std::vector<int> J;
      for (int j = 0; j < n; ++j)
        if (mask & (1u << j)) J.push_back(j);
      if (oracle::k_reach_J(sys, J, 1).empty()) continue;
      int k_oracle = oracle::branch_time_oracle(sys, J);
      std::vector<int> horizons(J.size(), sys.N);
      auto res = qcvx::max_branch_time(sc, J, horizons, sc.z0, kInf);
      if (res.k != k_oracle) {
        ok = false;
        why << "branch time mismatch: qcvx " << res.k << " vs oracle " << k_oracle << " on mask "
            << mask;
      } else if (!res.transcript.probed(res.k, true) ||
                 (res.k < sys.N && !res.transcript.probed(res.k + 1, false))) {
        ok = false;
        why << "bisection transcript missing the certifying probes on mask " << mask;
      }
    }
    if (!ok) {
      ++rep.failures;
      why << "; instance: " << oracle::to_json(sys);
      rep.messages.push_back(why.str());
    }
  }
  return rep;
}

BatteryReport run_micp_equivalence(int count, unsigned seed0) {
  BatteryReport rep;
  for (const auto& sys : bundled_corpus(count, seed0, true, 2)) {
    ++rep.instances;
    Scenario sc = scenario_from_grid(sys);
    sc.micp.anchor = -1;
    sc.micp.time_budget_s = 60.0;
    auto res = micp::best_anchor(sc);
    auto exact = oracle::exhaustive_ddto(sys);
    if (static_cast<int>(res.objective + 0.5) != exact.objective) {
      ++rep.failures;
      std::ostringstream why;
      why << "objective mismatch: micp " << res.objective << " vs exhaustive " << exact.objective
          << "; instance: " << oracle::to_json(sys);
      rep.messages.push_back(why.str());
    }
  }
  return rep;
}

}  // namespace ddto::verify
