#include "ddto/oracle.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ddto::oracle {

bool GridSystem::admissible(const GridState& x) const {
  return std::binary_search(states.begin(), states.end(), x);
}

static void sort_unique(std::vector<GridState>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

StateSet forward_reach(const GridSystem& sys, int M, const GridState& z) {
  if (M < 0) throw std::invalid_argument("forward_reach: M must be >= 0");
  if (!sys.admissible(z)) throw std::invalid_argument("forward_reach: z not admissible");
  StateSet layer{z};
  for (int m = 0; m < M; ++m) {
    StateSet next;
    for (const auto& x : layer)
      for (const auto& u : sys.inputs) {
        GridState y = sys.step(x, u);
        if (sys.admissible(y)) next.insert(y);
      }
    layer = std::move(next);
  }
  return layer;
}

StateSet backward_reach(const GridSystem& sys, int M, const StateSet& Z) {
  if (M < 0) throw std::invalid_argument("backward_reach: M must be >= 0");
  StateSet layer;
  for (const auto& x : Z)
    if (sys.admissible(x)) layer.insert(x);
  if (M == 0) return layer;
  // Predecessor adjacency over the admissible set.
  std::map<GridState, std::vector<GridState>> pred;
  for (const auto& x : sys.states)
    for (const auto& u : sys.inputs) {
      GridState y = sys.step(x, u);
      if (sys.admissible(y)) pred[y].push_back(x);
    }
  for (auto& [y, xs] : pred) sort_unique(xs);
  for (int m = 0; m < M; ++m) {
    StateSet prev;
    for (const auto& y : layer) {
      auto it = pred.find(y);
      if (it != pred.end()) prev.insert(it->second.begin(), it->second.end());
    }
    layer = std::move(prev);
  }
  return layer;
}

StateSet k_reach(const GridSystem& sys, int j, int k) {
  if (k < 1 || k > sys.N) throw std::invalid_argument("k_reach: k out of range");
  StateSet fwd = forward_reach(sys, k - 1, sys.z0);
  StateSet bwd = backward_reach(sys, sys.N - k, sys.targets.at(j));
  StateSet out;
  std::set_intersection(fwd.begin(), fwd.end(), bwd.begin(), bwd.end(),
                        std::inserter(out, out.begin()));
  return out;
}

StateSet k_reach_J(const GridSystem& sys, const std::vector<int>& J, int k) {
  if (J.empty()) throw std::invalid_argument("k_reach_J: empty J");
  StateSet out = k_reach(sys, J[0], k);
  for (size_t i = 1; i < J.size(); ++i) {
    StateSet next = k_reach(sys, J[i], k);
    StateSet inter;
    std::set_intersection(out.begin(), out.end(), next.begin(), next.end(),
                          std::inserter(inter, inter.begin()));
    out = std::move(inter);
  }
  return out;
}

std::vector<std::vector<int>> lambda_sets(const GridSystem& sys, int k) {
  const int n = sys.num_targets();
  std::vector<std::vector<int>> out;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<int> J;
    for (int j = 0; j < n; ++j)
      if (mask & (1u << j)) J.push_back(j);
    if (!k_reach_J(sys, J, k).empty()) out.push_back(J);
  }
  return out;
}

int branch_time_oracle(const GridSystem& sys, const std::vector<int>& J) {
  if (k_reach_J(sys, J, 1).empty())
    throw std::runtime_error("branch_time_oracle: J infeasible at k=1 (undefined branch time)");
  int best = 1;
  for (int k = 2; k <= sys.N; ++k)
    if (!k_reach_J(sys, J, k).empty()) best = k;
  return best;
}

namespace {

// Memoized "can reach target j in exactly N-k more steps from x" computed by
// top-down recursion — an implementation route independent of the layered
// backward_reach sweep.
struct ReachMemo {
  const GridSystem& sys;
  int target;
  // memo[k] : state -> known answer
  std::vector<std::map<GridState, bool>> memo;
  explicit ReachMemo(const GridSystem& s, int j)
      : sys(s), target(j), memo(static_cast<size_t>(s.N) + 1) {}
  bool can_reach(const GridState& x, int k) {
    if (!sys.admissible(x)) return false;
    if (k == sys.N) return sys.targets[target].count(x) > 0;
    auto& m = memo[k];
    auto it = m.find(x);
    if (it != m.end()) return it->second;
    m[x] = false;  // cycle guard (no cycles: k strictly increases)
    bool ok = false;
    for (const auto& u : sys.inputs) {
      if (can_reach(sys.step(x, u), k + 1)) {
        ok = true;
        break;
      }
    }
    m[x] = ok;
    return ok;
  }
};

}  // namespace

int coincidence_optimum_enumerated(const GridSystem& sys, const std::vector<int>& J) {
  std::vector<ReachMemo> memos;
  memos.reserve(J.size());
  for (int j : J) memos.emplace_back(sys, j);
  auto viable = [&](const GridState& x, int k) {
    for (auto& m : memos)
      if (!m.can_reach(x, k)) return false;
    return true;
  };
  if (!viable(sys.z0, 1)) return 0;
  StateSet layer{sys.z0};
  int best = 1;
  for (int k = 2; k <= sys.N; ++k) {
    StateSet next;
    for (const auto& x : layer)
      for (const auto& u : sys.inputs) {
        GridState y = sys.step(x, u);
        if (sys.admissible(y) && viable(y, k)) next.insert(y);
      }
    if (next.empty()) break;
    best = k;
    layer = std::move(next);
  }
  return best;
}

namespace {

struct Enumerator {
  const GridSystem& sys;
  std::int64_t budget;
  std::int64_t used = 0;

  void charge(std::int64_t amount) {
    used += amount;
    if (used > budget)
      throw std::runtime_error("exhaustive_ddto: enumeration budget exceeded (used " +
                               std::to_string(used) + " of " + std::to_string(budget) + ")");
  }
};

// Min-mismatch trajectory to target j against a fixed anchor trajectory,
// via layered shortest path. Returns (cost, trajectory).
std::pair<int, std::vector<GridState>> best_match(const GridSystem& sys,
                                                  const std::vector<GridState>& anchor, int j,
                                                  Enumerator& en) {
  const int N = sys.N;
  std::map<GridState, int> cost{{sys.z0, 0}};
  std::vector<std::map<GridState, GridState>> parent(N + 1);
  for (int k = 2; k <= N; ++k) {
    std::map<GridState, int> next;
    for (const auto& [x, cx] : cost)
      for (const auto& u : sys.inputs) {
        en.charge(1);
        GridState y = sys.step(x, u);
        if (!sys.admissible(y)) continue;
        int cy = cx + (y == anchor[k - 1] ? 0 : 1);
        auto it = next.find(y);
        if (it == next.end() || cy < it->second) {
          next[y] = cy;
          parent[k][y] = x;
        }
      }
    cost = std::move(next);
  }
  int best = -1;
  GridState best_end;
  for (const auto& x : sys.targets[j]) {
    auto it = cost.find(x);
    if (it != cost.end() && (best < 0 || it->second < best)) {
      best = it->second;
      best_end = x;
    }
  }
  if (best < 0) throw std::runtime_error("exhaustive_ddto: target unreachable");
  std::vector<GridState> traj(N);
  traj[N - 1] = best_end;
  for (int k = N; k >= 2; --k) traj[k - 2] = parent[k].at(traj[k - 1]);
  return {best, traj};
}

void enumerate_anchor(const GridSystem& sys, int i, const std::vector<StateSet>& i_kreach,
                      std::vector<GridState>& prefix, Enumerator& en,
                      const std::function<void(const std::vector<GridState>&)>& emit) {
  int k = static_cast<int>(prefix.size());
  if (k == sys.N) {
    emit(prefix);
    return;
  }
  for (const auto& u : sys.inputs) {
    en.charge(1);
    GridState y = sys.step(prefix.back(), u);
    if (!sys.admissible(y)) continue;
    if (!i_kreach[k + 1].count(y)) continue;  // cannot complete to target i
    prefix.push_back(y);
    enumerate_anchor(sys, i, i_kreach, prefix, en, emit);
    prefix.pop_back();
  }
}

ExhaustiveSolution solve_anchored(const GridSystem& sys, int i, Enumerator& en) {
  const int n = sys.num_targets();
  std::vector<StateSet> i_kreach(sys.N + 1);
  for (int k = 1; k <= sys.N; ++k) i_kreach[k] = k_reach(sys, i, k);
  if (i_kreach[1].empty()) throw std::runtime_error("exhaustive_ddto: anchor target unreachable");

  ExhaustiveSolution best;
  best.objective = -1;
  std::vector<GridState> prefix{sys.z0};
  enumerate_anchor(sys, i, i_kreach, prefix, en, [&](const std::vector<GridState>& anchor) {
    int total = 0;
    std::vector<std::vector<GridState>> trajs(n);
    trajs[i] = anchor;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      auto [cost, traj] = best_match(sys, anchor, j, en);
      total += cost;
      trajs[j] = std::move(traj);
    }
    if (best.objective < 0 || total < best.objective) {
      best.objective = total;
      best.anchor = i;
      best.trajectories = std::move(trajs);
    }
  });
  if (best.objective < 0) throw std::runtime_error("exhaustive_ddto: no anchor trajectory");
  best.target_sets.assign(sys.N, {});
  for (int k = 0; k < sys.N; ++k)
    for (int j = 0; j < n; ++j)
      if (best.trajectories[j][k] == best.trajectories[best.anchor][k])
        best.target_sets[k].push_back(j);
  return best;
}

}  // namespace

ExhaustiveSolution exhaustive_ddto(const GridSystem& sys, int anchor, std::int64_t budget) {
  Enumerator en{sys, budget};
  if (anchor >= 0) return solve_anchored(sys, anchor, en);
  ExhaustiveSolution best;
  best.objective = -1;
  for (int i = 0; i < sys.num_targets(); ++i) {
    auto sol = solve_anchored(sys, i, en);
    if (best.objective < 0 || sol.objective < best.objective) best = std::move(sol);
  }
  return best;
}

TheoremReport check_theorems(const GridSystem& sys, std::int64_t budget) {
  TheoremReport rep;
  const int n = sys.num_targets();
  std::ostringstream why;

  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<int> J;
    for (int j = 0; j < n; ++j)
      if (mask & (1u << j)) J.push_back(j);

    // (b) monotone nonemptiness of R^J_k over k.
    std::vector<bool> nonempty(sys.N + 1);
    for (int k = 1; k <= sys.N; ++k) nonempty[k] = !k_reach_J(sys, J, k).empty();
    for (int k = 2; k <= sys.N; ++k)
      if (nonempty[k] && !nonempty[k - 1]) {
        rep.monotone_nonemptiness = false;
        why << "R^J nonempty at k=" << k << " but empty at k-1 for mask " << mask << "; ";
      }

    // (a) set-route branch time equals the trajectory-space optimum.
    int via_sets = nonempty[1] ? branch_time_oracle(sys, J) : 0;
    int via_enum = coincidence_optimum_enumerated(sys, J);
    if (via_sets != via_enum) {
      rep.branch_time_matches = false;
      why << "branch time mismatch (sets " << via_sets << " vs enumeration " << via_enum
          << ") for mask " << mask << "; ";
    }
  }

  // (c), (d) on the exhaustive optimum.
  auto sol = exhaustive_ddto(sys, -1, budget);
  {
    int coincidences = 0;
    for (const auto& Jk : sol.target_sets) coincidences += static_cast<int>(Jk.size());
    if (sol.objective + coincidences != n * sys.N) {
      rep.counting_identity = false;
      why << "counting identity: objective " << sol.objective << " + sum|J_k| " << coincidences
          << " != " << n * sys.N << "; ";
    }
  }
  for (int k = 1; k < sys.N; ++k) {
    const auto& prev = sol.target_sets[k - 1];
    for (int j : sol.target_sets[k])
      if (!std::binary_search(prev.begin(), prev.end(), j)) {
        rep.monotone_target_sets = false;
        why << "J_k not nested at k=" << k + 1 << "; ";
      }
  }
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<int> J;
    for (int j = 0; j < n; ++j)
      if (mask & (1u << j)) J.push_back(j);
    if (J.size() < 2) continue;
    if (k_reach_J(sys, J, 1).empty()) continue;
    int kJ = branch_time_oracle(sys, J);
    for (int k = kJ + 1; k <= sys.N; ++k) {
      bool all_equal = true;
      for (size_t a = 1; a < J.size(); ++a)
        if (sol.trajectories[J[a]][k - 1] != sol.trajectories[J[0]][k - 1]) all_equal = false;
      if (all_equal) {
        rep.no_recoincidence = false;
        why << "trajectories of mask " << mask << " coincide at k=" << k << " past branch time "
            << kJ << "; ";
      }
    }
  }
  if (!rep.all_pass()) {
    why << "instance: " << to_json(sys);
    rep.counterexample = why.str();
  }
  return rep;
}

std::string to_json(const GridSystem& sys) {
  nlohmann::json j;
  j["states"] = sys.states;
  j["inputs"] = sys.inputs;
  nlohmann::json trans = nlohmann::json::array();
  for (const auto& x : sys.states)
    for (const auto& u : sys.inputs) trans.push_back({x, u, sys.step(x, u)});
  j["transitions"] = trans;
  nlohmann::json tg = nlohmann::json::array();
  for (const auto& t : sys.targets) tg.push_back(std::vector<GridState>(t.begin(), t.end()));
  j["targets"] = tg;
  j["z0"] = sys.z0;
  j["N"] = sys.N;
  return j.dump();
}

GridSystem from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  GridSystem sys;
  sys.states = j.at("states").get<std::vector<GridState>>();
  sort_unique(sys.states);
  sys.inputs = j.at("inputs").get<std::vector<GridInput>>();
  auto table = std::make_shared<std::map<std::pair<GridState, GridInput>, GridState>>();
  for (const auto& t : j.at("transitions"))
    (*table)[{t[0].get<GridState>(), t[1].get<GridInput>()}] = t[2].get<GridState>();
  sys.step = [table](const GridState& x, const GridInput& u) -> GridState {
    auto it = table->find({x, u});
    if (it == table->end()) return GridState{};  // inadmissible sentinel
    return it->second;
  };
  for (const auto& t : j.at("targets")) {
    auto v = t.get<std::vector<GridState>>();
    sys.targets.emplace_back(v.begin(), v.end());
  }
  sys.z0 = j.at("z0").get<GridState>();
  sys.N = j.at("N").get<int>();
  return sys;
}

GridSystem remark1_instance() {
  GridSystem sys;
  for (int a = -7; a <= 7; ++a)
    for (int b = 0; b <= 9; ++b) sys.states.push_back({a, b});
  sort_unique(sys.states);
  for (int u = -3; u <= 3; ++u) sys.inputs.push_back({u});
  sys.step = [](const GridState& x, const GridInput& u) -> GridState {
    return {x[0] + u[0], x[1] + u[0] * u[0]};
  };
  sys.targets.push_back(StateSet{{3, 9}});
  sys.targets.push_back(StateSet{{4, 8}});
  sys.z0 = {0, 0};
  sys.N = 3;
  return sys;
}

GridSystem random_integrator_instance(unsigned seed, int max_targets, int max_horizon) {
  for (unsigned attempt = 0;; ++attempt) {
    std::mt19937 rng(seed + 7919 * attempt);
    auto rint = [&rng](int lo, int hi) {
      return std::uniform_int_distribution<int>(lo, hi)(rng);
    };
    GridSystem sys;
    bool double_integrator = rint(0, 2) == 0;
    int N = rint(3, max_horizon);
    int n = rint(1, max_targets);
    sys.N = N;
    for (int u = -1; u <= 1; ++u) sys.inputs.push_back({u});
    if (!double_integrator) {
      int B = rint(3, 5);
      for (int p = -B; p <= B; ++p) sys.states.push_back({p});
      sys.step = [](const GridState& x, const GridInput& u) -> GridState {
        return {x[0] + u[0]};
      };
      sys.z0 = {rint(-1, 1)};
      for (int j = 0; j < n; ++j) sys.targets.push_back(StateSet{{rint(-B, B)}});
    } else {
      int P = 4, V = 2;
      for (int p = -P; p <= P; ++p)
        for (int v = -V; v <= V; ++v) sys.states.push_back({p, v});
      sys.step = [](const GridState& x, const GridInput& u) -> GridState {
        return {x[0] + x[1], x[1] + u[0]};
      };
      sys.z0 = {rint(-1, 1), 0};
      for (int j = 0; j < n; ++j) sys.targets.push_back(StateSet{{rint(-P, P), rint(-1, 1)}});
    }
    sort_unique(sys.states);
    // Assumption: every target reachable within the horizon from z0.
    bool ok = sys.admissible(sys.z0);
    for (int j = 0; ok && j < n; ++j) ok = !k_reach(sys, j, 1).empty();
    if (ok) return sys;
  }
}

}  // namespace ddto::oracle
