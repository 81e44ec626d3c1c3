#include "ddto/micp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>
#include <utility>

namespace ddto::micp {

namespace {

constexpr double kIntTol = 1e-4;    // integrality detection on relaxed binaries
constexpr double kBoundEps = 1e-4;  // slack absorbing first-order-solver error

std::vector<int> block_range(int start, int count) {
  std::vector<int> v(count);
  for (int i = 0; i < count; ++i) v[i] = start + i;
  return v;
}

void add_input_rows(conic::ConicProgram& prog, const InputConstraints& in, int u0, int n_u) {
  std::vector<int> uvars = block_range(u0, n_u);
  if (std::isfinite(in.norm_max)) prog.norm_upper_bound(uvars, in.norm_max);
  if (in.e_hat.size() == n_u) {
    if (in.point_min > -kInf) {
      std::vector<double> a(n_u);
      for (int i = 0; i < n_u; ++i) a[i] = -in.e_hat(i);
      prog.add_linear(uvars, a, -in.point_min, conic::Cone::Nonnegative);
    }
    if (in.delta_max_deg < 90.0) {
      // ||u|| <= sec(delta) e'u as one second-order block.
      double sec = 1.0 / std::cos(in.delta_max_deg * M_PI / 180.0);
      int first = prog.add_row(0.0);
      for (int i = 0; i < n_u; ++i) prog.coef(first, u0 + i, -sec * in.e_hat(i));
      for (int i = 0; i < n_u; ++i) {
        int r = prog.add_row(0.0);
        prog.coef(r, u0 + i, -1.0);
      }
      prog.push_cone(conic::Cone::SecondOrder, n_u + 1);
    }
  }
  for (int i = 0; i < n_u; ++i) {
    if (in.box_hi.size() == n_u && std::isfinite(in.box_hi(i)))
      prog.upper_bound(u0 + i, in.box_hi(i));
    if (in.box_lo.size() == n_u && std::isfinite(in.box_lo(i)))
      prog.lower_bound(u0 + i, in.box_lo(i));
  }
}

// Dynamics, boundary conditions, input and state rows, and the quadratic
// budget cone for one target's trajectory block.
void add_trajectory_rows(conic::ConicProgram& prog, const Scenario& sc, int j, int x0, int u0) {
  const int n_x = sc.system.n_x, n_u = sc.system.n_u;
  const int Nj = sc.horizons[j];
  auto xv = [&](int k, int i) { return x0 + (k - 1) * n_x + i; };  // 1-based k
  auto uv = [&](int k, int i) { return u0 + (k - 1) * n_u + i; };
  for (int i = 0; i < n_x; ++i) prog.equality(xv(1, i), sc.z0(i));
  for (int i = 0; i < n_x; ++i) prog.equality(xv(Nj, i), sc.targets[j](i));
  for (int k = 1; k < Nj; ++k) {
    // x_{k+1} - A x_k - B u_k = c, one Zero row per component.
    for (int r = 0; r < n_x; ++r) {
      int row = prog.add_row(sc.system.c(r));
      prog.coef(row, xv(k + 1, r), 1.0);
      for (int i = 0; i < n_x; ++i)
        if (sc.system.A(r, i) != 0.0) prog.coef(row, xv(k, i), -sc.system.A(r, i));
      for (int i = 0; i < n_u; ++i)
        if (sc.system.B(r, i) != 0.0) prog.coef(row, uv(k, i), -sc.system.B(r, i));
      prog.push_cone(conic::Cone::Zero, 1);
    }
    add_input_rows(prog, sc.input, u0 + (k - 1) * n_u, n_u);
  }
  if (sc.state.box_lo.size() == n_x || sc.state.box_hi.size() == n_x) {
    for (int k = 2; k < Nj; ++k)
      for (int i = 0; i < n_x; ++i) {
        if (sc.state.box_hi.size() == n_x && std::isfinite(sc.state.box_hi(i)))
          prog.upper_bound(xv(k, i), sc.state.box_hi(i));
        if (sc.state.box_lo.size() == n_x && std::isfinite(sc.state.box_lo(i)))
          prog.lower_bound(xv(k, i), sc.state.box_lo(i));
      }
  }
  if (std::isfinite(sc.l_max))
    conic::quad_cost_as_cone(prog, block_range(u0, n_u * (Nj - 1)), sc.l_max);
}

// Subproblem with every binary fixed by monotone caps: zeta^j_k = 0 for
// k <= caps[j] becomes an exact state equality row and zeta^j_k = 1 drops the
// vacuous big-M row, so the big-M constant never enters the matrix.
conic::ConicProgram build_fixed(const Scenario& sc, int anchor, const std::vector<int>& caps) {
  const int n = sc.num_targets(), n_x = sc.system.n_x, n_u = sc.system.n_u;
  conic::ConicProgram prog;
  std::vector<int> x0(n), u0(n);
  for (int j = 0; j < n; ++j) {
    int Nj = sc.horizons[j];
    x0[j] = prog.add_vars("x" + std::to_string(j), n_x * Nj);
    u0[j] = prog.add_vars("u" + std::to_string(j), n_u * (Nj - 1));
  }
  for (int j = 0; j < n; ++j) add_trajectory_rows(prog, sc, j, x0[j], u0[j]);
  for (int j = 0; j < n; ++j) {
    if (j == anchor) continue;
    for (int k = 2; k <= caps[j]; ++k)  // k = 1 is z0 on both paths already
      for (int i = 0; i < n_x; ++i) {
        int r = prog.add_row(0.0);
        prog.coef(r, x0[anchor] + (k - 1) * n_x + i, 1.0);
        prog.coef(r, x0[j] + (k - 1) * n_x + i, -1.0);
        prog.push_cone(conic::Cone::Zero, 1);
      }
  }
  prog.validate();
  return prog;
}

}  // namespace

double auto_big_M(const Scenario& sc) {
  const auto& st = sc.state;
  int n_x = sc.system.n_x;
  if (st.box_lo.size() == n_x && st.box_hi.size() == n_x && st.box_lo.allFinite() &&
      st.box_hi.allFinite())
    return 2.0 * (st.box_hi - st.box_lo).norm();
  // Norm propagation fallback: ||x_{k+1}|| <= ||A|| ||x_k|| + ||B|| u_b + ||c||.
  double na = sc.system.A.operatorNorm();
  double nb = sc.system.B.operatorNorm();
  double nc = sc.system.c.norm();
  double ub = std::isfinite(sc.input.norm_max) ? sc.input.norm_max : 0.0;
  if (sc.input.box_hi.size() == sc.system.n_u) {
    double box = 0.0;
    for (int i = 0; i < sc.system.n_u; ++i)
      box += std::pow(std::max(std::abs(sc.input.box_hi(i)), std::abs(sc.input.box_lo(i))), 2);
    ub = std::max(ub, std::sqrt(box));
  }
  if (ub == 0.0) throw std::invalid_argument("auto_big_M: unbounded input set");
  int N = *std::max_element(sc.horizons.begin(), sc.horizons.end());
  double b = sc.z0.norm();
  for (const auto& z : sc.targets) b = std::max(b, z.norm());
  double worst = b;
  for (int k = 1; k < N; ++k) {
    b = na * b + nb * ub + nc;
    worst = std::max(worst, b);
  }
  return 4.0 * worst;
}

MicpInstance build_micp(const Scenario& sc, int anchor, double big_M, int p_norm,
                        bool monotonicity_cuts) {
  if (big_M <= 0.0) throw std::invalid_argument("build_micp: big_M must be positive");
  if (anchor < 0 || anchor >= sc.num_targets())
    throw std::invalid_argument("build_micp: anchor out of range");
  const int n = sc.num_targets();
  const int n_x = sc.system.n_x;
  const int n_u = sc.system.n_u;

  MicpInstance inst;
  inst.big_M = big_M;
  inst.p_norm = p_norm;
  inst.anchor = anchor;
  inst.binaries.resize(n);
  inst.shared_horizon.resize(n);
  conic::ConicProgram& prog = inst.base;

  std::vector<int> x0(n), u0(n);
  for (int j = 0; j < n; ++j) {
    int Nj = sc.horizons[j];
    x0[j] = prog.add_vars("x" + std::to_string(j), n_x * Nj);
    u0[j] = prog.add_vars("u" + std::to_string(j), n_u * (Nj - 1));
  }
  for (int j = 0; j < n; ++j) {
    inst.shared_horizon[j] = std::min(sc.horizons[anchor], sc.horizons[j]);
    if (j == anchor) continue;
    int z0v = prog.add_vars("zeta" + std::to_string(j), inst.shared_horizon[j]);
    inst.binaries[j] = block_range(z0v, inst.shared_horizon[j]);
  }

  for (int j = 0; j < n; ++j) add_trajectory_rows(prog, sc, j, x0[j], u0[j]);

  for (int j = 0; j < n; ++j) {
    if (j == anchor) continue;
    for (int k = 1; k <= inst.shared_horizon[j]; ++k) {
      int zv = inst.binaries[j][k - 1];
      prog.set_objective(zv, 1.0);
      prog.lower_bound(zv, 0.0);
      prog.upper_bound(zv, 1.0);
      int xi = x0[anchor] + (k - 1) * n_x;
      int xj = x0[j] + (k - 1) * n_x;
      if (p_norm == 2) {
        int first = prog.add_row(0.0);
        prog.coef(first, zv, -big_M);
        for (int i = 0; i < n_x; ++i) {
          int r = prog.add_row(0.0);
          prog.coef(r, xi + i, -1.0);
          prog.coef(r, xj + i, 1.0);
        }
        prog.push_cone(conic::Cone::SecondOrder, n_x + 1);
      } else {
        for (int i = 0; i < n_x; ++i) {
          for (double sgn : {1.0, -1.0}) {
            int r = prog.add_row(0.0);
            prog.coef(r, xi + i, sgn);
            prog.coef(r, xj + i, -sgn);
            prog.coef(r, zv, -big_M);
            prog.push_cone(conic::Cone::Nonnegative, 1);
          }
        }
      }
      if (monotonicity_cuts && k < inst.shared_horizon[j]) {
        int r = prog.add_row(0.0);
        prog.coef(r, zv, 1.0);
        prog.coef(r, inst.binaries[j][k], -1.0);
        prog.push_cone(conic::Cone::Nonnegative, 1);
      }
    }
  }
  prog.validate();
  return inst;
}

RelaxedSolution solve_relaxed(const MicpInstance& inst, const BnbNode& node, double tol,
                              int max_iter, const std::optional<Vec>& warm) {
  conic::ConicProgram prog = inst.base;
  for (int v : node.fixed_zero) prog.equality(v, 0.0);
  for (int v : node.fixed_one) prog.equality(v, 1.0);
  conic::SolverSettings st;
  st.tol = tol;
  st.max_iter = max_iter;
  st.warm_x = warm;
  RelaxedSolution out;
  out.result = conic::solve(prog, st);
  if (out.result.status != conic::Status::Optimal) return out;

  out.integral = true;
  int best_target = -1, best_count = -1;
  for (size_t j = 0; j < inst.binaries.size(); ++j) {
    int count = 0;
    for (int v : inst.binaries[j]) {
      double z = out.result.x(v);
      out.zeta.push_back(z);
      if (std::min(std::abs(z), std::abs(z - 1.0)) > kIntTol) ++count;
    }
    if (count > 0) {
      out.integral = false;
      if (count > best_count) {
        best_count = count;
        best_target = static_cast<int>(j);
      }
    }
  }
  if (!out.integral)
    for (int v : inst.binaries[best_target]) {
      double z = out.result.x(v);
      if (std::min(std::abs(z), std::abs(z - 1.0)) > kIntTol) {
        out.earliest_fractional = v;
        break;
      }
    }
  return out;
}

TargetSets extract_target_sets(const std::vector<std::vector<Vec>>& states, int anchor,
                               const std::vector<int>& shared_horizon, double objective,
                               double tol) {
  const int n = static_cast<int>(states.size());
  int Ni = static_cast<int>(states[anchor].size());
  TargetSets out;
  out.target_sets.assign(Ni, {});
  out.branch_times.assign(n, 0);
  int coincident_pairs = 0;
  for (int k = 1; k <= Ni; ++k) {
    for (int j = 0; j < n; ++j) {
      if (j != anchor && k > shared_horizon[j]) continue;
      if (j == anchor ||
          (states[j][k - 1] - states[anchor][k - 1]).lpNorm<Eigen::Infinity>() <= tol) {
        out.target_sets[k - 1].push_back(j);
        out.branch_times[j] = k;
        if (j != anchor && k <= shared_horizon[j]) ++coincident_pairs;
      }
    }
    out.cumulative += static_cast<int>(out.target_sets[k - 1].size());
  }
  int total = 0;
  for (int j = 0; j < n; ++j)
    if (j != anchor) total += shared_horizon[j];
  if (std::abs(objective + coincident_pairs - total) > 0.5)
    throw std::runtime_error("extract_target_sets: counting identity violated (objective " +
                             std::to_string(objective) + ", coincident " +
                             std::to_string(coincident_pairs) + ", total " +
                             std::to_string(total) + ")");
  return out;
}

namespace {

DdtoTree build_tree(const Scenario& sc, const std::vector<std::vector<Vec>>& states,
                    const std::vector<std::vector<Vec>>& inputs, int anchor,
                    const std::vector<int>& branch_times) {
  DdtoTree tree;
  std::vector<int> cuts = branch_times;
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  int prev = 1;
  for (int cut : cuts) {
    if (cut <= prev && !tree.trunks.empty()) continue;
    TrunkSegment seg;
    seg.start_index = prev;
    seg.end_index = cut;
    for (int k = prev; k <= cut; ++k) seg.states.push_back(states[anchor][k - 1]);
    for (int k = prev; k < cut; ++k) seg.inputs.push_back(inputs[anchor][k - 1]);
    tree.trunks.push_back(std::move(seg));
    prev = cut;
  }
  for (int j = 0; j < sc.num_targets(); ++j) {
    BranchSegment br;
    br.target = j;
    br.branch_time = branch_times[j];
    br.branch_point = states[j][branch_times[j] - 1];
    for (int k = branch_times[j]; k <= sc.horizons[j]; ++k) br.states.push_back(states[j][k - 1]);
    for (int k = branch_times[j]; k < sc.horizons[j]; ++k) br.inputs.push_back(inputs[j][k - 1]);
    tree.branches.push_back(std::move(br));
    tree.branch_times[j] = branch_times[j];
  }
  return tree;
}

}  // namespace

MicpResult branch_and_bound(const Scenario& sc, const MicpInstance& inst, double time_budget_s,
                            double gap_tol) {
  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };
  const int n = sc.num_targets();
  const int anchor = inst.anchor;

  MicpResult res;
  res.anchor = anchor;
  int node_id = 0;
  double incumbent = std::numeric_limits<double>::infinity();
  auto record = [&](int ones, const std::string& status) {
    res.log.push_back({node_id, ones, static_cast<double>(ones), incumbent, status});
  };

  // Monotonicity makes each binary column a step function, so a node is a
  // vector of coincidence depths (caps). A node with every cap fixed is an
  // exact conic feasibility problem; the objective at caps is the number of
  // ones sum_j (H_j - caps_j), so best-first popping by that count makes the
  // first feasible node optimal.
  conic::SolverSettings st;
  st.tol = 1e-6;
  st.max_iter = 200000;
  auto solve_caps = [&](const std::vector<int>& caps) {
    ++node_id;
    auto prog = build_fixed(sc, anchor, caps);
    return std::make_pair(conic::solve(prog, st), std::move(prog));
  };
  auto ones_of = [&](const std::vector<int>& caps) {
    int s = 0;
    for (int j = 0; j < n; ++j)
      if (j != anchor) s += inst.shared_horizon[j] - caps[j];
    return s;
  };

  // Per-target cap upper bound: dropping the other targets relaxes the
  // problem, so the deepest pairwise-feasible coincidence bounds caps[j].
  std::vector<int> root(n, 1);
  root[anchor] = 0;
  for (int j = 0; j < n; ++j) {
    if (j == anchor) continue;
    auto pair_feasible = [&](int cap) {
      std::vector<int> caps(n, 1);
      caps[anchor] = 0;
      caps[j] = cap;
      auto [r, prog] = solve_caps(caps);
      record(ones_of(caps), r.status == conic::Status::Optimal ? "probe" : "probe-infeasible");
      return r.status == conic::Status::Optimal;
    };
    int hi = inst.shared_horizon[j];
    if (!pair_feasible(1))
      throw std::runtime_error("branch_and_bound: target " + std::to_string(j) +
                               " unreachable (Assumption 1 violated)");
    if (pair_feasible(hi)) {
      root[j] = hi;
      continue;
    }
    int lo = 1;
    while (hi - lo > 1) {
      int mid = lo + (hi - lo) / 2;
      (pair_feasible(mid) ? lo : hi) = mid;
    }
    root[j] = lo;
  }

  std::set<std::pair<int, std::vector<int>>> open;
  std::set<std::vector<int>> seen;
  open.insert({ones_of(root), root});
  seen.insert(root);
  Vec incumbent_x;
  conic::ConicProgram incumbent_prog;
  std::vector<int> incumbent_caps;
  bool exhausted = false;

  while (!open.empty()) {
    if (elapsed() > time_budget_s) {
      exhausted = true;
      break;
    }
    auto [ones, caps] = *open.begin();
    open.erase(open.begin());
    auto [r, prog] = solve_caps(caps);
    if (r.status == conic::Status::Optimal) {
      incumbent = ones;
      incumbent_x = r.x;
      incumbent_prog = std::move(prog);
      incumbent_caps = caps;
      record(ones, "incumbent");
      break;
    }
    record(ones, "infeasible");
    for (int j = 0; j < n; ++j) {
      if (j == anchor || caps[j] <= 1) continue;
      auto child = caps;
      --child[j];
      if (seen.insert(child).second) open.insert({ones + 1, child});
    }
  }

  if (!std::isfinite(incumbent)) {
    if (!exhausted) throw std::runtime_error("branch_and_bound: no feasible assignment found");
    // Budget ran out: the all-free assignment decouples the targets and is
    // feasible under Assumption 1, so it serves as a fallback incumbent.
    std::vector<int> caps(n, 1);
    caps[anchor] = 0;
    auto [r, prog] = solve_caps(caps);
    if (r.status != conic::Status::Optimal)
      throw std::runtime_error("branch_and_bound: fallback assignment infeasible");
    incumbent = ones_of(caps);
    incumbent_x = r.x;
    incumbent_prog = std::move(prog);
    incumbent_caps = caps;
    record(static_cast<int>(incumbent), "incumbent");
  }

  res.nodes = node_id;
  res.objective = incumbent;
  if (exhausted) {
    res.best_bound = open.empty() ? incumbent : static_cast<double>(open.begin()->first);
    res.gap = incumbent - res.best_bound;
    res.converged = res.gap <= gap_tol;
  } else {
    res.best_bound = incumbent;
    res.gap = 0.0;
    res.converged = true;
  }

  // Solution tables from the incumbent.
  res.states.resize(n);
  res.inputs.resize(n);
  res.zeta.resize(n);
  for (int j = 0; j < n; ++j) {
    auto [xs, xc] = incumbent_prog.range("x" + std::to_string(j));
    auto [us, uc] = incumbent_prog.range("u" + std::to_string(j));
    int n_x = sc.system.n_x, n_u = sc.system.n_u;
    for (int k = 0; k < xc / n_x; ++k)
      res.states[j].push_back(incumbent_x.segment(xs + k * n_x, n_x));
    for (int k = 0; k < uc / n_u; ++k)
      res.inputs[j].push_back(incumbent_x.segment(us + k * n_u, n_u));
    if (j != anchor)
      for (int k = 1; k <= inst.shared_horizon[j]; ++k)
        res.zeta[j].push_back(k <= incumbent_caps[j] ? 0 : 1);
  }
  // Polish: coincident prefixes share the anchor's inputs (forced up to solver
  // error by the equality rows), then exact re-propagation makes coincidence
  // and dynamics hold to machine precision.
  for (int j = 0; j < n; ++j) {
    if (j == anchor) continue;
    for (int k = 0; k + 1 < incumbent_caps[j]; ++k) res.inputs[j][k] = res.inputs[anchor][k];
  }
  for (int j = 0; j < n; ++j) {
    res.states[j][0] = sc.z0;
    for (size_t k = 0; k + 1 < res.states[j].size(); ++k)
      res.states[j][k + 1] = sc.system.A * res.states[j][k] + sc.system.B * res.inputs[j][k] +
                             sc.system.c;
  }
  // Big-M slack check (Assumption 2 guard).
  for (int j = 0; j < n; ++j) {
    if (j == inst.anchor) continue;
    for (int k = 0; k < inst.shared_horizon[j]; ++k) {
      double d = (res.states[j][k] - res.states[inst.anchor][k]).norm();
      if (d > 0.99 * inst.big_M)
        throw std::runtime_error("branch_and_bound: state difference within 1% of big_M");
    }
  }
  auto sets = extract_target_sets(res.states, inst.anchor, inst.shared_horizon, res.objective,
                                  sc.micp.extract_tol);
  res.target_sets = sets.target_sets;
  res.branch_times = sets.branch_times;
  res.tree = build_tree(sc, res.states, res.inputs, inst.anchor, res.branch_times);
  return res;
}

MicpResult best_anchor(const Scenario& sc) {
  MicpResult best;
  bool have = false;
  double M = sc.micp.big_M > 0.0 ? sc.micp.big_M : auto_big_M(sc);
  for (int i = 0; i < sc.num_targets(); ++i) {
    auto inst = build_micp(sc, i, M, sc.micp.p_norm, sc.micp.monotonicity_cuts);
    auto res = branch_and_bound(sc, inst, sc.micp.time_budget_s, sc.micp.gap_tol);
    if (!have || res.objective < best.objective) {
      best = std::move(res);
      have = true;
    }
  }
  return best;
}

MicpResult run_ddto_micp(const Scenario& sc) {
  sc.validate();
  if (sc.micp.anchor < 0) return best_anchor(sc);
  double M = sc.micp.big_M > 0.0 ? sc.micp.big_M : auto_big_M(sc);
  auto inst = build_micp(sc, sc.micp.anchor, M, sc.micp.p_norm, sc.micp.monotonicity_cuts);
  return branch_and_bound(sc, inst, sc.micp.time_budget_s, sc.micp.gap_tol);
}

void write_node_log(const std::vector<BnbNodeRecord>& log, const std::string& path) {
  std::ofstream out(path);
  out << "node,depth,bound,incumbent,status\n";
  for (const auto& r : log)
    out << r.id << "," << r.depth << "," << r.bound << "," << r.incumbent << "," << r.status
        << "\n";
}

}  // namespace ddto::micp
