#include "ddto/qcvx.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ddto::qcvx {

using conic::Cone;
using conic::ConicProgram;

int coincidence_horizon(const std::vector<std::vector<Vec>>& trajectories, double tol) {
  if (trajectories.empty())
    throw std::invalid_argument("coincidence_horizon: empty trajectory list");
  size_t min_len = trajectories[0].size();
  for (const auto& t : trajectories) min_len = std::min(min_len, t.size());
  int k = 0;
  for (size_t step = 0; step < min_len; ++step) {
    for (size_t i = 1; i < trajectories.size(); ++i) {
      if ((trajectories[i][step] - trajectories[0][step]).lpNorm<Eigen::Infinity>() > tol)
        return k;
    }
    k = static_cast<int>(step) + 1;
  }
  return k;
}

bool BisectionTranscript::probed(int k, bool feasible) const {
  for (const auto& [kk, f] : probes)
    if (kk == k && f == feasible) return true;
  return false;
}

namespace {

std::vector<int> var_block(int start, int count) {
  std::vector<int> v(count);
  for (int i = 0; i < count; ++i) v[i] = start + i;
  return v;
}

void add_input_constraints(ConicProgram& prog, const InputConstraints& in, int u0, int n_u) {
  if (std::isfinite(in.norm_max)) {
    prog.add_row(in.norm_max);
    for (int i = 0; i < n_u; ++i) {
      int r = prog.add_row(0.0);
      prog.coef(r, u0 + i, -1.0);
    }
    prog.push_cone(Cone::SecondOrder, n_u + 1);
  }
  if (in.e_hat.size() == n_u && in.delta_max_deg < 90.0) {
    // ||u|| <= sec(delta) e'u
    double sec = 1.0 / std::cos(in.delta_max_deg * M_PI / 180.0);
    int r0 = prog.add_row(0.0);
    for (int i = 0; i < n_u; ++i) prog.coef(r0, u0 + i, -sec * in.e_hat(i));
    for (int i = 0; i < n_u; ++i) {
      int r = prog.add_row(0.0);
      prog.coef(r, u0 + i, -1.0);
    }
    prog.push_cone(Cone::SecondOrder, n_u + 1);
  }
  if (in.e_hat.size() == n_u && std::isfinite(in.point_min)) {
    int r = prog.add_row(-in.point_min);
    for (int i = 0; i < n_u; ++i) prog.coef(r, u0 + i, -in.e_hat(i));
    prog.push_cone(Cone::Nonnegative, 1);
  }
  if (in.box_lo.size() == n_u) {
    for (int i = 0; i < n_u; ++i) prog.lower_bound(u0 + i, in.box_lo(i));
  }
  if (in.box_hi.size() == n_u) {
    for (int i = 0; i < n_u; ++i) prog.upper_bound(u0 + i, in.box_hi(i));
  }
}

void add_state_box(ConicProgram& prog, const StateConstraints& st, int x0, int n_x) {
  if (st.box_lo.size() == n_x)
    for (int i = 0; i < n_x; ++i) prog.lower_bound(x0 + i, st.box_lo(i));
  if (st.box_hi.size() == n_x)
    for (int i = 0; i < n_x; ++i) prog.upper_bound(x0 + i, st.box_hi(i));
}

// x_next = A x + B u + c as zero-cone rows.
void add_dynamics(ConicProgram& prog, const model::DiscreteAffineSystem& sys, int x, int u,
                  int x_next) {
  for (int i = 0; i < sys.n_x; ++i) {
    int r = prog.add_row(sys.c(i));
    prog.coef(r, x_next + i, 1.0);
    for (int j = 0; j < sys.n_x; ++j) prog.coef(r, x + j, -sys.A(i, j));
    for (int j = 0; j < sys.n_u; ++j) prog.coef(r, u + j, -sys.B(i, j));
  }
  prog.push_cone(Cone::Zero, sys.n_x);
}

void fix_vector(ConicProgram& prog, int start, const Vec& value) {
  for (int i = 0; i < value.size(); ++i) {
    int r = prog.add_row(value(i));
    prog.coef(r, start + i, 1.0);
  }
  prog.push_cone(Cone::Zero, static_cast<int>(value.size()));
}

struct Layout {
  int x_shared = -1, u_shared = -1;          // shared trunk blocks
  std::vector<int> x_branch, u_branch;       // per-J blocks (may be empty)
  std::vector<int> x_full, u_full;           // state-only encoding blocks
};

Layout build_program(ConicProgram& prog, const Scenario& sc, const std::vector<int>& J,
                     int k_star, const std::vector<int>& horizons, const Vec& z0, double budget,
                     bool shared_inputs) {
  const auto& sys = sc.system;
  const int n_x = sys.n_x, n_u = sys.n_u;
  const int nj = static_cast<int>(J.size());
  if (J.empty()) throw std::invalid_argument("build_coincident_feasibility: empty J");
  int min_h = *std::min_element(horizons.begin(), horizons.end());
  if (k_star < 1 || k_star > min_h)
    throw std::invalid_argument("build_coincident_feasibility: k_star out of range");

  Layout lay;
  if (shared_inputs) {
    lay.x_shared = prog.add_vars("xt", k_star * n_x);
    if (k_star > 1) lay.u_shared = prog.add_vars("ut", (k_star - 1) * n_u);
    lay.x_branch.resize(nj, -1);
    lay.u_branch.resize(nj, -1);
    for (int idx = 0; idx < nj; ++idx) {
      int M = horizons[idx];
      int n_states = M - k_star;
      int n_inputs = M - k_star;  // inputs k_star .. M-1
      std::string sx = "x" + std::to_string(J[idx]);
      std::string su = "u" + std::to_string(J[idx]);
      if (n_states > 0) lay.x_branch[idx] = prog.add_vars(sx, n_states * n_x);
      if (n_inputs > 0) lay.u_branch[idx] = prog.add_vars(su, n_inputs * n_u);
    }

    // Boundary condition and shared-trunk dynamics.
    fix_vector(prog, lay.x_shared, z0);
    for (int k = 0; k + 1 < k_star; ++k)
      add_dynamics(prog, sys, lay.x_shared + k * n_x, lay.u_shared + k * n_u,
                   lay.x_shared + (k + 1) * n_x);
    for (int k = 1; k + 1 <= k_star; ++k)
      add_state_box(prog, sc.state, lay.x_shared + k * n_x, n_x);
    for (int k = 0; k + 1 < k_star; ++k)
      add_input_constraints(prog, sc.input, lay.u_shared + k * n_u, n_u);

    for (int idx = 0; idx < nj; ++idx) {
      int M = horizons[idx];
      auto state_at = [&](int k) {  // 1-based global time index within this path
        return k <= k_star ? lay.x_shared + (k - 1) * n_x
                           : lay.x_branch[idx] + (k - k_star - 1) * n_x;
      };
      auto input_at = [&](int k) {  // input index 1..M-1
        return k <= k_star - 1 ? lay.u_shared + (k - 1) * n_u
                               : lay.u_branch[idx] + (k - k_star) * n_u;
      };
      for (int k = k_star; k < M; ++k)
        add_dynamics(prog, sys, state_at(k), input_at(k), state_at(k + 1));
      for (int k = k_star + 1; k < M; ++k) add_state_box(prog, sc.state, state_at(k), n_x);
      for (int k = k_star; k < M; ++k) add_input_constraints(prog, sc.input, input_at(k), n_u);
      fix_vector(prog, state_at(M), sc.targets[J[idx]]);

      if (std::isfinite(budget)) {
        std::vector<int> all_inputs;
        for (int k = 1; k < M; ++k) {
          int u0 = input_at(k);
          for (int i = 0; i < n_u; ++i) all_inputs.push_back(u0 + i);
        }
        conic::quad_cost_as_cone(prog, all_inputs, budget);
      }
    }
  } else {
    // State-only coincidence: full per-target variables plus equality rows on
    // the first k_star states (the superlevel set of the coincidence map).
    lay.x_full.resize(nj);
    lay.u_full.resize(nj);
    for (int idx = 0; idx < nj; ++idx) {
      int M = horizons[idx];
      lay.x_full[idx] = prog.add_vars("x" + std::to_string(J[idx]), M * n_x);
      lay.u_full[idx] = prog.add_vars("u" + std::to_string(J[idx]), (M - 1) * n_u);
    }
    for (int idx = 0; idx < nj; ++idx) {
      int M = horizons[idx];
      int xs = lay.x_full[idx], us = lay.u_full[idx];
      fix_vector(prog, xs, z0);
      for (int k = 0; k + 1 < M; ++k)
        add_dynamics(prog, sys, xs + k * n_x, us + k * n_u, xs + (k + 1) * n_x);
      for (int k = 1; k + 1 < M; ++k) add_state_box(prog, sc.state, xs + k * n_x, n_x);
      for (int k = 0; k + 1 < M; ++k) add_input_constraints(prog, sc.input, us + k * n_u, n_u);
      fix_vector(prog, xs + (M - 1) * n_x, sc.targets[J[idx]]);
      if (std::isfinite(budget)) {
        std::vector<int> all_inputs = var_block(us, (M - 1) * n_u);
        conic::quad_cost_as_cone(prog, all_inputs, budget);
      }
      if (idx > 0) {
        for (int k = 0; k < k_star; ++k) {
          for (int i = 0; i < n_x; ++i) {
            int r = prog.add_row(0.0);
            prog.coef(r, lay.x_full[0] + k * n_x + i, 1.0);
            prog.coef(r, xs + k * n_x + i, -1.0);
          }
          prog.push_cone(Cone::Zero, n_x);
        }
      }
    }
  }
  return lay;
}

}  // namespace

ConicProgram build_coincident_feasibility(const Scenario& sc, const std::vector<int>& J,
                                          int k_star, const std::vector<int>& horizons,
                                          const Vec& z0, double budget, bool shared_inputs,
                                          bool min_cost_objective) {
  ConicProgram prog;
  build_program(prog, sc, J, k_star, horizons, z0, budget, shared_inputs);
  if (min_cost_objective) {
    // minimize the l2 norm of all stacked inputs (epigraph variable).
    int t = prog.add_vars("cost_epi", 1);
    std::vector<int> inputs;
    auto grab = [&](const std::string& label) {
      try {
        auto [s, c] = prog.range(label);
        for (int i = 0; i < c; ++i) inputs.push_back(s + i);
      } catch (const std::out_of_range&) {
      }
    };
    grab("ut");
    for (int j : J) grab("u" + std::to_string(j));
    int r0 = prog.add_row(0.0);
    prog.coef(r0, t, -1.0);
    for (int v : inputs) {
      int r = prog.add_row(0.0);
      prog.coef(r, v, -1.0);
    }
    prog.push_cone(Cone::SecondOrder, static_cast<int>(inputs.size()) + 1);
    prog.set_objective(t, 1.0);
  }
  return prog;
}

ExtractedPaths extract_paths(const ConicProgram& prog, const Vec& x, const Scenario& sc,
                             const std::vector<int>& J, int k_star,
                             const std::vector<int>& horizons, bool shared_inputs) {
  const int n_x = sc.system.n_x, n_u = sc.system.n_u;
  ExtractedPaths out;
  for (size_t idx = 0; idx < J.size(); ++idx) {
    int M = horizons[idx];
    std::vector<Vec> xs, us;
    if (shared_inputs) {
      auto [x0, xc] = prog.range("xt");
      (void)xc;
      for (int k = 0; k < k_star; ++k) xs.push_back(x.segment(x0 + k * n_x, n_x));
      if (k_star > 1) {
        auto [u0, uc] = prog.range("ut");
        (void)uc;
        for (int k = 0; k + 1 < k_star; ++k) us.push_back(x.segment(u0 + k * n_u, n_u));
      }
      if (M > k_star) {
        auto [xb, xbc] = prog.range("x" + std::to_string(J[idx]));
        (void)xbc;
        for (int k = 0; k < M - k_star; ++k) xs.push_back(x.segment(xb + k * n_x, n_x));
        auto [ub, ubc] = prog.range("u" + std::to_string(J[idx]));
        (void)ubc;
        for (int k = 0; k < M - k_star; ++k) us.push_back(x.segment(ub + k * n_u, n_u));
      }
    } else {
      auto [xf, xfc] = prog.range("x" + std::to_string(J[idx]));
      (void)xfc;
      auto [uf, ufc] = prog.range("u" + std::to_string(J[idx]));
      (void)ufc;
      for (int k = 0; k < M; ++k) xs.push_back(x.segment(xf + k * n_x, n_x));
      for (int k = 0; k + 1 < M; ++k) us.push_back(x.segment(uf + k * n_u, n_u));
    }
    out.states.push_back(std::move(xs));
    out.inputs.push_back(std::move(us));
  }
  return out;
}

BranchTimeResult max_branch_time(const Scenario& sc, const std::vector<int>& J,
                                 const std::vector<int>& horizons, const Vec& z0, double budget,
                                 const SolveOptions& opt) {
  BranchTimeResult res;
  int min_h = *std::min_element(horizons.begin(), horizons.end());
  auto probe = [&](int k) {
    auto prog =
        build_coincident_feasibility(sc, J, k, horizons, z0, budget, opt.shared_inputs, false);
    bool f = conic::check_feasible(prog, opt.tol, opt.max_iter);
    res.transcript.probes.emplace_back(k, f);
    return f;
  };
  if (probe(min_h)) {
    res.k = min_h;
    return res;
  }
  if (!probe(1))
    throw std::runtime_error("max_branch_time: infeasible at k=1 (Assumption 1 violated)");
  int lo = 1, hi = min_h;  // feasible(lo), infeasible(hi)
  while (hi - lo > 1) {
    int mid = (lo + hi) / 2;
    if (probe(mid))
      lo = mid;
    else
      hi = mid;
  }
  res.k = lo;
  return res;
}

AssumptionReport check_assumption(const Scenario& sc, const SolveOptions& opt) {
  AssumptionReport rep;
  rep.all_feasible = true;
  for (int j = 0; j < sc.num_targets(); ++j) {
    auto prog = build_coincident_feasibility(sc, {j}, 1, {sc.horizons[j]}, sc.z0, sc.l_max,
                                             opt.shared_inputs, false);
    bool f = conic::check_feasible(prog, opt.tol, opt.max_iter);
    rep.target_feasible.push_back(f);
    rep.all_feasible = rep.all_feasible && f;
  }
  return rep;
}

namespace {

// Least-norm input correction enforcing every path's terminal equality
// exactly, followed by exact re-propagation. The trunk correction is shared
// across paths so trunk coincidence stays bitwise.
void polish_paths(const Scenario& sc, int k_star, ExtractedPaths& paths, const Vec& z0) {
  const auto& sys = sc.system;
  const int n_x = sys.n_x, n_u = sys.n_u;
  const int nj = static_cast<int>(paths.states.size());

  // Input variable layout: shared inputs (k_star-1 of them), then per-path
  // branch inputs.
  std::vector<int> branch_counts(nj);
  int total = (k_star - 1) * n_u;
  std::vector<int> branch_offset(nj);
  for (int idx = 0; idx < nj; ++idx) {
    branch_offset[idx] = total;
    branch_counts[idx] = static_cast<int>(paths.inputs[idx].size()) - (k_star - 1);
    total += branch_counts[idx] * n_u;
  }
  Mat E = Mat::Zero(nj * n_x, total);
  Vec resid(nj * n_x);
  for (int idx = 0; idx < nj; ++idx) {
    int M = static_cast<int>(paths.states[idx].size());
    // terminal = A^{M-1} z0 + sum_k A^{M-1-k}(B u_k + c), k = 1..M-1
    Mat Apow = Mat::Identity(n_x, n_x);
    std::vector<Mat> apows(M);  // A^p
    for (int p = 0; p < M; ++p) {
      apows[p] = Apow;
      Apow = sys.A * Apow;
    }
    for (int k = 1; k <= M - 1; ++k) {
      Mat block = apows[M - 1 - k] * sys.B;
      int col = (k <= k_star - 1) ? (k - 1) * n_u
                                  : branch_offset[idx] + (k - k_star) * n_u;
      E.block(idx * n_x, col, n_x, n_u) += block;
    }
    // Residual from exact propagation of the current inputs.
    Vec xk = z0;
    for (int k = 0; k < M - 1; ++k) xk = sys.step(xk, paths.inputs[idx][k]);
    resid.segment(idx * n_x, n_x) = Vec(paths.states[idx].back()) - xk;
  }
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(E);
  Vec du = cod.solve(resid);
  // Apply and re-propagate exactly.
  for (int idx = 0; idx < nj; ++idx) {
    int M = static_cast<int>(paths.states[idx].size());
    for (int k = 1; k <= M - 1; ++k) {
      int col = (k <= k_star - 1) ? (k - 1) * n_u
                                  : branch_offset[idx] + (k - k_star) * n_u;
      paths.inputs[idx][k - 1] += du.segment(col, n_u);
    }
    paths.states[idx][0] = z0;
    for (int k = 0; k < M - 1; ++k)
      paths.states[idx][k + 1] = sys.step(paths.states[idx][k], paths.inputs[idx][k]);
  }
}

double segment_cost(const std::vector<Vec>& inputs, int from, int to) {
  double s = 0;
  for (int k = from; k < to; ++k) s += inputs[k].squaredNorm();
  return s;
}

}  // namespace

DdtoTree run_ddto_qcvx(const Scenario& sc, const SolveOptions& opt) {
  sc.validate();
  const int n = sc.num_targets();
  auto rep = check_assumption(sc, opt);
  if (!rep.all_feasible)
    throw std::runtime_error("run_ddto_qcvx: Assumption 1 fails (some target unreachable)");

  DdtoTree tree;
  std::vector<int> J(n);
  for (int j = 0; j < n; ++j) J[j] = j;
  Vec z = sc.z0;
  double budget = sc.l_max;
  int k_abs = 1;  // global index of the current branch point

  auto solve_round = [&](const std::vector<int>& Jr, const std::vector<int>& horizons,
                         int k_star) {
    auto prog =
        build_coincident_feasibility(sc, Jr, k_star, horizons, z, budget, opt.shared_inputs, true);
    conic::SolverSettings st;
    st.tol = opt.tol;
    st.max_iter = opt.max_iter;
    auto res = conic::solve(prog, st);
    if (res.status != conic::Status::Optimal)
      throw std::runtime_error("run_ddto_qcvx: final solve at branch time failed");
    auto paths = extract_paths(prog, res.x, sc, Jr, k_star, horizons, opt.shared_inputs);
    polish_paths(sc, opt.shared_inputs ? k_star : 1, paths, z);
    return paths;
  };

  for (int round = 1; round <= n - 1; ++round) {
    // Remaining targets in priority-rank order; lowest rank is rejected.
    std::vector<int> horizons;
    for (int j : J) horizons.push_back(sc.horizons[j] - k_abs + 1);
    for (int h : horizons)
      if (h < 2)
        throw std::runtime_error("run_ddto_qcvx: exhausted horizon in round " +
                                 std::to_string(round));
    auto bt = max_branch_time(sc, J, horizons, z, budget, opt);
    int k_local = bt.k;
    auto paths = solve_round(J, horizons, k_local);

    // Reject the lowest-priority remaining target.
    int reject = -1;
    for (int r = n - 1; r >= 0; --r) {
      int cand = sc.priorities[r];
      if (std::find(J.begin(), J.end(), cand) != J.end()) {
        reject = cand;
        break;
      }
    }
    int rej_idx = static_cast<int>(std::find(J.begin(), J.end(), reject) - J.begin());

    TrunkSegment trunk;
    trunk.start_index = k_abs;
    trunk.end_index = k_abs + k_local - 1;
    for (int k = 0; k < k_local; ++k) trunk.states.push_back(paths.states[rej_idx][k]);
    for (int k = 0; k + 1 < k_local; ++k) trunk.inputs.push_back(paths.inputs[rej_idx][k]);
    tree.trunks.push_back(trunk);

    int global_branch = k_abs + k_local - 1;
    BranchSegment br;
    br.target = reject;
    br.branch_time = global_branch;
    br.branch_point = paths.states[rej_idx][k_local - 1];
    for (size_t k = k_local - 1; k < paths.states[rej_idx].size(); ++k)
      br.states.push_back(paths.states[rej_idx][k]);
    for (size_t k = k_local - 1; k < paths.inputs[rej_idx].size(); ++k)
      br.inputs.push_back(paths.inputs[rej_idx][k]);
    tree.branches.push_back(br);
    tree.branch_times[reject] = global_branch;

    if (round == n - 1) {
      // The highest-priority remaining target branches at the same time.
      int keep = -1;
      for (int r = 0; r < n; ++r) {
        int cand = sc.priorities[r];
        if (cand != reject && std::find(J.begin(), J.end(), cand) != J.end()) {
          keep = cand;
          break;
        }
      }
      int keep_idx = static_cast<int>(std::find(J.begin(), J.end(), keep) - J.begin());
      BranchSegment bk;
      bk.target = keep;
      bk.branch_time = global_branch;
      bk.branch_point = paths.states[keep_idx][k_local - 1];
      for (size_t k = k_local - 1; k < paths.states[keep_idx].size(); ++k)
        bk.states.push_back(paths.states[keep_idx][k]);
      for (size_t k = k_local - 1; k < paths.inputs[keep_idx].size(); ++k)
        bk.inputs.push_back(paths.inputs[keep_idx][k]);
      tree.branches.push_back(bk);
      tree.branch_times[keep] = global_branch;
    }

    budget -= segment_cost(paths.inputs[rej_idx], 0, k_local - 1);
    z = paths.states[rej_idx][k_local - 1];
    k_abs = global_branch;
    J.erase(J.begin() + rej_idx);
  }

  if (n == 1) {
    // Degenerate case: a single trajectory, no branching decision to defer.
    std::vector<int> horizons{sc.horizons[0]};
    auto paths = solve_round({0}, horizons, sc.horizons[0]);
    TrunkSegment trunk;
    trunk.start_index = 1;
    trunk.end_index = sc.horizons[0];
    trunk.states = paths.states[0];
    trunk.inputs = paths.inputs[0];
    tree.trunks.push_back(trunk);
    BranchSegment br;
    br.target = 0;
    br.branch_time = sc.horizons[0];
    br.branch_point = paths.states[0].back();
    br.states.push_back(paths.states[0].back());
    tree.branches.push_back(br);
    tree.branch_times[0] = sc.horizons[0];
  }

  std::sort(tree.branches.begin(), tree.branches.end(),
            [](const BranchSegment& a, const BranchSegment& b) { return a.target < b.target; });
  return tree;
}

int cumulative_reachable_count(const DdtoTree& tree, const Scenario& sc, double tol) {
  // Anchor is the highest-priority target's full path.
  int anchor = sc.priorities[0];
  FullPath ap = full_path(tree, anchor);
  int total = 0;
  for (int j = 0; j < sc.num_targets(); ++j) {
    FullPath p = full_path(tree, j);
    size_t upto = std::min(ap.states.size(), p.states.size());
    for (size_t k = 0; k < upto; ++k) {
      if ((p.states[k] - ap.states[k]).lpNorm<Eigen::Infinity>() <= tol) ++total;
    }
  }
  return total;
}

}  // namespace ddto::qcvx
