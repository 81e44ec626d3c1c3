#include "ddto/scp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <string>

#ifdef DDTO_HAVE_OPENMP
#include <omp.h>
#endif

namespace ddto::scp {

namespace {

constexpr int kNx = 9;  // augmented (r, v, theta, y, t)
constexpr int kNu = 4;  // (u, s)

Vec state_scale(const Scenario& sc) {
  Vec s(kNx);
  double pos = 1.0;
  for (const auto& z : sc.targets) pos = std::max(pos, z.head(3).lpNorm<Eigen::Infinity>());
  pos = std::max(pos, sc.z0.head(3).lpNorm<Eigen::Infinity>());
  double vel = std::isfinite(sc.quad.v_max) ? sc.quad.v_max : 10.0;
  double theta = std::isfinite(sc.l_max) ? std::max(1.0, sc.l_max / 10.0) : 100.0;
  // y is scaled at 1: its obstacle-penalty integrand is steep, and weighting
  // defects by the tiny y range would dominate the merit with its curvature.
  s << pos, pos, pos, vel, vel, vel, theta, 1.0, 1.0;
  return s;
}

Vec input_scale(const Scenario& sc) {
  Vec s(kNu);
  double u = sc.scp.u_inf_max;
  s << u, u, u, std::max(1.0, sc.scp.s_max - sc.scp.s_min);
  return s;
}

}  // namespace

model::ShootingLinearization linearize_step(const model::ContinuousSystem& sys, const Vec& xa,
                                            const Vec& ua, double interval, int substeps) {
  auto field = [&sys](const Vec& x, const Vec& u) { return model::augmented_ct_field(sys, x, u); };
  auto jx = [&sys](const Vec& x, const Vec& u) { return model::augmented_jacobian_x(sys, x, u); };
  auto ju = [&sys](const Vec& x, const Vec& u) { return model::augmented_jacobian_u(sys, x, u); };
  auto lin = model::integrate_zoh_with_sensitivities(field, jx, ju, xa, ua, interval, substeps);
  if (!lin.value.allFinite() || !lin.jac_x.allFinite() || !lin.jac_u.allFinite())
    throw model::PropagationError("linearize_step: non-finite linearization");
  return lin;
}

std::vector<std::vector<model::ShootingLinearization>> linearize_iterate(
    const model::ContinuousSystem& sys, const ScpIterate& it, double interval, int substeps,
    bool parallel) {
  const int B = it.num_blocks();
  const int M = it.grid_points();
  std::vector<std::vector<model::ShootingLinearization>> lin(B);
  for (int b = 0; b < B; ++b) lin[b].resize(M - 1);
#ifdef DDTO_HAVE_OPENMP
#pragma omp parallel for collapse(2) schedule(dynamic) if (parallel)
#endif
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < M - 1; ++k)
      lin[b][k] = linearize_step(sys, it.x[b][k], it.u[b][k], interval, substeps);
  (void)parallel;
  return lin;
}

conic::ConicProgram build_scp_subproblem(
    const Scenario& sc, const std::vector<int>& J, const ScpIterate& it,
    const std::vector<std::vector<model::ShootingLinearization>>& lin, const Vec& z0_phys,
    double tr_radius, const std::vector<double>& branch_budgets) {
  if (sc.scp.epsilon <= 0.0)
    throw std::invalid_argument("build_scp_subproblem: epsilon must be positive (CQ guard)");
  const int B = it.num_blocks();
  const int M = it.grid_points();
  const auto& cfg = sc.scp;
  conic::ConicProgram prog;
  Vec sx = state_scale(sc), su = input_scale(sc);

  std::vector<int> dx0(B), du0(B), v0(B);
  for (int b = 0; b < B; ++b) {
    std::string tag = std::to_string(b);
    dx0[b] = prog.add_vars("dx" + tag, kNx * M);
    du0[b] = prog.add_vars("du" + tag, kNu * (M - 1));
    v0[b] = prog.add_vars("v" + tag, M - 1);
  }
  auto dx = [&](int b, int k, int i) { return dx0[b] + k * kNx + i; };  // 0-based k
  auto du = [&](int b, int k, int i) { return du0[b] + k * kNu + i; };

  for (int b = 0; b < B; ++b) {
    for (int k = 0; k + 1 < M; ++k) {
      const auto& L = lin[b][k];
      Vec resid = L.value - it.x[b][k + 1];
      // Scaled l2 defect penalty: ||D^-1 (resid + A dx_k + B du_k - dx_{k+1})||
      // is bounded by the slack v_{b,k}, one cone per shooting interval.
      int vk = v0[b] + k;
      prog.set_objective(vk, cfg.w_pen);
      int head = prog.add_row(0.0);
      prog.coef(head, vk, -1.0);
      for (int r = 0; r < kNx; ++r) {
        int row = prog.add_row(resid(r) / sx(r));
        prog.coef(row, dx(b, k + 1, r), 1.0 / sx(r));
        for (int i = 0; i < kNx; ++i)
          if (L.jac_x(r, i) != 0.0) prog.coef(row, dx(b, k, i), -L.jac_x(r, i) / sx(r));
        for (int i = 0; i < kNu; ++i)
          if (L.jac_u(r, i) != 0.0) prog.coef(row, du(b, k, i), -L.jac_u(r, i) / sx(r));
      }
      prog.push_cone(conic::Cone::SecondOrder, kNx + 1);
      // Input set: infinity-norm ball on u, box on the dilation s.
      for (int i = 0; i < 3; ++i) {
        prog.upper_bound(du(b, k, i), cfg.u_inf_max - it.u[b][k](i));
        prog.lower_bound(du(b, k, i), -cfg.u_inf_max - it.u[b][k](i));
      }
      prog.upper_bound(du(b, k, 3), cfg.s_max - it.u[b][k](3));
      prog.lower_bound(du(b, k, 3), cfg.s_min - it.u[b][k](3));
      // Isoperimetric relaxation: per-interval y increase at most epsilon.
      int row = prog.add_row(cfg.epsilon - (it.x[b][k + 1](7) - it.x[b][k](7)));
      prog.coef(row, dx(b, k + 1, 7), 1.0);
      prog.coef(row, dx(b, k, 7), -1.0);
      prog.push_cone(conic::Cone::Nonnegative, 1);
    }
  }

  // Trunk starts at the physical segment state with y = t = 0.
  for (int i = 0; i < 7; ++i) prog.equality(dx(0, 0, i), z0_phys(i) - it.x[0][0](i));
  prog.equality(dx(0, 0, 7), -it.x[0][0](7));
  prog.equality(dx(0, 0, 8), -it.x[0][0](8));

  for (int b = 1; b < B; ++b) {
    int j = J[b - 1];
    // Stitching: branch physical state equals the trunk end; y, t reset.
    for (int i = 0; i < 7; ++i) {
      int row = prog.add_row(it.x[0][M - 1](i) - it.x[b][0](i));
      prog.coef(row, dx(b, 0, i), 1.0);
      prog.coef(row, dx(0, M - 1, i), -1.0);
      prog.push_cone(conic::Cone::Zero, 1);
    }
    prog.equality(dx(b, 0, 7), -it.x[b][0](7));
    prog.equality(dx(b, 0, 8), -it.x[b][0](8));
    // Terminal equality Q^j as a penalized scaled l2 residual cone.
    std::string tag = std::to_string(b);
    int qv = prog.add_vars("q" + tag, 1);
    prog.set_objective(qv, cfg.w_pen);
    int head = prog.add_row(0.0);
    prog.coef(head, qv, -1.0);
    for (int i = 0; i < 6; ++i) {
      int row = prog.add_row((sc.targets[j](i) - it.x[b][M - 1](i)) / sx(i));
      prog.coef(row, dx(b, M - 1, i), 1.0 / sx(i));
    }
    prog.push_cone(conic::Cone::SecondOrder, 7);
    // Terminal inequality P^j: cumulative cost within budget, penalized slack.
    double l_b = branch_budgets.empty() ? sc.l_max : branch_budgets[b - 1];
    if (std::isfinite(l_b)) {
      int pp = prog.add_vars("pp" + tag, 1);
      int row = prog.add_row((l_b - it.x[b][M - 1](6)) / sx(6));
      prog.coef(row, dx(b, M - 1, 6), 1.0 / sx(6));
      prog.coef(row, pp, -1.0);
      prog.push_cone(conic::Cone::Nonnegative, 1);
      prog.lower_bound(pp, 0.0);
      prog.set_objective(pp, cfg.w_pen);
    }
  }

  // Hard per-knot trust region ||D^-1 Delta_k|| <= radius. Small cones keep
  // the row equilibration effective, and a hard ball avoids the large
  // objective weights that degrade the first-order solver's scaling.
  for (int b = 0; b < B; ++b) {
    for (int k = 0; k < M; ++k) {
      prog.add_row(tr_radius);
      int rows = 1;
      for (int i = 0; i < kNx; ++i) {
        int r = prog.add_row(0.0);
        prog.coef(r, dx(b, k, i), -1.0 / sx(i));
        ++rows;
      }
      if (k + 1 < M)
        for (int i = 0; i < kNu; ++i) {
          int r = prog.add_row(0.0);
          prog.coef(r, du(b, k, i), -1.0 / su(i));
          ++rows;
        }
      prog.push_cone(conic::Cone::SecondOrder, rows);
    }
  }

  // Objective (22a): maximize the trunk's final time component.
  prog.set_objective(dx(0, M - 1, 8), -cfg.w_time);
  prog.validate();
  return prog;
}

namespace {

ScpIterate initial_guess(const Scenario& sc, const std::vector<int>& J, const Vec& z0_phys,
                         int M) {
  ScpIterate it;
  const int B = static_cast<int>(J.size()) + 1;
  it.x.resize(B);
  it.u.resize(B);
  Vec3 centroid = Vec3::Zero();
  for (int j : J) centroid += sc.targets[j].head(3);
  centroid /= static_cast<double>(J.size());
  Vec3 r0 = z0_phys.head(3);
  double vref = std::isfinite(sc.quad.v_max) ? 0.8 * sc.quad.v_max : 4.0;
  Vec3 u_hover = -sc.quad.gravity;  // thrust balancing gravity
  double cost_rate = u_hover.squaredNorm();

  // Cubic Hermite blend between endpoint states so the hard start and
  // stitching rows hold exactly at the initial iterate.
  auto fill = [&](int b, const Vec3& ra, const Vec3& va, const Vec3& rb, const Vec3& vb,
                  double theta0) {
    double tf = std::clamp(std::max((rb - ra).norm() / vref, 1.0), sc.scp.s_min, sc.scp.s_max);
    for (int k = 0; k < M; ++k) {
      double a = static_cast<double>(k) / (M - 1);
      double h00 = 2 * a * a * a - 3 * a * a + 1, h10 = a * a * a - 2 * a * a + a;
      double h01 = -2 * a * a * a + 3 * a * a, h11 = a * a * a - a * a;
      double g00 = 6 * a * a - 6 * a, g10 = 3 * a * a - 4 * a + 1;
      double g01 = -6 * a * a + 6 * a, g11 = 3 * a * a - 2 * a;
      Vec x(kNx);
      x.head(3) = h00 * ra + h10 * tf * va + h01 * rb + h11 * tf * vb;
      x.segment(3, 3) = (g00 * ra + g01 * rb) / tf + g10 * va + g11 * vb;
      x(6) = theta0 + a * cost_rate * tf;
      x(7) = 0.0;
      x(8) = a * tf;
      it.x[b].push_back(x);
    }
    for (int k = 0; k + 1 < M; ++k) {
      Vec u(kNu);
      u.head(3) = u_hover;
      u(3) = tf;
      it.u[b].push_back(u);
    }
    return theta0 + cost_rate * tf;
  };
  Vec3 v0 = z0_phys.segment(3, 3);
  Vec3 dir = centroid - r0;
  Vec3 v_mid = dir.norm() > 1e-9 ? Vec3(vref * dir.normalized()) : Vec3::Zero();
  double theta_mid = fill(0, r0, v0, centroid, v_mid, z0_phys(6));
  for (int b = 1; b < B; ++b) {
    const Vec& tgt = sc.targets[J[b - 1]];
    fill(b, centroid, v_mid, tgt.head(3), tgt.segment(3, 3), theta_mid);
  }
  return it;
}

}  // namespace

namespace {

using LinTable = std::vector<std::vector<model::ShootingLinearization>>;

// Scaled defect: consistent with the merit so the convergence gate and the
// penalty agree on what "small" means.
double max_defect_of(const ScpIterate& it, const LinTable& lin, const Vec& sx) {
  double d = 0.0;
  for (size_t b = 0; b < lin.size(); ++b)
    for (size_t k = 0; k < lin[b].size(); ++k)
      d = std::max(d,
                   (lin[b][k].value - it.x[b][k + 1]).cwiseQuotient(sx).lpNorm<Eigen::Infinity>());
  return d;
}

// Exact penalty merit matching the subproblem objective with the trust-region
// removed: penalized scaled l2 defects and terminal residuals minus trunk time.
double merit_of(const Scenario& sc, const std::vector<int>& J, const ScpIterate& it,
                const LinTable& lin, const ScpConfig& cfg,
                const std::vector<double>& branch_budgets) {
  const int M = it.grid_points();
  Vec sx = state_scale(sc);
  double m = 0.0;
  for (size_t b = 0; b < lin.size(); ++b)
    for (size_t k = 0; k < lin[b].size(); ++k)
      m += cfg.w_pen * (lin[b][k].value - it.x[b][k + 1]).cwiseQuotient(sx).norm();
  for (size_t b = 1; b < it.x.size(); ++b) {
    int j = J[b - 1];
    m += cfg.w_pen *
         (it.x[b][M - 1].head(6) - sc.targets[j].head(6)).cwiseQuotient(sx.head(6)).norm();
    double l_b = branch_budgets.empty() ? sc.l_max : branch_budgets[b - 1];
    if (std::isfinite(l_b))
      m += cfg.w_pen * std::max(0.0, (it.x[b][M - 1](6) - l_b) / sx(6));
  }
  return m - cfg.w_time * it.x[0][M - 1](8);
}

// Candidate merit under the dynamics linearized around `base`. Evaluating the
// model directly keeps the ratio test independent of solver slack accuracy.
double model_merit_of(const Scenario& sc, const std::vector<int>& J, const ScpIterate& base,
                      const ScpIterate& cand, const LinTable& lin, const ScpConfig& cfg,
                      const std::vector<double>& branch_budgets) {
  const int M = cand.grid_points();
  Vec sx = state_scale(sc);
  double m = 0.0;
  for (size_t b = 0; b < lin.size(); ++b)
    for (size_t k = 0; k < lin[b].size(); ++k) {
      const auto& L = lin[b][k];
      Vec end = L.value + L.jac_x * (cand.x[b][k] - base.x[b][k]) +
                L.jac_u * (cand.u[b][k] - base.u[b][k]);
      m += cfg.w_pen * (end - cand.x[b][k + 1]).cwiseQuotient(sx).norm();
    }
  for (size_t b = 1; b < cand.x.size(); ++b) {
    int j = J[b - 1];
    m += cfg.w_pen *
         (cand.x[b][M - 1].head(6) - sc.targets[j].head(6)).cwiseQuotient(sx.head(6)).norm();
    double l_b = branch_budgets.empty() ? sc.l_max : branch_budgets[b - 1];
    if (std::isfinite(l_b))
      m += cfg.w_pen * std::max(0.0, (cand.x[b][M - 1](6) - l_b) / sx(6));
  }
  return m - cfg.w_time * cand.x[0][M - 1](8);
}

}  // namespace

ScpSolution scp_solve(const Scenario& sc, const std::vector<int>& J, const Vec& z0_phys, int M,
                      const ScpConfig& cfg, const std::vector<double>& branch_budgets) {
  if (M < 2) throw std::invalid_argument("scp_solve: grid too coarse (M < 2)");
  auto sys = model::quadrotor_continuous(sc.quad);
  const double interval = 1.0 / (M - 1);
  const int B = static_cast<int>(J.size()) + 1;
  Vec sx = state_scale(sc), su = input_scale(sc);

  ScpSolution sol;
  sol.iterate = initial_guess(sc, J, z0_phys, M);
  double tr = cfg.tr_init;
  double step_norm = kInf;
  int failed_solves = 0;
  std::optional<Vec> warm, warm_y;

  auto lin = linearize_iterate(sys, sol.iterate, interval, cfg.substeps);
  double phi = merit_of(sc, J, sol.iterate, lin, cfg, branch_budgets);

  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    double defect = max_defect_of(sol.iterate, lin, sx);
    sol.max_defect = defect;
    sol.trunk_time = sol.iterate.x[0][M - 1](8);
    sol.iterations = iter - 1;
    if ((step_norm <= cfg.convergence_tol || tr <= 2.5e-4) && defect <= cfg.defect_tol) {
      sol.converged = true;
      return sol;
    }

    auto prog = build_scp_subproblem(sc, J, sol.iterate, lin, z0_phys, tr, branch_budgets);
    conic::SolverSettings st;
    // Loose solves suffice while steps are large; the tolerance tightens as
    // the iterate settles so the merit test stays above solver noise.
    st.tol = std::clamp(1e-2 * std::min(step_norm, defect), cfg.solver_tol, 1e-2);
    st.max_iter = cfg.solver_max_iter;
    st.warm_x = warm;
    st.warm_y = warm_y;
    auto res = conic::solve(prog, st);
    if (res.status == conic::Status::Infeasible || !res.x.allFinite())
      throw std::runtime_error("scp_solve: subproblem solve failed at iteration " +
                               std::to_string(iter));
    warm = res.x;
    warm_y = res.y;

    ScpIterate cand = sol.iterate;
    double cand_step = 0.0;
    for (int b = 0; b < B; ++b) {
      auto [xs, xc] = prog.range("dx" + std::to_string(b));
      auto [us, uc] = prog.range("du" + std::to_string(b));
      (void)xc;
      (void)uc;
      for (int k = 0; k < M; ++k) {
        Vec d = res.x.segment(xs + k * kNx, kNx);
        cand_step = std::max(cand_step, (d.array() / sx.array()).abs().maxCoeff());
        cand.x[b][k] += d;
      }
      for (int k = 0; k + 1 < M; ++k) {
        Vec d = res.x.segment(us + k * kNu, kNu);
        cand_step = std::max(cand_step, (d.array() / su.array()).abs().maxCoeff());
        cand.u[b][k] += d;
        // Projection guards against solver-tolerance drift outside the box.
        for (int i = 0; i < 3; ++i)
          cand.u[b][k](i) = std::clamp(cand.u[b][k](i), -cfg.u_inf_max, cfg.u_inf_max);
        cand.u[b][k](3) = std::clamp(cand.u[b][k](3), cfg.s_min, cfg.s_max);
      }
    }
    // Trust-region ratio test against the exactly evaluated linearized merit.
    auto cand_lin = linearize_iterate(sys, cand, interval, cfg.substeps);
    double cand_phi = merit_of(sc, J, cand, cand_lin, cfg, branch_budgets);
    cand.penalty = cand_phi + cfg.w_time * cand.x[0][M - 1](8);
    double model_phi = model_merit_of(sc, J, sol.iterate, cand, lin, cfg, branch_budgets);
    double pred = phi - model_phi;
    double actual = phi - cand_phi;
    // pred < 0 is impossible at a subproblem optimum (the incumbent is
    // feasible with model merit phi), so it flags an unconverged solve; any
    // true improvement is still kept.
    bool accept = pred > 0.0 ? actual >= 0.05 * pred : actual > 0.0;
    bool solver_failed = pred < 0.0;
    if (std::getenv("DDTO_LOG") && std::string(std::getenv("DDTO_LOG")) == "debug")
      std::fprintf(stderr, "[scp] it=%d phi=%.6e pred=%.3e actual=%.3e ratio=%.3f tr=%.2e %s\n",
                   iter, phi, pred, actual, pred != 0.0 ? actual / pred : 0.0, tr,
                   accept ? "accept" : "reject");
    if (accept) {
      sol.iterate = std::move(cand);
      lin = std::move(cand_lin);
      phi = cand_phi;
      step_norm = cand_step;
      if (actual >= 0.7 * pred)
        tr = std::min(1.0, 2.0 * tr);
      else if (actual < 0.25 * pred)
        tr = std::max(2e-4, tr * cfg.tr_decay);
    } else {
      step_norm = kInf;
      // Shrink only when the model itself was refuted: a failed solve says
      // nothing about the region, and the warm-started duals let the next
      // iteration continue it. The floor keeps the subproblem well posed.
      if (!solver_failed) tr = std::max(2e-4, tr * cfg.tr_decay);
    }
    if (solver_failed) {
      // A warm start can pin the solver in a bad basin; restart cold with a
      // smaller region once continuing it has failed twice.
      if (++failed_solves >= 2) {
        warm.reset();
        warm_y.reset();
        tr = std::max(2e-4, tr * cfg.tr_decay);
        failed_solves = 0;
      }
    } else {
      failed_solves = 0;
    }
    sol.trace.push_back({iter, cand.penalty, defect, accept ? cand_step : -cand_step,
                         sol.iterate.x[0][M - 1](8), tr, static_cast<int>(res.status),
                         res.iterations});
  }
  sol.iterations = cfg.max_iterations;
  sol.converged = false;
  return sol;
}

double TimeMap::t_of_tau(double tau_q) const {
  if (tau_q <= tau.front()) return t.front();
  if (tau_q >= tau.back()) return t.back();
  auto it = std::upper_bound(tau.begin(), tau.end(), tau_q);
  size_t i = static_cast<size_t>(it - tau.begin()) - 1;
  double a = (tau_q - tau[i]) / (tau[i + 1] - tau[i]);
  return t[i] + a * (t[i + 1] - t[i]);
}

double TimeMap::tau_of_t(double t_q) const {
  if (t_q <= t.front()) return tau.front();
  if (t_q >= t.back()) return tau.back();
  auto it = std::upper_bound(t.begin(), t.end(), t_q);
  size_t i = static_cast<size_t>(it - t.begin()) - 1;
  double a = (t_q - t[i]) / (t[i + 1] - t[i]);
  return tau[i] + a * (tau[i + 1] - tau[i]);
}

TimeMap reconstruct_time(const std::vector<Vec>& x_nodes, const std::vector<Vec>& u_nodes) {
  TimeMap map;
  const int M = static_cast<int>(x_nodes.size());
  for (const auto& u : u_nodes)
    if (u(u.size() - 1) <= 0.0)
      throw std::invalid_argument("reconstruct_time: non-positive dilation");
  for (int k = 0; k < M; ++k) {
    map.tau.push_back(static_cast<double>(k) / (M - 1));
    map.t.push_back(x_nodes[k](x_nodes[k].size() - 1));
  }
  for (int k = 0; k + 1 < M; ++k)
    if (map.t[k + 1] <= map.t[k])
      throw std::invalid_argument("reconstruct_time: time map not strictly increasing");
  return map;
}

DdtoTree run_ddto_scp(const Scenario& sc, const ScpConfig& cfg,
                      std::vector<std::vector<IterRecord>>* traces) {
  const int n = sc.num_targets();
  const int N = sc.scp_horizon;
  if (N < 1 || N % 2 == 0) throw std::invalid_argument("run_ddto_scp: horizon N must be odd");
  if (static_cast<int>(sc.priorities.size()) != n)
    throw std::invalid_argument("run_ddto_scp: priorities must cover all targets");

  DdtoTree tree;
  Vec z0_phys(7);
  if (sc.z0.size() == 7)
    z0_phys = sc.z0;
  else {
    z0_phys.head(6) = sc.z0;
    z0_phys(6) = 0.0;
  }
  double t_offset = 0.0;
  int node_offset = 1;  // global 1-based node index of the current segment start
  int M = N + 1;
  const int rounds = std::max(1, n - 1);

  for (int r = 1; r <= rounds; ++r) {
    M = (M + 1) / 2;
    if (M < 2)
      throw std::runtime_error("run_ddto_scp: grid exhausted at round " + std::to_string(r) +
                               " (N too small for n targets)");
    std::vector<int> J(sc.priorities.begin(), sc.priorities.begin() + (n - r + 1));
    // Targets that stay in play must keep enough budget to ride the trunks of
    // the rounds still ahead of them; otherwise maximizing this trunk exhausts
    // l_max and leaves a later round with no feasible trunk at all. The
    // departing branch keeps the full budget. Reserve per future trunk: the
    // minimum-duration trunk flown near hover, with headroom for maneuvering.
    std::vector<double> budgets(J.size(), sc.l_max);
    if (std::isfinite(sc.l_max)) {
      double reserve = 1.25 * cfg.s_min * sc.quad.gravity.squaredNorm();
      for (size_t b = 0; b < J.size(); ++b) {
        int depart_round = std::min(rounds, n - static_cast<int>(b));
        budgets[b] = sc.l_max - reserve * (depart_round - r);
      }
    }
    ScpSolution sol;
    try {
      sol = scp_solve(sc, J, z0_phys, M, cfg, budgets);
    } catch (const std::exception& e) {
      throw std::runtime_error("run_ddto_scp: round " + std::to_string(r) + ": " + e.what());
    }
    if (traces) traces->push_back(sol.trace);
    if (!sol.converged)
      throw std::runtime_error("run_ddto_scp: round " + std::to_string(r) +
                               " did not converge (defect " + std::to_string(sol.max_defect) +
                               ")");
    const auto& it = sol.iterate;
    TrunkSegment trunk;
    trunk.start_index = node_offset;
    trunk.end_index = node_offset + M - 1;
    for (int k = 0; k < M; ++k) {
      trunk.states.push_back(it.x[0][k].head(7));
      trunk.times.push_back(t_offset + it.x[0][k](8));
    }
    for (int k = 0; k + 1 < M; ++k) trunk.inputs.push_back(it.u[0][k]);
    tree.trunks.push_back(std::move(trunk));

    auto record_branch = [&](int block, int target) {
      BranchSegment br;
      br.target = target;
      br.branch_time = node_offset + M - 1;
      br.branch_time_continuous = t_offset + sol.trunk_time;
      br.branch_point = it.x[block][0].head(7);
      for (int k = 0; k < M; ++k) {
        br.states.push_back(it.x[block][k].head(7));
        br.times.push_back(br.branch_time_continuous + it.x[block][k](8));
      }
      for (int k = 0; k + 1 < M; ++k) br.inputs.push_back(it.u[block][k]);
      tree.branch_times[target] = br.branch_time;
      tree.branch_times_continuous[target] = br.branch_time_continuous;
      tree.branches.push_back(std::move(br));
    };
    int rejected_rank = n - r;  // lowest-priority member of J
    record_branch(static_cast<int>(J.size()), sc.priorities[rejected_rank]);
    if (r == rounds)
      for (int rank = rejected_rank - 1; rank >= 0; --rank)
        record_branch(rank + 1, sc.priorities[rank]);

    z0_phys = it.x[0][M - 1].head(7);
    t_offset += sol.trunk_time;
    node_offset += M - 1;
  }
  std::sort(tree.branches.begin(), tree.branches.end(),
            [](const BranchSegment& a, const BranchSegment& b) { return a.target < b.target; });
  return tree;
}

ViolationReport validate_continuous(const DdtoTree& tree, const Scenario& sc,
                                    int samples_per_interval) {
  auto sys = model::quadrotor_continuous(sc.quad);
  ViolationReport rep;
  rep.min_obstacle_margin = kInf;
  rep.min_thrust = kInf;
  rep.min_dilation = kInf;

  auto scan_segment = [&](const std::vector<Vec>& states, const std::vector<Vec>& inputs,
                          const std::vector<double>& times) {
    for (size_t k = 0; k + 1 < states.size(); ++k) {
      Vec u = inputs[k].head(3);
      double s = inputs[k](3);
      rep.min_dilation = std::min(rep.min_dilation, s);
      rep.max_dilation = std::max(rep.max_dilation, s);
      double dt = times[k + 1] - times[k];
      Vec x = states[k];
      double h = dt / samples_per_interval;
      for (int i = 0; i <= samples_per_interval; ++i) {
        for (const auto& g : sys.inequality_paths)
          rep.max_inequality = std::max(rep.max_inequality, g.value(x, u));
        for (const auto& hcon : sys.equality_paths)
          rep.max_equality = std::max(rep.max_equality, std::abs(hcon.value(x, u)));
        Vec3 r = x.head(3);
        for (const auto& ob : sc.quad.obstacles)
          rep.min_obstacle_margin =
              std::min(rep.min_obstacle_margin, (ob.H * (r - ob.q)).norm());
        rep.max_speed = std::max(rep.max_speed, x.segment(3, 3).norm());
        rep.max_thrust = std::max(rep.max_thrust, u.norm());
        rep.min_thrust = std::min(rep.min_thrust, u.norm());
        if (i < samples_per_interval)
          x = model::integrate_zoh(sys.field, x, u, h, 1);
      }
      rep.max_defect =
          std::max(rep.max_defect, (x - states[k + 1]).lpNorm<Eigen::Infinity>());
    }
  };
  for (const auto& tr : tree.trunks) scan_segment(tr.states, tr.inputs, tr.times);
  for (const auto& br : tree.branches) {
    scan_segment(br.states, br.inputs, br.times);
    rep.max_cost = std::max(rep.max_cost, br.states.back()(6));
  }
  return rep;
}

void write_iteration_trace(const std::vector<IterRecord>& trace, const std::string& path) {
  std::ofstream out(path);
  out << "iteration,penalty,defect,step_norm,trunk_time,tr_weight,solver_status,solver_iterations\n";
  for (const auto& r : trace)
    out << r.iteration << "," << r.penalty << "," << r.defect << "," << r.step_norm << ","
        << r.trunk_time << "," << r.tr_weight << "," << r.solver_status << ","
        << r.solver_iterations << "\n";
}

}  // namespace ddto::scp
