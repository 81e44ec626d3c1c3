#include "ddto/conic.hpp"

#include <Eigen/SparseCholesky>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ddto::conic {

int ConicProgram::add_vars(const std::string& label, int count) {
  if (count <= 0) throw std::invalid_argument("add_vars: count must be positive");
  int start = n_;
  n_ += count;
  c_.conservativeResize(n_);
  c_.tail(count).setZero();
  if (!label.empty()) names_[label] = {start, count};
  return start;
}

std::pair<int, int> ConicProgram::range(const std::string& label) const {
  auto it = names_.find(label);
  if (it == names_.end()) throw std::out_of_range("unknown variable label: " + label);
  return it->second;
}

void ConicProgram::set_objective(int var, double coeff) { c_(var) = coeff; }

int ConicProgram::add_row(double rhs) {
  h_.push_back(rhs);
  return static_cast<int>(h_.size()) - 1;
}

void ConicProgram::coef(int row, int var, double value) {
  if (value != 0.0) trips_.emplace_back(row, var, value);
}

void ConicProgram::push_cone(Cone kind, int dim) {
  cones_.push_back({kind, dim});
  cone_rows_ += dim;
}

void ConicProgram::add_linear(const std::vector<int>& vars, const std::vector<double>& coeffs,
                              double rhs, Cone kind) {
  int r = add_row(rhs);
  for (size_t i = 0; i < vars.size(); ++i) coef(r, vars[i], coeffs[i]);
  push_cone(kind, 1);
}

void ConicProgram::equality(int var, double value) { add_linear({var}, {1.0}, value, Cone::Zero); }
void ConicProgram::upper_bound(int var, double value) {
  add_linear({var}, {1.0}, value, Cone::Nonnegative);
}
void ConicProgram::lower_bound(int var, double value) {
  add_linear({var}, {-1.0}, -value, Cone::Nonnegative);
}

void ConicProgram::norm_upper_bound(const std::vector<int>& vars, double bound) {
  add_row(bound);
  for (int v : vars) {
    int r = add_row(0.0);
    coef(r, v, -1.0);
  }
  push_cone(Cone::SecondOrder, static_cast<int>(vars.size()) + 1);
}

Eigen::SparseMatrix<double> ConicProgram::matrix() const {
  Eigen::SparseMatrix<double> G(num_rows(), n_);
  G.setFromTriplets(trips_.begin(), trips_.end());
  return G;
}

void ConicProgram::validate() const {
  if (cone_rows_ != num_rows())
    throw std::invalid_argument("conic program malformed: cone dims do not cover all rows");
  for (const auto& cs : cones_)
    if (cs.dim < 1) throw std::invalid_argument("conic program malformed: empty cone");
  for (double v : h_)
    if (!std::isfinite(v)) throw std::invalid_argument("conic program data error: non-finite rhs");
  if (!c_.allFinite())
    throw std::invalid_argument("conic program data error: non-finite objective");
  for (const auto& t : trips_) {
    if (!std::isfinite(t.value()))
      throw std::invalid_argument("conic program data error: non-finite coefficient");
    if (t.col() < 0 || t.col() >= n_ || t.row() < 0 || t.row() >= num_rows())
      throw std::invalid_argument("conic program malformed: index out of range");
  }
}

void ConicProgram::dump(const std::string& path) const {
  std::ofstream out(path);
  out.precision(17);
  out << "# conic program: minimize c'x subject to G x + s = h, s in K\n";
  out << "vars " << n_ << " rows " << num_rows() << "\n";
  out << "objective\n";
  for (int i = 0; i < n_; ++i)
    if (c_(i) != 0) out << i << " " << c_(i) << "\n";
  out << "G (row col value)\n";
  for (const auto& t : trips_) out << t.row() << " " << t.col() << " " << t.value() << "\n";
  out << "h (row value)\n";
  for (size_t i = 0; i < h_.size(); ++i)
    if (h_[i] != 0) out << i << " " << h_[i] << "\n";
  out << "cones\n";
  for (const auto& cs : cones_) {
    const char* name = cs.kind == Cone::Zero          ? "zero"
                       : cs.kind == Cone::Nonnegative ? "nonneg"
                                                      : "soc";
    out << name << " " << cs.dim << "\n";
  }
}

Vec project_cones(const Vec& v, const std::vector<ConeSpec>& cones) {
  Vec out(v.size());
  int at = 0;
  for (const auto& cs : cones) {
    switch (cs.kind) {
      case Cone::Zero:
        out.segment(at, cs.dim).setZero();
        break;
      case Cone::Nonnegative:
        out.segment(at, cs.dim) = v.segment(at, cs.dim).cwiseMax(0.0);
        break;
      case Cone::SecondOrder: {
        double t = v(at);
        double nrm = cs.dim > 1 ? v.segment(at + 1, cs.dim - 1).norm() : 0.0;
        if (nrm <= t) {
          out.segment(at, cs.dim) = v.segment(at, cs.dim);
        } else if (nrm <= -t) {
          out.segment(at, cs.dim).setZero();
        } else {
          double a = 0.5 * (1.0 + t / nrm);
          out(at) = a * nrm;
          out.segment(at + 1, cs.dim - 1) = a * v.segment(at + 1, cs.dim - 1);
        }
        break;
      }
    }
    at += cs.dim;
  }
  return out;
}

Vec project_dual_cones(const Vec& v, const std::vector<ConeSpec>& cones) {
  // Dual of Zero is the free cone; Nonnegative and SecondOrder are self-dual.
  Vec out(v.size());
  int at = 0;
  for (const auto& cs : cones) {
    if (cs.kind == Cone::Zero) {
      out.segment(at, cs.dim) = v.segment(at, cs.dim);
      at += cs.dim;
    } else {
      std::vector<ConeSpec> one{cs};
      out.segment(at, cs.dim) = project_cones(v.segment(at, cs.dim), one);
      at += cs.dim;
    }
  }
  return out;
}

namespace {

struct Scaling {
  Vec row;  // D
  Vec col;  // E
  double cost = 1.0;
};

// Ruiz equilibration with uniform scaling inside each second-order cone block.
Scaling equilibrate(Eigen::SparseMatrix<double>& G, const std::vector<ConeSpec>& cones) {
  const int m = static_cast<int>(G.rows()), n = static_cast<int>(G.cols());
  Scaling sc{Vec::Ones(m), Vec::Ones(n), 1.0};
  for (int pass = 0; pass < 10; ++pass) {
    Vec rmax = Vec::Zero(m), cmax = Vec::Zero(n);
    for (int k = 0; k < G.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(G, k); it; ++it) {
        double a = std::abs(it.value());
        rmax(it.row()) = std::max(rmax(it.row()), a);
        cmax(it.col()) = std::max(cmax(it.col()), a);
      }
    // Rows of one SOC block share the block max.
    int at = 0;
    for (const auto& cs : cones) {
      if (cs.kind == Cone::SecondOrder) {
        double blk = rmax.segment(at, cs.dim).maxCoeff();
        rmax.segment(at, cs.dim).setConstant(blk);
      }
      at += cs.dim;
    }
    Vec dr(m), dc(n);
    for (int i = 0; i < m; ++i) dr(i) = rmax(i) > 0 ? 1.0 / std::sqrt(rmax(i)) : 1.0;
    for (int j = 0; j < n; ++j) dc(j) = cmax(j) > 0 ? 1.0 / std::sqrt(cmax(j)) : 1.0;
    for (int k = 0; k < G.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(G, k); it; ++it)
        it.valueRef() *= dr(it.row()) * dc(it.col());
    sc.row.array() *= dr.array();
    sc.col.array() *= dc.array();
  }
  return sc;
}

Eigen::SparseMatrix<double> build_kkt(const Eigen::SparseMatrix<double>& G, double sigma,
                                      double rho) {
  const int n = static_cast<int>(G.cols()), m = static_cast<int>(G.rows());
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<size_t>(G.nonZeros()) * 2 + n + m);
  for (int i = 0; i < n; ++i) t.emplace_back(i, i, sigma);
  for (int k = 0; k < G.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(G, k); it; ++it) {
      t.emplace_back(n + it.row(), it.col(), it.value());
      t.emplace_back(it.col(), n + it.row(), it.value());
    }
  for (int i = 0; i < m; ++i) t.emplace_back(n + i, n + i, -1.0 / rho);
  Eigen::SparseMatrix<double> K(n + m, n + m);
  K.setFromTriplets(t.begin(), t.end());
  return K;
}

}  // namespace

SolveResult solve(const ConicProgram& prog, double tol, int max_iter) {
  SolverSettings s;
  s.tol = tol;
  s.max_iter = max_iter;
  return solve(prog, s);
}

SolveResult solve(const ConicProgram& prog, const SolverSettings& st) {
  prog.validate();
  const int n = prog.num_vars(), m = prog.num_rows();
  const Eigen::SparseMatrix<double> G0 = prog.matrix();
  const Vec c0 = prog.objective();
  Vec h0 = Eigen::Map<const Vec>(prog.rhs().data(), m);

  SolveResult res;
  if (m == 0) {
    // Unconstrained: feasible; optimal iff the objective is identically zero.
    res.x = Vec::Zero(n);
    res.y = Vec();
    res.status = c0.isZero(0.0) ? Status::Optimal : Status::MaxIterations;
    return res;
  }

  Eigen::SparseMatrix<double> G = G0;
  Scaling sc = equilibrate(G, prog.cones());
  Vec h = sc.row.asDiagonal() * h0;
  Vec c = sc.col.asDiagonal() * c0;
  sc.cost = 1.0 / std::max(1.0, c.lpNorm<Eigen::Infinity>());
  c *= sc.cost;

  double rho = st.rho;
  const double sigma = st.sigma;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  {
    auto K = build_kkt(G, sigma, rho);
    ldlt.analyzePattern(K);
    ldlt.factorize(K);
    if (ldlt.info() != Eigen::Success)
      throw std::runtime_error("conic solver: KKT factorization failed");
  }

  Vec x = Vec::Zero(n);
  if (st.warm_x && st.warm_x->size() == n)
    x = st.warm_x->cwiseQuotient(sc.col);
  Vec z = G * x, w = Vec::Zero(m);
  // w is the rho-scaled dual of the equilibrated problem: y = (rho/cost) D w.
  if (st.warm_y && st.warm_y->size() == m)
    w = (sc.cost / rho) * st.warm_y->cwiseQuotient(sc.row);

  const double hnorm = std::max(1.0, h0.lpNorm<Eigen::Infinity>());
  const double cnorm = std::max(1.0, c0.lpNorm<Eigen::Infinity>());

  Vec rhs(n + m), sol(n + m);
  int iter = 0;
  for (iter = 1; iter <= st.max_iter; ++iter) {
    rhs.head(n) = sigma * x - c;
    rhs.tail(m) = z - w;
    sol = ldlt.solve(rhs);
    x = sol.head(n);
    Vec gx = G * x;
    Vec zhat = st.alpha * gx + (1.0 - st.alpha) * z;
    Vec sproj = project_cones(h - zhat - w, prog.cones());
    Vec znew = h - sproj;
    w += zhat - znew;
    z = znew;

    if (iter % st.check_every == 0 || iter == st.max_iter) {
      // Unscaled iterates.
      Vec xu = sc.col.asDiagonal() * x;
      Vec su = (h - z).cwiseQuotient(sc.row);
      Vec yu = (rho / sc.cost) * (sc.row.asDiagonal() * w);
      double rp = (G0 * xu + su - h0).lpNorm<Eigen::Infinity>() / hnorm;
      double rd = (c0 + G0.transpose() * yu).lpNorm<Eigen::Infinity>() / cnorm;
      double px = c0.dot(xu), dy = h0.dot(yu);
      double gap = std::abs(px + dy) / std::max({1.0, std::abs(px), std::abs(dy)});
      if (iter % 5000 == 0 && std::getenv("DDTO_CONIC_TRACE"))
        std::fprintf(stderr, "[conic] it=%d rp=%.3e rd=%.3e gap=%.3e px=%.6e dy=%.6e rho=%.3e\n",
                     iter, rp, rd, gap, px, dy, rho);
      res.primal_residual = rp;
      res.dual_residual = rd;
      res.gap = gap;
      if (rp <= st.tol && rd <= st.tol && gap <= st.tol) {
        res.status = Status::Optimal;
        res.x = xu;
        res.y = yu;
        res.objective = px;
        res.iterations = iter;
        return res;
      }
      // Primal infeasibility certificate: y in K*, h'y < 0, and G'y small
      // relative to the certificate strength (homogeneous test, so converging
      // feasible iterates with noise-level y cannot trigger it).
      double ip = h0.dot(yu);
      if (ip < 0.0 &&
          (G0.transpose() * yu).lpNorm<Eigen::Infinity>() * hnorm <= st.infeas_tol * (-ip)) {
        res.status = Status::Infeasible;
        res.x = Vec::Zero(n);
        res.y = yu / yu.lpNorm<Eigen::Infinity>();
        res.iterations = iter;
        return res;
      }
      // Residual-balancing rho update (with refactorization).
      if (iter % 200 == 0 && iter < st.max_iter) {
        double ratio = std::sqrt((rp + 1e-16) / (rd + 1e-16));
        if (ratio > 5.0 || ratio < 0.2) {
          double rho_new = std::clamp(rho * ratio, 1e-4, 1e6);
          // w is the rho-scaled dual; preserve y = rho * w across the update.
          w *= rho / rho_new;
          rho = rho_new;
          ldlt.factorize(build_kkt(G, sigma, rho));
          if (ldlt.info() != Eigen::Success)
            throw std::runtime_error("conic solver: KKT refactorization failed");
        }
      }
    }
  }
  res.status = Status::MaxIterations;
  res.x = sc.col.asDiagonal() * x;
  res.y = (rho / sc.cost) * (sc.row.asDiagonal() * w);
  res.objective = c0.dot(res.x);
  res.iterations = st.max_iter;
  return res;
}

bool check_feasible(const ConicProgram& prog, double tol, int max_iter) {
  ConicProgram feas = prog;
  for (int i = 0; i < feas.num_vars(); ++i) feas.set_objective(i, 0.0);
  SolverSettings st;
  st.tol = tol;
  st.max_iter = max_iter;
  return solve(feas, st).status == Status::Optimal;
}

void quad_cost_as_cone(ConicProgram& prog, const std::vector<int>& input_vars, double l_max) {
  if (l_max < 0) throw std::invalid_argument("quad_cost_as_cone: l_max must be >= 0");
  prog.norm_upper_bound(input_vars, std::sqrt(l_max));
}

}  // namespace ddto::conic
