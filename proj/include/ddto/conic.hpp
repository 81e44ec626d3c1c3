#pragma once

#include <Eigen/Sparse>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ddto/types.hpp"

namespace ddto::conic {

enum class Cone { Zero, Nonnegative, SecondOrder };

struct ConeSpec {
  Cone kind = Cone::Zero;
  int dim = 0;
};

/// Canonical form: minimize c'x subject to Gx + s = h, s in K,
/// where K is the ordered product of the listed cones.
///
/// Row conventions used by the builder helpers:
///   a'x  = b   ->  one Zero-cone row (G = a, h = b)
///   a'x <= b   ->  one Nonnegative-cone row (G = a, h = b)
///   ||Fx + g|| <= d'x + e  ->  SecondOrder block with first row
///                              (G = -d, h = e) and rows (G = -F, h = g)
class ConicProgram {
 public:
  int num_vars() const { return n_; }
  int num_rows() const { return static_cast<int>(h_.size()); }

  /// Registers `count` consecutive variables under `label`; returns the first index.
  int add_vars(const std::string& label, int count);
  std::pair<int, int> range(const std::string& label) const;  // (start, count)

  void set_objective(int var, double coeff);

  int add_row(double rhs);  // returns row index
  void coef(int row, int var, double value);

  /// Declares that the most recently added `dim` rows form one cone block.
  void push_cone(Cone kind, int dim);

  /// a'x (cmp) b over an index range with coefficients a.
  void add_linear(const std::vector<int>& vars, const std::vector<double>& coeffs,
                  double rhs, Cone kind);
  void equality(int var, double value);      // x_v = value
  void upper_bound(int var, double value);   // x_v <= value
  void lower_bound(int var, double value);   // x_v >= value

  /// ||x[vars]|| <= bound (second-order cone on a plain variable block).
  void norm_upper_bound(const std::vector<int>& vars, double bound);

  const Vec& objective() const { return c_; }
  const std::vector<double>& rhs() const { return h_; }
  const std::vector<ConeSpec>& cones() const { return cones_; }
  Eigen::SparseMatrix<double> matrix() const;

  void validate() const;  // throws on malformed program or non-finite data

  /// Sparse triplet text dump: header, then "row col value" lines, then cone list.
  void dump(const std::string& path) const;

 private:
  int n_ = 0;
  Vec c_;
  std::vector<Eigen::Triplet<double>> trips_;
  std::vector<double> h_;
  std::vector<ConeSpec> cones_;
  int cone_rows_ = 0;  // rows already covered by declared cones
  std::map<std::string, std::pair<int, int>> names_;
};

enum class Status { Optimal, Infeasible, MaxIterations };

struct SolveResult {
  Status status = Status::MaxIterations;
  Vec x;
  Vec y;  // dual associated with Gx + s = h
  double primal_residual = 0;
  double dual_residual = 0;
  double gap = 0;
  int iterations = 0;
  double objective = 0;
};

struct SolverSettings {
  double tol = 1e-7;
  int max_iter = 50000;
  double rho = 1.0;
  double sigma = 1e-6;
  double alpha = 1.6;              // over-relaxation
  double infeas_tol = 1e-6;        // divergence-certificate threshold
  int check_every = 25;
  std::optional<Vec> warm_x;       // initial-point hint
  std::optional<Vec> warm_y;       // dual-point hint (unscaled)
};

SolveResult solve(const ConicProgram& prog, const SolverSettings& settings = {});
SolveResult solve(const ConicProgram& prog, double tol, int max_iter);

/// True iff the zero-objective solve certifies feasibility. MaxIterations
/// counts as infeasible (conservative).
bool check_feasible(const ConicProgram& prog, double tol = 1e-7, int max_iter = 50000);

/// Appends a second-order-cone encoding of sum_k ||u_k||^2 <= l_max over the
/// stacked input variables (single cone on the stacked vector).
void quad_cost_as_cone(ConicProgram& prog, const std::vector<int>& input_vars, double l_max);

/// Projection onto the cone product (exposed for tests).
Vec project_cones(const Vec& v, const std::vector<ConeSpec>& cones);
/// Projection onto the dual cone product.
Vec project_dual_cones(const Vec& v, const std::vector<ConeSpec>& cones);

}  // namespace ddto::conic
