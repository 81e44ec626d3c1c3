// Compares the OpenMP-parallel shooting linearization against the serial
// reference on a Table-2-sized iterate and reports timings and the maximum
// elementwise difference (which must be zero: the kernel is pure).
#include <chrono>
#include <iostream>

#include "ddto/scenario.hpp"
#include "ddto/scp.hpp"

using namespace ddto;

int main() {
  auto sc = quad_nonconvex_scenario();
  auto sys = model::quadrotor_continuous(sc.quad);
  const int M = 12;
  std::vector<int> J = {0, 1, 2, 3};

  scp::ScpIterate it;
  const int B = static_cast<int>(J.size()) + 1;
  it.x.resize(B);
  it.u.resize(B);
  for (int b = 0; b < B; ++b) {
    for (int k = 0; k < M; ++k) {
      Vec x = Vec::Zero(9);
      x.head(3) = Vec3(10.0 - b, -10.0 + 2.0 * k, 10.0);
      x.segment(3, 3) = Vec3(0.5, 1.0, -0.2);
      x(8) = 0.4 * k;
      it.x[b].push_back(x);
    }
    for (int k = 0; k + 1 < M; ++k) {
      Vec u(4);
      u << 1.0, 2.0, 9.8, 5.0;
      it.u[b].push_back(u);
    }
  }

  auto time_it = [&](bool parallel, int reps) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::vector<model::ShootingLinearization>> lin;
    for (int r = 0; r < reps; ++r)
      lin = scp::linearize_iterate(sys, it, 1.0 / (M - 1), sc.scp.substeps, parallel);
    double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return std::make_pair(s / reps, lin);
  };

  const int reps = 20;
  auto [t_serial, serial] = time_it(false, reps);
  auto [t_parallel, parallel] = time_it(true, reps);

  double max_diff = 0.0;
  for (int b = 0; b < B; ++b)
    for (int k = 0; k + 1 < M; ++k) {
      max_diff = std::max(max_diff,
                          (serial[b][k].value - parallel[b][k].value).lpNorm<Eigen::Infinity>());
      max_diff = std::max(
          max_diff, (serial[b][k].jac_x - parallel[b][k].jac_x).lpNorm<Eigen::Infinity>());
      max_diff = std::max(
          max_diff, (serial[b][k].jac_u - parallel[b][k].jac_u).lpNorm<Eigen::Infinity>());
    }

  std::cout << "serial:   " << t_serial * 1e3 << " ms/iterate\n";
  std::cout << "parallel: " << t_parallel * 1e3 << " ms/iterate\n";
  std::cout << "speedup:  " << t_serial / t_parallel << "x\n";
  std::cout << "max diff: " << max_diff << "\n";
  return max_diff == 0.0 ? 0 : 1;
}
