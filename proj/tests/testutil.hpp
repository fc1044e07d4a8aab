#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

// Shared helpers for the test suites. The finite-difference oracle here is
// the independent reference for every analytic gradient in the library; it
// must never call into the backward passes it checks.

namespace testutil {

// Central finite differences: g_i ~ (f(x + h e_i) - f(x - h e_i)) / 2h.
inline std::vector<double> fd_grad(const std::function<double(const std::vector<double>&)>& f,
                                   std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Max relative error between an analytic gradient and the oracle.
inline double max_rel_error(const std::vector<double>& analytic,
                            const std::vector<double>& oracle) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(oracle[i]), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - oracle[i]) / denom);
  }
  return worst;
}

// Fresh scratch directory under the build tree.
inline std::string scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("flsim-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace testutil
