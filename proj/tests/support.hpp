#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include "vidcap/numerics.hpp"

namespace vidcap::test {

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::path(VIDCAP_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  rng.fill_uniform(m, -scale, scale);
  return m;
}

inline Vector random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

inline double max_rel_err(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i]));
  return worst;
}

inline constexpr double kFdStep = 1e-5;

/// Largest relative error between `analytic` and central differences of
/// `loss` over every entry of `values`.
inline double fd_check(std::span<double> values, std::span<const double> analytic,
                       const std::function<double()>& loss) {
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + kFdStep;
    const double up = loss();
    values[i] = saved - kFdStep;
    const double down = loss();
    values[i] = saved;
    worst = std::max(worst, rel_err((up - down) / (2 * kFdStep), analytic[i]));
  }
  return worst;
}

}  // namespace vidcap::test
