#include "vidcap/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vidcap/errors.hpp"

namespace vidcap {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("from_rows: ragged row " + std::to_string(i));
    std::copy(row.begin(), row.end(), m.row(i).begin());
    ++i;
  }
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  Matrix m(values.size(), 1);
  std::copy(values.begin(), values.end(), m.data_.begin());
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vector affine(const Matrix& w, std::span<const double> x, std::span<const double> b) {
  if (w.cols() != x.size() || w.rows() != b.size()) {
    throw ShapeError("affine: W is " + shape_string(w) + ", x has " + std::to_string(x.size()) +
                     " entries, b has " + std::to_string(b.size()));
  }
  Vector y(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const auto row = w.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * x[j];
    y[i] = acc + b[i];
  }
  return y;
}

void add_transposed_product(std::span<double> out, const Matrix& w, std::span<const double> dy) {
  if (w.rows() != dy.size() || w.cols() != out.size()) {
    throw ShapeError("add_transposed_product: W is " + shape_string(w) + ", dy has " +
                     std::to_string(dy.size()) + ", out has " + std::to_string(out.size()));
  }
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double d = dy[i];
    if (d == 0.0) continue;
    const auto row = w.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) out[j] += row[j] * d;
  }
}

void add_outer(Matrix& g, std::span<const double> dy, std::span<const double> x) {
  if (g.rows() != dy.size() || g.cols() != x.size()) {
    throw ShapeError("add_outer: G is " + shape_string(g) + ", dy has " +
                     std::to_string(dy.size()) + ", x has " + std::to_string(x.size()));
  }
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const double d = dy[i];
    if (d == 0.0) continue;
    auto row = g.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += d * x[j];
  }
}

void add_in_place(std::span<double> acc, std::span<const double> v) {
  if (acc.size() != v.size()) {
    throw ShapeError("add_in_place: " + std::to_string(acc.size()) + " vs " +
                     std::to_string(v.size()));
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
}

Vector concat(std::span<const double> a, std::span<const double> b) {
  Vector out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

Vector softmax(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("softmax: empty input");
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vector p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double floored_log(double p) { return std::log(std::max(p, kProbFloor)); }

double cross_entropy(std::span<const double> dist, std::size_t target) {
  if (target >= dist.size()) {
    throw IndexError("cross_entropy: target " + std::to_string(target) + " out of range for " +
                     std::to_string(dist.size()) + " classes");
  }
  return -floored_log(dist[target]);
}

Vector cross_entropy_softmax_grad(std::span<const double> dist, std::size_t target) {
  if (target >= dist.size()) {
    throw IndexError("cross_entropy_softmax_grad: target " + std::to_string(target) +
                     " out of range");
  }
  Vector dz(dist.size(), 0.0);
  if (dist[target] < kProbFloor) return dz;
  for (std::size_t k = 0; k < dist.size(); ++k) dz[k] = dist[k];
  dz[target] -= 1.0;
  return dz;
}

double sgd_step(std::span<const ParamGrad> pairs, double lr, double clip_norm) {
  double sq = 0.0;
  for (const auto& pg : pairs) {
    if (pg.param->rows() != pg.grad->rows() || pg.param->cols() != pg.grad->cols()) {
      throw ShapeError("sgd_step: param " + shape_string(*pg.param) + " vs grad " +
                       shape_string(*pg.grad));
    }
    for (double g : pg.grad->values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double scale = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;
  const double step = lr * scale;
  if (step == 0.0) return norm;
  for (const auto& pg : pairs) {
    auto p = pg.param->values();
    auto g = pg.grad->values();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= step * g[i];
  }
  return norm;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  // 1 - uniform() lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw ConfigError("Rng::below: n must be positive");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return static_cast<std::size_t>(r % bound);
}

void Rng::fill_uniform(Matrix& m, double lo, double hi) {
  for (double& v : m.values()) v = uniform(lo, hi);
}

}  // namespace vidcap
