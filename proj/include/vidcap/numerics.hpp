#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace vidcap {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Column vectors (biases) are stored as
/// n x 1 matrices so that every trainable tensor has one type.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Matrix& m);
bool all_finite(std::span<const double> v);

/// y = W x + b.
Vector affine(const Matrix& w, std::span<const double> x, std::span<const double> b);

/// out += W^T dy.
void add_transposed_product(std::span<double> out, const Matrix& w, std::span<const double> dy);

/// g += dy x^T.
void add_outer(Matrix& g, std::span<const double> dy, std::span<const double> x);

void add_in_place(std::span<double> acc, std::span<const double> v);

Vector concat(std::span<const double> a, std::span<const double> b);

/// Numerically stable softmax (max-subtracted).
Vector softmax(std::span<const double> logits);

/// Probabilities are floored at this value before taking logs.
inline constexpr double kProbFloor = 1e-12;

/// ln(max(p, kProbFloor)); the log-probability used for scoring everywhere.
double floored_log(double p);

/// -ln(max(dist[target], 1e-12)).
double cross_entropy(std::span<const double> dist, std::size_t target);

/// Gradient of cross_entropy(softmax(z), target) with respect to z, given
/// dist = softmax(z). Exact, including the zero gradient below the floor.
Vector cross_entropy_softmax_grad(std::span<const double> dist, std::size_t target);

struct ParamGrad {
  Matrix* param;
  const Matrix* grad;
};

/// Plain SGD with global-norm clipping: if the L2 norm g over every gradient
/// exceeds clip_norm, all gradients are scaled by clip_norm / g before the
/// update p <- p - lr * grad. Returns the unclipped global norm.
double sgd_step(std::span<const ParamGrad> pairs, double lr, double clip_norm);

/// xoshiro256** seeded through splitmix64. The generator and every derived
/// draw (uniform, normal, below, shuffle) are defined here rather than via
/// <random> so that sequences are identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (one draw per call, no caching).
  double normal();
  /// Uniform integer in [0, n) by rejection; n must be > 0.
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  void fill_uniform(Matrix& m, double lo, double hi);

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

}  // namespace vidcap
