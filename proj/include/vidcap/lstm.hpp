#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vidcap/numerics.hpp"

namespace vidcap {

/// Weights of one LSTM layer. Gate rows are stacked in the fixed order
/// input, forget, output, candidate: rows [0,h) i, [h,2h) f, [2h,3h) o,
/// [3h,4h) g.
struct LstmParams {
  Matrix w_x;  // 4h x d
  Matrix w_h;  // 4h x h
  Matrix b;    // 4h x 1

  std::size_t input_size() const { return w_x.cols(); }
  std::size_t hidden_size() const { return w_h.cols(); }

  static LstmParams zeros(std::size_t input, std::size_t hidden);
  /// Uniform [-0.08, 0.08] weights and biases, forget-gate bias 1.0.
  static LstmParams init(std::size_t input, std::size_t hidden, Rng& rng);

  bool operator==(const LstmParams&) const = default;
};

struct LstmState {
  Vector h;
  Vector c;
  static LstmState zeros(std::size_t hidden);
  bool operator==(const LstmState&) const = default;
};

/// Everything cell_backward needs from the forward pass.
struct LstmCache {
  Vector x, h_prev, c_prev;
  Vector i, f, o, g;
  Vector c, tanh_c;
};

/// One step: i,f,o = sigmoid, g = tanh, c = f*c_prev + i*g, h = o*tanh(c).
LstmState cell_forward(std::span<const double> x, const LstmState& prev, const LstmParams& p,
                       LstmCache* cache = nullptr);

struct CellBackward {
  Vector dx;
  Vector dh_prev;
  Vector dc_prev;
};

/// Backpropagates dL/dh and dL/dc of one step. Parameter gradients are
/// accumulated into `grads`, which must be shaped like `p`.
CellBackward cell_backward(std::span<const double> dh, std::span<const double> dc,
                           const LstmCache& cache, const LstmParams& p, LstmParams& grads);

/// Softmax output layer over an LSTM's hidden state.
struct OutputHead {
  Matrix w;  // V x h
  Matrix b;  // V x 1
  bool operator==(const OutputHead&) const = default;
};

struct SequenceResult {
  double loss = 0.0;
  LstmParams lstm_grads;
  OutputHead head_grads;
  std::vector<Vector> input_grads;  // dL/dx_t per step
};

/// Unrolls the cell from a zero state over `inputs`, scores every step with
/// softmax cross-entropy against `targets` (weighted by `loss_weights` when
/// given), and runs full-length BPTT.
SequenceResult sequence_bptt(std::span<const Vector> inputs, std::span<const std::size_t> targets,
                             const LstmParams& p, const OutputHead& head,
                             std::span<const double> loss_weights = {});

}  // namespace vidcap
