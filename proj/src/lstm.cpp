#include "vidcap/lstm.hpp"

#include <cmath>
#include <string>

#include "vidcap/errors.hpp"
#include "vidcap/vocab.hpp"

namespace vidcap {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

LstmParams LstmParams::zeros(std::size_t input, std::size_t hidden) {
  return {Matrix(4 * hidden, input), Matrix(4 * hidden, hidden), Matrix(4 * hidden, 1)};
}

LstmParams LstmParams::init(std::size_t input, std::size_t hidden, Rng& rng) {
  LstmParams p = zeros(input, hidden);
  rng.fill_uniform(p.w_x, -kInitScale, kInitScale);
  rng.fill_uniform(p.w_h, -kInitScale, kInitScale);
  rng.fill_uniform(p.b, -kInitScale, kInitScale);
  for (std::size_t k = hidden; k < 2 * hidden; ++k) p.b(k, 0) = 1.0;
  return p;
}

LstmState LstmState::zeros(std::size_t hidden) { return {Vector(hidden, 0.0), Vector(hidden, 0.0)}; }

LstmState cell_forward(std::span<const double> x, const LstmState& prev, const LstmParams& p,
                       LstmCache* cache) {
  const std::size_t h = p.hidden_size();
  if (x.size() != p.input_size() || prev.h.size() != h || prev.c.size() != h ||
      p.w_x.rows() != 4 * h || p.b.rows() != 4 * h) {
    throw ShapeError("cell_forward: x has " + std::to_string(x.size()) + ", state has " +
                     std::to_string(prev.h.size()) + ", params W_x " + shape_string(p.w_x) +
                     " W_h " + shape_string(p.w_h));
  }
  Vector z = affine(p.w_x, x, p.b.values());
  const Vector zh = affine(p.w_h, prev.h, Vector(4 * h, 0.0));
  for (std::size_t k = 0; k < z.size(); ++k) z[k] += zh[k];

  LstmState next{Vector(h), Vector(h)};
  Vector gi(h), gf(h), go(h), gg(h), tc(h);
  for (std::size_t k = 0; k < h; ++k) {
    gi[k] = sigmoid(z[k]);
    gf[k] = sigmoid(z[h + k]);
    go[k] = sigmoid(z[2 * h + k]);
    gg[k] = std::tanh(z[3 * h + k]);
    next.c[k] = gf[k] * prev.c[k] + gi[k] * gg[k];
    tc[k] = std::tanh(next.c[k]);
    next.h[k] = go[k] * tc[k];
  }
  if (cache) {
    cache->x.assign(x.begin(), x.end());
    cache->h_prev = prev.h;
    cache->c_prev = prev.c;
    cache->i = std::move(gi);
    cache->f = std::move(gf);
    cache->o = std::move(go);
    cache->g = std::move(gg);
    cache->c = next.c;
    cache->tanh_c = std::move(tc);
  }
  return next;
}

CellBackward cell_backward(std::span<const double> dh, std::span<const double> dc,
                           const LstmCache& cache, const LstmParams& p, LstmParams& grads) {
  const std::size_t h = p.hidden_size();
  if (dh.size() != h || dc.size() != h || cache.i.size() != h || cache.x.size() != p.input_size() ||
      grads.w_x.rows() != p.w_x.rows() || grads.w_x.cols() != p.w_x.cols() ||
      grads.w_h.rows() != p.w_h.rows() || grads.w_h.cols() != p.w_h.cols()) {
    throw ShapeError("cell_backward: cache/params mismatch (hidden " + std::to_string(h) +
                     ", cache hidden " + std::to_string(cache.i.size()) + ", upstream " +
                     std::to_string(dh.size()) + ")");
  }
  Vector dz(4 * h);
  CellBackward out{Vector(p.input_size(), 0.0), Vector(h, 0.0), Vector(h)};
  for (std::size_t k = 0; k < h; ++k) {
    const double i = cache.i[k], f = cache.f[k], o = cache.o[k], g = cache.g[k];
    const double tc = cache.tanh_c[k];
    const double dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
    const double d_o = dh[k] * tc;
    const double d_i = dct * g;
    const double d_g = dct * i;
    const double d_f = dct * cache.c_prev[k];
    out.dc_prev[k] = dct * f;
    dz[k] = d_i * i * (1.0 - i);
    dz[h + k] = d_f * f * (1.0 - f);
    dz[2 * h + k] = d_o * o * (1.0 - o);
    dz[3 * h + k] = d_g * (1.0 - g * g);
  }
  add_outer(grads.w_x, dz, cache.x);
  add_outer(grads.w_h, dz, cache.h_prev);
  add_in_place(grads.b.values(), dz);
  add_transposed_product(out.dx, p.w_x, dz);
  add_transposed_product(out.dh_prev, p.w_h, dz);
  return out;
}

SequenceResult sequence_bptt(std::span<const Vector> inputs, std::span<const std::size_t> targets,
                             const LstmParams& p, const OutputHead& head,
                             std::span<const double> loss_weights) {
  if (inputs.empty()) throw ShapeError("sequence_bptt: empty input sequence");
  if (targets.size() != inputs.size()) {
    throw ShapeError("sequence_bptt: " + std::to_string(inputs.size()) + " inputs but " +
                     std::to_string(targets.size()) + " targets");
  }
  if (!loss_weights.empty() && loss_weights.size() != inputs.size()) {
    throw ShapeError("sequence_bptt: loss weight count mismatch");
  }
  const std::size_t h = p.hidden_size();
  if (head.w.cols() != h || head.b.rows() != head.w.rows()) {
    throw ShapeError("sequence_bptt: head " + shape_string(head.w) + " over hidden " +
                     std::to_string(h));
  }
  const std::size_t steps = inputs.size();

  SequenceResult r;
  r.lstm_grads = LstmParams::zeros(p.input_size(), h);
  r.head_grads = {Matrix(head.w.rows(), h), Matrix(head.b.rows(), 1)};
  r.input_grads.resize(steps);

  std::vector<LstmCache> caches(steps);
  std::vector<Vector> dh_out(steps);
  LstmState s = LstmState::zeros(h);
  for (std::size_t t = 0; t < steps; ++t) {
    s = cell_forward(inputs[t], s, p, &caches[t]);
    const Vector dist = softmax(affine(head.w, s.h, head.b.values()));
    const double w = loss_weights.empty() ? 1.0 : loss_weights[t];
    r.loss += w * cross_entropy(dist, targets[t]);
    Vector dlogits = cross_entropy_softmax_grad(dist, targets[t]);
    for (double& v : dlogits) v *= w;
    add_outer(r.head_grads.w, dlogits, s.h);
    add_in_place(r.head_grads.b.values(), dlogits);
    dh_out[t] = Vector(h, 0.0);
    add_transposed_product(dh_out[t], head.w, dlogits);
  }

  Vector dh_next(h, 0.0), dc_next(h, 0.0);
  for (std::size_t t = steps; t-- > 0;) {
    Vector dh = dh_out[t];
    add_in_place(dh, dh_next);
    CellBackward b = cell_backward(dh, dc_next, caches[t], p, r.lstm_grads);
    r.input_grads[t] = std::move(b.dx);
    dh_next = std::move(b.dh_prev);
    dc_next = std::move(b.dc_prev);
  }
  return r;
}

}  // namespace vidcap
