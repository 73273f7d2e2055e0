#include "vidcap/captioner.hpp"

#include <numeric>

#include "vidcap/errors.hpp"

namespace vidcap {

std::vector<std::pair<std::string, Matrix*>> CaptionerWeights::tensors() {
  return {{"frame.w", &frame_w},        {"frame.b", &frame_b},       {"layer1.w_x", &layer1.w_x},
          {"layer1.w_h", &layer1.w_h},  {"layer1.b", &layer1.b},     {"layer2.w_x", &layer2.w_x},
          {"layer2.w_h", &layer2.w_h},  {"layer2.b", &layer2.b},     {"embedding", &embedding},
          {"out.w", &out_w},            {"out.b", &out_b},           {"regress.w", &reg_w},
          {"regress.b", &reg_b}};
}

std::vector<std::pair<std::string, const Matrix*>> CaptionerWeights::tensors() const {
  auto mutable_view = const_cast<CaptionerWeights*>(this)->tensors();
  std::vector<std::pair<std::string, const Matrix*>> out;
  out.reserve(mutable_view.size());
  for (auto& [name, m] : mutable_view) out.emplace_back(name, m);
  return out;
}

CaptionerWeights CaptionerWeights::zeros_like(const CaptionerWeights& w) {
  CaptionerWeights z;
  auto src = w.tensors();
  auto dst = z.tensors();
  for (std::size_t k = 0; k < src.size(); ++k) {
    *dst[k].second = Matrix(src[k].second->rows(), src[k].second->cols());
  }
  return z;
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError("captioner: " + what);
}

std::size_t output_width(const CaptionerModel& m) {
  return m.hidden() + (m.fusion.mode == FusionMode::deep ? m.lm->hidden_size() : 0);
}

}  // namespace

void CaptionerModel::validate() const {
  fusion.validate();
  if (fusion.mode == FusionMode::early) {
    throw ConfigError("captioner: early fusion is an initialisation, not a runtime mode");
  }
  const bool needs_lm = fusion.mode == FusionMode::late || fusion.mode == FusionMode::deep;
  if (needs_lm && !lm) {
    throw ConfigError("captioner: fusion mode " + to_string(fusion.mode) +
                      " requires an attached language model");
  }
  if (lm && !(lm->vocab == vocab)) {
    throw ConfigError("captioner: attached language model uses a different vocabulary");
  }
  const std::size_t h = hidden();
  const std::size_t v = vocab.size();
  require(weights.frame_b.rows() == input_dim() && weights.frame_b.cols() == 1, "frame bias shape");
  require(weights.layer1.input_size() == input_dim() && weights.layer1.w_x.rows() == 4 * h &&
              weights.layer1.b.rows() == 4 * h,
          "layer1 shape");
  require(weights.layer2.input_size() == h + embed_dim() && weights.layer2.hidden_size() == h &&
              weights.layer2.w_x.rows() == 4 * h && weights.layer2.b.rows() == 4 * h,
          "layer2 shape " + shape_string(weights.layer2.w_x));
  require(weights.embedding.rows() == v, "embedding rows " + shape_string(weights.embedding));
  require(weights.out_w.rows() == v && weights.out_w.cols() == output_width(*this) &&
              weights.out_b.rows() == v && weights.out_b.cols() == 1,
          "output head " + shape_string(weights.out_w));
  if (predicts_embeddings()) {
    require(weights.reg_w.cols() == h && weights.reg_b.rows() == weights.reg_w.rows() &&
                weights.reg_b.cols() == 1,
            "regression head " + shape_string(weights.reg_w));
  } else {
    require(weights.reg_b.empty(), "regression bias without weights");
  }
}

CaptionerModel make_captioner(const Vocabulary& vocab, const CaptionerDims& dims,
                              EmbeddingTable embedding, FusionConfig fusion,
                              std::shared_ptr<const LmModel> lm, Rng& rng) {
  if (dims.feat_dim == 0 || dims.input_dim == 0 || dims.hidden == 0) {
    throw ConfigError("make_captioner: feature, input and hidden sizes must be positive");
  }
  if (embedding.vectors.rows() != vocab.size()) {
    throw ConfigError("make_captioner: embedding rows do not match vocabulary size");
  }
  if (fusion.mode == FusionMode::deep && !lm) {
    throw ConfigError("make_captioner: deep fusion requires an attached language model");
  }
  CaptionerModel m;
  m.vocab = vocab;
  m.embedding_mode = embedding.mode;
  m.fusion = fusion;
  m.lm = std::move(lm);

  CaptionerWeights& w = m.weights;
  const std::size_t h = dims.hidden;
  const std::size_t v = vocab.size();
  w.frame_w = Matrix(dims.input_dim, dims.feat_dim);
  w.frame_b = Matrix(dims.input_dim, 1);
  rng.fill_uniform(w.frame_w, -kInitScale, kInitScale);
  rng.fill_uniform(w.frame_b, -kInitScale, kInitScale);
  w.layer1 = LstmParams::init(dims.input_dim, h, rng);
  w.layer2 = LstmParams::init(h + embedding.dim(), h, rng);
  w.embedding = std::move(embedding.vectors);
  const std::size_t h_out = h + (fusion.mode == FusionMode::deep ? m.lm->hidden_size() : 0);
  w.out_w = Matrix(v, h_out);
  w.out_b = Matrix(v, 1);
  rng.fill_uniform(w.out_w, -kInitScale, kInitScale);
  rng.fill_uniform(w.out_b, -kInitScale, kInitScale);
  if (dims.regress_dim > 0) {
    w.reg_w = Matrix(dims.regress_dim, h);
    w.reg_b = Matrix(dims.regress_dim, 1);
    rng.fill_uniform(w.reg_w, -kInitScale, kInitScale);
    rng.fill_uniform(w.reg_b, -kInitScale, kInitScale);
  }
  m.validate();
  return m;
}

namespace {

void check_frames(const CaptionerModel& m, const FrameSequence& frames) {
  if (frames.length() == 0) throw ShapeError("captioner: clip '" + frames.clip_id + "' has no frames");
  if (frames.width() != m.feat_dim()) {
    throw ShapeError("captioner: clip '" + frames.clip_id + "' has feature width " +
                     std::to_string(frames.width()) + ", model expects " +
                     std::to_string(m.feat_dim()));
  }
}

void check_caption(const CaptionerModel& m, std::span<const TokenId> caption) {
  if (caption.empty() || caption.back() != kEos) {
    throw ShapeError("captioner: caption must be nonempty and end in <eos>");
  }
  for (TokenId id : caption) {
    if (id >= m.vocab.size()) {
      throw IndexError("captioner: token id " + std::to_string(id) + " out of range");
    }
  }
}

Vector project_frame(const CaptionerModel& m, std::span<const double> x) {
  return affine(m.weights.frame_w, x, m.weights.frame_b.values());
}

// Caption-model distribution for one decode step. Deep mode concatenates the
// LM hidden state; otherwise only layer 2's hidden state is projected.
Vector caption_distribution(const CaptionerModel& m, const Vector& h2, const LstmState& lm_state) {
  if (m.fusion.mode == FusionMode::deep) {
    return deep_fuse_distribution(h2, lm_state.h, m.weights.out_w, m.weights.out_b.values());
  }
  return softmax(affine(m.weights.out_w, h2, m.weights.out_b.values()));
}

}  // namespace

EncoderOutput encode(const CaptionerModel& m, const FrameSequence& frames) {
  check_frames(m, frames);
  const std::size_t h = m.hidden();
  EncoderOutput out{LstmState::zeros(h), LstmState::zeros(h), {}};
  const Vector zero_word(m.embed_dim(), 0.0);
  for (std::size_t t = 0; t < frames.length(); ++t) {
    out.layer1 = cell_forward(project_frame(m, frames.frames.row(t)), out.layer1, m.weights.layer1);
    out.layer2 = cell_forward(concat(out.layer1.h, zero_word), out.layer2, m.weights.layer2);
    out.layer1_hidden.push_back(out.layer1.h);
  }
  return out;
}

DecodeState start_decode(const CaptionerModel& m, const FrameSequence& frames) {
  EncoderOutput enc = encode(m, frames);
  DecodeState s{std::move(enc.layer1), std::move(enc.layer2), {}};
  if (m.lm) s.lm = LstmState::zeros(m.lm->hidden_size());
  return s;
}

StepDistributions step_distributions(const CaptionerModel& m, DecodeState& s, TokenId prev) {
  if (prev >= m.vocab.size()) throw IndexError("captioner: token id out of range");
  const Vector zero_frame(m.feat_dim(), 0.0);
  s.layer1 = cell_forward(project_frame(m, zero_frame), s.layer1, m.weights.layer1);
  s.layer2 = cell_forward(concat(s.layer1.h, embedding_row(m.weights.embedding, prev)), s.layer2,
                          m.weights.layer2);
  StepDistributions out;
  if (m.fusion.mode == FusionMode::late) {
    LmStep lm = lm_step(*m.lm, prev, s.lm);
    s.lm = std::move(lm.state);
    out.lm = std::move(lm.dist);
  } else if (m.fusion.mode == FusionMode::deep) {
    s.lm = cell_forward(embed(m.lm->embedding, prev), s.lm, m.lm->lstm);
  }
  out.caption = caption_distribution(m, s.layer2.h, s.lm);
  return out;
}

Vector next_distribution(const CaptionerModel& m, DecodeState& s, TokenId prev) {
  StepDistributions d = step_distributions(m, s, prev);
  if (m.fusion.mode == FusionMode::late) return late_fuse(d.caption, d.lm, m.fusion.alpha);
  return std::move(d.caption);
}

CaptionLoss caption_loss_and_grads(const CaptionerModel& m, const FrameSequence& frames,
                                   std::span<const TokenId> caption, double lambda_emb,
                                   const Matrix* target_vectors) {
  check_frames(m, frames);
  check_caption(m, caption);
  if (lambda_emb < 0.0) throw ConfigError("caption loss: lambda_emb must be >= 0");
  if (lambda_emb > 0.0) {
    if (!m.predicts_embeddings()) {
      throw ConfigError("caption loss: lambda_emb > 0 but the model has no regression head");
    }
    if (!target_vectors) throw ConfigError("caption loss: lambda_emb > 0 needs target vectors");
    if (target_vectors->rows() != m.vocab.size() || target_vectors->cols() != m.regress_dim()) {
      throw ConfigError("caption loss: target vectors are " + shape_string(*target_vectors) +
                        ", expected " + std::to_string(m.vocab.size()) + "x" +
                        std::to_string(m.regress_dim()));
    }
  }
  const CaptionerWeights& w = m.weights;
  const bool deep = m.fusion.mode == FusionMode::deep;
  const std::size_t enc_steps = frames.length();
  const std::size_t dec_steps = caption.size();
  const std::size_t steps = enc_steps + dec_steps;
  const std::size_t h = m.hidden();

  CaptionLoss out;
  out.grads = CaptionerWeights::zeros_like(w);
  out.encode_steps = enc_steps;
  out.decode_steps = dec_steps;
  CaptionerWeights& g = out.grads;

  std::vector<LstmCache> c1(steps), c2(steps);
  std::vector<Vector> dh2_out(dec_steps, Vector(h, 0.0));
  LstmState s1 = LstmState::zeros(h), s2 = LstmState::zeros(h);
  const Vector zero_word(m.embed_dim(), 0.0);
  for (std::size_t t = 0; t < enc_steps; ++t) {
    s1 = cell_forward(project_frame(m, frames.frames.row(t)), s1, w.layer1, &c1[t]);
    s2 = cell_forward(concat(s1.h, zero_word), s2, w.layer2, &c2[t]);
  }

  LstmState lm_state;
  if (deep) lm_state = LstmState::zeros(m.lm->hidden_size());
  const Vector zero_frame(m.feat_dim(), 0.0);
  for (std::size_t n = 0; n < dec_steps; ++n) {
    const std::size_t t = enc_steps + n;
    const TokenId prev = n == 0 ? kBos : caption[n - 1];
    const TokenId target = caption[n];
    s1 = cell_forward(project_frame(m, zero_frame), s1, w.layer1, &c1[t]);
    s2 = cell_forward(concat(s1.h, embedding_row(w.embedding, prev)), s2, w.layer2, &c2[t]);
    if (deep) lm_state = cell_forward(embed(m.lm->embedding, prev), lm_state, m.lm->lstm);

    const Vector dist = caption_distribution(m, s2.h, lm_state);
    out.cross_entropy += cross_entropy(dist, target);
    const Vector dz = cross_entropy_softmax_grad(dist, target);
    const Vector features = deep ? concat(s2.h, lm_state.h) : s2.h;
    add_outer(g.out_w, dz, features);
    add_in_place(g.out_b.values(), dz);
    Vector dfeat(features.size(), 0.0);
    add_transposed_product(dfeat, w.out_w, dz);
    std::copy(dfeat.begin(), dfeat.begin() + static_cast<std::ptrdiff_t>(h), dh2_out[n].begin());

    if (lambda_emb > 0.0) {
      Vector residual = affine(w.reg_w, s2.h, w.reg_b.values());
      const auto wanted = target_vectors->row(target);
      double sq = 0.0;
      for (std::size_t k = 0; k < residual.size(); ++k) {
        residual[k] -= wanted[k];
        sq += residual[k] * residual[k];
      }
      out.regression += lambda_emb * sq;
      for (double& r : residual) r *= 2.0 * lambda_emb;
      add_outer(g.reg_w, residual, s2.h);
      add_in_place(g.reg_b.values(), residual);
      add_transposed_product(dh2_out[n], w.reg_w, residual);
    }
  }
  out.loss = out.cross_entropy + out.regression;

  const bool train_embedding = is_trainable(m.embedding_mode);
  Vector dh2_next(h, 0.0), dc2_next(h, 0.0), dh1_next(h, 0.0), dc1_next(h, 0.0);
  for (std::size_t t = steps; t-- > 0;) {
    Vector dh2 = dh2_next;
    if (t >= enc_steps) add_in_place(dh2, dh2_out[t - enc_steps]);
    CellBackward b2 = cell_backward(dh2, dc2_next, c2[t], w.layer2, g.layer2);
    dh2_next = std::move(b2.dh_prev);
    dc2_next = std::move(b2.dc_prev);
    if (t >= enc_steps && train_embedding) {
      const std::size_t n = t - enc_steps;
      const TokenId prev = n == 0 ? kBos : caption[n - 1];
      add_in_place(g.embedding.row(prev),
                   std::span<const double>(b2.dx).subspan(h, m.embed_dim()));
    }
    Vector dh1(b2.dx.begin(), b2.dx.begin() + static_cast<std::ptrdiff_t>(h));
    add_in_place(dh1, dh1_next);
    CellBackward b1 = cell_backward(dh1, dc1_next, c1[t], w.layer1, g.layer1);
    dh1_next = std::move(b1.dh_prev);
    dc1_next = std::move(b1.dc_prev);
    add_in_place(g.frame_b.values(), b1.dx);
    if (t < enc_steps) add_outer(g.frame_w, b1.dx, frames.frames.row(t));
  }
  return out;
}

double score_caption(const CaptionerModel& m, const FrameSequence& frames,
                     std::span<const TokenId> caption) {
  check_caption(m, caption);
  DecodeState s = start_decode(m, frames);
  double total = 0.0;
  TokenId prev = kBos;
  for (TokenId y : caption) {
    const Vector dist = next_distribution(m, s, prev);
    total += floored_log(dist[y]);
    prev = y;
  }
  return total;
}

std::vector<ParamGrad> trainable_pairs(CaptionerModel& m, const CaptionerWeights& grads) {
  auto params = m.weights.tensors();
  auto gs = grads.tensors();
  std::vector<ParamGrad> pairs;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].second->empty()) continue;
    if (params[k].first == "embedding" && !is_trainable(m.embedding_mode)) continue;
    pairs.push_back({params[k].second, gs[k].second});
  }
  return pairs;
}

CaptionerModel train_captioner(const CaptionDataset& data, CaptionerModel model,
                               const CaptionerTrainConfig& config, Rng& rng,
                               CaptionerTrainLog* log) {
  model.validate();
  if (data.pairs.empty()) throw ConfigError("train_captioner: empty dataset");
  if (config.lr <= 0.0) throw ConfigError("train_captioner: lr must be positive");
  if (config.lambda_emb > 0.0 && !config.target_vectors) {
    throw ConfigError("train_captioner: lambda_emb > 0 requires target vectors");
  }
  std::vector<std::size_t> order(data.pairs.size());
  std::iota(order.begin(), order.end(), 0);
  double lr = config.lr;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0, ce = 0.0;
    std::size_t tokens = 0;
    for (std::size_t idx : order) {
      const TrainingPair& pair = data.pairs[idx];
      if (pair.clip >= data.clips.size()) throw IndexError("train_captioner: bad clip index");
      CaptionLoss r = caption_loss_and_grads(model, data.clips[pair.clip], pair.caption,
                                             config.lambda_emb, config.target_vectors);
      total += r.loss;
      ce += r.cross_entropy;
      tokens += pair.caption.size();
      sgd_step(trainable_pairs(model, r.grads), lr, config.clip_norm);
    }
    if (log) {
      log->epoch_loss.push_back(total / static_cast<double>(data.pairs.size()));
      log->epoch_token_loss.push_back(ce / static_cast<double>(tokens));
    }
    lr *= config.lr_decay;
  }
  return model;
}

}  // namespace vidcap
