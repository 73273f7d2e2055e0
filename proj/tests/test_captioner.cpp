#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "vidcap/errors.hpp"

using namespace vidcap;
using namespace vidcap::test;

namespace {

double max_fd_error(CaptionerModel& m, const FrameSequence& frames, const IdSequence& caption, double lambda,
                    const Matrix* targets, const CaptionerWeights& grads) {
  auto loss = [&] { return caption_loss_and_grads(m, frames, caption, lambda, targets).loss; };
  auto params = m.weights.tensors();
  auto gs = grads.tensors();
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].second->empty()) continue;
    if (params[k].first == "embedding" && !is_trainable(m.embedding_mode)) continue;
    const double e = fd_check(params[k].second->values(), gs[k].second->values(), loss);
    if (e >= 1e-4) MESSAGE("tensor " << params[k].first << " rel err " << e);
    worst = std::max(worst, e);
  }
  return worst;
}

void zero_all(CaptionerModel& m) {
  for (auto& [name, t] : m.weights.tensors()) t->fill(0.0);
}

}  // namespace

TEST_CASE("encode: zero model, frame order, determinism") {
  Rng rng(1);
  CaptionerModel m = random_captioner({}, rng);
  const FrameSequence three = random_frames(3, 5, rng);

  const EncoderOutput a = encode(m, three);
  const EncoderOutput b = encode(m, three);
  CHECK(a.layer1 == b.layer1);
  CHECK(a.layer2 == b.layer2);
  CHECK(a.layer1_hidden.size() == 3);

  FrameSequence reversed = three;
  for (std::size_t t = 0; t < 3; ++t) {
    std::copy(three.frames.row(2 - t).begin(), three.frames.row(2 - t).end(), reversed.frames.row(t).begin());
  }
  CHECK_FALSE(encode(m, reversed).layer2 == a.layer2);

  zero_all(m);
  const EncoderOutput z = encode(m, random_frames(1, 5, rng));
  CHECK(z.layer1 == LstmState::zeros(4));
  CHECK(z.layer2 == LstmState::zeros(4));

  CHECK_THROWS_AS(encode(m, random_frames(2, 4, rng)), ShapeError);
  CHECK_THROWS_AS(encode(m, FrameSequence{"empty", Matrix(0, 5)}), ShapeError);
}

TEST_CASE("caption loss: lambda 0 is the pure cross-entropy path") {
  Rng rng(2);
  ModelSpec spec;
  spec.regress = 3;
  const CaptionerModel m = random_captioner(spec, rng);
  const FrameSequence frames = random_frames(2, 5, rng);
  const IdSequence caption = random_caption(3, 6, rng);
  const CaptionLoss r = caption_loss_and_grads(m, frames, caption);
  CHECK(r.loss == r.cross_entropy);
  CHECK(r.regression == 0.0);
  CHECK(r.grads.reg_w == Matrix(3, 4));
  CHECK(r.loss == -score_caption(m, frames, caption));

  CaptionerModel plain = m;
  plain.weights.reg_w = Matrix();
  plain.weights.reg_b = Matrix();
  const CaptionLoss p = caption_loss_and_grads(plain, frames, caption);
  CHECK(p.loss == r.loss);
  CHECK(p.grads.layer2 == r.grads.layer2);
  CHECK(p.grads.frame_w == r.grads.frame_w);
}

TEST_CASE("caption loss: exact embedding regression contributes nothing") {
  Rng rng(3);
  ModelSpec spec;
  spec.regress = 3;
  CaptionerModel m = random_captioner(spec, rng);
  const Vector target{0.3, -0.2, 0.9};
  Matrix targets(6, 3);
  for (std::size_t r = 0; r < 6; ++r) std::copy(target.begin(), target.end(), targets.row(r).begin());
  m.weights.reg_w.fill(0.0);
  m.weights.reg_b = Matrix::column(target);
  const FrameSequence frames = random_frames(2, 5, rng);
  const IdSequence caption = random_caption(3, 6, rng);
  const CaptionLoss with = caption_loss_and_grads(m, frames, caption, 0.5, &targets);
  const CaptionLoss without = caption_loss_and_grads(m, frames, caption);
  CHECK(with.regression == 0.0);
  CHECK(with.loss == without.loss);
  CHECK(with.grads.layer1 == without.grads.layer1);
}

TEST_CASE("caption loss: full-model finite differences") {
  // D_feat=5, d_in=4, h=4, d_e=3, |V|=6, T=2, N=3 (two words plus <eos>).
  Rng rng(4);
  ModelSpec spec;
  spec.regress = 3;
  CaptionerModel m = random_captioner(spec, rng);
  const Matrix targets = random_matrix(6, 3, rng);
  const FrameSequence frames = random_frames(2, 5, rng);
  const IdSequence caption = random_caption(2, 6, rng);
  REQUIRE(caption.size() == 3);
  const CaptionLoss r = caption_loss_and_grads(m, frames, caption, 0.5, &targets);
  CHECK(r.regression > 0.0);
  CHECK(r.encode_steps == 2);
  CHECK(r.decode_steps == 3);
  CHECK(max_fd_error(m, frames, caption, 0.5, &targets, r.grads) < 1e-4);
}

TEST_CASE("caption loss: finite differences under deep fusion and frozen embeddings") {
  Rng rng(5);
  for (auto mode : {EmbeddingMode::pretrained_frozen, EmbeddingMode::pretrained_finetune}) {
    ModelSpec spec;
    spec.fusion = FusionMode::deep;
    spec.embedding = mode;
    CaptionerModel m = random_captioner(spec, rng);
    const LmModel lm_before = *m.lm;
    const FrameSequence frames = random_frames(3, 5, rng);
    const IdSequence caption = random_caption(3, 6, rng);
    const CaptionLoss r = caption_loss_and_grads(m, frames, caption);
    CHECK(r.grads.out_w.cols() == 4 + 3);
    CHECK(max_fd_error(m, frames, caption, 0.0, nullptr, r.grads) < 1e-4);
    if (mode == EmbeddingMode::pretrained_frozen) CHECK(r.grads.embedding == Matrix(6, 3));
    CHECK(r.loss == -score_caption(m, frames, caption));
    CHECK(*m.lm == lm_before);
  }
}

TEST_CASE("score_caption: bounds and clip-id invariance") {
  Rng rng(7);
  for (auto fusion : {FusionMode::none, FusionMode::late, FusionMode::deep}) {
    ModelSpec spec;
    spec.fusion = fusion;
    spec.alpha = 0.6;
    const CaptionerModel m = random_captioner(spec, rng);
    FrameSequence frames = random_frames(3, 5, rng, "a");
    const IdSequence caption = random_caption(4, 6, rng);
    const double s = score_caption(m, frames, caption);
    CHECK(s <= 0.0);
    frames.clip_id = "renamed";
    CHECK(score_caption(m, frames, caption) == s);
    if (fusion != FusionMode::late) CHECK(s == -caption_loss_and_grads(m, frames, caption).loss);
  }
}

TEST_CASE("caption loss: input validation") {
  Rng rng(8);
  ModelSpec spec;
  spec.regress = 2;
  const CaptionerModel m = random_captioner(spec, rng);
  const FrameSequence frames = random_frames(2, 5, rng);
  CHECK_THROWS_AS(caption_loss_and_grads(m, frames, IdSequence{4, 5}), ShapeError);
  CHECK_THROWS_AS(caption_loss_and_grads(m, frames, IdSequence{9, kEos}), IndexError);
  CHECK_THROWS_AS(caption_loss_and_grads(m, frames, IdSequence{kEos}, 0.5), ConfigError);
  const Matrix wrong(6, 3);
  CHECK_THROWS_AS(caption_loss_and_grads(m, frames, IdSequence{kEos}, 0.5, &wrong), ConfigError);
  CHECK_THROWS_AS(caption_loss_and_grads(m, frames, IdSequence{kEos}, -1.0), ConfigError);
}

TEST_CASE("make_captioner: configuration errors") {
  Rng rng(9);
  const Vocabulary v = word_vocab(2);
  auto emb = [&] { return make_learned_embedding(v, 3, rng); };
  CHECK_THROWS_AS(make_captioner(v, {5, 4, 4, 0}, emb(), {FusionMode::deep, 1.0}, nullptr, rng), ConfigError);
  CHECK_THROWS_AS(make_captioner(v, {5, 4, 4, 0}, emb(), {FusionMode::early, 1.0}, nullptr, rng), ConfigError);
  CHECK_THROWS_AS(make_captioner(v, {0, 4, 4, 0}, emb(), {}, nullptr, rng), ConfigError);
  CHECK_THROWS_AS(make_captioner(v, {5, 4, 4, 0}, make_learned_embedding(word_vocab(3), 3, rng), {}, nullptr, rng),
                  ConfigError);
  const auto other_lm = random_lm(word_vocab(3), 3, 3, rng);
  CHECK_THROWS_AS(make_captioner(v, {5, 4, 4, 0}, emb(), {FusionMode::deep, 1.0}, other_lm, rng), ConfigError);
  const CaptionerModel m = make_captioner(v, {5, 4, 4, 0}, emb(), {}, nullptr, rng);
  for (auto& [name, t] : m.weights.tensors()) {
    if (name == "layer1.b" || name == "layer2.b") continue;
    for (double x : t->values()) CHECK(std::abs(x) <= kInitScale);
  }
}

TEST_CASE("train_captioner: memorises ten pairs") {
  Rng rng(10);
  ModelSpec spec;
  spec.vocab_words = 8;
  spec.feat = 6;
  spec.input = 8;
  spec.hidden = 48;
  spec.embed = 6;
  spec.scale = 0.08;
  CaptionerModel m = random_captioner(spec, rng);
  CaptionDataset data;
  for (int k = 0; k < 10; ++k) {
    data.clips.push_back(random_frames(3, 6, rng, "c" + std::to_string(k)));
    data.pairs.push_back({static_cast<std::size_t>(k), random_caption(4, 12, rng)});
  }
  CaptionerTrainConfig cfg;
  cfg.epochs = 200;
  cfg.lr = 0.2;
  cfg.clip_norm = 10.0;
  CaptionerTrainLog log;
  m = train_captioner(data, m, cfg, rng, &log);
  CHECK(log.epoch_token_loss.size() == 200);
  CHECK(log.epoch_token_loss.back() < 0.1);
  CHECK(log.epoch_token_loss.back() < log.epoch_token_loss.front());
}

TEST_CASE("train_captioner: frozen parts stay fixed, deterministic under a seed") {
  Rng rng(11);
  ModelSpec spec;
  spec.fusion = FusionMode::deep;
  spec.embedding = EmbeddingMode::pretrained_frozen;
  spec.regress = 3;
  const CaptionerModel init = random_captioner(spec, rng);
  const Matrix targets = random_matrix(6, 3, rng);
  CaptionDataset data;
  for (int k = 0; k < 4; ++k) {
    data.clips.push_back(random_frames(2, 5, rng));
    data.pairs.push_back({static_cast<std::size_t>(k), random_caption(2, 6, rng)});
  }
  CaptionerTrainConfig cfg;
  cfg.epochs = 3;
  cfg.lambda_emb = 0.5;
  cfg.target_vectors = &targets;
  auto run = [&] {
    Rng r(5);
    return train_captioner(data, init, cfg, r);
  };
  const CaptionerModel a = run();
  const CaptionerModel b = run();
  CHECK(a.weights == b.weights);
  CHECK(a.weights.embedding == init.weights.embedding);
  CHECK(*a.lm == *init.lm);
  CHECK_FALSE(a.weights.layer2 == init.weights.layer2);
  CHECK_FALSE(a.weights.reg_w == init.weights.reg_w);
}
