#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "vidcap/errors.hpp"
#include "vidcap/fusion.hpp"

using namespace vidcap;
using namespace vidcap::test;

namespace {

Vector random_distribution(std::size_t n, Rng& rng) { return softmax(random_vector(n, rng, 3.0)); }

CaptionDataset random_dataset(std::size_t clips, std::size_t feat, std::size_t vocab_size, Rng& rng) {
  CaptionDataset d;
  for (std::size_t k = 0; k < clips; ++k) {
    d.clips.push_back(random_frames(2 + rng.below(3), feat, rng));
    d.pairs.push_back({k, random_caption(1 + rng.below(4), vocab_size, rng)});
    d.pairs.push_back({k, random_caption(1 + rng.below(4), vocab_size, rng)});
  }
  return d;
}

/// Per-token NLL of the references with late fusion applied at `alpha`,
/// measured through score_caption on a late-fused copy of the model.
double scored_nll(const CaptionerModel& model, std::shared_ptr<const LmModel> lm, const CaptionDataset& d,
                  double alpha) {
  CaptionerModel fused = model;
  fused.lm = std::move(lm);
  fused.fusion = {FusionMode::late, alpha};
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& p : d.pairs) {
    total -= score_caption(fused, d.clips[p.clip], p.caption);
    tokens += p.caption.size();
  }
  return total / static_cast<double>(tokens);
}

}  // namespace

TEST_CASE("late_fuse: endpoints are bitwise, interior is a convex combination") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector vm = random_distribution(7, rng), lm = random_distribution(7, rng);
    CHECK(late_fuse(vm, lm, 1.0) == vm);
    CHECK(late_fuse(vm, lm, 0.0) == lm);
    const double a = rng.uniform();
    const Vector f = late_fuse(vm, lm, a);
    double s = 0;
    for (std::size_t k = 0; k < 7; ++k) {
      CHECK(f[k] >= std::min(vm[k], lm[k]) - 1e-15);
      CHECK(f[k] <= std::max(vm[k], lm[k]) + 1e-15);
      s += f[k];
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  const Vector half = late_fuse(Vector{0.8, 0.2}, Vector{0.2, 0.8}, 0.5);
  CHECK(half[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(half[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(late_fuse(Vector{1.0}, Vector{0.5, 0.5}, 0.5), ShapeError);
  CHECK_THROWS_AS(late_fuse(Vector{1.0}, Vector{1.0}, 1.5), ConfigError);
}

TEST_CASE("deep_fuse_distribution: constant logits and concatenation order") {
  Rng rng(2);
  const Vector hv = random_vector(3, rng), hl = random_vector(2, rng);
  const Vector u = deep_fuse_distribution(hv, hl, Matrix(4, 5), Vector(4, 0.0));
  for (double p : u) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
  const Vector b = random_vector(4, rng);
  CHECK(deep_fuse_distribution(hv, hl, Matrix(4, 5), b) == softmax(b));

  const Matrix w = random_matrix(4, 5, rng);
  Vector joined(5);
  for (std::size_t i = 0; i < 3; ++i) joined[i] = hv[i];
  for (std::size_t i = 0; i < 2; ++i) joined[3 + i] = hl[i];
  Vector logits(4);
  for (std::size_t r = 0; r < 4; ++r) {
    logits[r] = b[r];
    for (std::size_t c = 0; c < 5; ++c) logits[r] += w(r, c) * joined[c];
  }
  CHECK(max_rel_err(deep_fuse_distribution(hv, hl, w, b), softmax(logits)) < 1e-12);
  CHECK_THROWS_AS(deep_fuse_distribution(hv, hv, w, b), ShapeError);
}

TEST_CASE("deep fusion with zeroed LM columns matches the unfused model") {
  Rng rng(3);
  ModelSpec spec;
  spec.fusion = FusionMode::deep;
  CaptionerModel deep = random_captioner(spec, rng);
  const std::size_t h = deep.hidden();
  for (std::size_t r = 0; r < deep.weights.out_w.rows(); ++r) {
    for (std::size_t c = h; c < deep.weights.out_w.cols(); ++c) deep.weights.out_w(r, c) = 0.0;
  }
  CaptionerModel plain = deep;
  plain.fusion = {};
  plain.lm = nullptr;
  plain.weights.out_w = Matrix(deep.weights.out_w.rows(), h);
  for (std::size_t r = 0; r < plain.weights.out_w.rows(); ++r) {
    for (std::size_t c = 0; c < h; ++c) plain.weights.out_w(r, c) = deep.weights.out_w(r, c);
  }
  plain.validate();
  const FrameSequence frames = random_frames(3, 5, rng);
  DecodeState sd = start_decode(deep, frames), sp = start_decode(plain, frames);
  TokenId prev = kBos;
  for (int step = 0; step < 5; ++step) {
    const Vector a = next_distribution(deep, sd, prev);
    const Vector b = next_distribution(plain, sp, prev);
    CHECK(max_rel_err(a, b) < 1e-12);
    prev = static_cast<TokenId>(4 + rng.below(2));
  }
}

TEST_CASE("init_early_fusion: transplant contract") {
  Rng rng(4);
  const Vocabulary v = word_vocab(3);
  const auto lm = random_lm(v, 3, 4, rng);
  const CaptionerDims dims{5, 6, 4, 0};
  Rng r1(100), r2(200);
  const CaptionerModel a = init_early_fusion(*lm, dims, r1);
  const CaptionerModel b = init_early_fusion(*lm, dims, r2);
  CHECK(a.early_fusion_init);
  CHECK(a.fusion.mode == FusionMode::none);
  CHECK(a.weights.embedding == lm->embedding.vectors);
  CHECK(a.embedding_mode == lm->embedding.mode);
  CHECK(a.weights.layer2.w_h == lm->lstm.w_h);
  CHECK(a.weights.layer2.b == lm->lstm.b);
  bool slices_differ = false;
  for (std::size_t r = 0; r < 16; ++r) {
    for (std::size_t c = 0; c < 3; ++c) CHECK(a.weights.layer2.w_x(r, 4 + c) == lm->lstm.w_x(r, c));
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(std::abs(a.weights.layer2.w_x(r, c)) <= kInitScale);
      slices_differ |= a.weights.layer2.w_x(r, c) != b.weights.layer2.w_x(r, c);
    }
  }
  CHECK(slices_differ);
  Rng r3(1);
  CHECK_THROWS_AS(init_early_fusion(*lm, {5, 4, 6, 0}, r3), ConfigError);
}

TEST_CASE("tune_alpha: singleton grid and grid validation") {
  Rng rng(5);
  const CaptionerModel m = random_captioner({}, rng);
  const auto lm = random_lm(m.vocab, 3, 3, rng);
  const CaptionDataset val = random_dataset(3, 5, 6, rng);
  const std::vector<double> one{1.0};
  CHECK(tune_alpha(m, *lm, val, one) == 1.0);
  const std::vector<double> no_one{0.0, 0.5};
  CHECK_THROWS_AS(tune_alpha(m, *lm, val, no_one), ConfigError);
  CHECK_THROWS_AS(tune_alpha(m, *lm, val, std::vector<double>{}), ConfigError);
  CHECK_THROWS_AS(tune_alpha(m, *lm, CaptionDataset{}, one), ConfigError);
}

TEST_CASE("tune_alpha: uniform LM against a memorised caption model picks 1") {
  Rng rng(6);
  ModelSpec spec;
  spec.vocab_words = 6;
  spec.hidden = 48;
  spec.input = 8;
  spec.embed = 6;
  spec.feat = 6;
  spec.scale = 0.08;
  CaptionerModel m = random_captioner(spec, rng);
  CaptionDataset val;
  for (int k = 0; k < 4; ++k) {
    val.clips.push_back(random_frames(3, 6, rng));
    val.pairs.push_back({static_cast<std::size_t>(k), random_caption(3, 10, rng)});
  }
  CaptionerTrainConfig cfg;
  cfg.epochs = 200;
  cfg.lr = 0.2;
  cfg.clip_norm = 10.0;
  m = train_captioner(val, m, cfg, rng);

  auto uniform = std::make_shared<LmModel>(*random_lm(m.vocab, 3, 3, rng));
  for (auto& [name, t] : lm_tensors(*uniform)) t->fill(0.0);
  CHECK(tune_alpha(m, *uniform, val, default_alpha_grid()) == 1.0);
}

TEST_CASE("tune_alpha: matches an exhaustive scoring loop over the grid") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    ModelSpec spec;
    spec.scale = 1.0;
    const CaptionerModel m = random_captioner(spec, rng);
    const auto lm = random_lm(m.vocab, 3, 3, rng, 1.0);
    const CaptionDataset val = random_dataset(4, 5, 6, rng);
    const auto grid = default_alpha_grid();

    double best_alpha = -1.0, best = 0.0;
    for (double a : grid) {
      const double nll = scored_nll(m, lm, val, a);
      CHECK(std::abs(nll - fused_validation_nll(m, *lm, val, a)) < 1e-12);
      if (best_alpha < 0 || nll < best - 1e-12 || (std::abs(nll - best) <= 1e-12 && a > best_alpha)) {
        best_alpha = a;
        best = nll;
      }
    }
    const double chosen = tune_alpha(m, *lm, val, grid);
    CHECK(chosen == best_alpha);
    CHECK(fused_validation_nll(m, *lm, val, chosen) <= fused_validation_nll(m, *lm, val, 1.0));
  }
}

TEST_CASE("fusion mode names") {
  for (auto m : {FusionMode::none, FusionMode::early, FusionMode::late, FusionMode::deep}) {
    CHECK(parse_fusion_mode(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_fusion_mode("shallow"), ConfigError);
  CHECK_THROWS_AS((FusionConfig{FusionMode::late, -0.1}.validate()), ConfigError);
}
