#include <map>

#include "doctest.h"
#include "fixtures.hpp"
#include "vidcap/checkpoint.hpp"
#include "vidcap/data.hpp"
#include "vidcap/errors.hpp"

using namespace vidcap;
using namespace vidcap::test;

namespace {

void check_same(const CaptionerModel& a, const CaptionerModel& b) {
  CHECK(a.vocab == b.vocab);
  CHECK(a.weights == b.weights);
  CHECK(a.embedding_mode == b.embedding_mode);
  CHECK(a.fusion == b.fusion);
  CHECK(a.early_fusion_init == b.early_fusion_init);
  CHECK(static_cast<bool>(a.lm) == static_cast<bool>(b.lm));
  if (a.lm && b.lm) CHECK(*a.lm == *b.lm);
}

std::vector<CaptionerModel> model_zoo(Rng& rng) {
  std::vector<CaptionerModel> zoo;
  zoo.push_back(random_captioner({}, rng));
  ModelSpec deep;
  deep.fusion = FusionMode::deep;
  deep.embedding = EmbeddingMode::pretrained_frozen;
  zoo.push_back(random_captioner(deep, rng));
  ModelSpec late;
  late.fusion = FusionMode::late;
  late.alpha = 0.3;
  late.regress = 5;
  late.embedding = EmbeddingMode::pretrained_finetune;
  zoo.push_back(random_captioner(late, rng));
  const auto lm = random_lm(word_vocab(2), 3, 4, rng);
  zoo.push_back(init_early_fusion(*lm, {5, 4, 4, 0}, rng));
  return zoo;
}

}  // namespace

TEST_CASE("captioner checkpoints: save, load, save gives identical bytes") {
  Rng rng(1);
  const auto dir = temp_dir("ckpt_roundtrip");
  for (const auto& m : model_zoo(rng)) {
    save_checkpoint(m, dir / "a.ckpt");
    const CaptionerModel loaded = load_captioner_checkpoint(dir / "a.ckpt");
    check_same(m, loaded);
    save_checkpoint(loaded, dir / "b.ckpt");
    CHECK(read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt"));
  }
}

TEST_CASE("LM checkpoints round-trip") {
  Rng rng(2);
  const auto lm = random_lm(word_vocab(4), 3, 5, rng);
  const std::string bytes = serialize_checkpoint(*lm);
  const LmModel back = parse_lm_checkpoint(bytes);
  CHECK(back == *lm);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK_THROWS_AS(parse_captioner_checkpoint(bytes), CorruptionError);
  CHECK_THROWS_AS(parse_lm_checkpoint(serialize_checkpoint(random_captioner({}, rng))), CorruptionError);
}

TEST_CASE("manifest lists every tensor with its shape, exactly once") {
  Rng rng(3);
  ModelSpec spec;
  spec.fusion = FusionMode::deep;
  spec.regress = 7;
  const CaptionerModel m = random_captioner(spec, rng);
  // D_feat=5, d_in=4, h=4, d_e=3, |V|=6, regress 7, LM hidden 3.
  const std::map<std::string, std::pair<std::size_t, std::size_t>> expect{
      {"frame.w", {4, 5}},     {"frame.b", {4, 1}},      {"layer1.w_x", {16, 4}},  {"layer1.w_h", {16, 4}},
      {"layer1.b", {16, 1}},   {"layer2.w_x", {16, 7}},  {"layer2.w_h", {16, 4}},  {"layer2.b", {16, 1}},
      {"embedding", {6, 3}},   {"out.w", {6, 7}},        {"out.b", {6, 1}},        {"regress.w", {7, 4}},
      {"regress.b", {7, 1}},   {"lm.embedding", {6, 3}}, {"lm.lstm.w_x", {12, 3}}, {"lm.lstm.w_h", {12, 3}},
      {"lm.lstm.b", {12, 1}},  {"lm.out.w", {6, 3}},     {"lm.out.b", {6, 1}},
  };
  const auto manifest = read_checkpoint_manifest(serialize_checkpoint(m));
  std::map<std::string, std::pair<std::size_t, std::size_t>> got;
  std::size_t offset = 0, params = 0;
  for (const auto& t : manifest.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    CHECK_FALSE(got.contains(name));
    got[name] = {t.at("shape")[0].get<std::size_t>(), t.at("shape")[1].get<std::size_t>()};
    CHECK(t.at("offset").get<std::size_t>() == offset);
    offset += 8 * got[name].first * got[name].second;
  }
  for (const auto& [name, shape] : expect) params += shape.first * shape.second;
  CHECK(got == expect);
  CHECK(manifest.at("blob_bytes").get<std::size_t>() == 8 * params);
  CHECK(manifest.at("format_version").get<int>() == kCheckpointVersion);
  CHECK(manifest.at("fusion").at("mode") == "deep");
  CHECK(manifest.at("vocab").size() == 6);
}

TEST_CASE("corruption and version errors") {
  Rng rng(4);
  const std::string good = serialize_checkpoint(random_captioner({}, rng));
  for (std::size_t pos : {good.size() - 20, good.size() / 2 + 400, good.size() - 9}) {
    std::string bad = good;
    bad[pos] = static_cast<char>(bad[pos] ^ 0x01);
    CHECK_THROWS_AS(parse_captioner_checkpoint(bad), CorruptionError);
  }
  CHECK_THROWS_AS(parse_captioner_checkpoint(good.substr(0, good.size() - 1)), CorruptionError);
  CHECK_THROWS_AS(parse_captioner_checkpoint("not a checkpoint"), CorruptionError);

  std::string future = good;
  const auto at = future.find("\"format_version\": 1");
  REQUIRE(at != std::string::npos);
  future[at + std::string("\"format_version\": ").size()] = '9';
  CHECK_THROWS_AS(parse_captioner_checkpoint(future), UnsupportedVersionError);
}

TEST_CASE("resuming from a checkpoint reproduces the next step") {
  Rng rng(5);
  ModelSpec spec;
  spec.regress = 3;
  const CaptionerModel init = random_captioner(spec, rng);
  const Matrix targets = random_matrix(6, 3, rng);
  CaptionDataset data;
  for (int k = 0; k < 3; ++k) {
    data.clips.push_back(random_frames(2, 5, rng));
    data.pairs.push_back({static_cast<std::size_t>(k), random_caption(2, 6, rng)});
  }
  CaptionerTrainConfig cfg;
  cfg.epochs = 2;
  cfg.lambda_emb = 0.5;
  cfg.target_vectors = &targets;
  Rng train_rng(9);
  const CaptionerModel trained = train_captioner(data, init, cfg, train_rng);
  const CaptionerModel resumed = parse_captioner_checkpoint(serialize_checkpoint(trained));

  const CaptionLoss a = caption_loss_and_grads(trained, data.clips[0], data.pairs[0].caption, 0.5, &targets);
  const CaptionLoss b = caption_loss_and_grads(resumed, data.clips[0], data.pairs[0].caption, 0.5, &targets);
  CHECK(a.loss == b.loss);
  CHECK(a.grads == b.grads);

  Rng r1(3), r2(3);
  cfg.epochs = 1;
  CHECK(train_captioner(data, trained, cfg, r1).weights == train_captioner(data, resumed, cfg, r2).weights);
}
