#pragma once

#include <memory>
#include <string>
#include <vector>

#include "support.hpp"
#include "vidcap/captioner.hpp"
#include "vidcap/lm.hpp"

namespace vidcap::test {

/// Reserved tokens plus w0..w{n-1}.
inline Vocabulary word_vocab(std::size_t n) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < n; ++i) words.push_back("w" + std::to_string(i));
  return Vocabulary(words);
}

inline FrameSequence random_frames(std::size_t t, std::size_t d, Rng& rng, std::string id = "clip") {
  return {std::move(id), random_matrix(t, d, rng)};
}

/// n content tokens followed by <eos>.
inline IdSequence random_caption(std::size_t n, std::size_t vocab_size, Rng& rng) {
  IdSequence c;
  for (std::size_t i = 0; i < n; ++i) c.push_back(static_cast<TokenId>(kUnk + rng.below(vocab_size - kUnk)));
  c.push_back(kEos);
  return c;
}

inline void scramble(Matrix& m, Rng& rng, double scale) { rng.fill_uniform(m, -scale, scale); }

inline std::shared_ptr<const LmModel> random_lm(const Vocabulary& vocab, std::size_t de, std::size_t h,
                                               Rng& rng, double scale = 0.5) {
  auto lm = std::make_shared<LmModel>(make_lm(vocab, make_learned_embedding(vocab, de, rng), h, rng));
  for (auto& [name, t] : lm_tensors(*lm)) scramble(*t, rng, scale);
  return lm;
}

struct ModelSpec {
  std::size_t vocab_words = 2;
  std::size_t feat = 5, input = 4, hidden = 4, embed = 3, regress = 0;
  FusionMode fusion = FusionMode::none;
  double alpha = 1.0;
  EmbeddingMode embedding = EmbeddingMode::learned;
  std::size_t lm_hidden = 3;
  double scale = 0.5;  // weights are redrawn uniformly in +-scale
};

inline CaptionerModel random_captioner(const ModelSpec& s, Rng& rng) {
  const Vocabulary vocab = word_vocab(s.vocab_words);
  std::shared_ptr<const LmModel> lm;
  if (s.fusion == FusionMode::deep || s.fusion == FusionMode::late) {
    lm = random_lm(vocab, s.embed, s.lm_hidden, rng, s.scale);
  }
  EmbeddingTable emb = make_learned_embedding(vocab, s.embed, rng);
  emb.mode = s.embedding;
  CaptionerModel m = make_captioner(vocab, {s.feat, s.input, s.hidden, s.regress}, std::move(emb),
                                    {s.fusion, s.alpha}, lm, rng);
  for (auto& [name, t] : m.weights.tensors()) scramble(*t, rng, s.scale);
  return m;
}

}  // namespace vidcap::test
