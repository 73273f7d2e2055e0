#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vidcap/lstm.hpp"
#include "vidcap/numerics.hpp"
#include "vidcap/vocab.hpp"

namespace vidcap {

/// Single-layer LSTM language model: embedding -> LSTM -> softmax over V.
struct LmModel {
  Vocabulary vocab;
  EmbeddingTable embedding;
  LstmParams lstm;
  OutputHead head;

  std::size_t hidden_size() const { return lstm.hidden_size(); }
  std::size_t embed_dim() const { return embedding.dim(); }

  bool operator==(const LmModel&) const = default;
};

LmModel make_lm(const Vocabulary& vocab, EmbeddingTable embedding, std::size_t hidden, Rng& rng);

struct LmConfig {
  std::size_t epochs = 10;
  double lr = 0.1;
  double lr_decay = 1.0;  // multiplied into lr after every epoch
  double clip_norm = 5.0;
};

struct LmTrainLog {
  std::vector<double> epoch_perplexity;  // running train perplexity per epoch
};

/// Next-word SGD (one sentence per step) over <bos> w1..wN <eos>. The corpus
/// holds sentences without bounds. Deterministic given rng's seed.
LmModel train_lm(std::span<const IdSequence> corpus, LmModel init, const LmConfig& config,
                 Rng& rng, LmTrainLog* log = nullptr);

struct LmStep {
  Vector dist;
  LstmState state;
};

/// p_LM(. | history) after consuming prev_token from `state`.
LmStep lm_step(const LmModel& model, TokenId prev_token, const LstmState& state);

/// exp(mean per-token NLL); <eos> is scored, <bos> is not.
double perplexity(const LmModel& model, std::span<const IdSequence> corpus);

/// Named tensors in checkpoint order.
std::vector<std::pair<std::string, Matrix*>> lm_tensors(LmModel& model);
std::vector<std::pair<std::string, const Matrix*>> lm_tensors(const LmModel& model);

}  // namespace vidcap
