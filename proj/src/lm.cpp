#include "vidcap/lm.hpp"

#include <cmath>
#include <numeric>

#include "vidcap/errors.hpp"

namespace vidcap {

LmModel make_lm(const Vocabulary& vocab, EmbeddingTable embedding, std::size_t hidden, Rng& rng) {
  if (embedding.vectors.rows() != vocab.size()) {
    throw ConfigError("make_lm: embedding has " + std::to_string(embedding.vectors.rows()) +
                      " rows for a vocabulary of " + std::to_string(vocab.size()));
  }
  if (hidden == 0) throw ConfigError("make_lm: hidden size must be positive");
  LmModel m;
  m.vocab = vocab;
  m.embedding = std::move(embedding);
  m.lstm = LstmParams::init(m.embedding.dim(), hidden, rng);
  m.head = {Matrix(vocab.size(), hidden), Matrix(vocab.size(), 1)};
  rng.fill_uniform(m.head.w, -kInitScale, kInitScale);
  rng.fill_uniform(m.head.b, -kInitScale, kInitScale);
  return m;
}

namespace {

std::vector<Vector> embed_inputs(const LmModel& model, const IdSequence& sentence) {
  std::vector<Vector> inputs;
  inputs.reserve(sentence.size() + 1);
  const auto bos = embed(model.embedding, kBos);
  inputs.emplace_back(bos.begin(), bos.end());
  for (TokenId id : sentence) {
    const auto row = embed(model.embedding, id);
    inputs.emplace_back(row.begin(), row.end());
  }
  return inputs;
}

std::vector<std::size_t> next_word_targets(const IdSequence& sentence) {
  std::vector<std::size_t> targets(sentence.begin(), sentence.end());
  targets.push_back(kEos);
  return targets;
}

}  // namespace

LmModel train_lm(std::span<const IdSequence> corpus, LmModel model, const LmConfig& config,
                 Rng& rng, LmTrainLog* log) {
  if (corpus.empty()) throw ConfigError("train_lm: empty corpus");
  if (config.lr <= 0.0) throw ConfigError("train_lm: lr must be positive");

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  const bool train_embedding = is_trainable(model.embedding.mode);
  Matrix embed_grad(model.embedding.vectors.rows(), model.embedding.vectors.cols());
  double lr = config.lr;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double nll = 0.0;
    std::size_t tokens = 0;
    for (std::size_t idx : order) {
      const IdSequence& sentence = corpus[idx];
      const auto inputs = embed_inputs(model, sentence);
      const auto targets = next_word_targets(sentence);
      SequenceResult r = sequence_bptt(inputs, targets, model.lstm, model.head);
      nll += r.loss;
      tokens += targets.size();

      std::vector<ParamGrad> pairs = {
          {&model.lstm.w_x, &r.lstm_grads.w_x}, {&model.lstm.w_h, &r.lstm_grads.w_h},
          {&model.lstm.b, &r.lstm_grads.b},     {&model.head.w, &r.head_grads.w},
          {&model.head.b, &r.head_grads.b},
      };
      if (train_embedding) {
        embed_grad.fill(0.0);
        add_in_place(embed_grad.row(kBos), r.input_grads[0]);
        for (std::size_t t = 0; t < sentence.size(); ++t) {
          add_in_place(embed_grad.row(sentence[t]), r.input_grads[t + 1]);
        }
        pairs.push_back({&model.embedding.vectors, &embed_grad});
      }
      sgd_step(pairs, lr, config.clip_norm);
    }
    if (log) log->epoch_perplexity.push_back(std::exp(nll / static_cast<double>(tokens)));
    lr *= config.lr_decay;
  }
  return model;
}

LmStep lm_step(const LmModel& model, TokenId prev_token, const LstmState& state) {
  if (prev_token >= model.vocab.size()) {
    throw IndexError("lm_step: token " + std::to_string(prev_token) + " out of range for " +
                     std::to_string(model.vocab.size()));
  }
  LmStep out;
  out.state = cell_forward(embed(model.embedding, prev_token), state, model.lstm);
  out.dist = softmax(affine(model.head.w, out.state.h, model.head.b.values()));
  return out;
}

double perplexity(const LmModel& model, std::span<const IdSequence> corpus) {
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const IdSequence& sentence : corpus) {
    LstmState state = LstmState::zeros(model.hidden_size());
    TokenId prev = kBos;
    const auto targets = next_word_targets(sentence);
    for (std::size_t target : targets) {
      LmStep step = lm_step(model, prev, state);
      nll += cross_entropy(step.dist, target);
      state = std::move(step.state);
      prev = static_cast<TokenId>(target);
      ++tokens;
    }
  }
  if (tokens == 0) throw ConfigError("perplexity: empty corpus");
  return std::exp(nll / static_cast<double>(tokens));
}

std::vector<std::pair<std::string, Matrix*>> lm_tensors(LmModel& m) {
  return {{"embedding", &m.embedding.vectors}, {"lstm.w_x", &m.lstm.w_x},
          {"lstm.w_h", &m.lstm.w_h},           {"lstm.b", &m.lstm.b},
          {"out.w", &m.head.w},                {"out.b", &m.head.b}};
}

std::vector<std::pair<std::string, const Matrix*>> lm_tensors(const LmModel& m) {
  return {{"embedding", &m.embedding.vectors}, {"lstm.w_x", &m.lstm.w_x},
          {"lstm.w_h", &m.lstm.w_h},           {"lstm.b", &m.lstm.b},
          {"out.w", &m.head.w},                {"out.b", &m.head.b}};
}

}  // namespace vidcap
