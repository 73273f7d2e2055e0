#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vidcap/fusion.hpp"
#include "vidcap/lm.hpp"
#include "vidcap/lstm.hpp"
#include "vidcap/numerics.hpp"
#include "vidcap/vocab.hpp"

namespace vidcap {

/// One clip's frame features, T x D_feat.
struct FrameSequence {
  std::string clip_id;
  Matrix frames;

  std::size_t length() const { return frames.rows(); }
  std::size_t width() const { return frames.cols(); }
  bool operator==(const FrameSequence&) const = default;
};

struct TrainingPair {
  std::size_t clip = 0;  // index into CaptionDataset::clips
  IdSequence caption;    // y1..yN, ends in <eos>
};

struct CaptionDataset {
  std::vector<FrameSequence> clips;
  std::vector<TrainingPair> pairs;
};

struct CaptionerDims {
  std::size_t feat_dim = 0;
  std::size_t input_dim = 0;    // frame projection width fed to layer 1
  std::size_t hidden = 0;       // both layers
  std::size_t regress_dim = 0;  // embedding-prediction head width, 0 = off
};

/// Every tensor of the two-layer network. Also used as the gradient
/// container, with identical shapes.
struct CaptionerWeights {
  Matrix frame_w, frame_b;  // d_in x D_feat, d_in x 1
  LstmParams layer1;        // input d_in, hidden h
  LstmParams layer2;        // input [h1 ; word] = h + d_e, hidden h
  Matrix embedding;         // |V| x d_e
  Matrix out_w, out_b;      // |V| x h_out (h, or h + h_LM under deep fusion)
  Matrix reg_w, reg_b;      // d_w x h, d_w x 1, empty when not predicting embeddings

  std::vector<std::pair<std::string, Matrix*>> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;
  static CaptionerWeights zeros_like(const CaptionerWeights& w);

  bool operator==(const CaptionerWeights&) const = default;
};

struct CaptionerModel {
  Vocabulary vocab;
  CaptionerWeights weights;
  EmbeddingMode embedding_mode = EmbeddingMode::learned;
  FusionConfig fusion;                // mode none, late or deep
  bool early_fusion_init = false;     // provenance only
  std::shared_ptr<const LmModel> lm;  // frozen; required for late and deep

  std::size_t feat_dim() const { return weights.frame_w.cols(); }
  std::size_t input_dim() const { return weights.frame_w.rows(); }
  std::size_t hidden() const { return weights.layer1.hidden_size(); }
  std::size_t embed_dim() const { return weights.embedding.cols(); }
  std::size_t regress_dim() const { return weights.reg_w.rows(); }
  bool predicts_embeddings() const { return !weights.reg_w.empty(); }

  /// Throws ConfigError/ShapeError when shapes or the fusion setup disagree.
  void validate() const;
};

/// Fresh model; tensors drawn from rng in the order frame projection,
/// layer1, layer2, output head, regression head. `fusion.mode == early` is
/// rejected here (use init_early_fusion).
CaptionerModel make_captioner(const Vocabulary& vocab, const CaptionerDims& dims,
                              EmbeddingTable embedding, FusionConfig fusion,
                              std::shared_ptr<const LmModel> lm, Rng& rng);

struct EncoderOutput {
  LstmState layer1;
  LstmState layer2;
  std::vector<Vector> layer1_hidden;  // h1_t for t = 1..T
};

/// Layer 1 reads frame_proj(x_t); layer 2 reads [h1_t ; 0].
EncoderOutput encode(const CaptionerModel& model, const FrameSequence& frames);

/// Recurrent state carried between decode steps.
struct DecodeState {
  LstmState layer1;
  LstmState layer2;
  LstmState lm;  // empty unless an LM is attached
};

DecodeState start_decode(const CaptionerModel& model, const FrameSequence& frames);

struct StepDistributions {
  Vector caption;  // p_VM (already deep-fused in deep mode)
  Vector lm;       // p_LM, filled in late mode only
};

/// Advances `state` by one decode step fed with `prev` (layer 1 sees the zero
/// pad frame).
StepDistributions step_distributions(const CaptionerModel& model, DecodeState& state,
                                     TokenId prev);

/// The model's next-token distribution with its fusion mode applied.
Vector next_distribution(const CaptionerModel& model, DecodeState& state, TokenId prev);

struct CaptionLoss {
  double loss = 0.0;        // cross_entropy + regression
  double cross_entropy = 0.0;
  double regression = 0.0;  // lambda-weighted embedding-prediction term
  std::size_t encode_steps = 0;
  std::size_t decode_steps = 0;
  CaptionerWeights grads;
};

/// Teacher-forced loss over one caption and its exact gradient (full BPTT
/// through both layers and the encoder). When lambda_emb > 0 the regression
/// head predicts target_vectors.row(y_t) from layer 2's hidden state under a
/// squared-Euclidean loss. Frozen embeddings receive a zero gradient; the
/// attached LM never receives one. Late mode trains the caption model alone.
CaptionLoss caption_loss_and_grads(const CaptionerModel& model, const FrameSequence& frames,
                                   std::span<const TokenId> caption, double lambda_emb = 0.0,
                                   const Matrix* target_vectors = nullptr);

/// Sum of ln p(y_t | y_<t, x) along the decode path, fusion applied.
double score_caption(const CaptionerModel& model, const FrameSequence& frames,
                     std::span<const TokenId> caption);

struct CaptionerTrainConfig {
  std::size_t epochs = 20;
  double lr = 0.05;
  double lr_decay = 1.0;
  double clip_norm = 5.0;
  double lambda_emb = 0.0;
  const Matrix* target_vectors = nullptr;
};

struct CaptionerTrainLog {
  std::vector<double> epoch_loss;        // mean loss per caption
  std::vector<double> epoch_token_loss;  // mean cross-entropy per token
};

/// Trainable tensors paired with their gradients; the embedding is left out
/// in pretrained-frozen mode.
std::vector<ParamGrad> trainable_pairs(CaptionerModel& model, const CaptionerWeights& grads);

/// One-caption-per-step SGD over the shuffled pairs.
CaptionerModel train_captioner(const CaptionDataset& data, CaptionerModel model,
                               const CaptionerTrainConfig& config, Rng& rng,
                               CaptionerTrainLog* log = nullptr);

}  // namespace vidcap
