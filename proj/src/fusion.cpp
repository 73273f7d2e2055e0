#include "vidcap/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "vidcap/captioner.hpp"
#include "vidcap/errors.hpp"
#include "vidcap/lm.hpp"

namespace vidcap {

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::none:
      return "none";
    case FusionMode::early:
      return "early";
    case FusionMode::late:
      return "late";
    case FusionMode::deep:
      return "deep";
  }
  return "none";
}

FusionMode parse_fusion_mode(std::string_view name) {
  if (name == "none") return FusionMode::none;
  if (name == "early") return FusionMode::early;
  if (name == "late") return FusionMode::late;
  if (name == "deep") return FusionMode::deep;
  throw ConfigError("unknown fusion mode '" + std::string(name) + "'");
}

void FusionConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("fusion alpha " + std::to_string(alpha) + " outside [0, 1]");
  }
}

Vector late_fuse(std::span<const double> p_vm, std::span<const double> p_lm, double alpha) {
  if (p_vm.size() != p_lm.size()) {
    throw ShapeError("late_fuse: distributions of length " + std::to_string(p_vm.size()) +
                     " and " + std::to_string(p_lm.size()));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("late_fuse: alpha " + std::to_string(alpha) + " outside [0, 1]");
  }
  if (alpha == 1.0) return {p_vm.begin(), p_vm.end()};
  if (alpha == 0.0) return {p_lm.begin(), p_lm.end()};
  Vector out(p_vm.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = alpha * p_vm[k] + (1.0 - alpha) * p_lm[k];
  return out;
}

Vector deep_fuse_distribution(std::span<const double> h_vm, std::span<const double> h_lm,
                              const Matrix& w, std::span<const double> b) {
  if (w.cols() != h_vm.size() + h_lm.size() || w.rows() != b.size()) {
    throw ShapeError("deep_fuse_distribution: W is " + shape_string(w) + " for states of width " +
                     std::to_string(h_vm.size()) + " + " + std::to_string(h_lm.size()) +
                     " and bias " + std::to_string(b.size()));
  }
  return softmax(affine(w, concat(h_vm, h_lm), b));
}

CaptionerModel init_early_fusion(const LmModel& lm, const CaptionerDims& dims, Rng& rng) {
  if (lm.hidden_size() != dims.hidden) {
    throw ConfigError("init_early_fusion: LM hidden " + std::to_string(lm.hidden_size()) +
                      " != captioner hidden " + std::to_string(dims.hidden));
  }
  // A fresh model draws every tensor from rng; the transplanted ones are then
  // overwritten. The embedding is copied up front so its rows are never drawn.
  CaptionerModel m = make_captioner(lm.vocab, dims, lm.embedding, FusionConfig{}, nullptr, rng);
  const std::size_t h = dims.hidden;
  const std::size_t de = lm.embed_dim();
  LstmParams& l2 = m.weights.layer2;
  if (l2.input_size() != h + de || lm.lstm.input_size() != de) {
    throw ConfigError("init_early_fusion: LM embedding width " + std::to_string(de) +
                      " does not fit captioner layer2 input " + std::to_string(l2.input_size()));
  }
  for (std::size_t r = 0; r < l2.w_x.rows(); ++r) {
    const auto src = lm.lstm.w_x.row(r);
    std::copy(src.begin(), src.end(), l2.w_x.row(r).begin() + static_cast<std::ptrdiff_t>(h));
  }
  l2.w_h = lm.lstm.w_h;
  l2.b = lm.lstm.b;
  m.early_fusion_init = true;
  return m;
}

namespace {

struct ValidationStep {
  double p_vm;
  double p_lm;
};

// Reference-token probabilities under both models, one entry per decode step.
std::vector<ValidationStep> reference_probabilities(const CaptionerModel& model, const LmModel& lm,
                                                    const CaptionDataset& validation) {
  if (validation.pairs.empty()) throw ConfigError("tune_alpha: empty validation set");
  if (!(lm.vocab == model.vocab)) {
    throw ConfigError("tune_alpha: LM and caption model vocabularies differ");
  }
  // Score the caption model on its own: late fusion is what is being tuned.
  CaptionerModel vm = model;
  if (vm.fusion.mode == FusionMode::late) vm.fusion = FusionConfig{};

  std::vector<ValidationStep> out;
  for (const TrainingPair& pair : validation.pairs) {
    DecodeState s = start_decode(vm, validation.clips.at(pair.clip));
    LstmState lm_state = LstmState::zeros(lm.hidden_size());
    TokenId prev = kBos;
    for (TokenId y : pair.caption) {
      const StepDistributions d = step_distributions(vm, s, prev);
      LmStep l = lm_step(lm, prev, lm_state);
      lm_state = std::move(l.state);
      out.push_back({d.caption.at(y), l.dist.at(y)});
      prev = y;
    }
  }
  return out;
}

double mean_fused_nll(std::span<const ValidationStep> steps, double alpha) {
  double nll = 0.0;
  for (const auto& s : steps) {
    const double p = alpha == 1.0 ? s.p_vm : alpha == 0.0 ? s.p_lm : alpha * s.p_vm + (1.0 - alpha) * s.p_lm;
    nll -= floored_log(p);
  }
  return nll / static_cast<double>(steps.size());
}

}  // namespace

double fused_validation_nll(const CaptionerModel& model, const LmModel& lm,
                            const CaptionDataset& validation, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha outside [0, 1]");
  return mean_fused_nll(reference_probabilities(model, lm, validation), alpha);
}

double tune_alpha(const CaptionerModel& model, const LmModel& lm, const CaptionDataset& validation,
                  std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("tune_alpha: empty grid");
  for (double a : grid) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("tune_alpha: grid value outside [0, 1]");
  }
  if (std::find(grid.begin(), grid.end(), 1.0) == grid.end()) {
    throw ConfigError("tune_alpha: grid must include 1.0");
  }
  const auto steps = reference_probabilities(model, lm, validation);
  double best_alpha = -1.0;
  double best_nll = 0.0;
  for (double a : grid) {
    const double nll = mean_fused_nll(steps, a);
    if (best_alpha < 0.0 || nll < best_nll || (nll == best_nll && a > best_alpha)) {
      best_alpha = a;
      best_nll = nll;
    }
  }
  return best_alpha;
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 10; ++k) grid.push_back(k / 10.0);
  return grid;
}

}  // namespace vidcap
