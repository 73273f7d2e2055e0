#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vidcap/numerics.hpp"

namespace vidcap {

struct CaptionerModel;
struct CaptionerDims;
struct CaptionDataset;
struct LmModel;

enum class FusionMode { none, early, late, deep };

std::string to_string(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view name);

/// `alpha` is meaningful only in late mode, where it weights the caption
/// model: alpha * p_vm + (1 - alpha) * p_lm.
struct FusionConfig {
  FusionMode mode = FusionMode::none;
  double alpha = 1.0;

  void validate() const;
  bool operator==(const FusionConfig&) const = default;
};

/// alpha * p_vm + (1 - alpha) * p_lm, elementwise. The endpoints return the
/// corresponding input unchanged.
Vector late_fuse(std::span<const double> p_vm, std::span<const double> p_lm, double alpha);

/// softmax(W [h_vm ; h_lm] + b).
Vector deep_fuse_distribution(std::span<const double> h_vm, std::span<const double> h_lm,
                              const Matrix& w, std::span<const double> b);

/// Builds a caption model whose embedding and language layer come from a
/// trained LM:
///   embedding         <- LM embedding
///   layer2 W_x[:, h:] <- LM W_x      (the word-embedding slice)
///   layer2 W_h, b     <- LM W_h, b
/// Everything else (layer2's h1 slice, layer1, frame projection, output and
/// regression heads) is freshly initialised from rng.
CaptionerModel init_early_fusion(const LmModel& lm, const CaptionerDims& dims, Rng& rng);

/// Grid value minimising the per-token negative log-likelihood of the
/// reference captions under late_fuse(p_vm, p_lm, alpha). Ties go to the
/// larger alpha. The grid must contain 1.0 so the result is never worse than
/// the unfused model.
double tune_alpha(const CaptionerModel& model, const LmModel& lm, const CaptionDataset& validation,
                  std::span<const double> grid);

/// Per-token fused NLL at a single alpha; the quantity tune_alpha minimises.
double fused_validation_nll(const CaptionerModel& model, const LmModel& lm,
                            const CaptionDataset& validation, double alpha);

std::vector<double> default_alpha_grid();

}  // namespace vidcap
