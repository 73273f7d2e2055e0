#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vidcap/captioner.hpp"

namespace vidcap {

/// A generated caption. `tokens` excludes <bos> and ends in <eos> unless the
/// search stopped at max_len, in which case `truncated` is set.
struct Caption {
  IdSequence tokens;
  double log_prob = 0.0;
  bool truncated = false;
};

/// Weighted caption-model ensemble. Each member applies its own fusion mode
/// before the weighted average.
class Ensemble {
 public:
  /// Empty weights mean uniform. Throws ConfigError on an empty member list,
  /// mismatched counts, negative weights, weights not summing to 1, or members
  /// with different vocabularies.
  Ensemble(std::vector<const CaptionerModel*> members, std::vector<double> weights = {});

  std::size_t size() const { return members_.size(); }
  const Vocabulary& vocab() const { return members_.front()->vocab; }
  std::span<const CaptionerModel* const> members() const { return members_; }
  std::span<const double> weights() const { return weights_; }

 private:
  std::vector<const CaptionerModel*> members_;
  std::vector<double> weights_;
};

/// sum_k w_k * p_k, elementwise.
Vector ensemble_next_distribution(std::span<const Vector> distributions,
                                  std::span<const double> weights);

/// Argmax decoding (lowest id wins ties). <pad> and <bos> are never emitted.
Caption greedy_decode(const Ensemble& models, const FrameSequence& frames, std::size_t max_len);

/// Beam search over summed log-probabilities, no length normalisation.
/// Returns up to `beam` hypotheses, best first; finished hypotheses compete
/// with truncated ones on total score. Ties are broken by token sequence.
std::vector<Caption> beam_search(const Ensemble& models, const FrameSequence& frames,
                                 std::size_t beam, std::size_t max_len);

/// Caption text with special tokens removed.
std::string caption_text(const Caption& caption, const Vocabulary& vocab);

}  // namespace vidcap
