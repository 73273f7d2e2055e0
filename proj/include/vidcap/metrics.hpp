#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace vidcap {

/// One candidate caption and its references, as surface tokens.
struct EvalPair {
  std::string clip_id;
  std::vector<std::string> candidate;
  std::vector<std::vector<std::string>> references;  // at least one
};

struct NgramCounts {
  std::size_t matched = 0;  // clipped matches
  std::size_t total = 0;    // candidate n-grams
};

/// Corpus-wide clipped n-gram matches: each candidate n-gram count is capped
/// at its maximum count in any single reference.
NgramCounts modified_ngram_precision(std::span<const EvalPair> pairs, std::size_t n);

struct BleuResult {
  double score = 0.0;
  std::array<double, 4> precisions{};  // matched / total per order
  std::array<NgramCounts, 4> counts{};
  double brevity_penalty = 1.0;
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;  // sum of closest reference lengths
};

/// Corpus BLEU@4: geometric mean of the 1..4-gram modified precisions times
/// exp(1 - r/c) when c < r. No smoothing: a zero match count at any order
/// gives 0.
BleuResult bleu4_corpus(std::span<const EvalPair> pairs);

}  // namespace vidcap
