#include "vidcap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "vidcap/errors.hpp"

namespace vidcap {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

NgramCounts modified_ngram_precision(std::span<const EvalPair> pairs, std::size_t n) {
  if (n < 1) throw ConfigError("modified_ngram_precision: order must be >= 1");
  NgramCounts out;
  for (const EvalPair& pair : pairs) {
    if (pair.references.empty()) {
      throw ValidationError("BLEU: clip '" + pair.clip_id + "' has no references");
    }
    const auto cand = ngram_counts(pair.candidate, n);
    std::map<Ngram, std::size_t> max_ref;
    for (const auto& ref : pair.references) {
      for (const auto& [gram, c] : ngram_counts(ref, n)) {
        auto& slot = max_ref[gram];
        slot = std::max(slot, c);
      }
    }
    for (const auto& [gram, c] : cand) {
      out.total += c;
      auto it = max_ref.find(gram);
      if (it != max_ref.end()) out.matched += std::min(c, it->second);
    }
  }
  return out;
}

BleuResult bleu4_corpus(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw ConfigError("bleu4_corpus: empty corpus");
  BleuResult r;
  for (const EvalPair& pair : pairs) {
    if (pair.references.empty()) {
      throw ValidationError("BLEU: clip '" + pair.clip_id + "' has no references");
    }
    const std::size_t c = pair.candidate.size();
    std::size_t best = pair.references.front().size();
    for (const auto& ref : pair.references) {
      const std::size_t len = ref.size();
      const auto diff = [c](std::size_t l) { return l > c ? l - c : c - l; };
      if (diff(len) < diff(best) || (diff(len) == diff(best) && len < best)) best = len;
    }
    r.candidate_length += c;
    r.reference_length += best;
  }

  bool any_zero = false;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const NgramCounts counts = modified_ngram_precision(pairs, n);
    r.counts[n - 1] = counts;
    r.precisions[n - 1] =
        counts.total == 0 ? 0.0 : static_cast<double>(counts.matched) / static_cast<double>(counts.total);
    if (counts.matched == 0) {
      any_zero = true;
    } else {
      log_sum += std::log(r.precisions[n - 1]);
    }
  }
  if (r.candidate_length == 0) {
    r.brevity_penalty = 0.0;
  } else if (r.candidate_length < r.reference_length) {
    r.brevity_penalty = std::exp(1.0 - static_cast<double>(r.reference_length) /
                                           static_cast<double>(r.candidate_length));
  }
  r.score = any_zero ? 0.0 : r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

}  // namespace vidcap
