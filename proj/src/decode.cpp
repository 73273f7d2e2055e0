#include "vidcap/decode.hpp"

#include <algorithm>
#include <cmath>

#include "vidcap/errors.hpp"

namespace vidcap {

Ensemble::Ensemble(std::vector<const CaptionerModel*> members, std::vector<double> weights)
    : members_(std::move(members)), weights_(std::move(weights)) {
  if (members_.empty()) throw ConfigError("ensemble: no models given");
  for (const auto* m : members_) {
    if (!m) throw ConfigError("ensemble: null model");
    m->validate();
    if (!(m->vocab == members_.front()->vocab)) {
      throw ConfigError("ensemble: members use different vocabularies");
    }
  }
  if (weights_.empty()) weights_.assign(members_.size(), 1.0 / static_cast<double>(members_.size()));
  if (weights_.size() != members_.size()) {
    throw ConfigError("ensemble: " + std::to_string(weights_.size()) + " weights for " +
                      std::to_string(members_.size()) + " models");
  }
  double sum = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw ConfigError("ensemble: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("ensemble: weights sum to " + std::to_string(sum) + ", expected 1");
  }
}

Vector ensemble_next_distribution(std::span<const Vector> distributions,
                                  std::span<const double> weights) {
  if (distributions.empty()) throw ConfigError("ensemble: no distributions");
  if (weights.size() != distributions.size()) {
    throw ConfigError("ensemble: " + std::to_string(weights.size()) + " weights for " +
                      std::to_string(distributions.size()) + " distributions");
  }
  const std::size_t v = distributions.front().size();
  Vector out(v, 0.0);
  for (std::size_t m = 0; m < distributions.size(); ++m) {
    if (distributions[m].size() != v) throw ShapeError("ensemble: distribution lengths differ");
    for (std::size_t k = 0; k < v; ++k) out[k] += weights[m] * distributions[m][k];
  }
  return out;
}

namespace {

using MemberStates = std::vector<DecodeState>;

MemberStates start_states(const Ensemble& models, const FrameSequence& frames) {
  MemberStates s;
  s.reserve(models.size());
  for (const auto* m : models.members()) s.push_back(start_decode(*m, frames));
  return s;
}

Vector advance(const Ensemble& models, MemberStates& states, TokenId prev) {
  std::vector<Vector> dists;
  dists.reserve(models.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    dists.push_back(next_distribution(*models.members()[i], states[i], prev));
  }
  return ensemble_next_distribution(dists, models.weights());
}

bool emittable(TokenId id) { return id != kPad && id != kBos; }

struct Hypothesis {
  IdSequence tokens;
  double score = 0.0;
  MemberStates states;
};

struct Candidate {
  std::size_t parent;
  TokenId token;
  double score;
};

// Higher score first; equal scores fall back to the token sequence.
bool better(const IdSequence& a_prefix, TokenId a_tok, double a_score, const IdSequence& b_prefix,
            TokenId b_tok, double b_score) {
  if (a_score != b_score) return a_score > b_score;
  const std::size_t n = std::min(a_prefix.size(), b_prefix.size());
  for (std::size_t k = 0; k < n; ++k) {
    if (a_prefix[k] != b_prefix[k]) return a_prefix[k] < b_prefix[k];
  }
  if (a_prefix.size() != b_prefix.size()) {
    // Only compare equal-length prefixes in practice; shorter sorts first.
    return a_prefix.size() < b_prefix.size();
  }
  return a_tok < b_tok;
}

bool caption_before(const Caption& a, const Caption& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return a.tokens < b.tokens;
}

}  // namespace

Caption greedy_decode(const Ensemble& models, const FrameSequence& frames, std::size_t max_len) {
  if (max_len < 1) throw ConfigError("greedy_decode: max_len must be >= 1");
  MemberStates states = start_states(models, frames);
  Caption out;
  TokenId prev = kBos;
  for (std::size_t step = 0; step < max_len; ++step) {
    const Vector dist = advance(models, states, prev);
    TokenId best = kEos;
    for (TokenId k = 0; k < dist.size(); ++k) {
      if (emittable(k) && dist[k] > dist[best]) best = k;
    }
    // Lowest id wins ties: a strictly greater later id is required above, and
    // ids below <eos> are not emittable.
    out.log_prob += floored_log(dist[best]);
    out.tokens.push_back(best);
    if (best == kEos) return out;
    prev = best;
  }
  out.truncated = true;
  return out;
}

std::vector<Caption> beam_search(const Ensemble& models, const FrameSequence& frames,
                                 std::size_t beam, std::size_t max_len) {
  if (beam < 1) throw ConfigError("beam_search: beam must be >= 1");
  if (max_len < 1) throw ConfigError("beam_search: max_len must be >= 1");

  std::vector<Hypothesis> live;
  live.push_back({{}, 0.0, start_states(models, frames)});
  std::vector<Caption> finished;

  for (std::size_t step = 1; step <= max_len && !live.empty(); ++step) {
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < live.size(); ++i) {
      Hypothesis& hyp = live[i];
      const TokenId prev = hyp.tokens.empty() ? kBos : hyp.tokens.back();
      const Vector dist = advance(models, hyp.states, prev);
      for (TokenId k = 0; k < dist.size(); ++k) {
        if (emittable(k)) candidates.push_back({i, k, hyp.score + floored_log(dist[k])});
      }
    }
    std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
      return better(live[a.parent].tokens, a.token, a.score, live[b.parent].tokens, b.token,
                    b.score);
    });
    if (candidates.size() > beam) candidates.resize(beam);

    std::vector<Hypothesis> next;
    for (const Candidate& c : candidates) {
      IdSequence tokens = live[c.parent].tokens;
      tokens.push_back(c.token);
      if (c.token == kEos) {
        finished.push_back({std::move(tokens), c.score, false});
      } else if (step == max_len) {
        finished.push_back({std::move(tokens), c.score, true});
      } else {
        next.push_back({std::move(tokens), c.score, live[c.parent].states});
      }
    }
    live = std::move(next);

    // Scores only decrease along a hypothesis, so once `beam` finished
    // captions all beat the best live one the result cannot change.
    if (finished.size() >= beam && !live.empty()) {
      std::sort(finished.begin(), finished.end(), caption_before);
      double best_live = live.front().score;
      for (const auto& h : live) best_live = std::max(best_live, h.score);
      if (finished[beam - 1].log_prob >= best_live) break;
    }
  }
  std::sort(finished.begin(), finished.end(), caption_before);
  if (finished.size() > beam) finished.resize(beam);
  return finished;
}

std::string caption_text(const Caption& caption, const Vocabulary& vocab) {
  std::vector<std::string> words;
  for (TokenId id : caption.tokens) {
    if (id == kPad || id == kBos || id == kEos) continue;
    words.push_back(vocab.token(id));
  }
  return join_tokens(words);
}

}  // namespace vidcap
