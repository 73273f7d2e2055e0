#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vidcap/captioner.hpp"
#include "vidcap/data.hpp"

namespace vidcap {

/// A toy world of (subject, verb, object) clips. Frames are concatenated
/// one-hot blocks for the latent triple plus Gaussian noise; captions are
/// realised from fixed templates with random synonym substitution.
struct SyntheticWorldConfig {
  std::size_t n_subjects = 6;
  std::size_t n_verbs = 5;
  std::size_t n_objects = 6;
  std::size_t frames_per_clip = 8;
  double noise_sigma = 0.1;
  std::size_t n_templates = 2;  // captions per clip, one per template
  double synonym_rate = 0.3;
  std::size_t train_clips = 400;
  std::size_t val_clips = 50;
  std::size_t test_clips = 50;
  std::size_t lm_sentences = 5000;
  std::size_t lm_heldout_sentences = 500;
  // Triples reserved for each of val and test. 0 lets all splits draw from
  // every triple (held-out clips of seen triples).
  std::size_t heldout_triples = 18;
  std::size_t embedding_dim = 300;
  std::uint64_t seed = 1;

  std::size_t feature_dim() const { return n_subjects + n_verbs + n_objects; }
  std::size_t triple_count() const { return n_subjects * n_verbs * n_objects; }
  void validate() const;
};

struct Triple {
  std::size_t subject = 0;
  std::size_t verb = 0;
  std::size_t object = 0;
  auto operator<=>(const Triple&) const = default;
};

/// Surface words. `*_synonyms[i]` is the alternative spelling of `*[i]`.
struct Lexicon {
  std::vector<std::string> subjects, verbs, objects;
  std::vector<std::string> subject_synonyms, verb_synonyms, object_synonyms;
  std::vector<std::string> templates;  // tokens S, V, O are slots

  std::vector<std::string> function_words() const;
};

/// Maximum number of distinct templates available.
std::size_t template_capacity();

Lexicon make_lexicon(const SyntheticWorldConfig& cfg);

struct SyntheticSplit {
  std::vector<FrameSequence> clips;
  std::vector<Triple> latent;  // per clip
  std::vector<CaptionLine> captions;
};

struct SyntheticWorld {
  SyntheticWorldConfig config;
  Lexicon lexicon;
  std::vector<Triple> train_triples, val_triples, test_triples;
  SyntheticSplit train, val, test;
  std::vector<Sentence> lm_corpus;
  std::vector<Sentence> lm_heldout;
  std::vector<std::pair<std::string, Vector>> embeddings;  // distributional vectors
};

/// Fully determined by cfg.seed.
SyntheticWorld generate_synthetic_world(const SyntheticWorldConfig& cfg);

/// Writes {train,val,test}.feat, {train,val,test}.tsv, lm_corpus.txt,
/// lm_heldout.txt, embeddings.txt and world.json into dir.
void write_synthetic_world(const SyntheticWorld& world, const std::filesystem::path& dir);

/// Unigram perplexity of the grammar's sentence distribution, computed in
/// closed form from expected token counts (<eos> included, <bos> excluded).
double unigram_perplexity(const SyntheticWorldConfig& cfg);

/// Sentences used to build the shared vocabulary: train captions plus the LM
/// corpus.
std::vector<Sentence> vocabulary_corpus(const std::filesystem::path& data_dir);

}  // namespace vidcap
