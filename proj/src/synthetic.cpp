#include "vidcap/synthetic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include "json.hpp"
#include "vidcap/errors.hpp"

namespace vidcap {

namespace {

struct WordPair {
  const char* word;
  const char* synonym;
};

constexpr WordPair kSubjects[] = {{"man", "guy"},   {"woman", "lady"}, {"boy", "lad"},
                                  {"girl", "lass"}, {"dog", "puppy"},  {"cat", "kitten"},
                                  {"chef", "cook"}, {"child", "kid"}};
constexpr WordPair kVerbs[] = {{"rides", "mounts"}, {"eats", "devours"}, {"cuts", "slices"},
                               {"plays", "strums"}, {"holds", "grips"},  {"throws", "tosses"},
                               {"watches", "views"}, {"washes", "cleans"}};
constexpr WordPair kObjects[] = {{"horse", "pony"},   {"bread", "loaf"},   {"guitar", "banjo"},
                                 {"ball", "sphere"},  {"car", "auto"},     {"bike", "bicycle"},
                                 {"onion", "shallot"}, {"bottle", "flask"}};

const std::vector<std::string>& all_templates() {
  static const std::vector<std::string> kTemplates = {
      "the S V the O .", "a S V a O .",         "the S V a O .",
      "a S V the O .",   "the S now V the O .", "now a S V a O ."};
  return kTemplates;
}

template <std::size_t N>
void fill_words(std::size_t count, const WordPair (&table)[N], const std::string& role,
                std::vector<std::string>& words, std::vector<std::string>& synonyms) {
  for (std::size_t i = 0; i < count; ++i) {
    if (i < N) {
      words.emplace_back(table[i].word);
      synonyms.emplace_back(table[i].synonym);
    } else {
      words.push_back(role + std::to_string(i));
      synonyms.push_back(role + std::to_string(i) + "x");
    }
  }
}

double to_float_precision(double v) { return static_cast<double>(static_cast<float>(v)); }

Sentence realise(const Lexicon& lex, std::size_t tmpl, const Triple& t, double synonym_rate,
                 Rng& rng) {
  Sentence out;
  for (const auto& tok : tokenize(lex.templates[tmpl])) {
    const std::vector<std::string>* words = nullptr;
    const std::vector<std::string>* syns = nullptr;
    std::size_t idx = 0;
    if (tok == "s") {
      words = &lex.subjects, syns = &lex.subject_synonyms, idx = t.subject;
    } else if (tok == "v") {
      words = &lex.verbs, syns = &lex.verb_synonyms, idx = t.verb;
    } else if (tok == "o") {
      words = &lex.objects, syns = &lex.object_synonyms, idx = t.object;
    }
    if (!words) {
      out.push_back(tok);
      continue;
    }
    const bool swap = rng.uniform() < synonym_rate;
    out.push_back(swap ? (*syns)[idx] : (*words)[idx]);
  }
  return out;
}

SyntheticSplit make_split(const SyntheticWorldConfig& cfg, const Lexicon& lex,
                          const std::vector<Triple>& pool, std::size_t count,
                          const std::string& prefix, Rng& rng) {
  SyntheticSplit split;
  const std::size_t d = cfg.feature_dim();
  for (std::size_t c = 0; c < count; ++c) {
    const Triple t = pool[rng.below(pool.size())];
    FrameSequence clip;
    char id[32];
    std::snprintf(id, sizeof(id), "%s%04zu", prefix.c_str(), c);
    clip.clip_id = id;
    clip.frames = Matrix(cfg.frames_per_clip, d);
    for (std::size_t f = 0; f < cfg.frames_per_clip; ++f) {
      auto row = clip.frames.row(f);
      row[t.subject] = 1.0;
      row[cfg.n_subjects + t.verb] = 1.0;
      row[cfg.n_subjects + cfg.n_verbs + t.object] = 1.0;
      for (double& v : row) v = to_float_precision(v + cfg.noise_sigma * rng.normal());
    }
    for (std::size_t k = 0; k < cfg.n_templates; ++k) {
      split.captions.push_back({clip.clip_id, realise(lex, k, t, cfg.synonym_rate, rng)});
    }
    split.clips.push_back(std::move(clip));
    split.latent.push_back(t);
  }
  return split;
}

std::vector<Sentence> make_lm_text(const SyntheticWorldConfig& cfg, const Lexicon& lex,
                                   std::size_t count, Rng& rng) {
  std::vector<Sentence> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t tmpl = rng.below(cfg.n_templates);
    const Triple t{rng.below(cfg.n_subjects), rng.below(cfg.n_verbs), rng.below(cfg.n_objects)};
    out.push_back(realise(lex, tmpl, t, cfg.synonym_rate, rng));
  }
  return out;
}

// Concept vectors shared by a word and its synonym, offset by a per-role
// direction; function words are independent draws.
std::vector<std::pair<std::string, Vector>> make_embeddings(const SyntheticWorldConfig& cfg,
                                                            const Lexicon& lex, Rng& rng) {
  const std::size_t d = cfg.embedding_dim;
  auto gaussian = [&](double scale) {
    Vector v(d);
    for (double& x : v) x = scale * rng.normal();
    return v;
  };
  std::vector<std::pair<std::string, Vector>> out;
  auto add_role = [&](const std::vector<std::string>& words, const std::vector<std::string>& syns) {
    const Vector role = gaussian(0.3);
    for (std::size_t i = 0; i < words.size(); ++i) {
      const Vector concept_vec = gaussian(0.3);
      for (const auto* w : {&words[i], &syns[i]}) {
        Vector v = gaussian(0.05);
        for (std::size_t k = 0; k < d; ++k) v[k] = to_float_precision(v[k] + concept_vec[k] + 0.5 * role[k]);
        out.emplace_back(*w, std::move(v));
      }
    }
  };
  add_role(lex.subjects, lex.subject_synonyms);
  add_role(lex.verbs, lex.verb_synonyms);
  add_role(lex.objects, lex.object_synonyms);
  for (const auto& w : lex.function_words()) {
    Vector v = gaussian(0.3);
    for (double& x : v) x = to_float_precision(x);
    out.emplace_back(w, std::move(v));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

nlohmann::json triples_json(const std::vector<Triple>& ts) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : ts) arr.push_back({t.subject, t.verb, t.object});
  return arr;
}

nlohmann::json split_json(const SyntheticSplit& s) {
  nlohmann::json clips = nlohmann::json::object();
  for (std::size_t i = 0; i < s.clips.size(); ++i) {
    const auto& t = s.latent[i];
    clips[s.clips[i].clip_id] = {t.subject, t.verb, t.object};
  }
  return clips;
}

}  // namespace

void SyntheticWorldConfig::validate() const {
  if (n_subjects < 1 || n_verbs < 1 || n_objects < 1 || frames_per_clip < 1 || n_templates < 1 ||
      embedding_dim < 1) {
    throw ConfigError("synthetic world: all counts must be >= 1");
  }
  if (n_templates > template_capacity()) {
    throw ConfigError("synthetic world: at most " + std::to_string(template_capacity()) +
                      " templates available");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("synthetic world: noise_sigma must be >= 0");
  if (!(synonym_rate >= 0.0 && synonym_rate <= 1.0)) {
    throw ConfigError("synthetic world: synonym_rate must lie in [0, 1]");
  }
  if (train_clips < 1 || lm_sentences < 1) {
    throw ConfigError("synthetic world: train split and LM corpus must be nonempty");
  }
  if (heldout_triples > 0 && 2 * heldout_triples >= triple_count()) {
    throw ConfigError("synthetic world: " + std::to_string(heldout_triples) +
                      " held-out triples per split leaves no training triples out of " +
                      std::to_string(triple_count()));
  }
}

std::size_t template_capacity() { return all_templates().size(); }

std::vector<std::string> Lexicon::function_words() const {
  std::set<std::string> words;
  for (const auto& t : templates) {
    for (const auto& tok : tokenize(t)) {
      if (tok != "s" && tok != "v" && tok != "o") words.insert(tok);
    }
  }
  return {words.begin(), words.end()};
}

Lexicon make_lexicon(const SyntheticWorldConfig& cfg) {
  Lexicon lex;
  fill_words(cfg.n_subjects, kSubjects, "subject", lex.subjects, lex.subject_synonyms);
  fill_words(cfg.n_verbs, kVerbs, "verb", lex.verbs, lex.verb_synonyms);
  fill_words(cfg.n_objects, kObjects, "object", lex.objects, lex.object_synonyms);
  lex.templates.assign(all_templates().begin(),
                       all_templates().begin() + static_cast<std::ptrdiff_t>(cfg.n_templates));
  return lex;
}

SyntheticWorld generate_synthetic_world(const SyntheticWorldConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SyntheticWorld w;
  w.config = cfg;
  w.lexicon = make_lexicon(cfg);

  std::vector<Triple> all;
  for (std::size_t s = 0; s < cfg.n_subjects; ++s) {
    for (std::size_t v = 0; v < cfg.n_verbs; ++v) {
      for (std::size_t o = 0; o < cfg.n_objects; ++o) all.push_back({s, v, o});
    }
  }
  rng.shuffle(std::span<Triple>(all));
  if (cfg.heldout_triples > 0) {
    const auto k = static_cast<std::ptrdiff_t>(cfg.heldout_triples);
    w.test_triples.assign(all.begin(), all.begin() + k);
    w.val_triples.assign(all.begin() + k, all.begin() + 2 * k);
    w.train_triples.assign(all.begin() + 2 * k, all.end());
  } else {
    w.train_triples = w.val_triples = w.test_triples = all;
  }
  for (auto* ts : {&w.train_triples, &w.val_triples, &w.test_triples}) std::sort(ts->begin(), ts->end());

  w.embeddings = make_embeddings(cfg, w.lexicon, rng);
  w.train = make_split(cfg, w.lexicon, w.train_triples, cfg.train_clips, "train", rng);
  w.val = make_split(cfg, w.lexicon, w.val_triples, cfg.val_clips, "val", rng);
  w.test = make_split(cfg, w.lexicon, w.test_triples, cfg.test_clips, "test", rng);
  w.lm_corpus = make_lm_text(cfg, w.lexicon, cfg.lm_sentences, rng);
  w.lm_heldout = make_lm_text(cfg, w.lexicon, cfg.lm_heldout_sentences, rng);
  return w;
}

void write_synthetic_world(const SyntheticWorld& w, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::pair<const char*, const SyntheticSplit*> splits[] = {
      {"train", &w.train}, {"val", &w.val}, {"test", &w.test}};
  for (const auto& [name, split] : splits) {
    write_feature_file(dir / (std::string(name) + ".feat"), split->clips);
    write_caption_file(dir / (std::string(name) + ".tsv"), split->captions);
  }
  write_corpus(dir / "lm_corpus.txt", w.lm_corpus);
  write_corpus(dir / "lm_heldout.txt", w.lm_heldout);

  std::string emb;
  for (const auto& [word, vec] : w.embeddings) {
    emb += word;
    for (double v : vec) {
      emb.push_back(' ');
      emb += format_double(v);
    }
    emb.push_back('\n');
  }
  write_file(dir / "embeddings.txt", emb);

  const auto& c = w.config;
  nlohmann::json m;
  m["config"] = {{"n_subjects", c.n_subjects},
                 {"n_verbs", c.n_verbs},
                 {"n_objects", c.n_objects},
                 {"frames_per_clip", c.frames_per_clip},
                 {"noise_sigma", c.noise_sigma},
                 {"n_templates", c.n_templates},
                 {"synonym_rate", c.synonym_rate},
                 {"train_clips", c.train_clips},
                 {"val_clips", c.val_clips},
                 {"test_clips", c.test_clips},
                 {"lm_sentences", c.lm_sentences},
                 {"lm_heldout_sentences", c.lm_heldout_sentences},
                 {"heldout_triples", c.heldout_triples},
                 {"embedding_dim", c.embedding_dim},
                 {"seed", c.seed}};
  m["lexicon"] = {{"subjects", w.lexicon.subjects},
                  {"verbs", w.lexicon.verbs},
                  {"objects", w.lexicon.objects},
                  {"subject_synonyms", w.lexicon.subject_synonyms},
                  {"verb_synonyms", w.lexicon.verb_synonyms},
                  {"object_synonyms", w.lexicon.object_synonyms},
                  {"templates", w.lexicon.templates}};
  m["triples"] = {{"train", triples_json(w.train_triples)},
                  {"val", triples_json(w.val_triples)},
                  {"test", triples_json(w.test_triples)}};
  m["clips"] = {{"train", split_json(w.train)}, {"val", split_json(w.val)}, {"test", split_json(w.test)}};
  m["unigram_perplexity"] = unigram_perplexity(c);
  write_file(dir / "world.json", m.dump(2) + "\n");
}

double unigram_perplexity(const SyntheticWorldConfig& cfg) {
  cfg.validate();
  const Lexicon lex = make_lexicon(cfg);
  const double n_tmpl = static_cast<double>(cfg.n_templates);
  const double r = cfg.synonym_rate;

  // Expected occurrences per sentence of each token, and expected length.
  std::map<std::string, double> expected;
  double length = 0.0;
  for (const auto& t : lex.templates) {
    const Sentence toks = tokenize(t);
    length += static_cast<double>(toks.size() + 1) / n_tmpl;
    for (const auto& tok : toks) {
      const std::vector<std::string>* words = nullptr;
      const std::vector<std::string>* syns = nullptr;
      if (tok == "s") words = &lex.subjects, syns = &lex.subject_synonyms;
      if (tok == "v") words = &lex.verbs, syns = &lex.verb_synonyms;
      if (tok == "o") words = &lex.objects, syns = &lex.object_synonyms;
      if (!words) {
        expected[tok] += 1.0 / n_tmpl;
        continue;
      }
      const double per = 1.0 / (n_tmpl * static_cast<double>(words->size()));
      for (std::size_t i = 0; i < words->size(); ++i) {
        expected[(*words)[i]] += per * (1.0 - r);
        expected[(*syns)[i]] += per * r;
      }
    }
  }
  expected["<eos>"] += 1.0;

  double entropy = 0.0;
  for (const auto& [tok, count] : expected) {
    const double p = count / length;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

std::vector<Sentence> vocabulary_corpus(const std::filesystem::path& data_dir) {
  std::vector<Sentence> corpus;
  for (auto& line : read_caption_file(data_dir / "train.tsv")) corpus.push_back(std::move(line.tokens));
  for (auto& s : read_corpus(data_dir / "lm_corpus.txt")) corpus.push_back(std::move(s));
  return corpus;
}

}  // namespace vidcap
