#include "vidcap/cli.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "vidcap/checkpoint.hpp"
#include "vidcap/data.hpp"
#include "vidcap/decode.hpp"
#include "vidcap/errors.hpp"
#include "vidcap/metrics.hpp"
#include "vidcap/synthetic.hpp"

namespace vidcap {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json default_config() {
  const SyntheticWorldConfig world;
  return {
      // general
      {"seed", 1},
      {"run_dir", "runs/default"},
      {"data_dir", "data"},
      // synthetic world
      {"n_subjects", world.n_subjects},
      {"n_verbs", world.n_verbs},
      {"n_objects", world.n_objects},
      {"frames_per_clip", world.frames_per_clip},
      {"noise_sigma", world.noise_sigma},
      {"n_templates", world.n_templates},
      {"synonym_rate", world.synonym_rate},
      {"train_clips", world.train_clips},
      {"val_clips", world.val_clips},
      {"test_clips", world.test_clips},
      {"lm_sentences", world.lm_sentences},
      {"lm_heldout_sentences", world.lm_heldout_sentences},
      {"heldout_triples", world.heldout_triples},
      {"embedding_dim", world.embedding_dim},
      // models
      {"max_vocab", 100000},
      {"hidden", 64},
      {"input_dim", 0},  // 0: same as hidden
      {"embed_dim", 0},  // 0: 500 learned, file width pretrained
      {"lm_hidden", 64},
      {"embeddings", "learned"},
      {"predict_embeddings", false},
      {"lambda_emb", 1.0},
      {"fusion", "none"},
      {"alpha", 1.0},
      {"alpha_grid", default_alpha_grid()},
      // training
      {"epochs", 20},
      {"lr", 0.05},
      {"lr_decay", 1.0},
      {"clip_norm", 5.0},
      {"lm_epochs", 10},
      {"lm_lr", 0.1},
      // artifacts
      {"lm", ""},
      {"model", ""},
      {"ensemble", ""},
      {"fusion_config", ""},
      {"split", "test"},
      {"candidates", ""},
      {"references", ""},
      // decoding
      {"beam", 5},
      {"max_len", 20},
  };
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    return !(a.is_number_unsigned() || a.is_number_integer()) || b.is_number_integer() ||
           b.is_number_unsigned();
  }
  return a.type() == b.type();
}

void merge_config(json& cfg, const json& patch, const std::string& origin) {
  if (!patch.is_object()) throw UsageError(origin + ": config must be a JSON object");
  for (const auto& [key, value] : patch.items()) {
    if (!cfg.contains(key)) throw UsageError(origin + ": unknown config key '" + key + "'");
    if (!same_kind(cfg[key], value)) {
      throw UsageError(origin + ": config key '" + key + "' has the wrong type");
    }
    cfg[key] = value;
  }
}

std::string flag_name(const std::string& key) {
  std::string f = "--" + key;
  for (char& c : f) {
    if (c == '_') c = '-';
  }
  return f;
}

json parse_flag_value(const json& like, const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    if (like.is_number_unsigned() || like.is_number_integer()) {
      if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
      const auto v = std::stoull(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing");
      return v;
    }
    if (like.is_number_float()) {
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing");
      return v;
    }
    if (like.is_array()) {
      json arr = json::array();
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) {
        const double v = std::stod(item, &used);
        if (used != item.size()) throw std::invalid_argument("trailing");
        arr.push_back(v);
      }
      return arr;
    }
  } catch (const std::exception&) {
    throw CLI::ValidationError(flag_name(key), "invalid value '" + text + "'");
  }
  return text;
}

/// Flags for `keys` on `sub`; parsed values land in `patch`.
void add_config_flags(CLI::App* sub, const json& defaults, std::initializer_list<const char*> keys,
                      json& patch) {
  for (const char* k : keys) {
    const std::string key = k;
    const json& like = defaults.at(key);
    const std::string desc = "config key " + key + " (default " + like.dump() + ")";
    if (like.is_boolean()) {
      sub->add_flag_callback(flag_name(key), [&patch, key] { patch[key] = true; }, desc);
    } else {
      sub->add_option_function<std::string>(
          flag_name(key),
          [&patch, key, like](const std::string& v) { patch[key] = parse_flag_value(like, key, v); },
          desc);
    }
  }
}

class Config {
 public:
  explicit Config(json j) : j_(std::move(j)) {}
  std::size_t u(const char* k) const { return j_.at(k).get<std::size_t>(); }
  double d(const char* k) const { return j_.at(k).get<double>(); }
  std::string s(const char* k) const { return j_.at(k).get<std::string>(); }
  bool b(const char* k) const { return j_.at(k).get<bool>(); }
  std::uint64_t seed() const { return j_.at("seed").get<std::uint64_t>(); }
  fs::path data_dir() const { return s("data_dir"); }
  fs::path run_dir() const { return s("run_dir"); }
  const json& raw() const { return j_; }

 private:
  json j_;
};

void log(const std::string& msg) { std::cerr << msg << std::endl; }

void write_resolved_config(const Config& cfg, const fs::path& dir, const std::string& command) {
  json out = cfg.raw();
  out["command"] = command;
  write_file(dir / "config.json", out.dump(2) + "\n");
}

SyntheticWorldConfig world_config(const Config& c) {
  SyntheticWorldConfig w;
  w.n_subjects = c.u("n_subjects");
  w.n_verbs = c.u("n_verbs");
  w.n_objects = c.u("n_objects");
  w.frames_per_clip = c.u("frames_per_clip");
  w.noise_sigma = c.d("noise_sigma");
  w.n_templates = c.u("n_templates");
  w.synonym_rate = c.d("synonym_rate");
  w.train_clips = c.u("train_clips");
  w.val_clips = c.u("val_clips");
  w.test_clips = c.u("test_clips");
  w.lm_sentences = c.u("lm_sentences");
  w.lm_heldout_sentences = c.u("lm_heldout_sentences");
  w.heldout_triples = c.u("heldout_triples");
  w.embedding_dim = c.u("embedding_dim");
  w.seed = c.seed();
  return w;
}

std::vector<IdSequence> encode_corpus(const std::vector<Sentence>& corpus, const Vocabulary& vocab) {
  std::vector<IdSequence> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(encode(s, vocab, false));
  return out;
}

EmbeddingTable make_embedding(const Config& c, const Vocabulary& vocab, Rng& rng) {
  const EmbeddingMode mode = parse_embedding_mode(c.s("embeddings"));
  if (mode == EmbeddingMode::learned) {
    const std::size_t dim = c.u("embed_dim") ? c.u("embed_dim") : kDefaultLearnedEmbedDim;
    return make_learned_embedding(vocab, dim, rng);
  }
  PretrainedLoad load = load_pretrained_vectors(c.data_dir() / "embeddings.txt", vocab, rng, mode);
  if (c.u("embed_dim") && c.u("embed_dim") != load.table.dim()) {
    throw ConfigError("embed_dim " + std::to_string(c.u("embed_dim")) +
                      " disagrees with the pretrained vector width " +
                      std::to_string(load.table.dim()));
  }
  log("pretrained vectors cover " + std::to_string(load.covered) + " of " +
      std::to_string(vocab.size()) + " vocabulary entries");
  return std::move(load.table);
}

int cmd_gen_data(const Config& c) {
  const SyntheticWorld world = generate_synthetic_world(world_config(c));
  write_synthetic_world(world, c.data_dir());
  write_resolved_config(c, c.data_dir(), "gen-data");
  log("wrote synthetic world to " + c.data_dir().string());
  std::cout << "unigram_perplexity " << unigram_perplexity(world.config) << "\n";
  return 0;
}

int cmd_train_lm(const Config& c) {
  Rng rng(c.seed());
  const Vocabulary vocab = build_vocab(vocabulary_corpus(c.data_dir()), c.u("max_vocab"));
  const auto corpus = encode_corpus(read_corpus(c.data_dir() / "lm_corpus.txt"), vocab);
  LmModel lm = make_lm(vocab, make_embedding(c, vocab, rng), c.u("lm_hidden"), rng);
  LmConfig cfg{c.u("lm_epochs"), c.d("lm_lr"), c.d("lr_decay"), c.d("clip_norm")};
  LmTrainLog train_log;
  lm = train_lm(corpus, std::move(lm), cfg, rng, &train_log);
  for (std::size_t e = 0; e < train_log.epoch_perplexity.size(); ++e) {
    log("lm epoch " + std::to_string(e + 1) + " train perplexity " +
        std::to_string(train_log.epoch_perplexity[e]));
  }
  json report = {{"epoch_perplexity", train_log.epoch_perplexity}};
  const fs::path heldout = c.data_dir() / "lm_heldout.txt";
  if (fs::exists(heldout)) {
    const double ppl = perplexity(lm, encode_corpus(read_corpus(heldout), vocab));
    report["heldout_perplexity"] = ppl;
    std::cout << "heldout_perplexity " << ppl << "\n";
  }
  save_checkpoint(lm, c.run_dir() / "lm.ckpt");
  write_file(c.run_dir() / "train_log.json", report.dump(2) + "\n");
  write_resolved_config(c, c.run_dir(), "train-lm");
  return 0;
}

std::shared_ptr<const LmModel> load_lm_if_given(const Config& c) {
  if (c.s("lm").empty()) return nullptr;
  return std::make_shared<const LmModel>(load_lm_checkpoint(c.s("lm")));
}

int cmd_train_captioner(const Config& c) {
  Rng rng(c.seed());
  const FusionMode mode = parse_fusion_mode(c.s("fusion"));
  auto lm = load_lm_if_given(c);
  if (mode != FusionMode::none && !lm) {
    throw ConfigError("--fusion=" + c.s("fusion") + " requires --lm");
  }
  const Vocabulary vocab =
      lm ? lm->vocab : build_vocab(vocabulary_corpus(c.data_dir()), c.u("max_vocab"));
  CaptionDataset data =
      load_caption_dataset(c.data_dir() / "train.tsv", c.data_dir() / "train.feat", vocab);

  Matrix targets;
  std::size_t regress_dim = 0;
  if (c.b("predict_embeddings")) {
    Rng target_rng(c.seed() ^ 0x5eedULL);
    targets = load_pretrained_vectors(c.data_dir() / "embeddings.txt", vocab, target_rng).table.vectors;
    regress_dim = targets.cols();
  }
  CaptionerDims dims;
  dims.feat_dim = data.clips.at(0).width();
  dims.hidden = c.u("hidden");
  dims.input_dim = c.u("input_dim") ? c.u("input_dim") : dims.hidden;
  dims.regress_dim = regress_dim;

  CaptionerModel model;
  if (mode == FusionMode::early) {
    model = init_early_fusion(*lm, dims, rng);
  } else {
    FusionConfig fusion{mode == FusionMode::deep ? FusionMode::deep : FusionMode::none, 1.0};
    model = make_captioner(vocab, dims, make_embedding(c, vocab, rng), fusion,
                           mode == FusionMode::deep ? lm : nullptr, rng);
  }

  CaptionerTrainConfig cfg;
  cfg.epochs = c.u("epochs");
  cfg.lr = c.d("lr");
  cfg.lr_decay = c.d("lr_decay");
  cfg.clip_norm = c.d("clip_norm");
  cfg.lambda_emb = c.b("predict_embeddings") ? c.d("lambda_emb") : 0.0;
  cfg.target_vectors = c.b("predict_embeddings") ? &targets : nullptr;
  CaptionerTrainLog train_log;
  model = train_captioner(data, std::move(model), cfg, rng, &train_log);
  for (std::size_t e = 0; e < train_log.epoch_loss.size(); ++e) {
    log("captioner epoch " + std::to_string(e + 1) + " loss " + std::to_string(train_log.epoch_loss[e]) +
        " token cross-entropy " + std::to_string(train_log.epoch_token_loss[e]));
  }
  if (mode == FusionMode::late) {
    model.lm = lm;
    model.fusion = {FusionMode::late, c.d("alpha")};
    model.validate();
  }
  save_checkpoint(model, c.run_dir() / "captioner.ckpt");
  write_file(c.run_dir() / "train_log.json",
             json{{"epoch_loss", train_log.epoch_loss}, {"epoch_token_loss", train_log.epoch_token_loss}}.dump(2) +
                 "\n");
  write_resolved_config(c, c.run_dir(), "train-captioner");
  return 0;
}

CaptionDataset split_dataset(const Config& c, const Vocabulary& vocab) {
  const std::string split = c.s("split");
  return load_caption_dataset(c.data_dir() / (split + ".tsv"), c.data_dir() / (split + ".feat"), vocab);
}

int cmd_tune_alpha(const Config& c) {
  if (c.s("model").empty()) throw ConfigError("tune-alpha requires --model");
  const CaptionerModel model = load_captioner_checkpoint(c.s("model"));
  auto lm = load_lm_if_given(c);
  if (!lm) lm = model.lm;
  if (!lm) throw ConfigError("tune-alpha requires --lm (or a model with an attached LM)");
  const auto grid = c.raw().at("alpha_grid").get<std::vector<double>>();
  const CaptionDataset val = split_dataset(c, model.vocab);
  const double alpha = tune_alpha(model, *lm, val, grid);
  json nll = json::object();
  for (double a : grid) nll[std::to_string(a)] = fused_validation_nll(model, *lm, val, a);
  const json out = {{"mode", "late"}, {"alpha", alpha}, {"split", c.s("split")}, {"validation_nll", nll}};
  write_file(c.run_dir() / "fusion.json", out.dump(2) + "\n");
  write_resolved_config(c, c.run_dir(), "tune-alpha");
  std::cout << "alpha " << alpha << "\n";
  return 0;
}

struct LoadedEnsemble {
  std::vector<std::unique_ptr<CaptionerModel>> models;
  std::vector<double> weights;
};

LoadedEnsemble load_models(const Config& c) {
  LoadedEnsemble out;
  std::vector<std::string> paths;
  const std::string spec = c.s("ensemble");
  if (!spec.empty()) {
    const auto colon = spec.find(':');
    std::stringstream ps(spec.substr(0, colon));
    std::string item;
    while (std::getline(ps, item, ',')) paths.push_back(item);
    if (colon != std::string::npos) {
      std::stringstream ws(spec.substr(colon + 1));
      while (std::getline(ws, item, ',')) {
        try {
          out.weights.push_back(std::stod(item));
        } catch (const std::exception&) {
          throw UsageError("--ensemble: bad weight '" + item + "'");
        }
      }
    }
  } else if (!c.s("model").empty()) {
    paths.push_back(c.s("model"));
  } else {
    throw ConfigError("decode requires --model or --ensemble");
  }

  std::shared_ptr<const LmModel> lm = load_lm_if_given(c);
  std::optional<FusionConfig> fusion_override;
  if (!c.s("fusion_config").empty()) {
    const json f = json::parse(read_file(c.s("fusion_config")));
    fusion_override = FusionConfig{parse_fusion_mode(f.at("mode").get<std::string>()), f.at("alpha").get<double>()};
  }
  for (const auto& p : paths) {
    auto m = std::make_unique<CaptionerModel>(load_captioner_checkpoint(p));
    if (fusion_override) {
      if (fusion_override->mode != FusionMode::late) {
        throw ConfigError("--fusion-config must describe late fusion");
      }
      if (m->fusion.mode == FusionMode::deep) {
        throw ConfigError("late fusion cannot be layered on a deep-fusion model");
      }
      if (lm) m->lm = lm;
      m->fusion = *fusion_override;
      m->validate();
    }
    out.models.push_back(std::move(m));
  }
  return out;
}

int cmd_decode(const Config& c) {
  LoadedEnsemble loaded = load_models(c);
  std::vector<const CaptionerModel*> members;
  for (const auto& m : loaded.models) members.push_back(m.get());
  const Ensemble ensemble(members, loaded.weights);
  const std::string split = c.s("split");
  const auto clips = load_feature_file(c.data_dir() / (split + ".feat"));
  const std::size_t beam = c.u("beam");
  const std::size_t max_len = c.u("max_len");
  std::vector<CaptionLine> lines;
  std::size_t truncated = 0;
  for (const auto& clip : clips) {
    const auto hyps = beam_search(ensemble, clip, beam, max_len);
    const Caption& best = hyps.front();
    truncated += best.truncated ? 1 : 0;
    lines.push_back({clip.clip_id, tokenize(caption_text(best, ensemble.vocab()))});
  }
  write_caption_file(c.run_dir() / "captions.tsv", lines);
  write_resolved_config(c, c.run_dir(), "decode");
  log("decoded " + std::to_string(lines.size()) + " clips (" + std::to_string(truncated) +
      " truncated at max_len)");
  return 0;
}

int cmd_eval(const Config& c) {
  const fs::path cand_path = c.s("candidates").empty() ? c.run_dir() / "captions.tsv" : fs::path(c.s("candidates"));
  const fs::path ref_path =
      c.s("references").empty() ? c.data_dir() / (c.s("split") + ".tsv") : fs::path(c.s("references"));
  std::map<std::string, std::vector<Sentence>> refs;
  for (auto& l : read_caption_file(ref_path)) refs[l.clip_id].push_back(std::move(l.tokens));
  std::vector<EvalPair> pairs;
  for (auto& l : read_caption_file(cand_path)) {
    auto it = refs.find(l.clip_id);
    if (it == refs.end()) throw ValidationError("no references for clip " + l.clip_id);
    pairs.push_back({l.clip_id, std::move(l.tokens), it->second});
  }
  const BleuResult r = bleu4_corpus(pairs);
  std::cout << "BLEU@4 " << r.score << "\n";
  for (std::size_t n = 0; n < 4; ++n) {
    std::cout << "  p" << n + 1 << " " << r.precisions[n] << " (" << r.counts[n].matched << "/"
              << r.counts[n].total << ")\n";
  }
  std::cout << "  brevity_penalty " << r.brevity_penalty << " (c=" << r.candidate_length
            << ", r=" << r.reference_length << ")\n";
  json out = {{"bleu4", r.score},
              {"precisions", r.precisions},
              {"brevity_penalty", r.brevity_penalty},
              {"candidate_length", r.candidate_length},
              {"reference_length", r.reference_length},
              {"clips", pairs.size()}};
  write_file(c.run_dir() / "bleu.json", out.dump(2) + "\n");
  write_resolved_config(c, c.run_dir(), "eval");
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  const json defaults = default_config();
  CLI::App app{"Video captioning with language-model fusion and distributional embeddings", "vidcap"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags override its values");

  json patch = json::object();
  struct Command {
    CLI::App* app;
    int (*fn)(const Config&);
  };
  std::vector<Command> commands;

  auto* gen = app.add_subcommand("gen-data", "Generate the seeded synthetic world");
  add_config_flags(gen, defaults,
                   {"seed", "data_dir", "n_subjects", "n_verbs", "n_objects", "frames_per_clip",
                    "noise_sigma", "n_templates", "synonym_rate", "train_clips", "val_clips",
                    "test_clips", "lm_sentences", "lm_heldout_sentences", "heldout_triples",
                    "embedding_dim"},
                   patch);
  commands.push_back({gen, cmd_gen_data});

  auto* tlm = app.add_subcommand("train-lm", "Train the LSTM language model on the text corpus");
  add_config_flags(tlm, defaults,
                   {"seed", "data_dir", "run_dir", "max_vocab", "lm_hidden", "embed_dim", "embeddings",
                    "lm_epochs", "lm_lr", "lr_decay", "clip_norm"},
                   patch);
  commands.push_back({tlm, cmd_train_lm});

  auto* tcap = app.add_subcommand("train-captioner", "Train the two-layer caption model");
  add_config_flags(tcap, defaults,
                   {"seed", "data_dir", "run_dir", "max_vocab", "hidden", "input_dim", "embed_dim",
                    "embeddings", "predict_embeddings", "lambda_emb", "fusion", "alpha", "lm", "epochs",
                    "lr", "lr_decay", "clip_norm"},
                   patch);
  commands.push_back({tcap, cmd_train_captioner});

  auto* tune = app.add_subcommand("tune-alpha", "Pick the late-fusion weight on a validation split");
  add_config_flags(tune, defaults, {"data_dir", "run_dir", "model", "lm", "split", "alpha_grid"}, patch);
  commands.push_back({tune, cmd_tune_alpha});

  auto* dec = app.add_subcommand("decode", "Caption every clip of a split with beam search");
  add_config_flags(dec, defaults,
                   {"data_dir", "run_dir", "model", "ensemble", "lm", "fusion_config", "split", "beam",
                    "max_len"},
                   patch);
  commands.push_back({dec, cmd_decode});

  auto* ev = app.add_subcommand("eval", "Corpus BLEU@4 of decoded captions against references");
  add_config_flags(ev, defaults, {"data_dir", "run_dir", "split", "candidates", "references"}, patch);
  commands.push_back({ev, cmd_eval});

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 2;
  }
  // Subcommand help is raised as CallForHelp above; nothing else to do here.

  json resolved = defaults;
  try {
    if (!config_path.empty()) {
      json file;
      try {
        file = json::parse(read_file(config_path));
      } catch (const json::exception& e) {
        throw UsageError(config_path + ": " + e.what());
      }
      merge_config(resolved, file, config_path);
    }
    merge_config(resolved, patch, "command line");
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  const Config cfg(resolved);
  for (const auto& cmd : commands) {
    if (!cmd.app->parsed()) continue;
    try {
      return cmd.fn(cfg);
    } catch (const UsageError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}

}  // namespace vidcap
