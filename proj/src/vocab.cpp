#include "vidcap/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <unordered_map>

#include "vidcap/errors.hpp"

namespace vidcap {

namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> kReserved = {"<pad>", "<bos>", "<eos>", "<unk>"};
  return kReserved;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::span<const std::string>{}) {}

Vocabulary::Vocabulary(std::span<const std::string> words) {
  for (const auto& t : reserved_tokens()) {
    index_.emplace(t, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(t);
  }
  for (const auto& w : words) {
    if (index_.contains(w)) throw ConfigError("Vocabulary: duplicate token '" + w + "'");
    index_.emplace(w, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(w);
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.find(token) != index_.end(); }

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) {
    throw IndexError("Vocabulary: id " + std::to_string(id) + " out of range for size " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

Vocabulary build_vocab(std::span<const Sentence> corpus, std::size_t max_size) {
  if (max_size < 1) throw ConfigError("build_vocab: max_size must be >= 1");
  std::unordered_map<std::string, std::size_t> counts;
  const auto& reserved = reserved_tokens();
  for (const auto& sentence : corpus) {
    for (const auto& tok : sentence) {
      if (std::find(reserved.begin(), reserved.end(), tok) != reserved.end()) continue;
      ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > max_size) ranked.resize(max_size);
  std::vector<std::string> words;
  words.reserve(ranked.size());
  for (auto& [w, c] : ranked) words.push_back(w);
  return Vocabulary(words);
}

IdSequence encode(std::span<const std::string> sentence, const Vocabulary& vocab,
                  bool add_bounds) {
  IdSequence ids;
  ids.reserve(sentence.size() + 2);
  if (add_bounds) ids.push_back(kBos);
  for (const auto& tok : sentence) ids.push_back(vocab.id(tok));
  if (add_bounds) ids.push_back(kEos);
  return ids;
}

Sentence decode(std::span<const TokenId> ids, const Vocabulary& vocab) {
  Sentence out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(vocab.token(id));
  return out;
}

Sentence tokenize(std::string_view line) {
  Sentence out;
  std::string cur;
  for (char ch : line) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string to_string(EmbeddingMode mode) {
  switch (mode) {
    case EmbeddingMode::learned:
      return "learned";
    case EmbeddingMode::pretrained_frozen:
      return "pretrained-frozen";
    case EmbeddingMode::pretrained_finetune:
      return "pretrained-finetune";
  }
  return "learned";
}

EmbeddingMode parse_embedding_mode(std::string_view name) {
  if (name == "learned") return EmbeddingMode::learned;
  if (name == "pretrained-frozen") return EmbeddingMode::pretrained_frozen;
  if (name == "pretrained-finetune") return EmbeddingMode::pretrained_finetune;
  throw ConfigError("unknown embedding mode '" + std::string(name) + "'");
}

EmbeddingTable make_learned_embedding(const Vocabulary& vocab, std::size_t dim, Rng& rng) {
  EmbeddingTable t{Matrix(vocab.size(), dim), EmbeddingMode::learned};
  rng.fill_uniform(t.vectors, -kInitScale, kInitScale);
  return t;
}

PretrainedLoad load_pretrained_vectors(const std::filesystem::path& path,
                                       const Vocabulary& vocab, Rng& rng, EmbeddingMode mode) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embedding file " + path.string());

  std::map<std::string, Vector, std::less<>> found;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (!rest.empty()) {
      const auto start = rest.find_first_not_of(" \t");
      if (start == std::string_view::npos) break;
      rest.remove_prefix(start);
      const auto end = rest.find_first_of(" \t");
      fields.push_back(rest.substr(0, end));
      rest = end == std::string_view::npos ? std::string_view{} : rest.substr(end);
    }
    if (fields.size() < 2) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": no vector values");
    }
    const std::size_t d = fields.size() - 1;
    if (dim == 0) dim = d;
    if (d != dim) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(dim) + " values, found " + std::to_string(d));
    }
    const std::string word(fields[0]);
    if (!vocab.contains(word) || found.contains(word)) continue;
    Vector v(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      const auto f = fields[k + 1];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v[k]);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad number '" +
                         std::string(f) + "'");
      }
    }
    found.emplace(word, std::move(v));
  }
  if (dim == 0) throw ParseError("embedding file " + path.string() + " is empty");

  PretrainedLoad out;
  out.table.mode = mode;
  out.table.vectors = Matrix(vocab.size(), dim);
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    auto row = out.table.vectors.row(id);
    auto it = found.find(vocab.token(static_cast<TokenId>(id)));
    if (it != found.end()) {
      std::copy(it->second.begin(), it->second.end(), row.begin());
      ++out.covered;
    } else {
      for (double& v : row) v = rng.uniform(-kInitScale, kInitScale);
    }
  }
  return out;
}

std::span<const double> embedding_row(const Matrix& table, TokenId id) {
  if (id >= table.rows()) {
    throw IndexError("embed: id " + std::to_string(id) + " out of range for " +
                     std::to_string(table.rows()) + " rows");
  }
  return table.row(id);
}

std::span<const double> embed(const EmbeddingTable& table, TokenId id) {
  return embedding_row(table.vectors, id);
}

}  // namespace vidcap
