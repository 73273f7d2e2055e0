#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vidcap/numerics.hpp"

namespace vidcap {

using TokenId = std::uint32_t;
using Sentence = std::vector<std::string>;
using IdSequence = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kNumReserved = 4;

/// Token <-> id table. Ids 0..3 are always <pad>, <bos>, <eos>, <unk>.
class Vocabulary {
 public:
  Vocabulary();
  /// Reserved tokens followed by `words` in the given order.
  explicit Vocabulary(std::span<const std::string> words);

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, TokenId, std::less<>> index_;
};

/// Keeps the max_size most frequent tokens (ties lexicographic) after the
/// reserved entries. Reserved spellings in the corpus are not counted.
Vocabulary build_vocab(std::span<const Sentence> corpus, std::size_t max_size);

IdSequence encode(std::span<const std::string> sentence, const Vocabulary& vocab,
                  bool add_bounds);
Sentence decode(std::span<const TokenId> ids, const Vocabulary& vocab);

/// Lowercases and splits on ASCII whitespace.
Sentence tokenize(std::string_view line);
std::string join_tokens(std::span<const std::string> tokens);

enum class EmbeddingMode { learned, pretrained_frozen, pretrained_finetune };

std::string to_string(EmbeddingMode mode);
EmbeddingMode parse_embedding_mode(std::string_view name);
inline bool is_trainable(EmbeddingMode mode) { return mode != EmbeddingMode::pretrained_frozen; }

inline constexpr std::size_t kDefaultLearnedEmbedDim = 500;
inline constexpr double kInitScale = 0.08;

struct EmbeddingTable {
  Matrix vectors;  // |V| x d_e
  EmbeddingMode mode = EmbeddingMode::learned;
  std::size_t dim() const { return vectors.cols(); }
  bool operator==(const EmbeddingTable&) const = default;
};

/// Learned-mode table, uniform in [-0.08, 0.08].
EmbeddingTable make_learned_embedding(const Vocabulary& vocab, std::size_t dim, Rng& rng);

struct PretrainedLoad {
  EmbeddingTable table;
  std::size_t covered = 0;  // vocabulary entries found in the file
};

/// Reads `word v1 ... vd` lines. Vocabulary rows found in the file copy the
/// file values exactly; all other rows (reserved tokens included) are drawn
/// uniform in [-0.08, 0.08] from rng, in vocabulary order.
PretrainedLoad load_pretrained_vectors(const std::filesystem::path& path,
                                       const Vocabulary& vocab, Rng& rng,
                                       EmbeddingMode mode = EmbeddingMode::pretrained_frozen);

std::span<const double> embed(const EmbeddingTable& table, TokenId id);
std::span<const double> embedding_row(const Matrix& table, TokenId id);

}  // namespace vidcap
