#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vidcap/captioner.hpp"
#include "vidcap/vocab.hpp"

namespace vidcap {

// Feature file layout (little-endian):
//   "VFEA1"
//   u32 clip count
//   per clip: u16 id length, id bytes (UTF-8), u32 T, u32 D, T*D float32
// Values are stored as float32; doubles are narrowed on write.

std::string serialize_features(std::span<const FrameSequence> clips);
std::vector<FrameSequence> parse_features(std::string_view bytes);
void write_feature_file(const std::filesystem::path& path, std::span<const FrameSequence> clips);
std::vector<FrameSequence> load_feature_file(const std::filesystem::path& path);

/// One line of a caption TSV: `clip_id<TAB>space separated tokens`.
struct CaptionLine {
  std::string clip_id;
  Sentence tokens;
  bool operator==(const CaptionLine&) const = default;
};

std::vector<CaptionLine> read_caption_file(const std::filesystem::path& path);
void write_caption_file(const std::filesystem::path& path, std::span<const CaptionLine> lines);

/// Plain text corpus, one pre-tokenized sentence per line. Blank lines are
/// skipped.
std::vector<Sentence> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, std::span<const Sentence> sentences);

/// Pairs every caption with its clip; a clip with k captions yields k pairs
/// sharing one FrameSequence. Captions naming unknown clips raise a
/// ValidationError listing every missing id.
CaptionDataset load_caption_dataset(const std::filesystem::path& captions_path,
                                    const std::filesystem::path& features_path,
                                    const Vocabulary& vocab);
CaptionDataset make_caption_dataset(std::vector<FrameSequence> clips,
                                    std::span<const CaptionLine> captions, const Vocabulary& vocab);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace vidcap
