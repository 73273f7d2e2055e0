#include "vidcap/data.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "vidcap/errors.hpp"

namespace vidcap {

namespace {

constexpr std::string_view kFeatureMagic = "VFEA1";

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t k = 0; k < sizeof(T); ++k) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * k)) & 0xFF));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get_le() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + k])) << (8 * k);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("feature file truncated at byte offset " + std::to_string(pos_) +
                        " (needed " + std::to_string(n) + " more bytes, " +
                        std::to_string(bytes_.size() - pos_) + " available)");
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_features(std::span<const FrameSequence> clips) {
  std::string out(kFeatureMagic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(clips.size()));
  for (const auto& clip : clips) {
    if (clip.clip_id.size() > 0xFFFF) throw FormatError("clip id too long: " + clip.clip_id);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(clip.clip_id.size()));
    out += clip.clip_id;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.length()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.width()));
    for (double v : clip.frames.values()) {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return out;
}

std::vector<FrameSequence> parse_features(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < kFeatureMagic.size() || r.take(kFeatureMagic.size()) != kFeatureMagic) {
    throw FormatError("feature file: bad magic (expected VFEA1)");
  }
  const auto count = r.get_le<std::uint32_t>();
  std::vector<FrameSequence> clips;
  for (std::uint32_t c = 0; c < count; ++c) {
    FrameSequence clip;
    const auto id_len = r.get_le<std::uint16_t>();
    clip.clip_id = std::string(r.take(id_len));
    const auto t = r.get_le<std::uint32_t>();
    const auto d = r.get_le<std::uint32_t>();
    clip.frames = Matrix(t, d);
    for (double& v : clip.frames.values()) v = std::bit_cast<float>(r.get_le<std::uint32_t>());
    clips.push_back(std::move(clip));
  }
  if (!r.done()) {
    throw FormatError("feature file: trailing bytes after offset " + std::to_string(r.pos()));
  }
  return clips;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_feature_file(const std::filesystem::path& path, std::span<const FrameSequence> clips) {
  write_file(path, serialize_features(clips));
}

std::vector<FrameSequence> load_feature_file(const std::filesystem::path& path) {
  return parse_features(read_file(path));
}

std::vector<CaptionLine> read_caption_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open caption file " + path.string());
  std::vector<CaptionLine> lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected clip_id<TAB>sentence");
    }
    lines.push_back({line.substr(0, tab), tokenize(std::string_view(line).substr(tab + 1))});
  }
  return lines;
}

void write_caption_file(const std::filesystem::path& path, std::span<const CaptionLine> lines) {
  std::string out;
  for (const auto& l : lines) {
    out += l.clip_id;
    out.push_back('\t');
    out += join_tokens(l.tokens);
    out.push_back('\n');
  }
  write_file(path, out);
}

std::vector<Sentence> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus " + path.string());
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(in, line)) {
    Sentence s = tokenize(line);
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, std::span<const Sentence> sentences) {
  std::string out;
  for (const auto& s : sentences) {
    out += join_tokens(s);
    out.push_back('\n');
  }
  write_file(path, out);
}

CaptionDataset make_caption_dataset(std::vector<FrameSequence> clips,
                                    std::span<const CaptionLine> captions,
                                    const Vocabulary& vocab) {
  std::map<std::string, std::size_t, std::less<>> index;
  for (std::size_t i = 0; i < clips.size(); ++i) index.emplace(clips[i].clip_id, i);
  std::set<std::string> missing;
  CaptionDataset data;
  for (const auto& line : captions) {
    auto it = index.find(line.clip_id);
    if (it == index.end()) {
      missing.insert(line.clip_id);
      continue;
    }
    IdSequence ids = encode(line.tokens, vocab, false);
    ids.push_back(kEos);
    data.pairs.push_back({it->second, std::move(ids)});
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw ValidationError("captions reference clips absent from the feature file: " + list);
  }
  data.clips = std::move(clips);
  return data;
}

CaptionDataset load_caption_dataset(const std::filesystem::path& captions_path,
                                    const std::filesystem::path& features_path,
                                    const Vocabulary& vocab) {
  return make_caption_dataset(load_feature_file(features_path), read_caption_file(captions_path),
                              vocab);
}

}  // namespace vidcap
