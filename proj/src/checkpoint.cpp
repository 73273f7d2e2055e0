#include "vidcap/checkpoint.hpp"

#include <bit>
#include <map>

#include "vidcap/data.hpp"
#include "vidcap/errors.hpp"

namespace vidcap {

namespace {

constexpr std::string_view kMagic = "VCAPCKPT\n";
using json = nlohmann::json;

struct TensorWriter {
  json index = json::array();
  std::string blob;

  void add(const std::string& name, const Matrix& m) {
    index.push_back({{"name", name},
                     {"shape", {m.rows(), m.cols()}},
                     {"offset", blob.size()}});
    for (double v : m.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int k = 0; k < 8; ++k) blob.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
    }
  }
};

void put_u64(std::string& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

std::uint64_t get_u64(std::string_view b) {
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[k])) << (8 * k);
  return v;
}

std::string finish(json manifest, TensorWriter& tensors) {
  manifest["format_version"] = kCheckpointVersion;
  manifest["tensors"] = std::move(tensors.index);
  manifest["blob_bytes"] = tensors.blob.size();
  const std::string text = manifest.dump(2) + "\n";
  std::string out(kMagic);
  out += std::to_string(text.size());
  out.push_back('\n');
  out += text;
  out += tensors.blob;
  put_u64(out, fnv1a64(out));
  return out;
}

json lm_description(const LmModel& m) {
  return {{"embedding_mode", to_string(m.embedding.mode)},
          {"dims", {{"vocab_size", m.vocab.size()}, {"embed_dim", m.embed_dim()}, {"hidden", m.hidden_size()}}}};
}

void add_lm_tensors(TensorWriter& w, const LmModel& m, const std::string& prefix) {
  for (const auto& [name, t] : lm_tensors(m)) w.add(prefix + name, *t);
}

struct ParsedFile {
  json manifest;
  std::string_view blob;
};

ParsedFile parse_file(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic) throw CorruptionError("checkpoint: bad magic");
  std::size_t pos = kMagic.size();
  const auto nl = bytes.find('\n', pos);
  if (nl == std::string_view::npos || nl == pos || nl - pos > 20) {
    throw CorruptionError("checkpoint: bad manifest length line");
  }
  std::size_t len = 0;
  for (char ch : bytes.substr(pos, nl - pos)) {
    if (ch < '0' || ch > '9') throw CorruptionError("checkpoint: bad manifest length");
    len = len * 10 + static_cast<std::size_t>(ch - '0');
  }
  pos = nl + 1;
  if (bytes.size() < pos + len + 8) throw CorruptionError("checkpoint: file truncated");

  ParsedFile f;
  try {
    f.manifest = json::parse(bytes.substr(pos, len));
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("checkpoint: unreadable manifest: ") + e.what());
  }
  if (!f.manifest.is_object() || !f.manifest.contains("format_version") ||
      !f.manifest["format_version"].is_number_integer()) {
    throw CorruptionError("checkpoint: manifest lacks format_version");
  }
  const int version = f.manifest["format_version"].get<int>();
  if (version != kCheckpointVersion) {
    throw UnsupportedVersionError("checkpoint: format version " + std::to_string(version) +
                                  " is not supported (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
  }
  const std::size_t body = bytes.size() - 8;
  if (fnv1a64(bytes.substr(0, body)) != get_u64(bytes.substr(body))) {
    throw CorruptionError("checkpoint: checksum mismatch");
  }
  f.blob = bytes.substr(pos + len, body - pos - len);
  try {
    if (f.manifest.at("blob_bytes").get<std::size_t>() != f.blob.size()) {
      throw CorruptionError("checkpoint: blob size does not match manifest");
    }
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("checkpoint: ") + e.what());
  }
  return f;
}

// Fills every named skeleton tensor from the blob. Every manifest entry must
// be consumed exactly once with the expected shape.
void read_tensors(const ParsedFile& f, const std::vector<std::pair<std::string, Matrix*>>& wanted) {
  std::map<std::string, const json*> entries;
  for (const auto& e : f.manifest.at("tensors")) {
    const auto name = e.at("name").get<std::string>();
    if (!entries.emplace(name, &e).second) throw CorruptionError("checkpoint: duplicate tensor " + name);
  }
  std::size_t expected_offset = 0;
  for (const auto& [name, m] : wanted) {
    auto it = entries.find(name);
    if (it == entries.end()) throw CorruptionError("checkpoint: missing tensor " + name);
    const json& e = *it->second;
    const auto shape = e.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != m->rows() || shape[1] != m->cols()) {
      throw CorruptionError("checkpoint: tensor " + name + " has shape " + e.at("shape").dump() +
                            ", expected " + shape_string(*m));
    }
    const auto offset = e.at("offset").get<std::size_t>();
    const std::size_t bytes = m->size() * 8;
    if (offset != expected_offset || offset + bytes > f.blob.size()) {
      throw CorruptionError("checkpoint: tensor " + name + " has a bad offset");
    }
    auto values = m->values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      values[k] = std::bit_cast<double>(get_u64(f.blob.substr(offset + 8 * k, 8)));
    }
    expected_offset += bytes;
    entries.erase(it);
  }
  if (!entries.empty()) throw CorruptionError("checkpoint: unexpected tensor " + entries.begin()->first);
  if (expected_offset != f.blob.size()) throw CorruptionError("checkpoint: unaccounted blob bytes");
}

LmModel lm_skeleton(const Vocabulary& vocab, const json& desc) {
  const json& dims = desc.at("dims");
  if (dims.at("vocab_size").get<std::size_t>() != vocab.size()) {
    throw CorruptionError("checkpoint: LM vocabulary size mismatch");
  }
  const auto de = dims.at("embed_dim").get<std::size_t>();
  const auto h = dims.at("hidden").get<std::size_t>();
  LmModel m;
  m.vocab = vocab;
  m.embedding = {Matrix(vocab.size(), de), parse_embedding_mode(desc.at("embedding_mode").get<std::string>())};
  m.lstm = LstmParams::zeros(de, h);
  m.head = {Matrix(vocab.size(), h), Matrix(vocab.size(), 1)};
  return m;
}

Vocabulary read_vocab(const json& manifest) {
  auto tokens = manifest.at("vocab").get<std::vector<std::string>>();
  if (tokens.size() < kNumReserved || tokens[0] != "<pad>" || tokens[1] != "<bos>" ||
      tokens[2] != "<eos>" || tokens[3] != "<unk>") {
    throw CorruptionError("checkpoint: vocabulary lacks the reserved tokens");
  }
  return Vocabulary(std::span<const std::string>(tokens).subspan(kNumReserved));
}

template <typename F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("checkpoint: malformed manifest: ") + e.what());
  } catch (const ShapeError& e) {
    throw CorruptionError(std::string("checkpoint: inconsistent shapes: ") + e.what());
  }
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : bytes) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string serialize_checkpoint(const LmModel& m) {
  json manifest = lm_description(m);
  manifest["kind"] = "lm";
  manifest["vocab"] = m.vocab.tokens();
  TensorWriter w;
  add_lm_tensors(w, m, "");
  return finish(std::move(manifest), w);
}

std::string serialize_checkpoint(const CaptionerModel& m) {
  m.validate();
  json manifest;
  manifest["kind"] = "captioner";
  manifest["vocab"] = m.vocab.tokens();
  manifest["embedding_mode"] = to_string(m.embedding_mode);
  manifest["dims"] = {{"vocab_size", m.vocab.size()},   {"feat_dim", m.feat_dim()},
                      {"input_dim", m.input_dim()},     {"hidden", m.hidden()},
                      {"embed_dim", m.embed_dim()},     {"regress_dim", m.regress_dim()},
                      {"output_width", m.weights.out_w.cols()}};
  manifest["fusion"] = {{"mode", to_string(m.fusion.mode)}, {"alpha", m.fusion.alpha}};
  manifest["early_fusion_init"] = m.early_fusion_init;
  manifest["lm"] = m.lm ? lm_description(*m.lm) : json(nullptr);
  TensorWriter w;
  for (const auto& [name, t] : m.weights.tensors()) {
    if (!t->empty()) w.add(name, *t);
  }
  if (m.lm) add_lm_tensors(w, *m.lm, "lm.");
  return finish(std::move(manifest), w);
}

nlohmann::json read_checkpoint_manifest(std::string_view bytes) { return parse_file(bytes).manifest; }

LmModel parse_lm_checkpoint(std::string_view bytes) {
  const ParsedFile f = parse_file(bytes);
  return guarded([&] {
    if (f.manifest.at("kind") != "lm") throw CorruptionError("checkpoint: not a language model");
    LmModel m = lm_skeleton(read_vocab(f.manifest), f.manifest);
    read_tensors(f, lm_tensors(m));
    return m;
  });
}

CaptionerModel parse_captioner_checkpoint(std::string_view bytes) {
  const ParsedFile f = parse_file(bytes);
  return guarded([&] {
    const json& man = f.manifest;
    if (man.at("kind") != "captioner") throw CorruptionError("checkpoint: not a caption model");
    const json& dims = man.at("dims");
    const auto get = [&](const char* k) { return dims.at(k).get<std::size_t>(); };
    CaptionerModel m;
    m.vocab = read_vocab(man);
    if (get("vocab_size") != m.vocab.size()) throw CorruptionError("checkpoint: vocabulary size mismatch");
    m.embedding_mode = parse_embedding_mode(man.at("embedding_mode").get<std::string>());
    m.fusion.mode = parse_fusion_mode(man.at("fusion").at("mode").get<std::string>());
    m.fusion.alpha = man.at("fusion").at("alpha").get<double>();
    m.early_fusion_init = man.at("early_fusion_init").get<bool>();

    const std::size_t v = m.vocab.size(), h = get("hidden"), din = get("input_dim");
    const std::size_t de = get("embed_dim"), dw = get("regress_dim");
    CaptionerWeights& w = m.weights;
    w.frame_w = Matrix(din, get("feat_dim"));
    w.frame_b = Matrix(din, 1);
    w.layer1 = LstmParams::zeros(din, h);
    w.layer2 = LstmParams::zeros(h + de, h);
    w.embedding = Matrix(v, de);
    w.out_w = Matrix(v, get("output_width"));
    w.out_b = Matrix(v, 1);
    if (dw > 0) {
      w.reg_w = Matrix(dw, h);
      w.reg_b = Matrix(dw, 1);
    }
    std::vector<std::pair<std::string, Matrix*>> wanted;
    for (auto& [name, t] : w.tensors()) {
      if (!t->empty()) wanted.emplace_back(name, t);
    }
    std::shared_ptr<LmModel> lm;
    if (!man.at("lm").is_null()) {
      lm = std::make_shared<LmModel>(lm_skeleton(m.vocab, man.at("lm")));
      for (auto& [name, t] : lm_tensors(*lm)) wanted.emplace_back("lm." + name, t);
    }
    read_tensors(f, wanted);
    m.lm = std::move(lm);
    try {
      m.validate();
    } catch (const ConfigError& e) {
      throw CorruptionError(std::string("checkpoint: ") + e.what());
    }
    return m;
  });
}

void save_checkpoint(const LmModel& model, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(model));
}

void save_checkpoint(const CaptionerModel& model, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(model));
}

LmModel load_lm_checkpoint(const std::filesystem::path& path) {
  return parse_lm_checkpoint(read_file(path));
}

CaptionerModel load_captioner_checkpoint(const std::filesystem::path& path) {
  return parse_captioner_checkpoint(read_file(path));
}

}  // namespace vidcap
