#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "vidcap/checkpoint.hpp"
#include "vidcap/data.hpp"
#include "vidcap/errors.hpp"

using namespace vidcap;
using namespace vidcap::test;

namespace {

/// Frames whose values survive the float32 round trip exactly.
FrameSequence float_frames(std::string id, std::size_t t, std::size_t d, Rng& rng) {
  FrameSequence f{std::move(id), Matrix(t, d)};
  for (double& v : f.frames.values()) v = static_cast<float>(rng.uniform(-4.0, 4.0));
  return f;
}

}  // namespace

TEST_CASE("feature file: two-clip round trip is bitwise") {
  Rng rng(1);
  const std::vector<FrameSequence> clips{float_frames("first", 3, 4, rng), float_frames("second-clip", 5, 4, rng)};
  const auto dir = temp_dir("data_roundtrip");
  write_feature_file(dir / "x.feat", clips);
  CHECK(load_feature_file(dir / "x.feat") == clips);
  CHECK(serialize_features(load_feature_file(dir / "x.feat")) == read_file(dir / "x.feat"));
}

TEST_CASE("feature file: doubles are narrowed to float32") {
  const std::vector<FrameSequence> clips{{"a", Matrix::from_rows({{0.1, 1.0 / 3.0}})}};
  const auto back = parse_features(serialize_features(clips));
  CHECK(back[0].frames(0, 0) == static_cast<double>(0.1f));
  CHECK(back[0].frames(0, 1) == static_cast<double>(1.0f / 3.0f));
}

TEST_CASE("feature file: golden fixture") {
  const std::string bytes = read_file(std::filesystem::path(VIDCAP_TEST_DATA) / "golden.feat");
  CHECK(bytes.size() == 67);
  CHECK(fnv1a64(bytes) == 0xc81307abf998fe83ULL);
  const auto clips = parse_features(bytes);
  REQUIRE(clips.size() == 2);
  CHECK(clips[0].clip_id == "clipA");
  CHECK(clips[0].length() == 2);
  CHECK(clips[0].width() == 3);
  CHECK(clips[0].frames == Matrix::from_rows({{0.5, -1.25, 2.0}, {0.125, 3.5, -0.75}}));
  CHECK(clips[1].clip_id == "b");
  CHECK(clips[1].length() == 1);
  CHECK(clips[1].width() == 2);
  CHECK(clips[1].frames == Matrix::from_rows({{1.0, -2.0}}));
  CHECK(serialize_features(clips) == bytes);
}

TEST_CASE("feature file: corruption is rejected") {
  Rng rng(2);
  const std::vector<FrameSequence> clips{float_frames("a", 2, 3, rng)};
  const std::string good = serialize_features(clips);

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(parse_features(bad_magic), FormatError);

  try {
    parse_features(good.substr(0, good.size() - 3));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_features(good + "x"), FormatError);
  CHECK_THROWS_AS(parse_features(""), FormatError);
}

TEST_CASE("caption files and corpora round-trip") {
  const auto dir = temp_dir("data_captions");
  const std::vector<CaptionLine> lines{{"c1", tokenize("a man rides a horse .")}, {"c2", tokenize("a cat")}};
  write_caption_file(dir / "caps.tsv", lines);
  CHECK(read_caption_file(dir / "caps.tsv") == lines);

  std::ofstream(dir / "bad.tsv") << "c1\tok\nno tab here\n";
  try {
    read_caption_file(dir / "bad.tsv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }

  const std::vector<Sentence> corpus{tokenize("one two"), tokenize("three")};
  write_corpus(dir / "c.txt", corpus);
  CHECK(read_corpus(dir / "c.txt") == corpus);
}

TEST_CASE("caption dataset: pairing and missing clips") {
  Rng rng(3);
  const Vocabulary v = build_vocab(std::vector<Sentence>{tokenize("a b c")}, 10);
  std::vector<FrameSequence> clips{float_frames("x", 2, 3, rng), float_frames("y", 4, 3, rng)};
  const std::vector<CaptionLine> three{{"y", tokenize("a b")}, {"y", tokenize("c")}, {"y", tokenize("a zzz")}};
  const CaptionDataset d = make_caption_dataset(clips, three, v);
  REQUIRE(d.pairs.size() == 3);
  for (const auto& p : d.pairs) CHECK(p.clip == 1);
  CHECK(d.pairs[0].caption == IdSequence{v.id("a"), v.id("b"), kEos});
  CHECK(d.pairs[2].caption == IdSequence{v.id("a"), kUnk, kEos});
  CHECK(d.clips.size() == 2);

  const std::vector<CaptionLine> orphans{{"x", tokenize("a")}, {"ghost", tokenize("a")}, {"phantom", tokenize("b")}};
  try {
    make_caption_dataset(clips, orphans, v);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("ghost") != std::string::npos);
    CHECK(msg.find("phantom") != std::string::npos);
  }

  const auto dir = temp_dir("data_dataset");
  write_feature_file(dir / "f.feat", clips);
  write_caption_file(dir / "c.tsv", three);
  const CaptionDataset loaded = load_caption_dataset(dir / "c.tsv", dir / "f.feat", v);
  CHECK(loaded.pairs.size() == 3);
  CHECK(loaded.clips == clips);
}
