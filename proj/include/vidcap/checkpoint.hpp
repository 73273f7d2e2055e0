#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"
#include "vidcap/captioner.hpp"
#include "vidcap/lm.hpp"

namespace vidcap {

// Checkpoint layout:
//   "VCAPCKPT\n"
//   manifest length in bytes, decimal, then "\n"
//   manifest: JSON with sorted keys (format version, model kind, dimensions,
//             vocabulary, fusion config, tensor index of name/shape/offset)
//   blob: every tensor as float64 little-endian, in index order
//   8-byte little-endian FNV-1a 64 checksum of all preceding bytes
//
// A caption model with an attached LM carries the LM tensors under an "lm."
// prefix so that the file is self-contained.

inline constexpr int kCheckpointVersion = 1;

std::string serialize_checkpoint(const LmModel& model);
std::string serialize_checkpoint(const CaptionerModel& model);

LmModel parse_lm_checkpoint(std::string_view bytes);
CaptionerModel parse_captioner_checkpoint(std::string_view bytes);

void save_checkpoint(const LmModel& model, const std::filesystem::path& path);
void save_checkpoint(const CaptionerModel& model, const std::filesystem::path& path);
LmModel load_lm_checkpoint(const std::filesystem::path& path);
CaptionerModel load_captioner_checkpoint(const std::filesystem::path& path);

/// Manifest only; verifies magic, version and checksum.
nlohmann::json read_checkpoint_manifest(std::string_view bytes);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace vidcap
