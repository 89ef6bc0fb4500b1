#pragma once

#include "scan/data.hpp"
#include "scan/model.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace scan {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything needed to rebuild a trained model for inference.
struct Checkpoint {
  ModelParams params;
  Vocab vocab = Vocab::from_tokens({"<pad>", "<unk>"});
  std::vector<std::string> categories;
  std::vector<std::string> polarities;
  Variant variant = Variant::full;
  bool keep_preterminals = false;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Hash of the model configuration, vocabulary, label sets, variant and graph
/// options. Two checkpoints with the same hash accept the same inputs.
std::uint64_t config_hash(const Checkpoint& checkpoint);

/// Layout, all integers little-endian:
///   "SCANCKPT" | u32 version | u64 header length | header JSON |
///   for each parameter in ModelParams::all() order: rows×cols f64, column-major |
///   u64 FNV-1a of every preceding byte.
/// The header records the config, vocabulary, categories, polarities,
/// variant, graph options, parameter names and shapes, and config_hash.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
/// Throws CheckpointError on a bad magic, unsupported version, truncated
/// file, content hash mismatch or config hash mismatch.
Checkpoint load_checkpoint(const std::string& path);

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace scan
