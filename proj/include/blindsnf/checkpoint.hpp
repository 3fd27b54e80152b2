#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "blindsnf/tensor.hpp"

namespace blindsnf {

inline constexpr char kCheckpointMagic[8] = {'B', 'S', 'N', 'F', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named float tensors and text blobs.
///
/// File layout (little endian): 8 magic bytes, u32 version, u64 record
/// count, then per record: u32 name length, name bytes, u8 kind (0 tensor,
/// 1 text), and for tensors u32 rank, i64 dims, f32 values; for text u64
/// length and the bytes.
struct CheckpointArchive {
  std::map<std::string, Tensor<float>> tensors;
  std::map<std::string, std::string> texts;

  const Tensor<float>& tensor(const std::string& name) const;
  const std::string& text(const std::string& name) const;
};

/// Written atomically (temporary file + rename).
void write_checkpoint(const std::filesystem::path& path, const CheckpointArchive& archive);
/// ParseError on bad magic or truncation, VersionError on a version mismatch.
CheckpointArchive read_checkpoint(const std::filesystem::path& path);

}  // namespace blindsnf
