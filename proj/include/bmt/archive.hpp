#pragma once

// Binary tensor container shared by model and encoder checkpoints.
//
//   offset  field
//   0       magic "MTLB" (4 bytes)
//   4       format version, u32 little-endian
//   8       config length N, u32 LE, followed by N bytes of UTF-8 text
//           ("key=value" lines, keys sorted, each line '\n'-terminated)
//   ...     tensor count T, u32 LE
//   ...     T records: name length L (u32 LE), L name bytes, rows (u32 LE),
//           cols (u32 LE), rows*cols IEEE-754 binary64 values (LE, row-major)
//
// Nothing follows the last tensor. Vectors are stored as n x 1.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bmt/tensor.hpp"

namespace bmt {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct NamedTensor {
  std::string name;
  Matrix value;
};

struct TensorArchive {
  std::uint32_t version = kArchiveVersion;
  std::string config_text;
  std::vector<NamedTensor> tensors;

  const Matrix* find(std::string_view name) const;
};

std::string encode_archive(const TensorArchive& archive);
/// Throws BadMagicError, VersionError or TruncatedError.
TensorArchive decode_archive(std::string_view bytes);

void write_archive(const std::string& path, const TensorArchive& archive);
TensorArchive read_archive(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

/// Parses "key=value" lines into an ordered map.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

}  // namespace bmt
