#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace fvx::fvbin {

inline constexpr char kMagic[4] = {'F', 'V', 'B', '1'};
inline constexpr std::uint16_t kVersion = 1;

/// Named little-endian float32 array stored in declaration order.
struct Block {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

/// Container: "FVB1", u16 version, u32 metadata length, JSON metadata, blocks.
/// The "blocks" entry of the metadata is generated from `blocks` on encode.
struct File {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<Block> blocks;

  const Block& block(const std::string& name) const;
  bool has_block(const std::string& name) const;
};

std::string encode(const File& file);
/// Throws DataError on bad magic, version, malformed metadata or truncation.
File decode(std::string_view bytes, const std::string& origin = "<memory>");

/// Atomic write: temporary sibling file, then rename.
void write(const std::filesystem::path& path, const File& file);
File read(const std::filesystem::path& path);

/// Raw byte helpers shared by every artifact writer.
void write_bytes_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_bytes(const std::filesystem::path& path);

}  // namespace fvx::fvbin
