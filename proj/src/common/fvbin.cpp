#include "fvx/fvbin.hpp"

#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "fvx/common.hpp"

namespace fvx::fvbin {

namespace {

static_assert(std::endian::native == std::endian::little, "FVBIN I/O assumes a little-endian host");

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U get(std::string_view bytes, std::size_t offset) {
  U v;
  std::memcpy(&v, bytes.data() + offset, sizeof(U));
  return v;
}

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

[[noreturn]] void truncated(const std::string& origin, std::size_t offset, std::size_t need,
                            std::size_t have) {
  std::ostringstream os;
  os << origin << ": truncated at byte offset " << offset << " (need " << need << " bytes, file has "
     << have << ")";
  throw DataError(os.str());
}

}  // namespace

const Block& File::block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw DataError("missing block '" + name + "'");
}

bool File::has_block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return true;
  return false;
}

std::string encode(const File& file) {
  nlohmann::json meta = file.metadata;
  meta["dtype"] = "f32";
  auto blocks = nlohmann::json::array();
  for (const auto& b : file.blocks) {
    if (product(b.shape) != b.values.size())
      throw ValidationError("block " + b.name, "shape does not match value count");
    blocks.push_back({{"name", b.name}, {"shape", b.shape}, {"count", b.values.size()}});
  }
  meta["blocks"] = blocks;
  const std::string text = meta.dump();

  std::string out;
  out.append(kMagic, 4);
  put<std::uint16_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& b : file.blocks)
    out.append(reinterpret_cast<const char*>(b.values.data()), b.values.size() * sizeof(float));
  return out;
}

File decode(std::string_view bytes, const std::string& origin) {
  constexpr std::size_t header = 4 + 2 + 4;
  if (bytes.size() < header) truncated(origin, bytes.size(), header, bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw DataError(origin + ": bad magic, not an FVBIN file");
  const auto version = get<std::uint16_t>(bytes, 4);
  if (version != kVersion)
    throw DataError(origin + ": unsupported FVBIN version " + std::to_string(version) + " (expected " +
                    std::to_string(kVersion) + ")");
  const auto meta_len = get<std::uint32_t>(bytes, 6);
  if (bytes.size() < header + meta_len) truncated(origin, bytes.size(), header + meta_len, bytes.size());

  File file;
  try {
    file.metadata = nlohmann::json::parse(bytes.substr(header, meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(origin + ": malformed metadata: " + e.what());
  }
  if (file.metadata.value("dtype", "") != "f32") throw DataError(origin + ": dtype must be f32");
  if (!file.metadata.contains("blocks") || !file.metadata["blocks"].is_array())
    throw DataError(origin + ": metadata lacks a block table");

  std::size_t offset = header + meta_len;
  for (const auto& jb : file.metadata["blocks"]) {
    Block b;
    try {
      b.name = jb.at("name").get<std::string>();
      b.shape = jb.at("shape").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(origin + ": malformed block entry: " + e.what());
    }
    const std::size_t count = product(b.shape);
    if (jb.value("count", count) != count) throw DataError(origin + ": block '" + b.name + "' count/shape mismatch");
    const std::size_t nbytes = count * sizeof(float);
    if (bytes.size() - offset < nbytes) truncated(origin, bytes.size(), offset + nbytes, bytes.size());
    b.values.resize(count);
    std::memcpy(b.values.data(), bytes.data() + offset, nbytes);
    offset += nbytes;
    file.blocks.push_back(std::move(b));
  }
  if (offset != bytes.size())
    throw DataError(origin + ": " + std::to_string(bytes.size() - offset) + " trailing bytes after block " +
                    "data at byte offset " + std::to_string(offset));
  file.metadata.erase("blocks");
  return file;
}

void write_bytes_atomic(const std::filesystem::path& path, std::string_view bytes) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  static std::atomic<unsigned long> serial{0};
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(serial++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const std::filesystem::path& path, const File& file) { write_bytes_atomic(path, encode(file)); }

File read(const std::filesystem::path& path) { return decode(read_bytes(path), path.string()); }

}  // namespace fvx::fvbin
