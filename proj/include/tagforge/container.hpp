#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tagforge/error.hpp"
#include "tagforge/numgrad/tensor.hpp"

namespace tagforge::container {

// Layout: "TGFG" | u32 version | u64 manifest bytes | JSON manifest |
// payload. Integers and payload values are little-endian; the payload is
// f64 blocks in manifest order with byte offsets relative to its start.
inline constexpr std::string_view kMagic = "TGFG";
inline constexpr std::uint32_t kVersion = 1;

struct NamedTensor {
  std::string name;
  numgrad::Tensor value;
};

struct Container {
  std::string kind;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json tables = nlohmann::json::object();  // vocabularies, label and feature lists
  std::vector<NamedTensor> tensors;

  const numgrad::Tensor& tensor(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return t.value;
    }
    throw Error(ErrorKind::Container, "no tensor named '" + name + "'");
  }
};

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(std::string_view in, std::size_t at) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

inline std::size_t element_count(const numgrad::Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace detail

inline std::string serialize(const Container& c) {
  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : c.tensors) {
    entries.push_back({{"name", t.name}, {"shape", t.value.shape}, {"offset", offset}, {"count", t.value.size()}});
    offset += 8 * t.value.size();
  }
  nlohmann::json manifest = {{"kind", c.kind},
                             {"config", c.config},
                             {"tables", c.tables},
                             {"tensors", entries},
                             {"payload_bytes", offset}};
  const std::string text = manifest.dump();
  std::string out(kMagic);
  detail::put_le<std::uint32_t>(out, kVersion);
  detail::put_le<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& t : c.tensors) {
    for (double v : t.value.data) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      detail::put_le<std::uint64_t>(out, bits);
    }
  }
  return out;
}

inline Container deserialize(std::string_view bytes) {
  auto fail = [](const std::string& what) { return Error(ErrorKind::Container, what); };
  if (bytes.size() < 16) throw fail("file too short for a header (" + std::to_string(bytes.size()) + " bytes)");
  if (bytes.substr(0, 4) != kMagic) throw fail("bad magic; expected TGFG");
  const auto version = detail::get_le<std::uint32_t>(bytes, 4);
  if (version != kVersion) {
    throw fail("unsupported format version " + std::to_string(version) + " (expected " + std::to_string(kVersion) + ")");
  }
  const auto manifest_len = detail::get_le<std::uint64_t>(bytes, 8);
  if (manifest_len > bytes.size() - 16) throw fail("manifest length " + std::to_string(manifest_len) + " runs past end of file");
  const std::string_view payload = bytes.substr(16 + manifest_len);

  Container c;
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(16, manifest_len));
    c.kind = manifest.at("kind").get<std::string>();
    c.config = manifest.at("config");
    c.tables = manifest.at("tables");
    const auto declared = manifest.at("payload_bytes").get<std::uint64_t>();
    if (declared != payload.size()) {
      throw fail("payload is " + std::to_string(payload.size()) + " bytes but the manifest declares " +
                 std::to_string(declared));
    }
    std::uint64_t expected_offset = 0;
    for (const auto& e : manifest.at("tensors")) {
      NamedTensor t;
      t.name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<numgrad::Shape>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto count = e.at("count").get<std::uint64_t>();
      if (detail::element_count(shape) != count) {
        throw fail("tensor '" + t.name + "' shape does not multiply to its count " + std::to_string(count));
      }
      if (offset != expected_offset) {
        throw fail("tensor '" + t.name + "' offset " + std::to_string(offset) + " overlaps or leaves a gap (expected " +
                   std::to_string(expected_offset) + ")");
      }
      if (offset + 8 * count > payload.size()) throw fail("tensor '" + t.name + "' runs past the payload");
      std::vector<double> values(count);
      for (std::uint64_t i = 0; i < count; ++i) {
        const auto bits = detail::get_le<std::uint64_t>(payload, offset + 8 * i);
        std::memcpy(&values[i], &bits, sizeof bits);
      }
      t.value = numgrad::Tensor(shape, std::move(values));
      c.tensors.push_back(std::move(t));
      expected_offset = offset + 8 * count;
    }
    if (expected_offset != payload.size()) throw fail("payload has trailing bytes after the last tensor");
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed manifest: ") + e.what());
  }
  return c;
}

inline void save(const std::string& path, const Container& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  const auto bytes = serialize(c);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "failed writing '" + path + "'");
}

inline Container load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open model file '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const Error& e) {
    throw Error(ErrorKind::Container, "'" + path + "': " + std::string(e.what()).substr(to_string(e.kind()).size() + 2));
  }
}

}  // namespace tagforge::container
