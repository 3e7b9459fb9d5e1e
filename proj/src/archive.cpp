// SPDX-License-Identifier: Apache-2.0
#include "discover/archive.hpp"

#include "discover/errors.hpp"

namespace discover {
namespace {
constexpr char kMagic[8] = {'D', 'S', 'C', 'V', 'M', 'O', 'D', 'L'};
}

const Tensor& Archive::array(const std::string& name) const {
  for (const auto& [n, t] : arrays) {
    if (n == name) return t;
  }
  throw ParseError("archive has no array named " + name);
}

const U32Table* Archive::table(const std::string& name) const {
  for (const auto& [n, t] : tables) {
    if (n == name) return &t;
  }
  return nullptr;
}

Bytes serialize_archive(const Archive& archive) {
  ByteWriter w;
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), 8));
  w.u32(kArchiveVersion);
  w.u32(static_cast<std::uint32_t>(archive.config_json.size()));
  w.str(archive.config_json);
  w.u32(static_cast<std::uint32_t>(archive.arrays.size()));
  for (const auto& [name, t] : archive.arrays) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.str(name);
    w.u8(static_cast<std::uint8_t>(t.ndim()));
    for (int d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.values()) w.f64(v);
  }
  w.u32(static_cast<std::uint32_t>(archive.tables.size()));
  for (const auto& [name, t] : archive.tables) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rows));
    w.u32(static_cast<std::uint32_t>(t.cols));
    for (auto v : t.data) w.u32(v);
  }
  return w.take();
}

Archive parse_archive(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  auto magic = r.bytes(8);
  if (!std::equal(magic.begin(), magic.end(), reinterpret_cast<const std::uint8_t*>(kMagic))) {
    throw ParseError("not a model archive (bad magic)");
  }
  const auto version = r.u32();
  if (version != kArchiveVersion) throw ParseError("unsupported archive version " + std::to_string(version));
  Archive a;
  a.config_json = r.str(r.u32());
  const auto n_arrays = r.u32();
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    std::string name = r.str(r.u16());
    const int ndim = r.u8();
    Shape shape(static_cast<std::size_t>(ndim));
    for (auto& d : shape) d = static_cast<int>(r.u32());
    Tensor t(shape);
    for (auto& v : t.values()) v = r.f64();
    a.arrays.emplace_back(std::move(name), std::move(t));
  }
  const auto n_tables = r.u32();
  for (std::uint32_t i = 0; i < n_tables; ++i) {
    std::string name = r.str(r.u16());
    U32Table t;
    t.rows = static_cast<int>(r.u32());
    t.cols = static_cast<int>(r.u32());
    t.data.resize(static_cast<std::size_t>(t.rows) * t.cols);
    for (auto& v : t.data) v = r.u32();
    a.tables.emplace_back(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) throw ParseError("trailing bytes after archive");
  return a;
}

void save_archive(const Archive& archive, const std::filesystem::path& path) {
  write_file(path, serialize_archive(archive));
}

Archive load_archive(const std::filesystem::path& path) { return parse_archive(read_file(path)); }

}  // namespace discover
