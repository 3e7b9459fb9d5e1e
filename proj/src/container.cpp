// SPDX-License-Identifier: Apache-2.0
#include "discover/container.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "discover/errors.hpp"

namespace discover {
namespace {

constexpr char kMagic[4] = {'D', 'S', 'C', 'V'};

std::uint16_t u16_checked(int v, const char* what) {
  if (v < 0 || v > 0xFFFF) throw ValidationError(std::string(what) + " does not fit in 16 bits");
  return static_cast<std::uint16_t>(v);
}

std::string list_ids(const std::set<std::uint16_t>& ids) {
  std::string s;
  for (auto id : ids) s += (s.empty() ? "" : ",") + std::to_string(id);
  return "{" + s + "}";
}

}  // namespace

std::set<std::uint16_t> Container::transmitted() const {
  std::set<std::uint16_t> out;
  for (const auto& e : entries)
    if (e.payload_len > 0) out.insert(e.group_id);
  return out;
}

std::span<const std::uint8_t> Container::payload(std::uint16_t group_id) const {
  for (const auto& e : entries) {
    if (e.group_id == group_id) return std::span<const std::uint8_t>(y_region).subspan(e.payload_offset, e.payload_len);
  }
  throw ValidationError("unknown group id " + std::to_string(group_id));
}

GroupTable Container::group_table() const {
  std::vector<std::pair<std::uint16_t, PixelBox>> boxes;
  for (const auto& e : entries) boxes.emplace_back(e.label_id, e.bbox);
  return table_from_boxes(boxes, static_cast<int>(header.width), static_cast<int>(header.height),
                          header.latent_stride, header.rows(), header.cols());
}

void Container::validate() const {
  const auto& h = header;
  if (h.width == 0 || h.height == 0) throw ParseError("container dimensions must be positive");
  if (h.latent_stride == 0 || h.vae_factor == 0) throw ParseError("container strides must be positive");
  if (h.padded_width() % h.latent_stride != 0 || h.padded_height() % h.latent_stride != 0) {
    throw ParseError("padded size is not a multiple of the latent stride");
  }
  if (h.num_groups < 1 || entries.size() != h.num_groups) throw ParseError("group count mismatch");
  std::uint64_t next = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.group_id != i) throw ParseError("group entries must be ordered with contiguous ids");
    if (i == 0 && e.label_id != kBackgroundLabel) throw ParseError("group 0 must be background");
    if (i > 0 && e.label_id == kBackgroundLabel) throw ParseError("only group 0 may be background");
    if (e.payload_len == 0) continue;
    if (e.payload_offset < next) throw ParseError("group payloads overlap or are out of order");
    next = static_cast<std::uint64_t>(e.payload_offset) + e.payload_len;
    if (next > y_region.size()) throw ParseError("group payload exceeds the stream");
  }
}

Bytes serialize_container(const Container& c) {
  c.validate();
  ByteWriter w;
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
  w.u8(kContainerVersion);
  w.u32(c.header.width);
  w.u32(c.header.height);
  w.u8(c.header.pad_right);
  w.u8(c.header.pad_bottom);
  w.u8(c.header.latent_stride);
  w.u8(c.header.vae_factor);
  w.bytes(c.header.model_id);
  w.u16(c.header.num_groups);
  for (const auto& e : c.entries) {
    w.u16(e.group_id);
    w.u16(e.label_id);
    w.u16(u16_checked(e.bbox.x0, "bbox"));
    w.u16(u16_checked(e.bbox.y0, "bbox"));
    w.u16(u16_checked(e.bbox.x1, "bbox"));
    w.u16(u16_checked(e.bbox.y1, "bbox"));
    w.u32(e.payload_offset);
    w.u32(e.payload_len);
  }
  w.u32(static_cast<std::uint32_t>(c.z_payload.size()));
  w.bytes(c.z_payload);
  w.bytes(c.y_region);
  return w.take();
}

Container parse_container(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  Container c;
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw ParseError("not a DSCV container");
  const auto version = r.u8();
  if (version != kContainerVersion) throw ParseError("unsupported container version " + std::to_string(version));
  auto& h = c.header;
  h.width = r.u32();
  h.height = r.u32();
  h.pad_right = r.u8();
  h.pad_bottom = r.u8();
  h.latent_stride = r.u8();
  h.vae_factor = r.u8();
  const auto id = r.bytes(16);
  std::copy(id.begin(), id.end(), h.model_id.begin());
  h.num_groups = r.u16();
  for (int i = 0; i < h.num_groups; ++i) {
    GroupEntry e;
    e.group_id = r.u16();
    e.label_id = r.u16();
    e.bbox.x0 = r.u16();
    e.bbox.y0 = r.u16();
    e.bbox.x1 = r.u16();
    e.bbox.y1 = r.u16();
    e.payload_offset = r.u32();
    e.payload_len = r.u32();
    c.entries.push_back(e);
  }
  const auto z_len = r.u32();
  const auto z = r.bytes(z_len);
  c.z_payload.assign(z.begin(), z.end());
  const auto y = r.bytes(r.remaining());
  c.y_region.assign(y.begin(), y.end());
  c.validate();
  return c;
}

Container encode_container(ContainerHeader header, const LatentGrid& y_hat, const HyperLatent& z_hat,
                           const GroupTable& table, const EntropyParams& params, const U32Table& hyper_cdf,
                           const std::set<std::uint16_t>& keep, coding::EncodeStats* stats) {
  table.validate();
  if (params.mu.shape() != y_hat.data.shape() || params.sigma.shape() != y_hat.data.shape()) {
    throw ContractError("entropy params do not match the latent");
  }
  if (y_hat.rows() != table.rows || y_hat.cols() != table.cols || header.rows() != table.rows ||
      header.cols() != table.cols) {
    throw ContractError("latent grid, group table and header disagree");
  }
  if (z_hat.data.ndim() != 3 || z_hat.data.dim(0) != hyper_cdf.rows || hyper_cdf.cols != coding::kCdfLength) {
    throw ContractError("hyper latent does not match the hyper tables");
  }
  const auto ids = table.ids();
  for (auto k : keep) {
    if (!ids.count(k)) throw ValidationError("unknown group id " + std::to_string(k));
  }

  coding::EncodeStats local;
  coding::EncodeStats& st = stats ? *stats : local;
  Container c;
  header.num_groups = static_cast<std::uint16_t>(table.groups.size());
  c.header = header;

  const int cz = z_hat.data.dim(0);
  const std::size_t z_plane = z_hat.data.size() / cz;
  std::vector<std::int32_t> z_symbols(z_hat.data.size());
  std::vector<std::uint32_t> z_index(z_hat.data.size());
  for (std::size_t i = 0; i < z_hat.data.size(); ++i) {
    z_symbols[i] = static_cast<std::int32_t>(z_hat.data[i]);
    z_index[i] = static_cast<std::uint32_t>(i / z_plane);
  }
  c.z_payload = coding::encode_with_tables(z_symbols, hyper_cdf.data, z_index, &st);

  const int channels = y_hat.channels();
  const std::size_t plane = static_cast<std::size_t>(table.rows) * table.cols;
  for (const auto& g : table.groups) {
    GroupEntry e{g.group_id, g.label_id, g.bbox, static_cast<std::uint32_t>(c.y_region.size()), 0};
    if (keep.count(g.group_id)) {
      coding::SymbolPlane sp;
      for (int cell : g.cell_ids)
        for (int ch = 0; ch < channels; ++ch) {
          const std::size_t idx = ch * plane + cell;
          sp.symbols.push_back(static_cast<std::int32_t>(y_hat.data[idx]));
          sp.params.push_back({params.mu[idx], params.sigma[idx]});
        }
      const Bytes payload = coding::arith_encode(sp, &st);
      e.payload_len = static_cast<std::uint32_t>(payload.size());
      c.y_region.insert(c.y_region.end(), payload.begin(), payload.end());
    }
    c.entries.push_back(e);
  }
  if (st.clamped_symbols > 0) spdlog::warn("{} symbols clamped to the coder alphabet", st.clamped_symbols);
  return c;
}

HyperLatent decode_hyper_latent(const Container& c, const U32Table& hyper_cdf, int hyper_factor) {
  if (c.header.rows() % hyper_factor != 0 || c.header.cols() % hyper_factor != 0) {
    throw ContractError("latent grid is not divisible by the hyper factor");
  }
  const int cz = hyper_cdf.rows, hr = c.header.rows() / hyper_factor, hc = c.header.cols() / hyper_factor;
  const std::size_t plane = static_cast<std::size_t>(hr) * hc;
  std::vector<std::uint32_t> index(plane * cz);
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = static_cast<std::uint32_t>(i / plane);
  const auto symbols = coding::decode_with_tables(c.z_payload, index.size(), hyper_cdf.data, index);
  HyperLatent z{Tensor({cz, hr, hc}), hyper_factor};
  for (std::size_t i = 0; i < symbols.size(); ++i) z.data[i] = symbols[i];
  return z;
}

LatentGrid decode_latent(const Container& c, const EntropyParams& params, const std::set<std::uint16_t>* keep) {
  const GroupTable table = c.group_table();
  if (params.mu.ndim() != 3 || params.mu.dim(1) != table.rows || params.mu.dim(2) != table.cols) {
    throw ContractError("entropy params do not match the container grid");
  }
  const auto sent = c.transmitted();
  std::set<std::uint16_t> want = keep ? *keep : sent;
  std::set<std::uint16_t> missing;
  for (auto k : want)
    if (!sent.count(k)) missing.insert(k);
  if (!missing.empty()) throw ValidationError("groups not present in the stream: " + list_ids(missing));

  const int channels = params.mu.dim(0);
  const std::size_t plane = static_cast<std::size_t>(table.rows) * table.cols;
  LatentGrid y;
  y.data = Tensor({channels, table.rows, table.cols});
  y.latent_stride = c.header.latent_stride;
  y.quantized = true;
  y.pad_right = c.header.pad_right;
  y.pad_bottom = c.header.pad_bottom;
  for (const auto& g : table.groups) {
    if (!want.count(g.group_id)) continue;
    std::vector<coding::GaussianParam> p;
    for (int cell : g.cell_ids)
      for (int ch = 0; ch < channels; ++ch) p.push_back({params.mu[ch * plane + cell], params.sigma[ch * plane + cell]});
    const auto symbols = coding::arith_decode(c.payload(g.group_id), p);
    std::size_t i = 0;
    for (int cell : g.cell_ids)
      for (int ch = 0; ch < channels; ++ch) y.data[ch * plane + cell] = symbols[i++];
  }
  return y;
}

Bytes extract_partial(std::span<const std::uint8_t> bytes, const std::set<std::uint16_t>& keep) {
  const Container src = parse_container(bytes);
  const auto sent = src.transmitted();
  std::set<std::uint16_t> missing;
  for (auto k : keep)
    if (!sent.count(k)) missing.insert(k);
  if (!missing.empty()) throw ValidationError("cannot extract groups without payload: " + list_ids(missing));
  Container out = src;
  out.y_region.clear();
  for (auto& e : out.entries) {
    const auto payload = src.payload(e.group_id);
    e.payload_offset = static_cast<std::uint32_t>(out.y_region.size());
    if (keep.count(e.group_id)) {
      out.y_region.insert(out.y_region.end(), payload.begin(), payload.end());
    } else {
      e.payload_len = 0;
    }
  }
  return serialize_container(out);
}

double bpp_from_bytes(std::size_t bytes, std::size_t pixels) { return bpp_from_bits(8.0 * static_cast<double>(bytes), pixels); }

double bpp_from_bits(double bits, std::size_t pixels) {
  if (pixels == 0) throw ValidationError("bpp needs a positive pixel count");
  return bits / static_cast<double>(pixels);
}

double aggregate_bpp(const std::vector<StreamSize>& streams) {
  std::size_t bytes = 0, pixels = 0;
  for (const auto& s : streams) {
    bytes += s.bytes;
    pixels += s.pixels;
  }
  return bpp_from_bytes(bytes, pixels);
}

SectionSizes section_sizes(const Container& c) {
  return {kHeaderSize, kGroupEntrySize * c.entries.size(), 4 + c.z_payload.size(), c.y_region.size()};
}

}  // namespace discover
