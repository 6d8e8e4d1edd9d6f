#pragma once
// Bit-exact frame container b = b_t || b_s. Record layout (big-endian
// integers): magic "CPRZ", version u8 = 1, scheme u8, scenario u8, N' u16,
// N_t u16, Q_s u8, per-channel symbol count u32 (schemes 4 and 5 only), then
// a rate-index byte (scheme 4) or layer-index byte (scheme 5), then the
// bit-packed scaling factors padded to a byte boundary, then the byte-aligned
// payload.

#include <cstring>
#include <fstream>

#include "fhc/bitio.hpp"
#include "fhc/block_scaling.hpp"
#include "fhc/types.hpp"

namespace fhc {

enum class SchemeId : std::uint8_t {
  scalar_q = 0,
  vector_q = 1,
  latent_uniform = 2,
  latent_vq = 3,
  neural = 4,
  refinement = 5,
};

inline const char* scheme_name(SchemeId s) {
  switch (s) {
    case SchemeId::scalar_q: return "sq";
    case SchemeId::vector_q: return "vq";
    case SchemeId::latent_uniform: return "latent-uq";
    case SchemeId::latent_vq: return "latent-vq";
    case SchemeId::neural: return "neural";
    case SchemeId::refinement: return "refinement";
  }
  return "?";
}

inline constexpr std::uint8_t kBitstreamVersion = 1;
inline constexpr std::uint8_t kNoRateIndex = 0xFF;

struct FrameBitstream {
  SchemeId scheme = SchemeId::scalar_q;
  std::uint8_t scenario = 0;
  std::uint16_t n_prime = 0;
  std::uint16_t n_t = 0;
  std::uint8_t q_s = 8;
  std::uint32_t sym_count = 0;     // schemes 4/5: symbols per channel
  std::uint8_t rate_index = kNoRateIndex;  // scheme 4
  std::uint8_t layer_index = 0;    // scheme 5
  std::vector<std::uint32_t> t_factors;
  std::vector<std::uint8_t> payload;
  std::uint64_t payload_bits = 0;  // semantic payload length

  bool has_sym_count() const {
    return scheme == SchemeId::neural || scheme == SchemeId::refinement;
  }
  // Bits counted by the CR formula: b_t plus the semantic payload.
  std::uint64_t content_bits() const {
    return payload_bits + static_cast<std::uint64_t>(q_s) * t_factors.size();
  }
};

namespace detail {
inline void put_u16(std::vector<std::uint8_t>& v, std::uint16_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}
inline void put_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}
struct ByteCursor {
  const std::uint8_t* p;
  std::size_t n;
  std::size_t pos = 0;
  std::uint8_t u8() {
    if (pos + 1 > n) throw StreamError("truncated bitstream header");
    return p[pos++];
  }
  std::uint16_t u16() {
    const std::uint16_t hi = u8();
    return static_cast<std::uint16_t>((hi << 8) | u8());
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | u8();
    return v;
  }
};
}  // namespace detail

inline std::vector<std::uint8_t> serialize(const FrameBitstream& f) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'C', 'P', 'R', 'Z'});
  out.push_back(kBitstreamVersion);
  out.push_back(static_cast<std::uint8_t>(f.scheme));
  out.push_back(f.scenario);
  detail::put_u16(out, f.n_prime);
  detail::put_u16(out, f.n_t);
  out.push_back(f.q_s);
  if (f.has_sym_count()) detail::put_u32(out, f.sym_count);
  if (f.scheme == SchemeId::neural) out.push_back(f.rate_index);
  if (f.scheme == SchemeId::refinement) out.push_back(f.layer_index);
  BitWriter bw;
  for (auto t : f.t_factors) bw.put_bits(t, f.q_s);
  const auto bt = bw.bytes();
  out.insert(out.end(), bt.begin(), bt.end());
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

inline FrameBitstream parse_bitstream(const std::uint8_t* data, std::size_t size,
                                      std::uint64_t payload_bits_hint = 0) {
  detail::ByteCursor c{data, size};
  if (size < 4 || std::memcmp(data, "CPRZ", 4) != 0)
    throw StreamError("bad bitstream magic");
  c.pos = 4;
  FrameBitstream f;
  const std::uint8_t version = c.u8();
  if (version != kBitstreamVersion)
    throw StreamError("unsupported bitstream version " + std::to_string(version));
  const std::uint8_t scheme_raw = c.u8();
  if (scheme_raw > static_cast<std::uint8_t>(SchemeId::refinement))
    throw StreamError("unknown scheme id");
  f.scheme = static_cast<SchemeId>(scheme_raw);
  f.scenario = c.u8();
  f.n_prime = c.u16();
  f.n_t = c.u16();
  f.q_s = c.u8();
  if (f.has_sym_count()) f.sym_count = c.u32();
  if (f.scheme == SchemeId::neural) f.rate_index = c.u8();
  if (f.scheme == SchemeId::refinement) f.layer_index = c.u8();
  const std::size_t bt_bits = static_cast<std::size_t>(f.q_s) * f.n_t;
  const std::size_t bt_bytes = (bt_bits + 7) / 8;
  if (c.pos + bt_bytes > size) throw StreamError("truncated scaling segment");
  BitReader br(data + c.pos, bt_bits);
  f.t_factors.resize(f.n_t);
  for (auto& t : f.t_factors)
    t = static_cast<std::uint32_t>(br.get_bits(f.q_s));
  c.pos += bt_bytes;
  f.payload.assign(data + c.pos, data + size);
  f.payload_bits = payload_bits_hint ? payload_bits_hint : 8ull * f.payload.size();
  return f;
}

inline FrameBitstream parse_bitstream(const std::vector<std::uint8_t>& bytes,
                                      std::uint64_t payload_bits_hint = 0) {
  return parse_bitstream(bytes.data(), bytes.size(), payload_bits_hint);
}

// ---------------------------------------------------------------------------
// Multi-frame stream file: "CPRS", version u8, frame count u32, then per
// frame a u32 record length followed by the record bytes. (Records are
// self-describing; the length prefix is file framing only.)

inline void write_stream_file(const std::string& path,
                              const std::vector<FrameBitstream>& frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  std::vector<std::uint8_t> head = {'C', 'P', 'R', 'S', kBitstreamVersion};
  detail::put_u32(head, static_cast<std::uint32_t>(frames.size()));
  out.write(reinterpret_cast<const char*>(head.data()),
            static_cast<std::streamsize>(head.size()));
  for (const auto& f : frames) {
    const auto rec = serialize(f);
    std::vector<std::uint8_t> len;
    detail::put_u32(len, static_cast<std::uint32_t>(rec.size()));
    out.write(reinterpret_cast<const char*>(len.data()), 4);
    out.write(reinterpret_cast<const char*>(rec.data()),
              static_cast<std::streamsize>(rec.size()));
  }
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<FrameBitstream> read_stream_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for read: " + path);
  std::vector<std::uint8_t> head(9);
  in.read(reinterpret_cast<char*>(head.data()), 9);
  if (!in || std::memcmp(head.data(), "CPRS", 4) != 0)
    throw StreamError("bad stream file magic: " + path);
  if (head[4] != kBitstreamVersion) throw StreamError("unsupported stream version");
  std::uint32_t count = 0;
  for (int i = 5; i < 9; ++i) count = (count << 8) | head[static_cast<std::size_t>(i)];
  std::vector<FrameBitstream> frames;
  frames.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint8_t lenb[4];
    in.read(reinterpret_cast<char*>(lenb), 4);
    if (!in) throw StreamError("truncated stream file");
    std::uint32_t len = 0;
    for (auto b : lenb) len = (len << 8) | b;
    std::vector<std::uint8_t> rec(len);
    in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(len));
    if (!in) throw StreamError("truncated stream record");
    frames.push_back(parse_bitstream(rec));
  }
  return frames;
}

}  // namespace fhc
