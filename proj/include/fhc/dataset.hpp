#pragma once
// Frame dataset container and generation. Files are flat binary: header
// (magic "CPRF", version, FrameSpec fields, frame count, little-endian), then
// interleaved 32-bit float I/Q samples, one fixed-length record per frame.
// Generation is seed-parameterized per frame, so parallel and serial runs
// produce identical datasets.

#include <cstring>
#include <fstream>

#include "fhc/frame.hpp"
#include "fhc/threading.hpp"

namespace fhc {

inline constexpr std::uint8_t kDatasetVersion = 1;

// frame_len 0 means the natural compressor-input length; decoded downlink
// output re-inserts the CP and stores n_fft + n_cp samples instead.
inline void write_dataset(const std::string& path, const FrameSpec& spec,
                          const std::vector<CVec>& frames, std::size_t frame_len = 0) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  out.write("CPRF", 4);
  out.put(static_cast<char>(kDatasetVersion));
  out.put(static_cast<char>(spec.scenario));
  out.put(static_cast<char>(spec.mod_order));
  auto w32 = [&out](std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
  };
  w32(static_cast<std::uint32_t>(spec.n_fft));
  w32(static_cast<std::uint32_t>(spec.n_sym));
  w32(static_cast<std::uint32_t>(spec.n_cp));
  w32(static_cast<std::uint32_t>(frames.size()));
  const std::size_t len = frame_len ? frame_len
                                    : static_cast<std::size_t>(spec.compress_len());
  w32(static_cast<std::uint32_t>(len));
  std::vector<float> buf(2 * len);
  for (const auto& f : frames) {
    if (f.size() != len) throw ShapeError("frame length does not match spec");
    for (std::size_t i = 0; i < len; ++i) {
      buf[2 * i] = static_cast<float>(f[i].real());
      buf[2 * i + 1] = static_cast<float>(f[i].imag());
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed: " + path);
}

struct Dataset {
  std::shared_ptr<const FrameSpec> spec;
  std::vector<CVec> frames;
};

inline Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for read: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CPRF", 4) != 0)
    throw IoError("bad dataset magic: " + path);
  if (in.get() != kDatasetVersion) throw IoError("unsupported dataset version");
  const auto scenario = static_cast<Scenario>(in.get());
  const int mod_order = in.get();
  auto r32 = [&in] {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  const int n_fft = static_cast<int>(r32());
  const int n_sym = static_cast<int>(r32());
  const int n_cp = static_cast<int>(r32());
  const std::uint32_t count = r32();
  const std::size_t len = r32();
  Dataset ds;
  ds.spec = std::make_shared<const FrameSpec>(
      make_frame_spec(scenario, n_fft, n_sym, n_cp, mod_order));
  if (len != static_cast<std::size_t>(ds.spec->compress_len()) &&
      len != static_cast<std::size_t>(n_fft + n_cp))
    throw IoError("dataset frame length inconsistent with its spec: " + path);
  std::vector<float> buf(2 * len);
  ds.frames.resize(count);
  for (auto& f : ds.frames) {
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw IoError("truncated dataset: " + path);
    f.resize(len);
    for (std::size_t i = 0; i < len; ++i)
      f[i] = Cpx(static_cast<double>(buf[2 * i]), static_cast<double>(buf[2 * i + 1]));
  }
  return ds;
}

// One frame of the compressor's input: downlink is the noiseless CP-less BBU
// signal; uplink is the received (faded, noisy) frame including its CP.
inline CVec generate_frame(const std::shared_ptr<const FrameSpec>& spec,
                           const ChannelSpec& ch, std::uint64_t seed,
                           std::uint64_t index) {
  Rng rng = Rng::substream(seed, index);
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(spec->bits_per_frame()));
  for (auto& b : bits) b = static_cast<std::uint8_t>(rng.next_u64() & 1u);
  if (spec->scenario == Scenario::downlink)
    return build_downlink_frame(bits, spec).samples;
  ComplexFrame tx = build_uplink_tx_frame(bits, spec);
  return apply_channel(tx, ch, rng).samples;
}

inline std::vector<CVec> generate_frames(const std::shared_ptr<const FrameSpec>& spec,
                                         const ChannelSpec& ch, std::size_t count,
                                         std::uint64_t seed, int threads = 1) {
  std::vector<CVec> frames(count);
  parallel_for(count, threads, [&](std::size_t i) {
    frames[i] = generate_frame(spec, ch, seed, i);
  });
  return frames;
}

}  // namespace fhc
