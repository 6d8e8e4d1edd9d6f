#pragma once
// Byte-oriented 32-bit range coder with 16-bit cumulative frequencies.
// Carries are deferred through a 64-bit low register and resolved in the
// renormalization loop (cache + pending-0xFF scheme), which keeps the output
// platform-independent. A single coder instance is strictly sequential.

#include <cstdint>
#include <vector>

#include "fhc/types.hpp"

namespace fhc {

inline constexpr unsigned kFreqBits = 16;
inline constexpr std::uint32_t kFreqTotal = 1u << kFreqBits;
inline constexpr std::uint32_t kRangeTop = 1u << 24;

class RangeEncoder {
 public:
  // cum/freq are on the 2^16 scale; freq must be >= 1.
  void encode(std::uint32_t cum, std::uint32_t freq) {
    const std::uint32_t r = range_ >> kFreqBits;
    low_ += static_cast<std::uint64_t>(r) * cum;
    range_ = r * freq;
    while (range_ < kRangeTop) {
      shift_low();
      range_ <<= 8;
    }
  }

  std::vector<std::uint8_t> finish() {
    for (int i = 0; i < 5; ++i) shift_low();
    return std::move(out_);
  }

 private:
  void shift_low() {
    const auto hi = static_cast<std::uint32_t>(low_ >> 32);
    if (hi != 0 || low_ < 0xFF000000ull) {
      if (started_) out_.push_back(static_cast<std::uint8_t>(cache_ + hi));
      for (; pending_ > 0; --pending_) out_.push_back(static_cast<std::uint8_t>(0xFF + hi));
      cache_ = static_cast<std::uint8_t>(low_ >> 24);
      started_ = true;
    } else {
      ++pending_;
    }
    low_ = (low_ & 0x00FFFFFFull) << 8;
  }

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t pending_ = 0;
  bool started_ = false;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  RangeDecoder(const std::uint8_t* data, std::size_t size)
      : data_(data), size_(size) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
  }
  explicit RangeDecoder(const std::vector<std::uint8_t>& payload)
      : RangeDecoder(payload.data(), payload.size()) {}

  // Returns a value in [0, 2^16); the caller locates the symbol whose
  // cumulative interval contains it, then calls consume().
  std::uint32_t decode_target() const {
    const std::uint32_t r = range_ >> kFreqBits;
    const std::uint32_t v = code_ / r;
    return v >= kFreqTotal ? kFreqTotal - 1 : v;
  }

  void consume(std::uint32_t cum, std::uint32_t freq) {
    const std::uint32_t r = range_ >> kFreqBits;
    code_ -= r * cum;
    range_ = r * freq;
    while (range_ < kRangeTop) {
      code_ = (code_ << 8) | next_byte();
      range_ <<= 8;
    }
  }

 private:
  std::uint8_t next_byte() {
    if (pos_ >= size_) {
      if (overrun_++ > 8) throw StreamError("corrupted payload: decoder ran past end");
      return 0;
    }
    return data_[pos_++];
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  int overrun_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

}  // namespace fhc
