#pragma once
// MSB-first bit packing. All bit-level serialization (scaling factors,
// quantizer indices, Huffman codewords) goes through these two classes so the
// wire format is identical everywhere.

#include <cstdint>
#include <vector>

#include "fhc/types.hpp"

namespace fhc {

class BitWriter {
 public:
  void put_bit(unsigned bit) {
    const std::size_t byte = nbits_ >> 3;
    if (byte >= buf_.size()) buf_.push_back(0);
    if (bit & 1u) buf_[byte] |= static_cast<std::uint8_t>(0x80u >> (nbits_ & 7));
    ++nbits_;
  }

  // Writes the low `width` bits of v, most significant first.
  void put_bits(std::uint64_t v, unsigned width) {
    for (unsigned i = width; i-- > 0;) put_bit(static_cast<unsigned>(v >> i) & 1u);
  }

  std::size_t bit_count() const { return nbits_; }
  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  std::vector<std::uint8_t> take() { nbits_ = 0; return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
  std::size_t nbits_ = 0;
};

class BitReader {
 public:
  BitReader(const std::uint8_t* data, std::size_t nbits)
      : data_(data), nbits_(nbits) {}
  BitReader(const std::vector<std::uint8_t>& bytes, std::size_t nbits)
      : data_(bytes.data()), nbits_(nbits) {}

  unsigned get_bit() {
    if (pos_ >= nbits_) throw StreamError("bit stream exhausted");
    const unsigned b = (data_[pos_ >> 3] >> (7 - (pos_ & 7))) & 1u;
    ++pos_;
    return b;
  }

  std::uint64_t get_bits(unsigned width) {
    std::uint64_t v = 0;
    for (unsigned i = 0; i < width; ++i) v = (v << 1) | get_bit();
    return v;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return nbits_ - pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t nbits_;
  std::size_t pos_ = 0;
};

}  // namespace fhc
