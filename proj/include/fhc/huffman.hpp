#pragma once
// Canonical Huffman coding for vector-quantizer indices. Only the code
// lengths are serialized; codes are reassigned canonically (sorted by length,
// then symbol) on both sides.

#include <algorithm>
#include <cstdint>
#include <queue>

#include "fhc/bitio.hpp"
#include "fhc/types.hpp"

namespace fhc {

// Huffman code lengths from symbol weights. Zero weights are bumped to one so
// every symbol stays encodable. Tie-breaking is by (weight, lowest contained
// symbol), which makes the lengths platform-independent.
inline std::vector<std::uint8_t> huffman_code_lengths(
    const std::vector<std::uint64_t>& weights) {
  const std::size_t n = weights.size();
  if (n == 0) throw ShapeError("empty alphabet");
  if (n == 1) return {1};

  struct Node {
    std::uint64_t w;
    std::size_t min_sym;
    int left, right;  // -1 for leaves
    std::size_t sym;
  };
  std::vector<Node> nodes;
  nodes.reserve(2 * n);
  auto cmp = [&nodes](int a, int b) {
    if (nodes[a].w != nodes[b].w) return nodes[a].w > nodes[b].w;
    return nodes[a].min_sym > nodes[b].min_sym;
  };
  std::priority_queue<int, std::vector<int>, decltype(cmp)> heap(cmp);
  for (std::size_t i = 0; i < n; ++i) {
    nodes.push_back({std::max<std::uint64_t>(weights[i], 1), i, -1, -1, i});
    heap.push(static_cast<int>(i));
  }
  while (heap.size() > 1) {
    const int a = heap.top(); heap.pop();
    const int b = heap.top(); heap.pop();
    nodes.push_back({nodes[a].w + nodes[b].w,
                     std::min(nodes[a].min_sym, nodes[b].min_sym), a, b, 0});
    heap.push(static_cast<int>(nodes.size() - 1));
  }
  std::vector<std::uint8_t> lengths(n, 0);
  // Depth-first traversal from the root.
  std::vector<std::pair<int, int>> stack = {{heap.top(), 0}};
  while (!stack.empty()) {
    auto [idx, depth] = stack.back();
    stack.pop_back();
    if (nodes[idx].left < 0) {
      lengths[nodes[idx].sym] = static_cast<std::uint8_t>(std::max(depth, 1));
    } else {
      stack.emplace_back(nodes[idx].left, depth + 1);
      stack.emplace_back(nodes[idx].right, depth + 1);
    }
  }
  return lengths;
}

inline bool kraft_holds(const std::vector<std::uint8_t>& lengths) {
  double sum = 0.0;
  for (auto l : lengths) sum += std::pow(2.0, -static_cast<double>(l));
  return sum <= 1.0 + 1e-12;
}

// Canonical code table built from lengths alone.
class CanonicalHuffman {
 public:
  explicit CanonicalHuffman(std::vector<std::uint8_t> lengths)
      : lengths_(std::move(lengths)) {
    if (!kraft_holds(lengths_)) throw StreamError("code lengths violate Kraft");
    const std::size_t n = lengths_.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
      if (lengths_[a] != lengths_[b]) return lengths_[a] < lengths_[b];
      return a < b;
    });
    codes_.resize(n, 0);
    max_len_ = 0;
    for (auto l : lengths_) max_len_ = std::max<unsigned>(max_len_, l);
    first_code_.assign(max_len_ + 2, 0);
    first_index_.assign(max_len_ + 2, 0);
    count_.assign(max_len_ + 2, 0);
    sorted_symbols_ = order;
    for (auto idx : order) ++count_[lengths_[idx]];
    std::uint32_t code = 0;
    std::size_t index = 0;
    for (unsigned l = 1; l <= max_len_; ++l) {
      first_code_[l] = code;
      first_index_[l] = index;
      for (std::size_t i = 0; i < count_[l]; ++i)
        codes_[sorted_symbols_[index + i]] = code + static_cast<std::uint32_t>(i);
      code = (code + static_cast<std::uint32_t>(count_[l])) << 1;
      index += count_[l];
    }
  }

  const std::vector<std::uint8_t>& lengths() const { return lengths_; }

  void encode(std::uint32_t symbol, BitWriter& bw) const {
    bw.put_bits(codes_[symbol], lengths_[symbol]);
  }

  std::uint32_t decode(BitReader& br) const {
    std::uint32_t code = 0;
    for (unsigned l = 1; l <= max_len_; ++l) {
      code = (code << 1) | br.get_bit();
      const std::uint32_t offset = code - first_code_[l];
      if (code >= first_code_[l] && offset < count_[l])
        return static_cast<std::uint32_t>(sorted_symbols_[first_index_[l] + offset]);
    }
    throw StreamError("invalid Huffman prefix");
  }

 private:
  std::vector<std::uint8_t> lengths_;
  std::vector<std::uint32_t> codes_;
  std::vector<std::size_t> sorted_symbols_;
  std::vector<std::uint32_t> first_code_;
  std::vector<std::size_t> first_index_;
  std::vector<std::size_t> count_;
  unsigned max_len_ = 0;
};

}  // namespace fhc
