#pragma once
// ModelBundle: every trainable parameter and derived table of a scheme as
// named arrays with explicit shapes, plus a config snapshot. Binary layout
// (little-endian): magic "CPRB", version u8, config JSON (u32 length +
// bytes), array count u32, then per array: name (u16 + bytes), dtype u8,
// ndim u8, dims u32[], raw data.

#include <cstring>
#include <fstream>
#include <map>

#include "fhc/matrix.hpp"
#include "fhc/types.hpp"

namespace fhc {

enum class Dtype : std::uint8_t { f64 = 0, i32 = 1, u32 = 2, u16 = 3, u8 = 4 };

inline std::size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::f64: return 8;
    case Dtype::i32: return 4;
    case Dtype::u32: return 4;
    case Dtype::u16: return 2;
    case Dtype::u8: return 1;
  }
  throw ConfigError("bad dtype");
}

struct NamedArray {
  std::string name;
  Dtype dtype = Dtype::f64;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> bytes;

  std::size_t elements() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

class ModelBundle {
 public:
  static constexpr std::uint8_t kVersion = 1;

  void put_f64(const std::string& name, const double* data,
               std::vector<std::uint32_t> dims) {
    NamedArray a;
    a.name = name;
    a.dtype = Dtype::f64;
    a.dims = std::move(dims);
    a.bytes.resize(a.elements() * 8);
    std::memcpy(a.bytes.data(), data, a.bytes.size());
    insert(std::move(a));
  }

  void put_mat(const std::string& name, const nn::Mat& m) {
    put_f64(name, m.a.data(),
            {static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)});
  }

  void put_rvec(const std::string& name, const RVec& v) {
    put_f64(name, v.data(), {static_cast<std::uint32_t>(v.size())});
  }

  void put_u32(const std::string& name, const std::vector<std::uint32_t>& v) {
    NamedArray a;
    a.name = name;
    a.dtype = Dtype::u32;
    a.dims = {static_cast<std::uint32_t>(v.size())};
    a.bytes.resize(v.size() * 4);
    std::memcpy(a.bytes.data(), v.data(), a.bytes.size());
    insert(std::move(a));
  }

  void put_i32(const std::string& name, const std::vector<std::int32_t>& v) {
    NamedArray a;
    a.name = name;
    a.dtype = Dtype::i32;
    a.dims = {static_cast<std::uint32_t>(v.size())};
    a.bytes.resize(v.size() * 4);
    std::memcpy(a.bytes.data(), v.data(), a.bytes.size());
    insert(std::move(a));
  }

  void put_u8(const std::string& name, const std::vector<std::uint8_t>& v) {
    NamedArray a;
    a.name = name;
    a.dtype = Dtype::u8;
    a.dims = {static_cast<std::uint32_t>(v.size())};
    a.bytes = v;
    insert(std::move(a));
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const NamedArray& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw IoError("bundle array missing: " + name);
    return arrays_[it->second];
  }

  nn::Mat get_mat(const std::string& name) const {
    const NamedArray& a = get(name);
    if (a.dtype != Dtype::f64 || a.dims.size() != 2)
      throw IoError("array is not an f64 matrix: " + name);
    nn::Mat m(static_cast<int>(a.dims[0]), static_cast<int>(a.dims[1]));
    std::memcpy(m.a.data(), a.bytes.data(), a.bytes.size());
    return m;
  }

  RVec get_rvec(const std::string& name) const {
    const NamedArray& a = get(name);
    if (a.dtype != Dtype::f64) throw IoError("array is not f64: " + name);
    RVec v(a.elements());
    std::memcpy(v.data(), a.bytes.data(), a.bytes.size());
    return v;
  }

  std::vector<std::uint32_t> get_u32(const std::string& name) const {
    const NamedArray& a = get(name);
    if (a.dtype != Dtype::u32) throw IoError("array is not u32: " + name);
    std::vector<std::uint32_t> v(a.elements());
    std::memcpy(v.data(), a.bytes.data(), a.bytes.size());
    return v;
  }

  std::vector<std::int32_t> get_i32(const std::string& name) const {
    const NamedArray& a = get(name);
    if (a.dtype != Dtype::i32) throw IoError("array is not i32: " + name);
    std::vector<std::int32_t> v(a.elements());
    std::memcpy(v.data(), a.bytes.data(), a.bytes.size());
    return v;
  }

  std::vector<std::uint8_t> get_u8(const std::string& name) const {
    const NamedArray& a = get(name);
    if (a.dtype != Dtype::u8) throw IoError("array is not u8: " + name);
    return a.bytes;
  }

  const std::vector<NamedArray>& arrays() const { return arrays_; }
  std::string& config_json() { return config_json_; }
  const std::string& config_json() const { return config_json_; }

  std::uint64_t digest() const {
    std::uint64_t h = fnv1a(config_json_);
    for (const auto& a : arrays_) {
      h = fnv1a(a.name.data(), a.name.size(), h);
      h = fnv1a(a.bytes.data(), a.bytes.size(), h);
    }
    return h;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path);
    out.write("CPRB", 4);
    out.put(static_cast<char>(kVersion));
    write_u32(out, static_cast<std::uint32_t>(config_json_.size()));
    out.write(config_json_.data(), static_cast<std::streamsize>(config_json_.size()));
    write_u32(out, static_cast<std::uint32_t>(arrays_.size()));
    for (const auto& a : arrays_) {
      write_u16(out, static_cast<std::uint16_t>(a.name.size()));
      out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
      out.put(static_cast<char>(a.dtype));
      out.put(static_cast<char>(a.dims.size()));
      for (auto d : a.dims) write_u32(out, d);
      out.write(reinterpret_cast<const char*>(a.bytes.data()),
                static_cast<std::streamsize>(a.bytes.size()));
    }
    if (!out) throw IoError("write failed: " + path);
  }

  static ModelBundle load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for read: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CPRB", 4) != 0)
      throw IoError("bad bundle magic: " + path);
    const int version = in.get();
    if (version != kVersion) throw IoError("unsupported bundle version");
    ModelBundle b;
    const std::uint32_t cfg_len = read_u32(in);
    b.config_json_.resize(cfg_len);
    in.read(b.config_json_.data(), cfg_len);
    const std::uint32_t count = read_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
      NamedArray a;
      const std::uint16_t name_len = read_u16(in);
      a.name.resize(name_len);
      in.read(a.name.data(), name_len);
      a.dtype = static_cast<Dtype>(in.get());
      const int ndim = in.get();
      a.dims.resize(static_cast<std::size_t>(ndim));
      for (auto& d : a.dims) d = read_u32(in);
      a.bytes.resize(a.elements() * dtype_size(a.dtype));
      in.read(reinterpret_cast<char*>(a.bytes.data()),
              static_cast<std::streamsize>(a.bytes.size()));
      if (!in) throw IoError("truncated bundle: " + path);
      b.insert(std::move(a));
    }
    return b;
  }

 private:
  void insert(NamedArray a) {
    if (index_.count(a.name)) throw IoError("duplicate bundle array: " + a.name);
    index_[a.name] = arrays_.size();
    arrays_.push_back(std::move(a));
  }
  static void write_u16(std::ofstream& o, std::uint16_t v) {
    o.write(reinterpret_cast<const char*>(&v), 2);
  }
  static void write_u32(std::ofstream& o, std::uint32_t v) {
    o.write(reinterpret_cast<const char*>(&v), 4);
  }
  static std::uint16_t read_u16(std::ifstream& i) {
    std::uint16_t v = 0;
    i.read(reinterpret_cast<char*>(&v), 2);
    return v;
  }
  static std::uint32_t read_u32(std::ifstream& i) {
    std::uint32_t v = 0;
    i.read(reinterpret_cast<char*>(&v), 4);
    return v;
  }

  std::vector<NamedArray> arrays_;
  std::map<std::string, std::size_t> index_;
  std::string config_json_;
};

}  // namespace fhc
