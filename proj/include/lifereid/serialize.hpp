#pragma once

// Binary files for checkpoints, buffers and gallery snapshots. All integers
// and doubles are written little-endian in their native width, after a
// four-byte magic and a u32 format version.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "lifereid/encoder.hpp"
#include "lifereid/error.hpp"
#include "lifereid/evaluation.hpp"
#include "lifereid/memory.hpp"
#include "lifereid/rng.hpp"

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace lifereid {

inline constexpr std::uint32_t kFormatVersion = 1;

namespace detail {

class BinWriter {
 public:
  explicit BinWriter(std::ostream& os) : os_(os) {}
  template <class T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    os_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void magic(std::string_view m) {
    os_.write(m.data(), 4);
    put<std::uint32_t>(kFormatVersion);
  }
  void doubles(std::span<const double> v) {
    put<std::uint64_t>(v.size());
    os_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }

 private:
  std::ostream& os_;
};

class BinReader {
 public:
  BinReader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}
  template <class T>
  T get() {
    T v;
    is_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is_) fail("truncated");
    return v;
  }
  void magic(std::string_view m) {
    char buf[4];
    is_.read(buf, 4);
    if (!is_ || std::string_view(buf, 4) != m) fail("bad magic, expected " + std::string(m));
    const auto ver = get<std::uint32_t>();
    if (ver != kFormatVersion) fail("unsupported version " + std::to_string(ver));
  }
  std::vector<double> doubles(std::uint64_t limit = 1ULL << 32) {
    const auto n = get<std::uint64_t>();
    if (n > limit) fail("implausible array length");
    std::vector<double> v(n);
    is_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is_) fail("truncated");
    return v;
  }
  void expect_end() {
    if (is_.peek() != std::char_traits<char>::eof()) fail("trailing bytes");
  }
  [[noreturn]] void fail(const std::string& msg) const { throw Error(ErrorCode::Io, what_ + ": " + msg); }

 private:
  std::istream& is_;
  std::string what_;
};

template <class T, class W>
void save_with(const std::string& path, const T& value, W writer) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
  writer(os, value);
  os.flush();
  if (!os) throw Error(ErrorCode::Io, "failed writing " + path);
}

template <class R>
auto load_with(const std::string& path, R reader) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path);
  auto v = reader(is, path);
  BinReader(is, path).expect_end();
  return v;
}

}  // namespace detail

/// Momentum encoder after a step, plus the training RNG state.
struct Checkpoint {
  std::uint64_t step = 0;
  EncoderParams momentum;
  Rng::State rng_state{};

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline void write_checkpoint(std::ostream& os, const Checkpoint& c) {
  detail::BinWriter w(os);
  w.magic("LRCK");
  w.put<std::uint64_t>(c.step);
  const auto& widths = c.momentum.layout().widths;
  w.put<std::uint64_t>(widths.size());
  for (auto x : widths) w.put<std::uint64_t>(x);
  w.doubles(c.momentum.values());
  for (auto s : c.rng_state) w.put<std::uint64_t>(s);
}

inline Checkpoint read_checkpoint(std::istream& is, const std::string& what = "checkpoint") {
  detail::BinReader r(is, what);
  r.magic("LRCK");
  Checkpoint c;
  c.step = r.get<std::uint64_t>();
  const auto nw = r.get<std::uint64_t>();
  if (nw < 2 || nw > 64) r.fail("bad layout depth");
  Layout layout;
  for (std::uint64_t i = 0; i < nw; ++i) layout.widths.push_back(r.get<std::uint64_t>());
  auto values = r.doubles();
  if (values.size() != layout.param_count()) r.fail("parameter count does not match layout");
  c.momentum = EncoderParams(std::move(layout), std::move(values));
  for (auto& s : c.rng_state) s = r.get<std::uint64_t>();
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  detail::save_with(path, c, write_checkpoint);
}
inline Checkpoint load_checkpoint(const std::string& path) { return detail::load_with(path, read_checkpoint); }

inline void write_buffer(std::ostream& os, const MemoryBuffer& b) {
  detail::BinWriter w(os);
  w.magic("LRBF");
  w.put<std::uint64_t>(b.capacity());
  w.put<std::int64_t>(b.next_identity());
  w.put<std::uint64_t>(b.size());
  for (const auto& e : b.entries()) {
    w.doubles(e.sample);
    w.doubles(e.prototype.values());
    w.put<std::int32_t>(e.source_domain);
    w.put<std::int64_t>(e.pseudo_identity);
    w.put<std::uint64_t>(e.source_cluster_size);
    w.put<std::int32_t>(e.camera_id);
    w.put<std::uint64_t>(e.step_stored);
  }
}

inline MemoryBuffer read_buffer(std::istream& is, const std::string& what = "buffer") {
  detail::BinReader r(is, what);
  r.magic("LRBF");
  const auto capacity = r.get<std::uint64_t>();
  const auto next_id = r.get<std::int64_t>();
  const auto n = r.get<std::uint64_t>();
  if (n > capacity) r.fail("more entries than capacity");
  std::vector<BufferEntry> entries;
  entries.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    BufferEntry e;
    e.sample = r.doubles();
    e.prototype = FeatureVector::from_unit(r.doubles());
    e.source_domain = r.get<std::int32_t>();
    e.pseudo_identity = r.get<std::int64_t>();
    e.source_cluster_size = r.get<std::uint64_t>();
    e.camera_id = r.get<std::int32_t>();
    e.step_stored = r.get<std::uint64_t>();
    entries.push_back(std::move(e));
  }
  return MemoryBuffer(capacity, std::move(entries), next_id);
}

inline void write_gallery(std::ostream& os, const GallerySnapshot& g) {
  detail::BinWriter w(os);
  w.magic("LRGS");
  w.put<std::int32_t>(g.domain_id);
  w.put<std::uint64_t>(g.step_extracted);
  const std::uint64_t n = g.features.size();
  const std::uint64_t d = n ? g.features.front().size() : 0;
  w.put<std::uint64_t>(n);
  w.put<std::uint64_t>(d);
  for (std::size_t i = 0; i < n; ++i) {
    if (g.features[i].size() != d) throw Error(ErrorCode::DimensionMismatch, "gallery features differ in size");
    for (double v : g.features[i].values()) w.put<double>(v);
    w.put<std::int32_t>(g.identity_ids[i]);
    w.put<std::int32_t>(g.camera_ids[i]);
  }
}

inline GallerySnapshot read_gallery(std::istream& is, const std::string& what = "gallery") {
  detail::BinReader r(is, what);
  r.magic("LRGS");
  GallerySnapshot g;
  g.domain_id = r.get<std::int32_t>();
  g.step_extracted = r.get<std::uint64_t>();
  const auto n = r.get<std::uint64_t>();
  const auto d = r.get<std::uint64_t>();
  if (n > (1ULL << 28) || d > (1ULL << 20)) r.fail("implausible gallery shape");
  std::vector<double> f(d);
  for (std::uint64_t i = 0; i < n; ++i) {
    for (auto& v : f) v = r.get<double>();
    g.features.push_back(FeatureVector::from_unit(f));
    g.identity_ids.push_back(r.get<std::int32_t>());
    g.camera_ids.push_back(r.get<std::int32_t>());
  }
  return g;
}

inline void save_buffer(const std::string& path, const MemoryBuffer& b) { detail::save_with(path, b, write_buffer); }
inline MemoryBuffer load_buffer(const std::string& path) { return detail::load_with(path, read_buffer); }
inline void save_gallery(const std::string& path, const GallerySnapshot& g) {
  detail::save_with(path, g, write_gallery);
}
inline GallerySnapshot load_gallery(const std::string& path) { return detail::load_with(path, read_gallery); }

}  // namespace lifereid
