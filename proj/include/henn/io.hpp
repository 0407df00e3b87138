#pragma once

// Dataset file formats.
//
//   fvecs / ivecs  per record: u32 little-endian dimension, then d 4-byte
//                  little-endian values (float / int32).
//   HENNPTS1       "HENNPTS1", u32 n, u32 d, n*d f32, all little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "henn/core.hpp"

namespace henn {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

template <class T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <class T>
void store_le(std::vector<char>& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

// Shared record walker for the *vecs formats.
template <class T>
std::vector<T> parse_vecs(const std::vector<char>& bytes, std::size_t& dim_out, std::size_t& n_out) {
  if (bytes.empty()) throw FormatError("empty vecs file", 0);
  std::size_t off = 0, d = 0, n = 0;
  std::vector<T> values;
  while (off < bytes.size()) {
    if (bytes.size() - off < 4) throw FormatError("truncated dimension header", off);
    const auto rd = load_le<std::int32_t>(bytes.data() + off);
    if (rd <= 0) throw FormatError("non-positive dimension " + std::to_string(rd), off);
    if (n == 0) {
      d = static_cast<std::size_t>(rd);
      const std::size_t rec = 4 + 4 * d;
      if (bytes.size() % rec == 0) values.reserve(bytes.size() / rec * d);
    } else if (static_cast<std::size_t>(rd) != d) {
      throw FormatError("inconsistent dimension " + std::to_string(rd) + " (expected " + std::to_string(d) + ")", off);
    }
    if (bytes.size() - off - 4 < 4 * d) throw FormatError("truncated record", off);
    off += 4;
    for (std::size_t j = 0; j < d; ++j, off += 4) values.push_back(load_le<T>(bytes.data() + off));
    ++n;
  }
  dim_out = d;
  n_out = n;
  return values;
}

}  // namespace detail

inline PointSet load_fvecs(const std::string& path) {
  const auto bytes = detail::read_file(path);
  std::size_t d = 0, n = 0;
  auto values = detail::parse_vecs<float>(bytes, d, n);
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      throw FormatError("non-finite value in record " + std::to_string(i / d), (i / d) * (4 + 4 * d) + 4 + 4 * (i % d));
  return PointSet(n, d, std::move(values));
}

inline void save_fvecs(const std::string& path, const PointSet& ps) {
  std::vector<char> out;
  out.reserve(ps.size() * (4 + 4 * ps.dim()));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    detail::store_le<std::int32_t>(out, static_cast<std::int32_t>(ps.dim()));
    for (float v : ps[i]) detail::store_le<float>(out, v);
  }
  detail::write_file(path, out);
}

inline std::vector<std::vector<std::int32_t>> load_ivecs(const std::string& path) {
  const auto bytes = detail::read_file(path);
  std::size_t d = 0, n = 0;
  auto values = detail::parse_vecs<std::int32_t>(bytes, d, n);
  std::vector<std::vector<std::int32_t>> rows(n);
  for (std::size_t i = 0; i < n; ++i)
    rows[i].assign(values.begin() + static_cast<std::ptrdiff_t>(i * d),
                   values.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
  return rows;
}

inline void save_ivecs(const std::string& path, const std::vector<std::vector<std::int32_t>>& rows) {
  std::vector<char> out;
  for (const auto& r : rows) {
    if (r.empty()) throw std::invalid_argument("save_ivecs: empty row");
    if (r.size() != rows.front().size()) throw std::invalid_argument("save_ivecs: ragged rows");
    detail::store_le<std::int32_t>(out, static_cast<std::int32_t>(r.size()));
    for (auto v : r) detail::store_le<std::int32_t>(out, v);
  }
  detail::write_file(path, out);
}

inline constexpr char kPointsMagic[8] = {'H', 'E', 'N', 'N', 'P', 'T', 'S', '1'};

inline void save_points(const std::string& path, const PointSet& ps) {
  std::vector<char> out(kPointsMagic, kPointsMagic + 8);
  detail::store_le<std::uint32_t>(out, static_cast<std::uint32_t>(ps.size()));
  detail::store_le<std::uint32_t>(out, static_cast<std::uint32_t>(ps.dim()));
  for (float v : ps.data()) detail::store_le<float>(out, v);
  detail::write_file(path, out);
}

inline PointSet load_points(const std::string& path) {
  const auto bytes = detail::read_file(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kPointsMagic, 8) != 0) throw FormatError("bad HENNPTS1 magic", 0);
  if (bytes.size() < 16) throw FormatError("truncated HENNPTS1 header", bytes.size());
  const auto n = detail::load_le<std::uint32_t>(bytes.data() + 8);
  const auto d = detail::load_le<std::uint32_t>(bytes.data() + 12);
  if (n == 0 || d == 0) throw FormatError("HENNPTS1 with n or d equal to zero", 8);
  const std::uint64_t need = 16 + std::uint64_t{4} * n * d;
  if (bytes.size() < need) throw FormatError("truncated HENNPTS1 payload", bytes.size());
  if (bytes.size() > need) throw FormatError("trailing bytes after HENNPTS1 payload", need);
  std::vector<float> data(static_cast<std::size_t>(n) * d);
  std::memcpy(data.data(), bytes.data() + 16, data.size() * 4);
  return PointSet(n, d, std::move(data));
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// Loads either a HENNPTS1 dump (".pts") or an fvecs file.
inline PointSet load_dataset(const std::string& path) {
  return ends_with(path, ".pts") ? load_points(path) : load_fvecs(path);
}

}  // namespace henn
