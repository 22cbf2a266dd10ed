#pragma once

// X-vector archives: a binary matrix of little-endian float32 rows with a
// (T, D) uint32 header, paired line-by-line with a text segments file.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vbdiar/error.hpp"
#include "vbdiar/timeline.hpp"

namespace vbdiar {

struct XvectorSegment {
  std::string recording;
  double onset = 0.0;
  double offset = 0.0;
};

// All x-vectors of one recording, in segment order.
struct RecordingXvectors {
  std::string id;
  Eigen::MatrixXd xvectors;  // T x D
  std::vector<XvectorSegment> segments;
};

namespace detail {

inline std::uint32_t load_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline void store_u32_le(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFFu));
}

}  // namespace detail

inline Eigen::MatrixXd parse_xvector_archive(std::string_view bytes) {
  if (bytes.size() < 8) throw DataError("x-vector archive shorter than its 8-byte header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t rows = detail::load_u32_le(p), cols = detail::load_u32_le(p + 4);
  const std::uint64_t expected = 8 + 4ull * rows * cols;
  if (bytes.size() != expected)
    throw DataError("x-vector archive declares " + std::to_string(rows) + "x" + std::to_string(cols) + " (" +
                    std::to_string(expected) + " bytes) but has " + std::to_string(bytes.size()) + " bytes");
  if (rows > 0 && cols == 0) throw DataError("x-vector archive has zero dimension");
  Eigen::MatrixXd x(rows, cols);
  p += 8;
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < cols; ++j, p += 4) {
      const std::uint32_t raw = detail::load_u32_le(p);
      const float v = std::bit_cast<float>(raw);
      if (!std::isfinite(v))
        throw DataError("non-finite value in x-vector archive at row " + std::to_string(i) + ", column " +
                        std::to_string(j));
      x(i, j) = v;
    }
  return x;
}

inline std::string write_xvector_archive(const Eigen::MatrixXd& x) {
  std::string out;
  out.reserve(8 + 4 * static_cast<std::size_t>(x.size()));
  detail::store_u32_le(out, static_cast<std::uint32_t>(x.rows()));
  detail::store_u32_le(out, static_cast<std::uint32_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      detail::store_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(x(i, j))));
  return out;
}

inline std::vector<XvectorSegment> parse_segments(std::string_view text) {
  std::vector<XvectorSegment> out;
  detail::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto f = detail::split_ws(line);
    if (f.empty() || f[0].front() == '#') return;
    if (f.size() != 3) throw ParseError("expected '<recording> <onset> <offset>'", line_no);
    XvectorSegment s{std::string(f[0])};
    if (!detail::parse_double(f[1], s.onset) || s.onset < 0) throw ParseError("bad onset '" + std::string(f[1]) + "'", line_no);
    if (!detail::parse_double(f[2], s.offset) || !(s.offset > s.onset))
      throw ParseError("offset must be a number greater than the onset", line_no);
    out.push_back(std::move(s));
  });
  return out;
}

inline std::string write_segments(const std::vector<XvectorSegment>& segments) {
  std::string out;
  for (const auto& s : segments)
    out += s.recording + " " + detail::format_fixed(s.onset, 3) + " " + detail::format_fixed(s.offset, 3) + "\n";
  return out;
}

// Splits the archive by recording id; recordings come back sorted by id.
inline std::vector<RecordingXvectors> group_by_recording(const Eigen::MatrixXd& x,
                                                         const std::vector<XvectorSegment>& segments) {
  if (static_cast<std::size_t>(x.rows()) != segments.size())
    throw DataError("archive has " + std::to_string(x.rows()) + " x-vectors but the segments file has " +
                    std::to_string(segments.size()) + " lines");
  std::map<std::string, std::vector<Eigen::Index>> rows;
  for (std::size_t i = 0; i < segments.size(); ++i) rows[segments[i].recording].push_back(static_cast<Eigen::Index>(i));

  std::vector<RecordingXvectors> out;
  for (const auto& [id, idx] : rows) {
    RecordingXvectors rec{id, Eigen::MatrixXd(static_cast<Eigen::Index>(idx.size()), x.cols()), {}};
    for (std::size_t k = 0; k < idx.size(); ++k) {
      rec.xvectors.row(static_cast<Eigen::Index>(k)) = x.row(idx[k]);
      const auto& seg = segments[static_cast<std::size_t>(idx[k])];
      if (!rec.segments.empty() && seg.onset < rec.segments.back().onset)
        throw DataError("recording " + id + ": segments are not sorted by onset");
      rec.segments.push_back(seg);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace vbdiar
