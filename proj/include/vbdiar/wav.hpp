#pragma once

// Mono 16-bit linear PCM WAV reading and writing.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vbdiar/error.hpp"
#include "vbdiar/io.hpp"

namespace vbdiar {

struct Wave {
  std::uint32_t sample_rate = 16000;
  std::vector<std::int16_t> samples;

  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
  bool operator==(const Wave&) const = default;
};

namespace detail {

inline std::uint32_t le32(std::string_view b, std::size_t at) {
  const auto* p = reinterpret_cast<const unsigned char*>(b.data() + at);
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline std::uint16_t le16(std::string_view b, std::size_t at) {
  const auto* p = reinterpret_cast<const unsigned char*>(b.data() + at);
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

inline void put_le(std::string& out, std::uint32_t v, int bytes) {
  for (int k = 0; k < bytes; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFFu));
}

}  // namespace detail

inline Wave parse_wav(std::string_view bytes, std::string_view name = "WAV data") {
  const auto fail = [&](const std::string& why) { throw DataError(std::string(name) + ": " + why); };
  if (bytes.size() < 12 || bytes.substr(0, 4) != "RIFF" || bytes.substr(8, 4) != "WAVE") fail("not a RIFF/WAVE file");

  Wave w;
  bool have_fmt = false, have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const auto id = bytes.substr(pos, 4);
    const std::size_t size = detail::le32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) fail("chunk '" + std::string(id) + "' runs past the end of the file");
    if (id == "fmt ") {
      if (size < 16) fail("fmt chunk too short");
      const auto format = detail::le16(bytes, body), channels = detail::le16(bytes, body + 2);
      const auto bits = detail::le16(bytes, body + 14);
      if (format != 1) fail("only linear PCM is supported (format tag " + std::to_string(format) + ")");
      if (channels != 1) fail("only mono audio is supported (" + std::to_string(channels) + " channels)");
      if (bits != 16) fail("only 16-bit samples are supported (" + std::to_string(bits) + " bits)");
      w.sample_rate = detail::le32(bytes, body + 4);
      if (w.sample_rate == 0) fail("zero sample rate");
      have_fmt = true;
    } else if (id == "data") {
      if (size % 2) fail("data chunk has an odd byte count");
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = static_cast<std::int16_t>(detail::le16(bytes, body + 2 * i));
      have_data = true;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) fail("missing fmt chunk");
  if (!have_data) fail("missing data chunk");
  return w;
}

inline std::string write_wav(const Wave& w) {
  const auto data_bytes = static_cast<std::uint32_t>(2 * w.samples.size());
  std::string out = "RIFF";
  detail::put_le(out, 36 + data_bytes, 4);
  out += "WAVEfmt ";
  detail::put_le(out, 16, 4);
  detail::put_le(out, 1, 2);  // PCM
  detail::put_le(out, 1, 2);  // mono
  detail::put_le(out, w.sample_rate, 4);
  detail::put_le(out, w.sample_rate * 2, 4);
  detail::put_le(out, 2, 2);
  detail::put_le(out, 16, 2);
  out += "data";
  detail::put_le(out, data_bytes, 4);
  for (auto s : w.samples) detail::put_le(out, static_cast<std::uint16_t>(s), 2);
  return out;
}

inline Wave load_wav(const std::filesystem::path& path) { return parse_wav(read_file(path, "audio file"), path.string()); }

inline void save_wav(const std::filesystem::path& path, const Wave& w) { write_file(path, write_wav(w)); }

}  // namespace vbdiar
