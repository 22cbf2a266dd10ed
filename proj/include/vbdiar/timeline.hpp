#pragma once

// Continuous-time speaker annotations, RTTM I/O and sweep-line measures.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "vbdiar/error.hpp"

namespace vbdiar {

struct Segment {
  double onset = 0.0;     // seconds
  double duration = 0.0;  // seconds, > 0
  std::string speaker;

  double offset() const { return onset + duration; }

  friend bool operator==(const Segment&, const Segment&) = default;
};

inline bool segment_order(const Segment& a, const Segment& b) {
  return std::tie(a.onset, a.speaker, a.duration) < std::tie(b.onset, b.speaker, b.duration);
}

// A recording's labeled speech. Segments are kept sorted by (onset, speaker)
// and same-speaker overlaps are merged on construction.
class Annotation {
 public:
  Annotation() = default;

  explicit Annotation(std::string recording_id, std::vector<Segment> segments = {})
      : recording_id_(std::move(recording_id)), segments_(std::move(segments)) {
    for (const auto& s : segments_) validate(s);
    normalize();
  }

  const std::string& recording_id() const { return recording_id_; }
  const std::vector<Segment>& segments() const { return segments_; }
  bool empty() const { return segments_.empty(); }

  // Number of same-speaker overlaps folded together by the last normalization.
  std::size_t merged_overlaps() const { return merged_; }

  void add(Segment s) {
    validate(s);
    segments_.push_back(std::move(s));
    normalize();
  }

  void add(std::span<const Segment> more) {
    for (const auto& s : more) {
      validate(s);
      segments_.push_back(s);
    }
    normalize();
  }

  // Sorted distinct speaker labels.
  std::vector<std::string> speakers() const {
    std::set<std::string> labels;
    for (const auto& s : segments_) labels.insert(s.speaker);
    return {labels.begin(), labels.end()};
  }

  // End time of the last segment (0 for an empty annotation).
  double extent() const {
    double end = 0.0;
    for (const auto& s : segments_) end = std::max(end, s.offset());
    return end;
  }

  // Segments of one speaker, in time order.
  std::vector<Segment> segments_of(std::string_view speaker) const {
    std::vector<Segment> out;
    for (const auto& s : segments_)
      if (s.speaker == speaker) out.push_back(s);
    return out;
  }

  friend bool operator==(const Annotation& a, const Annotation& b) {
    return a.recording_id_ == b.recording_id_ && a.segments_ == b.segments_;
  }

 private:
  static void validate(const Segment& s) {
    if (!std::isfinite(s.onset) || !std::isfinite(s.duration))
      throw DataError("segment times must be finite");
    if (s.onset < 0.0) throw DataError("segment onset must be non-negative");
    if (s.duration <= 0.0) throw DataError("segment duration must be positive");
  }

  void normalize() {
    merged_ = 0;
    std::map<std::string, std::vector<Segment>> by_speaker;
    for (auto& s : segments_) by_speaker[s.speaker].push_back(std::move(s));
    segments_.clear();
    for (auto& [speaker, list] : by_speaker) {
      std::sort(list.begin(), list.end(), segment_order);
      std::vector<Segment> merged;
      for (auto& s : list) {
        if (!merged.empty() && s.onset < merged.back().offset()) {
          auto& last = merged.back();
          last.duration = std::max(last.offset(), s.offset()) - last.onset;
          ++merged_;
        } else {
          merged.push_back(std::move(s));
        }
      }
      for (auto& s : merged) segments_.push_back(std::move(s));
    }
    std::sort(segments_.begin(), segments_.end(), segment_order);
  }

  std::string recording_id_;
  std::vector<Segment> segments_;
  std::size_t merged_ = 0;
};

// Merges consecutive same-speaker segments separated by at most `max_gap`
// seconds (abutting segments always merge).
inline Annotation merge_same_speaker(const Annotation& ann, double max_gap) {
  std::vector<Segment> out;
  for (const auto& speaker : ann.speakers()) {
    std::vector<Segment> list = ann.segments_of(speaker);
    std::vector<Segment> merged;
    for (auto& s : list) {
      if (!merged.empty() && s.onset - merged.back().offset() <= max_gap) {
        auto& last = merged.back();
        last.duration = std::max(last.offset(), s.offset()) - last.onset;
      } else {
        merged.push_back(std::move(s));
      }
    }
    out.insert(out.end(), merged.begin(), merged.end());
  }
  return Annotation(ann.recording_id(), std::move(out));
}

// ---------------------------------------------------------------------------
// RTTM

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_double(std::string_view text, double& value) {
  // std::from_chars for double is available in libstdc++ >= 11.
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last && std::isfinite(value);
}

// Calls fn(line_number, line) for every line of `text`.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(++line_no, line);
    pos = end + 1;
  }
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace detail

// Parses RTTM text into one Annotation per recording, sorted by recording id.
// Blank lines and lines starting with ';' or '#' are skipped. The channel
// field is ignored. Same-speaker overlaps are merged and reported to `warn`.
inline std::vector<Annotation> parse_rttm(std::string_view text, std::ostream* warn = &std::cerr) {
  std::map<std::string, std::vector<Segment>> grouped;
  detail::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto fields = detail::split_ws(line);
    if (fields.empty() || fields[0].front() == ';' || fields[0].front() == '#') return;
    if (fields.size() < 9) throw ParseError("expected at least 9 fields", line_no);
    if (fields[0] != "SPEAKER") throw ParseError("record type must be SPEAKER", line_no);
    double onset = 0.0, duration = 0.0;
    if (!detail::parse_double(fields[3], onset)) throw ParseError("bad onset", line_no);
    if (!detail::parse_double(fields[4], duration)) throw ParseError("bad duration", line_no);
    if (onset < 0.0) throw ParseError("negative onset", line_no);
    if (duration < 0.0) throw ParseError("negative duration", line_no);
    if (duration == 0.0) throw ParseError("zero-duration segment", line_no);
    grouped[std::string(fields[1])].push_back({onset, duration, std::string(fields[7])});
  });

  std::vector<Annotation> out;
  out.reserve(grouped.size());
  for (auto& [rec, segs] : grouped) {
    out.emplace_back(rec, std::move(segs));
    if (warn && out.back().merged_overlaps() > 0)
      *warn << "warning: " << rec << ": merged " << out.back().merged_overlaps()
            << " overlapping same-speaker segment(s)\n";
  }
  return out;
}

inline std::string write_rttm(std::span<const Annotation> annotations, int decimals = 3) {
  std::string out;
  for (const auto& ann : annotations) {
    for (const auto& s : ann.segments()) {
      out += "SPEAKER ";
      out += ann.recording_id();
      out += " 1 ";
      out += detail::format_fixed(s.onset, decimals);
      out += ' ';
      out += detail::format_fixed(s.duration, decimals);
      out += " <NA> <NA> ";
      out += s.speaker;
      out += " <NA> <NA>\n";
    }
  }
  return out;
}

inline std::string write_rttm(const Annotation& annotation, int decimals = 3) {
  return write_rttm(std::span<const Annotation>(&annotation, 1), decimals);
}

// ---------------------------------------------------------------------------
// Sweep line

// One constant piece of the speaker-count function.
struct CountPiece {
  double start = 0.0;
  double end = 0.0;
  std::vector<std::string> active;  // sorted speaker labels

  double length() const { return end - start; }
};

// Piecewise-constant active-speaker sets between the first onset and the last
// offset. Adjacent pieces always differ in their active set; gaps inside the
// annotation appear as pieces with an empty set.
inline std::vector<CountPiece> speaker_count_function(const Annotation& ann) {
  struct Event {
    double time;
    int delta;
    const std::string* speaker;
  };
  std::vector<Event> events;
  events.reserve(ann.segments().size() * 2);
  for (const auto& s : ann.segments()) {
    events.push_back({s.onset, +1, &s.speaker});
    events.push_back({s.offset(), -1, &s.speaker});
  }
  std::sort(events.begin(), events.end(),
            [](const Event& a, const Event& b) { return a.time < b.time; });

  std::vector<CountPiece> pieces;
  std::map<std::string, int> count;
  for (std::size_t i = 0; i < events.size();) {
    const double t = events[i].time;
    for (; i < events.size() && events[i].time == t; ++i) {
      int& c = count[*events[i].speaker];
      c += events[i].delta;
      if (c == 0) count.erase(*events[i].speaker);
    }
    if (i == events.size()) break;
    const double next = events[i].time;
    std::vector<std::string> active;
    for (const auto& [spk, c] : count) active.push_back(spk);
    if (!pieces.empty() && pieces.back().active == active && pieces.back().end == t) {
      pieces.back().end = next;
    } else {
      pieces.push_back({t, next, std::move(active)});
    }
  }
  return pieces;
}

struct DatasetStats {
  double silence_pct = 0.0;
  double single_speaker_pct = 0.0;
  double overlap_pct = 0.0;
};

// Percentages of silence, single-speaker speech and overlapped speech over a
// recording of `total_duration` seconds.
inline DatasetStats dataset_stats(const Annotation& ann, double total_duration) {
  if (!(total_duration > 0.0)) throw DataError("total duration must be positive");
  if (ann.extent() > total_duration + 1e-9)
    throw DataError(ann.recording_id() + ": total duration " + std::to_string(total_duration) +
                    " is shorter than the annotation extent " + std::to_string(ann.extent()));
  double single = 0.0, overlap = 0.0;
  for (const auto& p : speaker_count_function(ann)) {
    if (p.active.size() == 1)
      single += p.length();
    else if (p.active.size() >= 2)
      overlap += p.length();
  }
  DatasetStats st;
  st.single_speaker_pct = 100.0 * single / total_duration;
  st.overlap_pct = 100.0 * overlap / total_duration;
  st.silence_pct = 100.0 - st.single_speaker_pct - st.overlap_pct;
  return st;
}

}  // namespace vbdiar
