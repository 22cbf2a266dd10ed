#pragma once

// Diarization scoring: optimal 1:1 speaker mapping, DER (with collar and
// optional overlap exclusion), JER and mean speaker counting error.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vbdiar/error.hpp"
#include "vbdiar/hungarian.hpp"
#include "vbdiar/timeline.hpp"

namespace vbdiar {

struct SpeakerMapping {
  std::map<std::string, std::string> pairs;  // reference -> system
  std::vector<std::string> unmapped_reference;
  std::vector<std::string> unmapped_system;
  double total_overlap = 0.0;  // seconds shared by the mapped pairs
};

struct DerBreakdown {
  double miss = 0.0;
  double fa = 0.0;
  double confusion = 0.0;
  double total_speech = 0.0;
  double der = 0.0;
};

struct JerBreakdown {
  std::map<std::string, double> per_speaker;
  double jer = 0.0;
};

namespace detail {

struct Interval {
  double start;
  double end;
};

inline std::vector<Interval> intervals_of(const Annotation& ann, const std::string& speaker) {
  std::vector<Interval> out;
  for (const auto& s : ann.segments())
    if (s.speaker == speaker) out.push_back({s.onset, s.offset()});
  return out;
}

inline double total_length(const std::vector<Interval>& xs) {
  double t = 0.0;
  for (const auto& x : xs) t += x.end - x.start;
  return t;
}

// Both inputs sorted and internally non-overlapping.
inline double intersection_length(const std::vector<Interval>& a, const std::vector<Interval>& b) {
  double t = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double lo = std::max(a[i].start, b[j].start);
    const double hi = std::min(a[i].end, b[j].end);
    if (hi > lo) t += hi - lo;
    if (a[i].end < b[j].end)
      ++i;
    else
      ++j;
  }
  return t;
}

// Sorted union of possibly overlapping intervals.
inline std::vector<Interval> merge_intervals(std::vector<Interval> xs) {
  std::sort(xs.begin(), xs.end(), [](const Interval& a, const Interval& b) { return a.start < b.start; });
  std::vector<Interval> out;
  for (const auto& x : xs) {
    if (!out.empty() && x.start <= out.back().end)
      out.back().end = std::max(out.back().end, x.end);
    else
      out.push_back(x);
  }
  return out;
}

}  // namespace detail

// Pairwise overlap durations, rows = sorted reference labels, cols = sorted system labels.
inline std::vector<std::vector<double>> overlap_matrix(const Annotation& reference, const Annotation& system,
                                                       const std::vector<std::string>& ref_labels,
                                                       const std::vector<std::string>& sys_labels) {
  std::vector<std::vector<detail::Interval>> sys_iv;
  for (const auto& s : sys_labels) sys_iv.push_back(detail::intervals_of(system, s));
  std::vector<std::vector<double>> w(ref_labels.size(), std::vector<double>(sys_labels.size(), 0.0));
  for (std::size_t i = 0; i < ref_labels.size(); ++i) {
    const auto ref_iv = detail::intervals_of(reference, ref_labels[i]);
    for (std::size_t j = 0; j < sys_labels.size(); ++j)
      w[i][j] = detail::intersection_length(ref_iv, sys_iv[j]);
  }
  return w;
}

// One-to-one mapping maximizing summed overlap. Pairs whose overlap is zero
// are reported as unmapped since they cannot affect any error count.
inline SpeakerMapping optimal_mapping(const Annotation& reference, const Annotation& system) {
  const auto ref_labels = reference.speakers();
  const auto sys_labels = system.speakers();
  const auto w = overlap_matrix(reference, system, ref_labels, sys_labels);
  const auto assign = max_weight_assignment(w);

  SpeakerMapping m;
  std::vector<char> sys_used(sys_labels.size(), 0);
  for (std::size_t i = 0; i < ref_labels.size(); ++i) {
    const int j = assign[i];
    if (j >= 0 && w[i][j] > 0.0) {
      m.pairs[ref_labels[i]] = sys_labels[j];
      m.total_overlap += w[i][j];
      sys_used[j] = 1;
    } else {
      m.unmapped_reference.push_back(ref_labels[i]);
    }
  }
  for (std::size_t j = 0; j < sys_labels.size(); ++j)
    if (!sys_used[j]) m.unmapped_system.push_back(sys_labels[j]);
  return m;
}

struct DerOptions {
  double collar = 0.0;        // seconds each side of every reference boundary
  bool score_overlap = true;  // false: only instants with at most one reference speaker count
};

// Accumulates DER components over the scored region. The mapping is computed
// once on the full, uncollared annotations.
inline DerBreakdown der(const Annotation& reference, const Annotation& system, DerOptions opt = {}) {
  if (opt.collar < 0.0) throw UsageError("collar must be non-negative");
  const SpeakerMapping mapping = optimal_mapping(reference, system);

  std::vector<detail::Interval> excluded;
  if (opt.collar > 0.0) {
    for (const auto& s : reference.segments()) {
      for (double b : {s.onset, s.offset()})
        excluded.push_back({std::max(0.0, b - opt.collar), b + opt.collar});
    }
    excluded = detail::merge_intervals(std::move(excluded));
  }

  const auto ref_pieces = speaker_count_function(reference);
  const auto sys_pieces = speaker_count_function(system);

  std::vector<double> cuts;
  for (const auto& p : ref_pieces) cuts.insert(cuts.end(), {p.start, p.end});
  for (const auto& p : sys_pieces) cuts.insert(cuts.end(), {p.start, p.end});
  for (const auto& x : excluded) cuts.insert(cuts.end(), {x.start, x.end});
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  static const std::vector<std::string> kNone;
  std::size_t ri = 0, si = 0, xi = 0;
  DerBreakdown out;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double a = cuts[k], b = cuts[k + 1];
    while (ri < ref_pieces.size() && ref_pieces[ri].end <= a) ++ri;
    while (si < sys_pieces.size() && sys_pieces[si].end <= a) ++si;
    while (xi < excluded.size() && excluded[xi].end <= a) ++xi;
    const auto& ref_active = (ri < ref_pieces.size() && ref_pieces[ri].start <= a) ? ref_pieces[ri].active : kNone;
    const auto& sys_active = (si < sys_pieces.size() && sys_pieces[si].start <= a) ? sys_pieces[si].active : kNone;
    const bool in_collar = xi < excluded.size() && excluded[xi].start <= a;
    if (in_collar) continue;

    const auto n_ref = static_cast<double>(ref_active.size());
    const auto n_sys = static_cast<double>(sys_active.size());
    if (!opt.score_overlap && ref_active.size() > 1) continue;

    double correct = 0.0;
    for (const auto& r : ref_active) {
      auto it = mapping.pairs.find(r);
      if (it != mapping.pairs.end() &&
          std::binary_search(sys_active.begin(), sys_active.end(), it->second))
        correct += 1.0;
    }
    const double len = b - a;
    out.miss += len * std::max(0.0, n_ref - n_sys);
    out.fa += len * std::max(0.0, n_sys - n_ref);
    out.confusion += len * (std::min(n_ref, n_sys) - correct);
    out.total_speech += len * n_ref;
  }
  if (out.total_speech <= 0.0)
    throw DataError(reference.recording_id() + ": no scored reference speech, DER is undefined");
  out.der = (out.miss + out.fa + out.confusion) / out.total_speech;
  return out;
}

// Jaccard error rate; always collar-free.
inline JerBreakdown jer(const Annotation& reference, const Annotation& system) {
  const auto ref_labels = reference.speakers();
  if (ref_labels.empty()) throw DataError(reference.recording_id() + ": reference has no speakers, JER is undefined");
  const SpeakerMapping mapping = optimal_mapping(reference, system);

  JerBreakdown out;
  double sum = 0.0;
  for (const auto& r : ref_labels) {
    double value = 1.0;
    auto it = mapping.pairs.find(r);
    if (it != mapping.pairs.end()) {
      const auto ref_iv = detail::intervals_of(reference, r);
      const auto sys_iv = detail::intervals_of(system, it->second);
      const double shared = detail::intersection_length(ref_iv, sys_iv);
      const double ref_total = detail::total_length(ref_iv);
      const double sys_total = detail::total_length(sys_iv);
      const double uni = ref_total + sys_total - shared;
      const double miss = ref_total - shared;
      const double fa = sys_total - shared;
      value = (fa + miss) / uni;
    }
    out.per_speaker[r] = value;
    sum += value;
  }
  out.jer = sum / static_cast<double>(ref_labels.size());
  return out;
}

// Mean absolute difference between true and estimated speaker counts.
inline double msce(std::span<const int> reference_counts, std::span<const int> system_counts) {
  if (reference_counts.size() != system_counts.size())
    throw DataError("speaker count lists differ in length");
  if (reference_counts.empty()) throw DataError("speaker count lists are empty");
  double sum = 0.0;
  for (std::size_t i = 0; i < reference_counts.size(); ++i)
    sum += std::abs(reference_counts[i] - system_counts[i]);
  return sum / static_cast<double>(reference_counts.size());
}

}  // namespace vbdiar
