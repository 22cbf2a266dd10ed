#pragma once

// X-vectors -> AHC initialization -> VBx -> speaker segments, plus the
// closest-in-time second-speaker assignment for detected overlap regions.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vbdiar/ahc.hpp"
#include "vbdiar/error.hpp"
#include "vbdiar/plda.hpp"
#include "vbdiar/timeline.hpp"
#include "vbdiar/vbx.hpp"
#include "vbdiar/xvector.hpp"

namespace vbdiar {

struct PipelineConfig {
  std::string plda_path;
  Eigen::Index rank = 0;  // 0 keeps every positive direction
  bool length_norm = false;
  SimilarityMetric metric = SimilarityMetric::plda_llr;
  double ahc_threshold = -0.015;
  VbxParams vbx;
  bool overlap_handling = false;
  double merge_gap = 0.0;

  void validate() const {
    vbx.validate();
    if (rank < 0) throw UsageError("rank must be non-negative");
    if (!(merge_gap >= 0.0)) throw UsageError("merge_gap must be non-negative");
    if (!std::isfinite(ahc_threshold)) throw UsageError("ahc_threshold must be finite");
  }
};

namespace detail {

inline bool parse_bool(std::string_view v, bool& out) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return out = true, true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return out = false, true;
  return false;
}

}  // namespace detail

// Applies one key=value setting; throws UsageError for unknown keys or bad values.
inline void set_config_value(PipelineConfig& cfg, std::string_view key, std::string_view value) {
  const auto fail = [&](std::string_view expected) {
    throw UsageError("bad value '" + std::string(value) + "' for " + std::string(key) + " (expected " +
                     std::string(expected) + ")");
  };
  const auto real = [&](double& dst) {
    if (!detail::parse_double(value, dst)) fail("a number");
  };
  const auto integer = [&](auto& dst) {
    double v = 0;
    if (!detail::parse_double(value, v) || v != std::floor(v) || std::abs(v) > 1e9) fail("an integer");
    dst = static_cast<std::remove_reference_t<decltype(dst)>>(v);
  };
  const auto flag = [&](bool& dst) {
    if (!detail::parse_bool(value, dst)) fail("true or false");
  };

  if (key == "plda") cfg.plda_path = std::string(value);
  else if (key == "rank") integer(cfg.rank);
  else if (key == "length_norm") flag(cfg.length_norm);
  else if (key == "metric") cfg.metric = parse_similarity_metric(value);
  else if (key == "ahc_threshold") real(cfg.ahc_threshold);
  else if (key == "fa") real(cfg.vbx.fa);
  else if (key == "fb") real(cfg.vbx.fb);
  else if (key == "p_loop") real(cfg.vbx.p_loop);
  else if (key == "max_iters") integer(cfg.vbx.max_iters);
  else if (key == "elbo_tol") real(cfg.vbx.elbo_tol);
  else if (key == "init_smoothing") real(cfg.vbx.init_smoothing);
  else if (key == "max_speakers") integer(cfg.vbx.max_speakers);
  else if (key == "drop_threshold") real(cfg.vbx.drop_threshold);
  else if (key == "overlap_handling") flag(cfg.overlap_handling);
  else if (key == "merge_gap") real(cfg.merge_gap);
  else throw UsageError("unknown configuration key '" + std::string(key) + "'");
}

// Flat key=value lines; '#' starts a comment.
inline PipelineConfig parse_pipeline_config(std::string_view text, PipelineConfig cfg = {}) {
  detail::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto trim = [](std::string_view s) {
      const auto b = s.find_first_not_of(" \t");
      if (b == std::string_view::npos) return std::string_view{};
      return s.substr(b, s.find_last_not_of(" \t") - b + 1);
    };
    line = trim(line);
    if (line.empty()) return;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key=value", line_no);
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw ParseError(e.what(), line_no);
    }
  });
  return cfg;
}

// Hard label per x-vector window -> speaker segments. Where consecutive
// windows overlap, the boundary sits in the middle of the shared part.
inline Annotation labels_to_annotation(const std::string& recording, const std::vector<XvectorSegment>& windows,
                                       std::span<const int> labels, double merge_gap) {
  std::map<int, std::string> names;
  for (int l : labels)
    if (!names.count(l)) names.emplace(l, "S" + std::to_string(names.size() + 1));

  std::vector<Segment> segs;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    double start = windows[i].onset, end = windows[i].offset;
    if (i > 0 && windows[i - 1].offset > start) start = std::min(end, 0.5 * (start + windows[i - 1].offset));
    if (i + 1 < windows.size() && windows[i + 1].onset < end) end = std::max(start, 0.5 * (windows[i + 1].onset + end));
    if (end > start) segs.push_back({start, end - start, names.at(labels[i])});
  }
  return merge_same_speaker(Annotation(recording, std::move(segs)), merge_gap);
}

struct DiarizationDetail {
  Annotation annotation;
  int ahc_clusters = 0;
  int vbx_speakers = 0;
};

inline DiarizationDetail diarize_recording_detail(const RecordingXvectors& rec, const DiagTransform& transform_,
                                                  const PipelineConfig& cfg) {
  try {
    if (rec.xvectors.rows() == 0) throw DataError("no x-vectors");
    if (static_cast<std::size_t>(rec.xvectors.rows()) != rec.segments.size())
      throw DataError("x-vector count does not match the segment count");
    const MatrixXd x = transform(rec.xvectors, transform_, cfg.length_norm);
    const auto ahc = ahc_cluster(pairwise_similarity(x, cfg.metric, transform_.phi), cfg.ahc_threshold,
                                 cfg.vbx.max_speakers);
    const auto vb = run_vbx(x, transform_.phi, ahc.labels, cfg.vbx);
    return {labels_to_annotation(rec.id, rec.segments, vb.labels, cfg.merge_gap), ahc.num_clusters,
            vb.active_speakers};
  } catch (const UsageError& e) {
    throw UsageError("recording " + rec.id + ": " + e.what());
  } catch (const Error& e) {
    throw DataError("recording " + rec.id + ": " + e.what());
  }
}

inline Annotation diarize_recording(const RecordingXvectors& rec, const DiagTransform& transform_,
                                    const PipelineConfig& cfg) {
  return diarize_recording_detail(rec, transform_, cfg).annotation;
}

// Distance from t to the closest onset or offset of the speaker's segments.
inline double nearest_boundary_distance(const std::vector<Segment>& segments, double t) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : segments) best = std::min({best, std::abs(t - s.onset), std::abs(t - s.offset())});
  return best;
}

// Inside each overlap region, every stretch covered by exactly one speaker
// gets a second label: the other speaker with a segment boundary nearest to
// the region midpoint (ties go to the lexicographically smaller label).
inline Annotation assign_second_speaker(const Annotation& diarization,
                                        const std::vector<std::pair<double, double>>& regions) {
  const auto speakers = diarization.speakers();
  if (speakers.size() < 2) return diarization;
  std::map<std::string, std::vector<Segment>> by_speaker;
  for (const auto& s : speakers) by_speaker[s] = diarization.segments_of(s);

  std::vector<Segment> added;
  for (const auto& [a, b] : regions) {
    if (!(b > a)) continue;
    const double mid = 0.5 * (a + b);
    std::set<double> cuts{a, b};
    for (const auto& s : diarization.segments()) {
      if (s.onset > a && s.onset < b) cuts.insert(s.onset);
      if (s.offset() > a && s.offset() < b) cuts.insert(s.offset());
    }
    for (auto it = cuts.begin(); std::next(it) != cuts.end(); ++it) {
      const double u = *it, v = *std::next(it), probe = 0.5 * (u + v);
      std::vector<std::string> active;
      for (const auto& s : diarization.segments())
        if (s.onset <= probe && probe < s.offset()) active.push_back(s.speaker);
      if (active.size() != 1) continue;
      const std::string* chosen = nullptr;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& cand : speakers) {
        if (cand == active[0]) continue;
        const double d = nearest_boundary_distance(by_speaker[cand], mid);
        if (d < best) best = d, chosen = &cand;
      }
      if (chosen) added.push_back({u, v - u, *chosen});
    }
  }
  if (added.empty()) return diarization;
  Annotation out = diarization;
  out.add(std::span<const Segment>(added));
  return merge_same_speaker(out, 0.0);
}

}  // namespace vbdiar
