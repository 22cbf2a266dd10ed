#pragma once

// Synthetic training data: turn-taking statistics from real annotations,
// simulated mixtures (independent per-speaker channels with exponential
// pauses), simulated conversations (interleaved turns with pauses and
// overlaps drawn from the statistics) and waveform assembly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vbdiar/error.hpp"
#include "vbdiar/rng.hpp"
#include "vbdiar/timeline.hpp"
#include "vbdiar/wav.hpp"

namespace vbdiar {

// Sparse histogram over bins of a fixed width; bin k covers [k w, (k+1) w).
struct Histogram {
  std::map<std::int64_t, std::uint64_t> bins;

  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (const auto& [k, c] : bins) n += c;
    return n;
  }

  void add(double value, double bin_width) {
    const auto k = static_cast<std::int64_t>(std::floor(value / bin_width + 1e-9));
    ++bins[std::max<std::int64_t>(k, 0)];
  }

  // Bin chosen with probability proportional to its count, then a uniform
  // position inside it.
  double sample(Rng& rng, double bin_width) const {
    const std::uint64_t n = total();
    if (n == 0) throw DataError("cannot sample from an empty histogram");
    std::uint64_t r = rng.below(n);
    for (const auto& [k, c] : bins) {
      if (r < c) return (static_cast<double>(k) + rng.uniform()) * bin_width;
      r -= c;
    }
    return 0.0;  // unreachable
  }

  bool operator==(const Histogram&) const = default;
};

struct SimStats {
  double bin_width = 0.01;
  Histogram hist_same;     // pauses between consecutive same-speaker segments
  Histogram hist_diff;     // pauses between consecutive different-speaker segments
  Histogram hist_overlap;  // overlap lengths
  std::uint64_t ds = 0;    // different-speaker pauses
  std::uint64_t ov = 0;    // overlaps

  double p_pause() const {
    if (ds + ov == 0) throw DataError("pause probability undefined: no speaker changes observed");
    return static_cast<double>(ds) / static_cast<double>(ds + ov);
  }

  bool operator==(const SimStats&) const = default;
};

inline SimStats estimate_stats(std::span<const Annotation> annotations, double bin_width = 0.01) {
  if (!(bin_width > 0.0)) throw UsageError("histogram bin width must be positive");
  if (annotations.empty()) throw DataError("no annotations to estimate statistics from");
  SimStats st;
  st.bin_width = bin_width;
  std::size_t pairs = 0;
  for (const auto& ann : annotations) {
    std::vector<Segment> segs = ann.segments();
    std::stable_sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) { return a.onset < b.onset; });
    for (std::size_t i = 1; i < segs.size(); ++i, ++pairs) {
      const double gap = segs[i].onset - segs[i - 1].offset();
      if (gap < 0.0) {
        st.hist_overlap.add(-gap, bin_width);
        ++st.ov;
      } else if (segs[i].speaker == segs[i - 1].speaker) {
        st.hist_same.add(gap, bin_width);
      } else {
        st.hist_diff.add(gap, bin_width);
        ++st.ds;
      }
    }
  }
  if (pairs == 0) throw DataError("no consecutive segment pairs in the annotations");
  return st;
}

inline std::string write_sim_stats(const SimStats& st) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", st.bin_width);
  std::string out = "bin_width " + std::string(buf) + "\n";
  const auto hist = [&](const char* name, const Histogram& h) {
    out += std::string(name) + " " + std::to_string(h.bins.size()) + "\n";
    for (const auto& [k, c] : h.bins) out += std::to_string(k) + " " + std::to_string(c) + "\n";
  };
  hist("hist_same", st.hist_same);
  hist("hist_diff", st.hist_diff);
  hist("hist_overlap", st.hist_overlap);
  out += "ds " + std::to_string(st.ds) + "\nov " + std::to_string(st.ov) + "\n";
  return out;
}

inline SimStats parse_sim_stats(std::string_view text) {
  std::vector<std::pair<std::size_t, std::vector<std::string_view>>> lines;
  detail::for_each_line(text, [&](std::size_t n, std::string_view line) {
    auto f = detail::split_ws(line);
    if (!f.empty() && f[0].front() != '#') lines.emplace_back(n, std::move(f));
  });
  std::size_t at = 0;
  const auto next = [&](std::string_view key) -> const std::vector<std::string_view>& {
    if (at >= lines.size()) throw ParseError("unexpected end of statistics file, expected '" + std::string(key) + "'");
    const auto& [n, f] = lines[at++];
    if (f.size() != 2 || (!key.empty() && f[0] != key))
      throw ParseError("expected '" + std::string(key.empty() ? "<bin> <count>" : key) + " <value>'", n);
    return f;
  };
  const auto count = [&](std::string_view v) {
    double d = 0;
    if (!detail::parse_double(v, d) || d < 0 || d != std::floor(d) || d > 9e15)
      throw ParseError("bad count '" + std::string(v) + "'", lines[at - 1].first);
    return static_cast<std::uint64_t>(d);
  };

  SimStats st;
  if (!detail::parse_double(next("bin_width")[1], st.bin_width) || !(st.bin_width > 0))
    throw ParseError("bin width must be positive", lines[0].first);
  for (auto [name, hist] : {std::pair{"hist_same", &st.hist_same}, std::pair{"hist_diff", &st.hist_diff},
                            std::pair{"hist_overlap", &st.hist_overlap}}) {
    const auto n = count(next(name)[1]);
    for (std::uint64_t k = 0; k < n; ++k) {
      const auto& f = next("");
      double idx = 0;
      if (!detail::parse_double(f[0], idx) || idx < 0 || idx != std::floor(idx))
        throw ParseError("bad bin index '" + std::string(f[0]) + "'", lines[at - 1].first);
      const auto c = count(f[1]);
      if (c > 0) hist->bins[static_cast<std::int64_t>(idx)] += c;
    }
  }
  st.ds = count(next("ds")[1]);
  st.ov = count(next("ov")[1]);
  if (at != lines.size()) throw ParseError("trailing content in statistics file", lines[at].first);
  return st;
}

struct Utterance {
  std::string audio;                                // source recording path
  std::vector<std::pair<double, double>> segments;  // (onset, offset) in the source, increasing
};

struct UtterancePool {
  std::map<std::string, std::vector<Utterance>> speakers;
};

// One utterance per line: "<speaker> <wav path> <on1> <off1> [<on2> <off2> ...]".
// Relative wav paths are resolved against `base_dir`.
inline UtterancePool parse_pool_manifest(std::string_view text, const std::filesystem::path& base_dir = {}) {
  UtterancePool pool;
  detail::for_each_line(text, [&](std::size_t n, std::string_view line) {
    const auto f = detail::split_ws(line);
    if (f.empty() || f[0].front() == '#') return;
    if (f.size() < 4 || (f.size() - 2) % 2) throw ParseError("expected '<speaker> <wav> <onset> <offset> ...'", n);
    Utterance u;
    const std::filesystem::path p(f[1]);
    u.audio = (p.is_relative() && !base_dir.empty() ? base_dir / p : p).lexically_normal().string();
    double last = -1.0;
    for (std::size_t k = 2; k < f.size(); k += 2) {
      double on = 0, off = 0;
      if (!detail::parse_double(f[k], on) || !detail::parse_double(f[k + 1], off))
        throw ParseError("bad segment time", n);
      if (on < 0 || !(off > on)) throw ParseError("segment offset must exceed a non-negative onset", n);
      if (on < last) throw ParseError("segments must be increasing and non-overlapping", n);
      last = off;
      u.segments.emplace_back(on, off);
    }
    pool.speakers[std::string(f[0])].push_back(std::move(u));
  });
  return pool;
}

struct SpeakerDraw {
  std::string speaker;
  const Utterance* utterance = nullptr;
};

// Draws speakers and utterances without replacement over one generation pass.
class PoolSampler {
 public:
  PoolSampler(const UtterancePool& pool, std::uint64_t seed) : rng_(seed) {
    for (const auto& [spk, utts] : pool.speakers) {
      auto& idx = remaining_[spk];
      for (std::size_t i = 0; i < utts.size(); ++i) idx.push_back(&utts[i]);
    }
  }

  std::vector<SpeakerDraw> draw(int n_spk) {
    if (n_spk < 1) throw UsageError("number of speakers must be at least 1");
    std::vector<std::string> eligible;
    for (const auto& [spk, utts] : remaining_)
      if (!utts.empty()) eligible.push_back(spk);
    if (static_cast<int>(eligible.size()) < n_spk)
      throw DataError("utterance pool exhausted: " + std::to_string(eligible.size()) +
                      " speakers with unused utterances, " + std::to_string(n_spk) + " needed");
    rng_.shuffle(std::span<std::string>(eligible));
    std::vector<SpeakerDraw> out;
    for (int k = 0; k < n_spk; ++k) {
      auto& utts = remaining_[eligible[k]];
      const auto j = static_cast<std::size_t>(rng_.below(utts.size()));
      out.push_back({eligible[k], utts[j]});
      utts.erase(utts.begin() + static_cast<std::ptrdiff_t>(j));
    }
    return out;
  }

 private:
  Rng rng_;
  std::map<std::string, std::vector<const Utterance*>> remaining_;
};

struct Placement {
  std::string speaker;
  std::string audio;
  double src_onset = 0.0;
  double src_offset = 0.0;
  double onset = 0.0;  // position in the output, seconds

  double duration() const { return src_offset - src_onset; }
  double offset() const { return onset + duration(); }
  bool operator==(const Placement&) const = default;
};

struct SimTimeline {
  std::vector<Placement> placements;

  double length() const {
    double end = 0.0;
    for (const auto& p : placements) end = std::max(end, p.offset());
    return end;
  }

  Annotation annotation(const std::string& recording_id) const {
    std::vector<Segment> segs;
    for (const auto& p : placements) segs.push_back({p.onset, p.duration(), p.speaker});
    return Annotation(recording_id, std::move(segs));
  }

  bool operator==(const SimTimeline&) const = default;
};

struct InterleavedItem {
  std::size_t list = 0;   // which input list
  std::size_t index = 0;  // position within that list
};

// Shuffles the multiset of list labels; each list's items keep their order.
template <typename T>
std::vector<InterleavedItem> interleave(const std::vector<std::vector<T>>& lists, Rng& rng) {
  std::vector<std::size_t> labels;
  for (std::size_t l = 0; l < lists.size(); ++l) labels.insert(labels.end(), lists[l].size(), l);
  rng.shuffle(std::span<std::size_t>(labels));
  std::vector<std::size_t> next(lists.size(), 0);
  std::vector<InterleavedItem> out;
  out.reserve(labels.size());
  for (auto l : labels) out.push_back({l, next[l]++});
  return out;
}

// Conversation from already drawn utterances. Overlaps never exceed the
// previous segment and never make a speaker overlap themselves.
inline SimTimeline simulate_conversation(const std::vector<SpeakerDraw>& draws, const SimStats& stats, Rng& rng) {
  std::vector<std::vector<std::pair<double, double>>> lists;
  for (const auto& d : draws) lists.push_back(d.utterance->segments);
  const auto order = interleave(lists, rng);

  SimTimeline tl;
  std::vector<double> last_end(draws.size(), -std::numeric_limits<double>::infinity());
  double pos = 0.0;
  for (std::size_t t = 0; t < order.size(); ++t) {
    const auto [spk, idx] = order[t];
    const auto [src_on, src_off] = lists[spk][idx];
    double onset = 0.0;
    if (t > 0) {
      const auto& prev = tl.placements.back();
      double gap;
      if (order[t - 1].list == spk) {
        gap = stats.hist_same.sample(rng, stats.bin_width);
      } else if (rng.bernoulli(stats.p_pause())) {
        gap = stats.hist_diff.sample(rng, stats.bin_width);
      } else {
        gap = -std::min(stats.hist_overlap.sample(rng, stats.bin_width), prev.duration());
      }
      onset = std::max(pos + gap, last_end[spk]);
    }
    tl.placements.push_back({draws[spk].speaker, draws[spk].utterance->audio, src_on, src_off, onset});
    last_end[spk] = onset + (src_off - src_on);
    pos = last_end[spk];
  }
  return tl;
}

inline SimTimeline simulate_conversation(const UtterancePool& pool, int n_spk, const SimStats& stats,
                                         std::uint64_t seed) {
  PoolSampler sampler(pool, derive_seed(seed, ~std::uint64_t{0}));
  Rng rng(seed);
  return simulate_conversation(sampler.draw(n_spk), stats, rng);
}

// Mixture from already drawn utterances: per speaker, a run of consecutive
// segments separated by exponential pauses; channels are simply overlaid.
inline SimTimeline simulate_mixture(const std::vector<SpeakerDraw>& draws, double beta, int n_umin, int n_umax,
                                    Rng& rng) {
  if (!(beta > 0.0)) throw UsageError("beta must be positive");
  if (n_umin < 1 || n_umax < n_umin) throw UsageError("need 1 <= n_umin <= n_umax");
  SimTimeline tl;
  for (const auto& d : draws) {
    const auto& segs = d.utterance->segments;
    const auto n_u = static_cast<std::size_t>(std::min<std::int64_t>(rng.between(n_umin, n_umax),
                                                                      static_cast<std::int64_t>(segs.size())));
    const auto start = static_cast<std::size_t>(rng.below(segs.size() - n_u + 1));
    double pos = 0.0;
    for (std::size_t k = start; k < start + n_u; ++k) {
      pos += rng.exponential(beta);
      tl.placements.push_back({d.speaker, d.utterance->audio, segs[k].first, segs[k].second, pos});
      pos += segs[k].second - segs[k].first;
    }
  }
  return tl;
}

inline SimTimeline simulate_mixture(const UtterancePool& pool, int n_spk, double beta, int n_umin, int n_umax,
                                    std::uint64_t seed) {
  PoolSampler sampler(pool, derive_seed(seed, ~std::uint64_t{0}));
  Rng rng(seed);
  return simulate_mixture(sampler.draw(n_spk), beta, n_umin, n_umax, rng);
}

// Impulse response scaled to unit peak.
inline std::vector<double> rir_from_wave(const Wave& w) {
  std::vector<double> h(w.samples.begin(), w.samples.end());
  double peak = 0.0;
  for (double v : h) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) throw DataError("room impulse response is silent");
  for (double& v : h) v /= peak;
  return h;
}

struct RenderOptions {
  const Wave* noise = nullptr;
  std::optional<double> snr_db;
  std::span<const std::vector<double>> rirs;
  double rir_prob = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::size_t to_samples(double seconds, std::uint32_t rate) {
  return static_cast<std::size_t>(std::llround(seconds * rate));
}

inline double mean_square(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double e = 0.0;
  for (double v : x) e += v * v;
  return e / static_cast<double>(x.size());
}

}  // namespace detail

// Mixes the timeline into a floating-point buffer (int16 sample units)
// before noise and saturation.
inline std::vector<double> render_speech(const SimTimeline& tl, const std::map<std::string, Wave>& sources,
                                         std::uint32_t& rate, const RenderOptions& opt) {
  rate = 0;
  for (const auto& p : tl.placements) {
    const auto it = sources.find(p.audio);
    if (it == sources.end()) throw DataError("no audio loaded for source " + p.audio);
    if (rate == 0) rate = it->second.sample_rate;
    if (it->second.sample_rate != rate)
      throw DataError("sample rate mismatch: " + p.audio + " is " + std::to_string(it->second.sample_rate) +
                      " Hz, expected " + std::to_string(rate) + " Hz");
  }
  if (rate == 0) rate = opt.noise ? opt.noise->sample_rate : 16000;

  // One optional RIR per speaker, drawn in sorted speaker order.
  std::map<std::string, const std::vector<double>*> rir_of;
  Rng rng(opt.seed);
  for (const auto& p : tl.placements) rir_of.emplace(p.speaker, nullptr);
  if (!opt.rirs.empty())
    for (auto& [spk, h] : rir_of)
      if (rng.bernoulli(opt.rir_prob)) h = &opt.rirs[static_cast<std::size_t>(rng.below(opt.rirs.size()))];

  std::vector<double> y(detail::to_samples(tl.length(), rate), 0.0);
  for (const auto& p : tl.placements) {
    const auto& src = sources.at(p.audio).samples;
    const auto a = detail::to_samples(p.src_onset, rate), b = std::min(detail::to_samples(p.src_offset, rate), src.size());
    if (a >= b) continue;
    const auto at = detail::to_samples(p.onset, rate);
    const auto* h = rir_of.at(p.speaker);
    const std::size_t len = b - a;
    const std::size_t out_len = h ? len + h->size() - 1 : len;
    if (y.size() < at + len) y.resize(at + len, 0.0);
    for (std::size_t n = 0; n < out_len && at + n < y.size(); ++n) {
      double v;
      if (!h) {
        v = src[a + n];
      } else {
        v = 0.0;
        const std::size_t k_lo = n >= len ? n - len + 1 : 0, k_hi = std::min(n, h->size() - 1);
        for (std::size_t k = k_lo; k <= k_hi; ++k) v += (*h)[k] * src[a + n - k];
      }
      y[at + n] += v;
    }
  }
  return y;
}

// Noise scale p = sqrt(E_signal / (E_noise 10^(snr/10))) with E the mean
// squared sample over the whole output.
inline double noise_scale(double signal_energy, double noise_energy, double snr_db) {
  if (!(noise_energy > 0.0)) throw DataError("noise has no energy");
  return std::sqrt(signal_energy / (noise_energy * std::pow(10.0, snr_db / 10.0)));
}

inline std::vector<double> tile_noise(const Wave& noise, std::size_t length) {
  if (noise.samples.empty()) throw DataError("noise recording is empty");
  std::vector<double> n(length);
  for (std::size_t i = 0; i < length; ++i) n[i] = noise.samples[i % noise.samples.size()];
  return n;
}

inline Wave saturate(const std::vector<double>& y, std::uint32_t rate) {
  Wave w{rate, {}};
  w.samples.reserve(y.size());
  for (double v : y)
    w.samples.push_back(static_cast<std::int16_t>(std::clamp<long long>(std::llround(v), -32768, 32767)));
  return w;
}

inline Wave render_audio(const SimTimeline& tl, const std::map<std::string, Wave>& sources,
                         const RenderOptions& opt = {}) {
  if (opt.snr_db.has_value() != (opt.noise != nullptr))
    throw UsageError("noise and SNR must be given together");
  std::uint32_t rate = 0;
  std::vector<double> y = render_speech(tl, sources, rate, opt);
  if (opt.noise) {
    if (opt.noise->sample_rate != rate)
      throw DataError("sample rate mismatch: noise is " + std::to_string(opt.noise->sample_rate) + " Hz, speech " +
                      std::to_string(rate) + " Hz");
    const auto n = tile_noise(*opt.noise, y.size());
    const double p = noise_scale(detail::mean_square(y), detail::mean_square(n), *opt.snr_db);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += p * n[i];
  }
  return saturate(y, rate);
}

}  // namespace vbdiar
