#pragma once

// Implementations of the command-line subcommands. Each takes a plain options
// struct and returns what the command prints, so they can be driven in-process.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "vbdiar/error.hpp"
#include "vbdiar/io.hpp"
#include "vbdiar/metrics.hpp"
#include "vbdiar/parallel.hpp"
#include "vbdiar/pipeline.hpp"
#include "vbdiar/plda.hpp"
#include "vbdiar/simcon.hpp"
#include "vbdiar/timeline.hpp"
#include "vbdiar/wav.hpp"
#include "vbdiar/xvector.hpp"

namespace vbdiar::cli {

namespace fs = std::filesystem;

inline std::string pct(double fraction) { return detail::format_fixed(100.0 * fraction, 2); }
inline std::string secs(double s) { return detail::format_fixed(s, 3); }

// ---------------------------------------------------------------- score

struct ScoreOptions {
  fs::path ref;
  fs::path hyp;
  double collar = 0.0;
  bool skip_overlap = false;
  bool jer = false;
};

inline std::string run_score(const ScoreOptions& opt, std::ostream& warn = std::cerr) {
  if (!(opt.collar >= 0.0)) throw UsageError("--collar must be non-negative");
  std::map<std::string, Annotation> refs, hyps;
  for (auto& a : parse_rttm(read_file(opt.ref, "reference RTTM"), &warn)) refs.emplace(a.recording_id(), std::move(a));
  for (auto& a : parse_rttm(read_file(opt.hyp, "hypothesis RTTM"), &warn)) hyps.emplace(a.recording_id(), std::move(a));
  if (refs.empty()) throw DataError("reference RTTM contains no speaker segments");

  bool shared = false;
  for (const auto& [id, a] : refs) shared = shared || hyps.count(id);
  if (!shared) throw DataError("reference and hypothesis share no recording ids");
  for (const auto& [id, a] : hyps)
    if (!refs.count(id)) warn << "warning: hypothesis recording " << id << " has no reference and is ignored\n";

  std::string out = "recording\tmiss\tfalse_alarm\tconfusion\ttotal\tDER";
  if (opt.jer) out += "\tJER";
  out += "\n";

  DerBreakdown sum;
  std::vector<double> speaker_jers;
  std::vector<int> ref_counts, hyp_counts;
  for (const auto& [id, ref] : refs) {
    const auto it = hyps.find(id);
    if (it == hyps.end()) warn << "warning: no hypothesis for recording " << id << "; scoring it as empty\n";
    const Annotation hyp = it == hyps.end() ? Annotation(id, {}) : it->second;
    const auto d = der(ref, hyp, {opt.collar, !opt.skip_overlap});
    sum.miss += d.miss;
    sum.fa += d.fa;
    sum.confusion += d.confusion;
    sum.total_speech += d.total_speech;
    out += id + "\t" + secs(d.miss) + "\t" + secs(d.fa) + "\t" + secs(d.confusion) + "\t" +
           secs(d.total_speech) + "\t" + pct(d.der);
    if (opt.jer) {
      const auto j = jer(ref, hyp);
      for (const auto& [spk, v] : j.per_speaker) speaker_jers.push_back(v);
      out += "\t" + pct(j.jer);
    }
    out += "\n";
    ref_counts.push_back(static_cast<int>(ref.speakers().size()));
    hyp_counts.push_back(static_cast<int>(hyp.speakers().size()));
  }
  sum.der = (sum.miss + sum.fa + sum.confusion) / sum.total_speech;
  out += "ALL\t" + secs(sum.miss) + "\t" + secs(sum.fa) + "\t" + secs(sum.confusion) + "\t" +
         secs(sum.total_speech) + "\t" + pct(sum.der);
  double pooled_jer = 0.0;
  if (opt.jer) {
    for (double v : speaker_jers) pooled_jer += v;
    pooled_jer /= static_cast<double>(speaker_jers.size());
    out += "\t" + pct(pooled_jer);
  }
  const double count_error = msce(ref_counts, hyp_counts);
  out += "\nMSCE\t" + detail::format_fixed(count_error, 2) + "\n";

  out += "# DER " + pct(sum.der) + "% (missed " + pct(sum.miss / sum.total_speech) + "%, false alarm " +
         pct(sum.fa / sum.total_speech) + "%, confusion " + pct(sum.confusion / sum.total_speech) +
         "%) over " + std::to_string(refs.size()) + " recording(s), " + detail::format_fixed(sum.total_speech, 2) +
         " s scored speech";
  if (opt.collar > 0) out += ", collar " + detail::format_fixed(opt.collar, 3) + " s";
  if (opt.skip_overlap) out += ", overlap excluded";
  out += "\n";
  if (opt.jer) out += "# JER " + pct(pooled_jer) + "% averaged over " + std::to_string(speaker_jers.size()) + " reference speakers\n";
  out += "# speaker count error " + detail::format_fixed(count_error, 2) + " per recording\n";
  return out;
}

// ---------------------------------------------------------------- stats

inline std::map<std::string, double> parse_durations(std::string_view text) {
  std::map<std::string, double> out;
  detail::for_each_line(text, [&](std::size_t n, std::string_view line) {
    const auto f = detail::split_ws(line);
    if (f.empty() || f[0].front() == '#') return;
    double v = 0;
    if (f.size() != 2 || !detail::parse_double(f[1], v) || !(v > 0))
      throw ParseError("expected '<recording> <seconds>' with positive seconds", n);
    if (!out.emplace(std::string(f[0]), v).second) throw ParseError("duplicate recording '" + std::string(f[0]) + "'", n);
  });
  return out;
}

struct StatsOptions {
  fs::path rttm;
  fs::path durations;
  std::optional<fs::path> estimate_sim_stats;
  double bin_width = 0.01;
};

inline std::string run_stats(const StatsOptions& opt, std::ostream& warn = std::cerr) {
  const auto durations = parse_durations(read_file(opt.durations, "durations file"));
  std::map<std::string, Annotation> anns;
  for (auto& a : parse_rttm(read_file(opt.rttm, "RTTM"), &warn)) anns.emplace(a.recording_id(), std::move(a));
  for (const auto& [id, a] : anns)
    if (!durations.count(id)) throw DataError("no duration given for recording " + id);

  std::string out = "# recording silence one_speaker overlap\n";
  double total = 0, one = 0, ov = 0;
  for (const auto& [id, seconds] : durations) {
    const auto it = anns.find(id);
    const Annotation a = it == anns.end() ? Annotation(id, {}) : it->second;
    const auto s = dataset_stats(a, seconds);
    out += id + " " + detail::format_fixed(s.silence_pct, 2) + " " + detail::format_fixed(s.single_speaker_pct, 2) +
           " " + detail::format_fixed(s.overlap_pct, 2) + "\n";
    total += seconds;
    one += s.single_speaker_pct / 100 * seconds;
    ov += s.overlap_pct / 100 * seconds;
  }
  if (total > 0)
    out += "ALL " + pct(1.0 - (one + ov) / total) + " " + pct(one / total) + " " + pct(ov / total) + "\n";

  if (opt.estimate_sim_stats) {
    std::vector<Annotation> list;
    for (auto& [id, a] : anns) list.push_back(a);
    write_file(*opt.estimate_sim_stats, write_sim_stats(estimate_stats(list, opt.bin_width)));
  }
  return out;
}

// ---------------------------------------------------------------- cluster

struct ClusterOptions {
  fs::path xvecs;
  fs::path segments;
  std::optional<fs::path> plda;
  std::optional<fs::path> config;
  std::optional<fs::path> overlaps;
  std::vector<std::pair<std::string, std::string>> overrides;  // key=value, applied after the config file
  unsigned jobs = 1;
};

inline PipelineConfig load_pipeline_config(const ClusterOptions& opt) {
  PipelineConfig cfg;
  if (opt.config) {
    cfg = parse_pipeline_config(read_file(*opt.config, "config file"));
    if (!cfg.plda_path.empty() && fs::path(cfg.plda_path).is_relative())
      cfg.plda_path = (opt.config->parent_path() / cfg.plda_path).string();
  }
  for (const auto& [k, v] : opt.overrides) set_config_value(cfg, k, v);
  if (opt.plda) cfg.plda_path = opt.plda->string();
  if (opt.overlaps) cfg.overlap_handling = true;
  if (cfg.plda_path.empty()) throw UsageError("no PLDA model given (--plda or plda= in the config)");
  if (cfg.overlap_handling && !opt.overlaps) throw UsageError("overlap_handling is on but no --overlaps file was given");
  cfg.validate();
  return cfg;
}

// Returns the RTTM text for every recording in the archive.
inline std::string run_cluster(const ClusterOptions& opt) {
  const PipelineConfig cfg = load_pipeline_config(opt);
  const PldaModel model = load_plda(cfg.plda_path);
  const auto x = parse_xvector_archive(read_file(opt.xvecs, "x-vector archive"));
  const auto segs = parse_segments(read_file(opt.segments, "segments file"));
  std::map<std::string, std::vector<std::pair<double, double>>> overlap_regions;
  if (opt.overlaps)
    for (const auto& s : parse_segments(read_file(*opt.overlaps, "overlap regions file")))
      overlap_regions[s.recording].emplace_back(s.onset, s.offset);
  const auto recordings = group_by_recording(x, segs);
  if (recordings.empty()) return {};
  if (x.cols() != model.dim())
    throw DataError("x-vectors have dimension " + std::to_string(x.cols()) + " but the PLDA model has " +
                    std::to_string(model.dim()));
  const DiagTransform t = diagonalize(model, cfg.rank > 0 ? cfg.rank : model.dim());

  std::vector<Annotation> results(recordings.size());
  parallel_for(recordings.size(), opt.jobs, [&](std::size_t i) {
    Annotation a = diarize_recording(recordings[i], t, cfg);
    if (const auto it = overlap_regions.find(recordings[i].id); it != overlap_regions.end())
      a = assign_second_speaker(a, it->second);
    results[i] = std::move(a);
  });
  return write_rttm(results);
}

// ---------------------------------------------------------------- simulate

enum class SimMode { conversation, mixture };

inline SimMode parse_sim_mode(std::string_view s) {
  if (s == "sc") return SimMode::conversation;
  if (s == "sm") return SimMode::mixture;
  throw UsageError("--mode must be sc or sm, got '" + std::string(s) + "'");
}

struct SimulateOptions {
  SimMode mode = SimMode::conversation;
  fs::path pool;
  std::optional<fs::path> stats;
  double beta = 2.0;
  int n_spk = 2;
  int n_out = 1;
  int n_umin = 10;
  int n_umax = 20;
  std::uint64_t seed = 0;
  std::optional<fs::path> noise_dir;
  std::vector<double> snrs{5, 10, 15, 20};
  std::optional<fs::path> rir_dir;
  double rir_prob = 0.5;
  fs::path out;
  unsigned jobs = 1;
};

inline std::vector<fs::path> wav_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError(dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("no .wav files in " + dir.string());
  return out;
}

// Writes <id>.wav and <id>.rttm per generated recording plus manifest.tsv and
// durations.txt; returns a one-line summary.
inline std::string run_simulate(const SimulateOptions& opt) {
  if (opt.n_spk < 1) throw UsageError("--n-spk must be at least 1");
  if (opt.n_out < 0) throw UsageError("--n-out must be non-negative");
  if (opt.mode == SimMode::conversation && !opt.stats) throw UsageError("--mode sc needs --stats");
  if (opt.mode == SimMode::mixture && !(opt.beta > 0)) throw UsageError("--beta must be positive");
  if (opt.mode == SimMode::mixture && (opt.n_umin < 1 || opt.n_umax < opt.n_umin))
    throw UsageError("need 1 <= --n-umin <= --n-umax");
  if (!(opt.rir_prob >= 0 && opt.rir_prob <= 1)) throw UsageError("--rir-prob must lie in [0, 1]");
  if (opt.noise_dir && opt.snrs.empty()) throw UsageError("--snr list is empty");

  const auto pool = parse_pool_manifest(read_file(opt.pool, "pool manifest"), opt.pool.parent_path());
  std::optional<SimStats> stats;
  if (opt.stats) stats = parse_sim_stats(read_file(*opt.stats, "statistics file"));
  std::vector<Wave> noises;
  if (opt.noise_dir)
    for (const auto& p : wav_files(*opt.noise_dir)) noises.push_back(load_wav(p));
  std::vector<std::vector<double>> rirs;
  if (opt.rir_dir)
    for (const auto& p : wav_files(*opt.rir_dir)) rirs.push_back(rir_from_wave(load_wav(p)));

  struct Job {
    std::string id;
    SimTimeline timeline;
    RenderOptions render;
    std::optional<double> snr;
  };
  std::vector<Job> jobs;
  PoolSampler sampler(pool, derive_seed(opt.seed, ~std::uint64_t{0}));
  for (int i = 0; i < opt.n_out; ++i) {
    Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(i)));
    const auto draws = sampler.draw(opt.n_spk);
    char id[32];
    std::snprintf(id, sizeof id, "%s_%05d", opt.mode == SimMode::conversation ? "sc" : "sm", i);
    Job job{id,
            opt.mode == SimMode::conversation ? simulate_conversation(draws, *stats, rng)
                                              : simulate_mixture(draws, opt.beta, opt.n_umin, opt.n_umax, rng),
            {},
            {}};
    job.render.rirs = rirs;
    job.render.rir_prob = opt.rir_prob;
    if (!noises.empty()) {
      job.render.noise = &noises[static_cast<std::size_t>(rng.below(noises.size()))];
      job.render.snr_db = opt.snrs[static_cast<std::size_t>(rng.below(opt.snrs.size()))];
    }
    job.render.seed = rng.next_u64();
    jobs.push_back(std::move(job));
  }

  std::map<std::string, Wave> sources;
  for (const auto& j : jobs)
    for (const auto& p : j.timeline.placements)
      if (!sources.count(p.audio)) sources.emplace(p.audio, load_wav(p.audio));

  fs::create_directories(opt.out);
  std::vector<double> seconds(jobs.size());
  parallel_for(jobs.size(), opt.jobs, [&](std::size_t i) {
    const auto& j = jobs[i];
    const Wave w = render_audio(j.timeline, sources, j.render);
    save_wav(opt.out / (j.id + ".wav"), w);
    const std::string rttm = write_rttm(j.timeline.annotation(j.id));
    write_file(opt.out / (j.id + ".rttm"), rttm);
    // Long enough to cover both the audio and the rounded RTTM times.
    double end = w.seconds();
    for (const auto& a : parse_rttm(rttm, nullptr)) end = std::max(end, a.extent());
    seconds[i] = std::ceil(end * 1000.0 - 1e-6) / 1000.0;
  });

  std::string manifest = "id\twav\trttm\tseconds\tsnr_db\n", durations;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& j = jobs[i];
    const std::string dur = detail::format_fixed(seconds[i], 3);
    manifest += j.id + "\t" + j.id + ".wav\t" + j.id + ".rttm\t" + dur + "\t" +
                (j.render.snr_db ? detail::format_fixed(*j.render.snr_db, 1) : std::string("-")) + "\n";
    durations += j.id + " " + dur + "\n";
  }
  write_file(opt.out / "manifest.tsv", manifest);
  write_file(opt.out / "durations.txt", durations);
  return "wrote " + std::to_string(jobs.size()) + " recording(s) to " + opt.out.string() + "\n";
}

}  // namespace vbdiar::cli
