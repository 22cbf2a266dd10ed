// vbdiar: scoring, x-vector clustering, conversation simulation and dataset
// statistics. Exit status: 0 success, 1 usage error, 2 data error.

#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "vbdiar/cli.hpp"

namespace {

using namespace vbdiar;

std::vector<double> parse_number_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    double v = 0;
    if (!detail::parse_double(item, v)) throw UsageError(std::string(flag) + ": '" + item + "' is not a number");
    out.push_back(v);
  }
  return out;
}

void write_output(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-")
    std::cout << text << std::flush;
  else
    write_file(path, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speaker diarization with VBx clustering, DER/JER scoring and training-data simulation"};
  app.require_subcommand(1);

  cli::ScoreOptions score;
  auto* score_cmd = app.add_subcommand("score", "Score a hypothesis RTTM against a reference RTTM");
  score_cmd->add_option("--ref", score.ref, "Reference RTTM")->required();
  score_cmd->add_option("--hyp", score.hyp, "Hypothesis RTTM")->required();
  score_cmd->add_option("--collar", score.collar, "Forgiveness collar around reference boundaries, seconds");
  score_cmd->add_flag("--skip-overlap", score.skip_overlap, "Exclude overlapped reference speech from scoring");
  score_cmd->add_flag("--jer", score.jer, "Also report the Jaccard error rate");

  cli::ClusterOptions cluster;
  std::string cluster_out, plda, config, overlaps;
  unsigned cluster_jobs = 1;
  auto* cluster_cmd = app.add_subcommand("cluster", "Diarize x-vector archives with AHC initialization and VBx");
  cluster_cmd->add_option("--xvecs", cluster.xvecs, "Binary x-vector archive")->required();
  cluster_cmd->add_option("--segments", cluster.segments, "Segments file, one line per x-vector")->required();
  cluster_cmd->add_option("--plda", plda, "PLDA model (overrides plda= in the config)");
  cluster_cmd->add_option("--config", config, "key=value pipeline configuration");
  cluster_cmd->add_option("--overlaps", overlaps, "Overlap regions '<recording> <onset> <offset>' for second-speaker assignment");
  cluster_cmd->add_option("--out", cluster_out, "Output RTTM (default: standard output)");
  cluster_cmd->add_option("--jobs", cluster_jobs, "Recordings processed in parallel")->check(CLI::PositiveNumber);
  const std::vector<std::pair<std::string, std::string>> override_flags{
      {"--fa", "fa"}, {"--fb", "fb"}, {"--p-loop", "p_loop"}, {"--max-iters", "max_iters"},
      {"--elbo-tol", "elbo_tol"}, {"--init-smoothing", "init_smoothing"}, {"--max-speakers", "max_speakers"},
      {"--drop-threshold", "drop_threshold"}, {"--ahc-threshold", "ahc_threshold"}, {"--metric", "metric"},
      {"--rank", "rank"}, {"--length-norm", "length_norm"}, {"--merge-gap", "merge_gap"}};
  std::vector<std::string> override_values(override_flags.size());
  for (std::size_t i = 0; i < override_flags.size(); ++i)
    cluster_cmd->add_option(override_flags[i].first, override_values[i],
                            "Override '" + override_flags[i].second + "' from the config");

  cli::SimulateOptions sim;
  std::string mode = "sc", stats_file, noise_dir, rir_dir, snr_list = "5,10,15,20";
  auto* sim_cmd = app.add_subcommand("simulate", "Generate simulated conversations (sc) or mixtures (sm)");
  sim_cmd->add_option("--mode", mode, "sc or sm")->check(CLI::IsMember({"sc", "sm"}));
  sim_cmd->add_option("--pool", sim.pool, "Utterance pool manifest")->required();
  sim_cmd->add_option("--stats", stats_file, "Turn-taking statistics file (sc)");
  sim_cmd->add_option("--beta", sim.beta, "Mean pause length in seconds (sm)");
  sim_cmd->add_option("--n-spk", sim.n_spk, "Speakers per recording");
  sim_cmd->add_option("--n-out", sim.n_out, "Number of recordings to generate");
  sim_cmd->add_option("--n-umin", sim.n_umin, "Minimum segments per speaker (sm)");
  sim_cmd->add_option("--n-umax", sim.n_umax, "Maximum segments per speaker (sm)");
  sim_cmd->add_option("--seed", sim.seed, "Random seed");
  sim_cmd->add_option("--noise", noise_dir, "Directory of background noise WAVs");
  sim_cmd->add_option("--snr", snr_list, "Comma-separated SNRs in dB to draw from");
  sim_cmd->add_option("--rir", rir_dir, "Directory of room impulse response WAVs");
  sim_cmd->add_option("--rir-prob", sim.rir_prob, "Probability of reverberating each speaker");
  sim_cmd->add_option("--out", sim.out, "Output directory")->required();
  sim_cmd->add_option("--jobs", sim.jobs, "Recordings rendered in parallel")->check(CLI::PositiveNumber);

  cli::StatsOptions stats;
  std::string estimate_out;
  auto* stats_cmd = app.add_subcommand("stats", "Silence / single-speaker / overlap percentages per recording");
  stats_cmd->add_option("--rttm", stats.rttm, "Annotations")->required();
  stats_cmd->add_option("--durations", stats.durations, "'<recording> <seconds>' lines")->required();
  stats_cmd->add_option("--estimate-sim-stats", estimate_out, "Also write turn-taking statistics for simulation");
  stats_cmd->add_option("--bin-width", stats.bin_width, "Histogram bin width for the statistics, seconds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*score_cmd) {
      std::cout << cli::run_score(score);
    } else if (*cluster_cmd) {
      if (!plda.empty()) cluster.plda = plda;
      if (!config.empty()) cluster.config = config;
      if (!overlaps.empty()) cluster.overlaps = overlaps;
      cluster.jobs = cluster_jobs;
      for (std::size_t i = 0; i < override_flags.size(); ++i)
        if (!override_values[i].empty()) cluster.overrides.emplace_back(override_flags[i].second, override_values[i]);
      write_output(cli::run_cluster(cluster), cluster_out);
    } else if (*sim_cmd) {
      sim.mode = cli::parse_sim_mode(mode);
      if (!stats_file.empty()) sim.stats = stats_file;
      if (!noise_dir.empty()) sim.noise_dir = noise_dir;
      if (!rir_dir.empty()) sim.rir_dir = rir_dir;
      sim.snrs = parse_number_list(snr_list, "--snr");
      std::cerr << cli::run_simulate(sim);
    } else if (*stats_cmd) {
      if (!estimate_out.empty()) stats.estimate_sim_stats = estimate_out;
      std::cout << cli::run_stats(stats);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
