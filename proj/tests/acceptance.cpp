// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include "cli_util.hpp"
#include "hmm_oracle.hpp"
#include "pipeline_synth.hpp"
#include "sim_synth.hpp"
#include "test_util.hpp"
#include "vbdiar/hungarian.hpp"
#include "vbdiar/metrics.hpp"
#include "vbdiar/plda.hpp"
#include "vbdiar/simcon.hpp"
#include "vbdiar/vbx.hpp"
#include "vbx_synth.hpp"

using namespace vbdiar;
using namespace vbdiar::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "FAILED ") + what;
  }
};

std::string num(double v, int decimals = 3) { return detail::format_fixed(v, decimals); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1e", v);
  return buf;
}

using Clock = std::chrono::steady_clock;
double ms_since(Clock::time_point t0) { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); }

Outcome worked_der() {
  Outcome o;
  const auto ref = figure_reference(), sys = figure_system();
  const auto t0 = Clock::now();
  const auto d = der(ref, sys);
  const double elapsed = ms_since(t0);
  o.require(std::abs(d.miss - 1.0) < 1e-9, "miss=" + num(d.miss));
  o.require(std::abs(d.fa - 1.0) < 1e-9, "fa=" + num(d.fa));
  o.require(std::abs(d.confusion - 2.5) < 1e-9, "confusion=" + num(d.confusion));
  o.require(std::abs(d.total_speech - 11.0) < 1e-9, "total=" + num(d.total_speech));
  o.require(std::abs(100 * d.der - 40.9) <= 0.05, "DER=" + num(100 * d.der, 2) + "%");
  o.require(elapsed < 10.0, "runtime " + num(elapsed, 3) + " ms < 10 ms");
  return o;
}

Outcome worked_jer() {
  Outcome o;
  const auto j = jer(figure_reference(), figure_system());
  const std::pair<const char*, double> expected[] = {{"Interviewer", 0.18}, {"Interviewee1", 0.54}, {"Interviewee2", 1.00}};
  for (const auto& [spk, want] : expected) {
    const double got = j.per_speaker.count(spk) ? j.per_speaker.at(spk) : -1;
    o.require(std::abs(got - want) <= 0.005, std::string(spk) + "=" + num(got));
  }
  o.require(std::abs(100 * j.jer - 57.3) <= 0.05, "JER=" + num(100 * j.jer, 2) + "%");
  return o;
}

Outcome hmm_enumeration() {
  Outcome o;
  Rng rng(31);
  double worst_gamma = 0, worst_px = 0;
  const auto t0 = Clock::now();
  for (int c = 0; c < 100; ++c) {
    const Eigen::Index t = 1 + static_cast<Eigen::Index>(rng.below(6));
    const Eigen::Index s = 1 + static_cast<Eigen::Index>(rng.below(3));
    MatrixXd lp(t, s);
    for (Eigen::Index i = 0; i < t; ++i) lp.row(i) = random_vector(rng, s, 3.0).transpose();
    const VectorXd pi = random_simplex(rng, s);
    const double p_loop = rng.uniform(0.05, 0.95);
    const auto got = forward_backward(lp, pi, p_loop);
    const auto want = enumerate_posteriors(lp, pi, p_loop);
    worst_gamma = std::max(worst_gamma, (got.gamma - want.gamma).cwiseAbs().maxCoeff());
    worst_px = std::max(worst_px, std::abs(got.log_px - want.log_px));
  }
  const double elapsed = ms_since(t0);
  o.require(worst_gamma < 1e-9, "max|dgamma|=" + sci(worst_gamma));
  o.require(worst_px < 1e-9, "max|dlog p(X)|=" + sci(worst_px));
  o.require(elapsed < 5000, "runtime " + num(elapsed, 1) + " ms < 5 s");
  return o;
}

Outcome qy_oracle() {
  Outcome o;
  Rng rng(32);
  double worst = 0;
  for (int c = 0; c < 100; ++c) {
    const Eigen::Index t = 1 + static_cast<Eigen::Index>(rng.below(40));
    const Eigen::Index s = 1 + static_cast<Eigen::Index>(rng.below(5));
    const Eigen::Index r = 1 + static_cast<Eigen::Index>(rng.below(10));
    MatrixXd gamma(t, s), rho(t, r);
    for (Eigen::Index i = 0; i < t; ++i) gamma.row(i) = random_simplex(rng, s).transpose();
    for (Eigen::Index i = 0; i < t; ++i) rho.row(i) = random_vector(rng, r, 3.0).transpose();
    VectorXd phi(r);
    for (Eigen::Index i = 0; i < r; ++i) phi(i) = 0.1 + 10 * rng.uniform();
    const double fa = 0.1 + rng.uniform(), fb = 0.5 + 20 * rng.uniform();
    const auto q = update_qy(gamma, rho, phi, fa, fb);
    for (Eigen::Index k = 0; k < s; ++k) {
      const MatrixXd l = MatrixXd::Identity(r, r) + (fa / fb) * gamma.col(k).sum() * MatrixXd(phi.asDiagonal());
      const MatrixXd l_inv = l.inverse();
      const VectorXd alpha = (fa / fb) * l_inv * (rho.transpose() * gamma.col(k));
      worst = std::max({worst, (q[k].alpha - alpha).cwiseAbs().maxCoeff(),
                        (q[k].lambda - l_inv.diagonal()).cwiseAbs().maxCoeff()});
    }
  }
  o.require(worst < 1e-10, "max|d|=" + sci(worst) + " over 100 cases");
  return o;
}

Outcome elbo_behaviour() {
  Outcome o;
  Rng rng(33);
  double worst_drop = 0;
  int steps = 0;
  for (int run = 0; run < 50; ++run) {
    const int speakers = 1 + static_cast<int>(rng.below(4));
    VectorXd phi(8);
    for (int i = 0; i < 8; ++i) phi(i) = 1.0 + 20 * rng.uniform();
    const auto seq = sample_bhmm(rng, speakers, 150, phi, 0.95);
    std::vector<int> init(150);
    for (auto& l : init) l = static_cast<int>(rng.below(6));
    const auto r = run_vbx(seq.x, phi, init, {.fa = 1.0, .fb = 1.0, .p_loop = 0.95, .max_iters = 30, .elbo_tol = 0});
    for (std::size_t k = 1; k < r.elbo_trace.size(); ++k, ++steps)
      worst_drop = std::max(worst_drop, r.elbo_trace[k - 1] - r.elbo_trace[k]);
  }
  o.require(worst_drop <= 1e-6, "largest ELBO decrease " + sci(std::max(0.0, worst_drop)) + " over " +
                                    std::to_string(steps) + " steps in 50 runs");
  std::vector<SpeakerPosterior> prior(3, {VectorXd::Zero(5), VectorXd::Ones(5)});
  const double log_px = -123.456;
  o.require(elbo(log_px, prior, 17.0, 5) == log_px, "prior posteriors give ELBO == log p(X)");
  return o;
}

Outcome ard_selection() {
  Outcome o;
  Rng rng(34);
  double slowest = 0, min_mass = 1;
  const VectorXd phi1 = VectorXd::Constant(16, 20.0);
  for (int k = 5; k <= 10; ++k) {
    const auto seq = sample_bhmm(rng, 1, 200, phi1, 0.99);
    std::vector<int> init(200);
    for (int t = 0; t < 200; ++t) init[t] = t * k / 200;
    const auto t0 = Clock::now();
    const auto r = run_vbx(seq.x, phi1, init, {});
    slowest = std::max(slowest, ms_since(t0));
    min_mass = std::min(min_mass, r.pi.maxCoeff());
  }
  o.require(min_mass >= 0.99, "1-speaker, 5..10 initial clusters: dominant pi >= " + num(min_mass, 4));

  double worst_der = 0;
  const VectorXd phi3 = VectorXd::Constant(16, 100.0);
  for (int rep = 0; rep < 5; ++rep) {
    const auto seq = sample_bhmm(rng, 3, 300, phi3, 0.98);
    std::vector<int> init(300);
    for (int t = 0; t < 300; ++t) init[t] = t * 10 / 300;
    const auto t0 = Clock::now();
    const auto r = run_vbx(seq.x, phi3, init, {});
    slowest = std::max(slowest, ms_since(t0));
    worst_der = std::max(worst_der, frame_der(seq.z, r.labels));
  }
  o.require(worst_der < 0.05, "3-speaker T=300 phi=100: worst DER " + num(100 * worst_der, 2) + "% over 5 sequences");
  o.require(slowest < 1000, "slowest run " + num(slowest, 1) + " ms < 1 s");
  return o;
}

Outcome diagonalization() {
  Outcome o;
  Rng rng(35);
  double worst_w = 0, worst_b = 0;
  for (int c = 0; c < 100; ++c) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(8));
    MatrixXd a(d, d), b(d, d);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal(), b.data()[i] = rng.normal();
    PldaModel m{VectorXd::Zero(d), a * a.transpose() + 0.1 * MatrixXd::Identity(d, d),
                b * b.transpose() + 0.01 * MatrixXd::Identity(d, d)};
    const auto t = diagonalize(m, d);
    const MatrixXd& e = t.basis;
    worst_w = std::max(worst_w, (e.transpose() * m.within_cov * e - MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff());
    worst_b = std::max(worst_b, (e.transpose() * m.between_cov * e - MatrixXd(t.phi.asDiagonal())).cwiseAbs().maxCoeff());
  }
  o.require(worst_w < 1e-6, "max|E'SwE - I|=" + sci(worst_w));
  o.require(worst_b < 1e-6, "max|E'SbE - diag(phi)|=" + sci(worst_b));
  return o;
}

Outcome mapping_optimality() {
  Outcome o;
  Rng rng(36);
  double worst = 0;
  for (int c = 0; c < 200; ++c) {
    const int rows = 1 + static_cast<int>(rng.below(5)), cols = 1 + static_cast<int>(rng.below(5));
    std::vector<std::vector<double>> w(rows, std::vector<double>(cols));
    for (auto& r : w)
      for (auto& v : r) v = rng.bernoulli(0.3) ? 0.0 : std::round(rng.uniform(0, 10) * 4) / 4;
    const auto assign = max_weight_assignment(w);
    double got = 0;
    std::vector<int> used(cols, 0);
    bool injective = true;
    for (int i = 0; i < rows; ++i)
      if (assign[i] >= 0) {
        injective = injective && !used[assign[i]]++;
        got += w[i][assign[i]];
      }
    if (!injective) o.require(false, "instance " + std::to_string(c) + " not injective");
    worst = std::max(worst, std::abs(got - brute_force_best_mapping(w)));
  }
  o.require(worst < 1e-9, "max |weight - brute force| = " + sci(worst) + " over 200 instances");
  return o;
}

double ks_distance(std::vector<double> samples, const Histogram& h, double w) {
  const double n = static_cast<double>(h.total());
  std::vector<std::pair<double, double>> knots;
  double cum = 0;
  for (const auto& [k, c] : h.bins) {
    knots.emplace_back(static_cast<double>(k) * w, cum / n);
    cum += static_cast<double>(c);
    knots.emplace_back(static_cast<double>(k + 1) * w, cum / n);
  }
  const auto cdf = [&](double x) {
    if (x <= knots.front().first) return 0.0;
    for (std::size_t i = 1; i < knots.size(); ++i)
      if (x <= knots[i].first) {
        const auto [x0, f0] = knots[i - 1];
        const auto [x1, f1] = knots[i];
        return x1 > x0 ? f0 + (f1 - f0) * (x - x0) / (x1 - x0) : f1;
      }
    return 1.0;
  };
  std::sort(samples.begin(), samples.end());
  const double m = static_cast<double>(samples.size());
  double d = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, (static_cast<double>(i) + 1) / m - f, f - static_cast<double>(i) / m});
  }
  return d;
}

Outcome simulation_fidelity() {
  Outcome o;
  Rng rng(37);
  const auto stats = cts_like_stats();

  const auto pair_pool = synthetic_pool(rng, 2, 1);
  std::vector<SpeakerDraw> draws;
  for (const auto& [spk, utts] : pair_pool.speakers) draws.push_back({spk, &utts[0]});
  std::vector<double> same, diff, over;
  Rng sc_rng(38);
  while (same.size() < 10000 || diff.size() < 10000 || over.size() < 10000) {
    const auto tl = simulate_conversation(draws, stats, sc_rng);
    for (std::size_t i = 1; i < tl.placements.size(); ++i) {
      const auto& p = tl.placements[i - 1];
      const auto& q = tl.placements[i];
      const double gap = q.onset - p.offset();
      if (p.speaker == q.speaker) same.push_back(gap);
      else if (gap >= 0) diff.push_back(gap);
      else over.push_back(-gap);
    }
  }
  same.resize(10000), diff.resize(10000), over.resize(10000);
  const double ks_same = ks_distance(same, stats.hist_same, stats.bin_width);
  const double ks_diff = ks_distance(diff, stats.hist_diff, stats.bin_width);
  const double ks_over = ks_distance(over, stats.hist_overlap, stats.bin_width);
  o.require(ks_same < 0.05, "KS same-speaker pauses " + num(ks_same, 4));
  o.require(ks_diff < 0.05, "KS speaker-change pauses " + num(ks_diff, 4));
  o.require(ks_over < 0.05, "KS overlaps " + num(ks_over, 4));

  const std::vector<SpeakerDraw> one{draws[0]};
  std::vector<double> pauses;
  Rng sm_rng(39);
  while (pauses.size() < 10000) {
    double prev_end = 0;
    for (const auto& p : simulate_mixture(one, 2.0, 1, 4, sm_rng).placements) {
      pauses.push_back(p.onset - prev_end);
      prev_end = p.offset();
    }
  }
  pauses.resize(10000);
  const double mean = std::accumulate(pauses.begin(), pauses.end(), 0.0) / 10000.0;
  o.require(std::abs(mean - 2.0) <= 0.05, "SM mean pause " + num(mean, 3) + " s (beta=2)");

  const auto pool = synthetic_pool(rng, 10, 4);
  PoolSampler sc_pool(pool, 3), sm_pool(pool, 3);
  Rng a(4), b(4);
  double sc = 0, sm = 0, sc_len = 0, sm_len = 0;
  for (int k = 0; k < 20; ++k) {
    const auto tc = simulate_conversation(sc_pool.draw(2), stats, a);
    const auto tm = simulate_mixture(sm_pool.draw(2), 2.0, 4, 12, b);
    sc += dataset_stats(tc.annotation("sc"), tc.length()).overlap_pct * tc.length();
    sm += dataset_stats(tm.annotation("sm"), tm.length()).overlap_pct * tm.length();
    sc_len += tc.length(), sm_len += tm.length();
  }
  o.require(sc / sc_len < sm / sm_len,
            "overlap SC " + num(sc / sc_len, 2) + "% < SM " + num(sm / sm_len, 2) + "% on the same pool");
  return o;
}

Outcome audio_mixing() {
  Outcome o;
  Rng rng(40);
  const auto pool = synthetic_pool(rng, 3, 1);
  const auto sources = synthetic_sources(pool);
  PoolSampler sampler(pool, 1);
  const auto tl = simulate_conversation(sampler.draw(3), cts_like_stats(), rng);
  const Wave noise = tone(0.37, 1234.5, 3000.0);
  const auto clean = render_audio(tl, sources);
  double worst = 0;
  for (double snr : {5.0, 10.0, 15.0, 20.0}) {
    const auto noisy = render_audio(tl, sources, {.noise = &noise, .snr_db = snr});
    double es = 0, en = 0;
    for (std::size_t i = 0; i < clean.samples.size(); ++i) {
      const double s = clean.samples[i], n = noisy.samples[i] - s;
      es += s * s, en += n * n;
    }
    worst = std::max(worst, std::abs(10 * std::log10(es / en) - snr));
  }
  o.require(worst <= 0.1, "max |measured - target SNR| = " + num(worst, 4) + " dB over 5/10/15/20 dB");
  const std::vector<std::vector<double>> delta{rir_from_wave(Wave{8000, {12345}})};
  const auto wet = render_audio(tl, sources, {.rirs = delta, .rir_prob = 1.0, .seed = 9});
  o.require(wet == clean, "delta RIR output bit-identical");
  return o;
}

std::string dir_bytes(const fs::path& dir) {
  std::string out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out += f.filename().string() + "\n" + read_file(f);
  return out;
}

Outcome cli_determinism() {
  Outcome o;
  const auto dir = scratch_dir("acceptance");
  const auto same = [&](const std::string& what, const std::string& a, const std::string& b, bool nonempty = true) {
    o.require(a == b && (!nonempty || !a.empty()), what);
  };

  const std::string score = "score --jer --collar 0.25 --ref " + quote(data_path("figure_ref.rttm")) + " --hyp " +
                            quote(data_path("figure_hyp.rttm"));
  const auto s1 = run_cli(score), s2 = run_cli(score);
  same("score repeat", s1.out, s2.out);

  const std::string cluster = "cluster --xvecs " + quote(data_path("toy/xvectors.bin")) + " --segments " +
                              quote(data_path("toy/segments")) + " --plda " + quote(data_path("toy/plda.txt")) +
                              " --config " + quote(fs::path(VBDIAR_SOURCE_DIR) / "configs/vbx_default.conf");
  const auto c1 = run_cli(cluster + " --jobs 1"), c2 = run_cli(cluster + " --jobs 1"), c8 = run_cli(cluster + " --jobs 8");
  same("cluster repeat", c1.out, c2.out);
  same("cluster --jobs 1 vs 8", c1.out, c8.out);
  same("cluster golden", c1.out, read_file(data_path("toy/golden.rttm")));

  Rng rng(41);
  const auto pool = write_pool(dir / "pool", synthetic_pool(rng, 8, 3));
  write_file(dir / "sim.stats", write_sim_stats(cts_like_stats()));
  fs::create_directories(dir / "noise");
  save_wav(dir / "noise/hum.wav", tone(0.7, 60.0, 2000.0));
  fs::create_directories(dir / "rir");
  save_wav(dir / "rir/room.wav", Wave{8000, {20000, 0, 0, 8000, 0, -3000, 1000}});
  for (const char* mode : {"sc", "sm"}) {
    const std::string sim = std::string("simulate --mode ") + mode + " --pool " + quote(pool) + " --stats " +
                            quote(dir / "sim.stats") + " --n-spk 2 --n-out 8 --n-umin 2 --n-umax 6 --seed 7 --noise " +
                            quote(dir / "noise") + " --rir " + quote(dir / "rir") + " --out ";
    const auto r1 = run_cli(sim + quote(dir / (std::string(mode) + "1")) + " --jobs 1");
    const auto r2 = run_cli(sim + quote(dir / (std::string(mode) + "2")) + " --jobs 1");
    const auto r4 = run_cli(sim + quote(dir / (std::string(mode) + "4")) + " --jobs 4");
    o.require(r1.exit_code == 0 && r2.exit_code == 0 && r4.exit_code == 0, std::string("simulate ") + mode + " exit 0");
    const auto b1 = dir_bytes(dir / (std::string(mode) + "1"));
    same(std::string("simulate ") + mode + " repeat", b1, dir_bytes(dir / (std::string(mode) + "2")));
    same(std::string("simulate ") + mode + " --jobs 1 vs 4", b1, dir_bytes(dir / (std::string(mode) + "4")));
  }

  std::string rttm;
  for (int i = 0; i < 8; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "sc_%05d", i);
    rttm += read_file(dir / "sc1" / (std::string(id) + ".rttm"));
  }
  write_file(dir / "all.rttm", rttm);
  const std::string stats = "stats --rttm " + quote(dir / "all.rttm") + " --durations " + quote(dir / "sc1/durations.txt");
  const auto t1 = run_cli(stats + " --estimate-sim-stats " + quote(dir / "est1"));
  const auto t2 = run_cli(stats + " --estimate-sim-stats " + quote(dir / "est2"));
  same("stats repeat", t1.out, t2.out);
  same("stats --estimate-sim-stats repeat", read_file(dir / "est1"), read_file(dir / "est2"));
  o.require(s1.exit_code == 0 && c1.exit_code == 0 && t1.exit_code == 0, "all exit 0");
  fs::remove_all(dir);
  return o;
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"Worked DER example", worked_der},
      {"Worked JER example", worked_jer},
      {"Forward-backward vs exhaustive enumeration", hmm_enumeration},
      {"q(Y) update vs dense inverse", qy_oracle},
      {"ELBO behaviour", elbo_behaviour},
      {"ARD speaker selection", ard_selection},
      {"PLDA diagonalization post-conditions", diagonalization},
      {"Mapping optimality vs brute force", mapping_optimality},
      {"Simulation fidelity", simulation_fidelity},
      {"Audio mixing", audio_mixing},
      {"CLI determinism", cli_determinism},
  };
  int failed = 0, index = 0;
  for (const auto& [name, fn] : criteria) {
    ++index;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  AC" << index << (index < 10 ? "  " : " ") << name << ": "
              << o.detail << " [" << num(ms_since(t0), 1) << " ms]\n";
  }
  std::cout << (failed ? std::to_string(failed) + " criterion(s) failed" : std::string("all criteria passed")) << "\n";
  return failed ? 1 : 0;
}
