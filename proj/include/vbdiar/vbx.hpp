#pragma once

// Bayesian HMM clustering of embedding sequences (VBx).
//
// Speakers are HMM states with emission N(x; V y_s, I), V = diag(phi)^(1/2),
// prior y_s ~ N(0, I). The transition from s' to s is
//   (1 - p_loop) * pi_s + [s == s'] * p_loop,
// and pi_s also gives the initial-state distribution. Inference alternates
// q(y_s) updates, forward-backward for the responsibilities gamma, a
// fixed-point step on pi, and evaluation of the ELBO. Speakers whose prior
// pi_s collapses below a threshold are removed.
//
// All recursions run in the log domain.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "vbdiar/error.hpp"

namespace vbdiar {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct VbxParams {
  double fa = 0.3;      // acoustic scaling factor
  double fb = 17.0;     // speaker regularization coefficient
  double p_loop = 0.99;
  int max_iters = 40;
  double elbo_tol = 1e-4;
  double init_smoothing = 0.0;  // mass spread over the non-initial speakers
  int max_speakers = 0;         // 0 = unlimited
  double drop_threshold = 1e-4; // pi below this removes the speaker

  void validate() const {
    if (!(fa > 0.0)) throw UsageError("F_A must be positive");
    if (!(fb > 0.0)) throw UsageError("F_B must be positive");
    if (!(p_loop > 0.0 && p_loop < 1.0)) throw UsageError("p_loop must lie in (0, 1)");
    if (max_iters < 1) throw UsageError("max_iters must be at least 1");
    if (!(elbo_tol >= 0.0)) throw UsageError("elbo_tol must be non-negative");
    if (!(init_smoothing >= 0.0 && init_smoothing < 1.0)) throw UsageError("init_smoothing must lie in [0, 1)");
    if (max_speakers < 0) throw UsageError("max_speakers must be non-negative");
    if (!(drop_threshold >= 0.0 && drop_threshold < 1.0)) throw UsageError("drop_threshold must lie in [0, 1)");
  }
};

// q(y_s) = N(alpha, diag(lambda)).
struct SpeakerPosterior {
  VectorXd alpha;
  VectorXd lambda;
};

struct ForwardBackwardResult {
  MatrixXd gamma;      // T x S, rows sum to 1
  MatrixXd log_alpha;  // log A(t, s), emission at t included
  MatrixXd log_beta;   // log B(t, s)
  double log_px = 0.0;
};

struct VbxState {
  MatrixXd gamma;  // T x S
  VectorXd pi;     // S
  std::vector<SpeakerPosterior> posteriors;
  std::vector<double> elbo_trace;
  MatrixXd rho;    // T x R, rho_t = V^T x_t
};

struct VbxResult {
  std::vector<int> labels;  // per-frame speaker in 0..active_speakers-1
  int active_speakers = 0;
  MatrixXd gamma;
  VectorXd pi;
  std::vector<SpeakerPosterior> posteriors;
  std::vector<double> elbo_trace;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

template <typename Vec>
double log_sum_exp(const Vec& v) {
  double hi = kNegInf;
  for (Eigen::Index i = 0; i < v.size(); ++i) hi = std::max(hi, static_cast<double>(v(i)));
  if (hi == kNegInf) return kNegInf;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) sum += std::exp(v(i) - hi);
  return hi + std::log(sum);
}

inline double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

}  // namespace detail

// One-hot responsibilities from hard labels, optionally smoothed.
inline MatrixXd init_gamma(std::span<const int> labels, int num_speakers, double smoothing = 0.0) {
  if (num_speakers < 1) throw DataError("need at least one speaker to initialize responsibilities");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw UsageError("smoothing must lie in [0, 1)");
  const auto t_count = static_cast<Eigen::Index>(labels.size());
  MatrixXd gamma(t_count, num_speakers);
  const double off = num_speakers > 1 ? smoothing / (num_speakers - 1) : 0.0;
  const double on = num_speakers > 1 ? 1.0 - smoothing : 1.0;
  for (Eigen::Index t = 0; t < t_count; ++t) {
    const int l = labels[static_cast<std::size_t>(t)];
    if (l < 0 || l >= num_speakers) throw DataError("initial label " + std::to_string(l) + " out of range");
    gamma.row(t).setConstant(off);
    gamma(t, l) = on;
  }
  return gamma;
}

// rho_t = diag(phi)^(1/2) x_t for every row.
inline MatrixXd compute_rho(const MatrixXd& x, const VectorXd& phi) {
  return x * phi.cwiseSqrt().asDiagonal();
}

inline std::vector<SpeakerPosterior> update_qy(const MatrixXd& gamma, const MatrixXd& rho, const VectorXd& phi,
                                               double fa, double fb) {
  if (gamma.rows() != rho.rows() || rho.cols() != phi.size())
    throw DataError("update_qy: shape mismatch");
  const double ratio = fa / fb;
  const VectorXd counts = gamma.colwise().sum().transpose();
  const MatrixXd weighted = gamma.transpose() * rho;  // S x R
  std::vector<SpeakerPosterior> out(static_cast<std::size_t>(gamma.cols()));
  for (Eigen::Index s = 0; s < gamma.cols(); ++s) {
    auto& q = out[static_cast<std::size_t>(s)];
    q.lambda = (1.0 + ratio * counts(s) * phi.array()).inverse().matrix();
    q.alpha = ratio * q.lambda.cwiseProduct(weighted.row(s).transpose());
  }
  return out;
}

// F_A * E_q[ln N(x_t; V y_s, I)]; without constants the terms shared by all
// speakers (-R/2 ln 2pi - x_t^T x_t / 2) are left out.
inline double expected_loglik(const VectorXd& rho_t, double xnorm_t, const SpeakerPosterior& post,
                              const VectorXd& phi, double fa, bool include_constants) {
  double v = post.alpha.dot(rho_t) - 0.5 * phi.dot(post.lambda + post.alpha.cwiseAbs2());
  if (include_constants)
    v += -0.5 * static_cast<double>(phi.size()) * std::log(2.0 * std::numbers::pi) - 0.5 * xnorm_t;
  return fa * v;
}

// T x S matrix of expected log output probabilities.
inline MatrixXd output_log_probs(const MatrixXd& x, const MatrixXd& rho, std::span<const SpeakerPosterior> posts,
                                 const VectorXd& phi, double fa, bool include_constants = true) {
  const auto t_count = rho.rows();
  const auto s_count = static_cast<Eigen::Index>(posts.size());
  MatrixXd alpha(s_count, rho.cols());
  VectorXd penalty(s_count);
  for (Eigen::Index s = 0; s < s_count; ++s) {
    const auto& p = posts[static_cast<std::size_t>(s)];
    alpha.row(s) = p.alpha.transpose();
    penalty(s) = 0.5 * phi.dot(p.lambda + p.alpha.cwiseAbs2());
  }
  MatrixXd lp = rho * alpha.transpose();
  lp.rowwise() -= penalty.transpose();
  if (include_constants) {
    const double c = -0.5 * static_cast<double>(phi.size()) * std::log(2.0 * std::numbers::pi);
    const VectorXd xnorm = x.rowwise().squaredNorm();
    for (Eigen::Index t = 0; t < t_count; ++t) lp.row(t).array() += c - 0.5 * xnorm(t);
  }
  return fa * lp;
}

inline ForwardBackwardResult forward_backward(const MatrixXd& log_out_prob, const VectorXd& pi, double p_loop) {
  const auto t_count = log_out_prob.rows();
  const auto s_count = log_out_prob.cols();
  if (t_count == 0 || s_count == 0) throw DataError("forward_backward needs T >= 1 and S >= 1");
  if (pi.size() != s_count) throw DataError("forward_backward: pi size does not match S");

  const double log_loop = std::log(p_loop);
  const double log_switch = std::log1p(-p_loop);
  VectorXd log_pi(s_count);
  for (Eigen::Index s = 0; s < s_count; ++s) log_pi(s) = detail::safe_log(pi(s));

  ForwardBackwardResult r;
  r.log_alpha.resize(t_count, s_count);
  r.log_beta.resize(t_count, s_count);

  r.log_alpha.row(0) = (log_pi + log_out_prob.row(0).transpose()).transpose();
  for (Eigen::Index t = 1; t < t_count; ++t) {
    const double prev_total = detail::log_sum_exp(r.log_alpha.row(t - 1));
    for (Eigen::Index s = 0; s < s_count; ++s) {
      const double stay = log_loop + r.log_alpha(t - 1, s);
      const double enter = log_switch + log_pi(s) + prev_total;
      r.log_alpha(t, s) = log_out_prob(t, s) + detail::log_add(stay, enter);
    }
  }

  r.log_beta.row(t_count - 1).setZero();
  VectorXd next(s_count);
  for (Eigen::Index t = t_count - 2; t >= 0; --t) {
    for (Eigen::Index s = 0; s < s_count; ++s) next(s) = r.log_beta(t + 1, s) + log_out_prob(t + 1, s);
    const double enter = log_switch + detail::log_sum_exp((log_pi + next).eval());
    for (Eigen::Index s = 0; s < s_count; ++s) r.log_beta(t, s) = detail::log_add(log_loop + next(s), enter);
  }

  r.log_px = detail::log_sum_exp(r.log_alpha.row(t_count - 1));
  r.gamma.resize(t_count, s_count);
  for (Eigen::Index t = 0; t < t_count; ++t) {
    double sum = 0.0;
    for (Eigen::Index s = 0; s < s_count; ++s) {
      const double g = std::exp(r.log_alpha(t, s) + r.log_beta(t, s) - r.log_px);
      r.gamma(t, s) = g;
      sum += g;
    }
    if (sum > 0.0) r.gamma.row(t) /= sum;
  }
  return r;
}

// Fixed-point step on the speaker priors:
//   pi_s ~ gamma_1s + (1 - p_loop) pi_s / p(X) * sum_{t>=2} sum_s' A(t-1,s') p(x_t|s) B(t,s)
inline VectorXd update_pi(const ForwardBackwardResult& fb, const MatrixXd& log_out_prob, const VectorXd& pi,
                          double p_loop) {
  const auto t_count = log_out_prob.rows();
  const auto s_count = log_out_prob.cols();
  VectorXd out(s_count);
  if (s_count == 1) {
    out.setOnes();
    return out;
  }
  VectorXd prev_total(t_count);
  for (Eigen::Index t = 0; t < t_count; ++t) prev_total(t) = detail::log_sum_exp(fb.log_alpha.row(t));

  const double log_switch = std::log1p(-p_loop);
  VectorXd terms(std::max<Eigen::Index>(t_count - 1, 1));
  for (Eigen::Index s = 0; s < s_count; ++s) {
    double reentry = 0.0;
    if (t_count > 1 && pi(s) > 0.0) {
      for (Eigen::Index t = 1; t < t_count; ++t)
        terms(t - 1) = prev_total(t - 1) + log_out_prob(t, s) + fb.log_beta(t, s);
      reentry = std::exp(log_switch + std::log(pi(s)) + detail::log_sum_exp(terms.head(t_count - 1)) - fb.log_px);
    }
    out(s) = fb.gamma(0, s) + reentry;
  }
  return out / out.sum();
}

// ELBO right after a q(Z) update; `log_px` must come from output
// probabilities that include the constant terms.
inline double elbo(double log_px, std::span<const SpeakerPosterior> posteriors, double fb, Eigen::Index rank) {
  double reg = 0.0;
  for (const auto& p : posteriors)
    reg += 0.5 * fb *
           (static_cast<double>(rank) + p.lambda.array().log().sum() - p.lambda.sum() - p.alpha.squaredNorm());
  return log_px + reg;
}

// Full inference from hard initial labels (e.g. from AHC).
inline VbxResult run_vbx(const MatrixXd& x, const VectorXd& phi, std::span<const int> init_labels,
                         const VbxParams& params) {
  params.validate();
  const auto t_count = x.rows();
  if (t_count < 1) throw DataError("VBx needs at least one embedding");
  if (static_cast<Eigen::Index>(init_labels.size()) != t_count)
    throw DataError("initial labels do not match the number of embeddings");
  if (x.cols() != phi.size()) throw DataError("embedding dimension does not match phi");
  if ((phi.array() <= 0.0).any()) throw DataError("phi must be positive");

  const int s_init = *std::max_element(init_labels.begin(), init_labels.end()) + 1;
  if (params.max_speakers > 0 && s_init > params.max_speakers)
    throw DataError("initialization has " + std::to_string(s_init) + " clusters, more than max_speakers " +
                    std::to_string(params.max_speakers));

  VbxState st;
  st.rho = compute_rho(x, phi);
  st.gamma = init_gamma(init_labels, s_init, params.init_smoothing);
  st.pi = VectorXd::Constant(s_init, 1.0 / s_init);

  VbxResult result;
  for (int iter = 0; iter < params.max_iters; ++iter) {
    st.posteriors = update_qy(st.gamma, st.rho, phi, params.fa, params.fb);
    const MatrixXd lp = output_log_probs(x, st.rho, st.posteriors, phi, params.fa, true);
    const auto fbr = forward_backward(lp, st.pi, params.p_loop);
    st.gamma = fbr.gamma;
    const double value = elbo(fbr.log_px, st.posteriors, params.fb, phi.size());
    st.pi = update_pi(fbr, lp, st.pi, params.p_loop);

    if (!std::isfinite(value) || !st.gamma.allFinite() || !st.pi.allFinite())
      throw DataError("VBx produced non-finite values at iteration " + std::to_string(iter + 1));
    st.elbo_trace.push_back(value);
    result.iterations = iter + 1;

    // Drop speakers whose prior collapsed; keep at least the strongest one.
    std::vector<Eigen::Index> keep;
    for (Eigen::Index s = 0; s < st.pi.size(); ++s)
      if (st.pi(s) >= params.drop_threshold) keep.push_back(s);
    if (keep.empty()) {
      Eigen::Index arg = 0;
      st.pi.maxCoeff(&arg);
      keep.push_back(arg);
    }
    if (static_cast<Eigen::Index>(keep.size()) < st.pi.size()) {
      MatrixXd g(t_count, static_cast<Eigen::Index>(keep.size()));
      VectorXd p(static_cast<Eigen::Index>(keep.size()));
      std::vector<SpeakerPosterior> posts;
      for (std::size_t k = 0; k < keep.size(); ++k) {
        g.col(static_cast<Eigen::Index>(k)) = st.gamma.col(keep[k]);
        p(static_cast<Eigen::Index>(k)) = st.pi(keep[k]);
        posts.push_back(st.posteriors[static_cast<std::size_t>(keep[k])]);
      }
      for (Eigen::Index t = 0; t < t_count; ++t) {
        const double sum = g.row(t).sum();
        if (sum > 0.0)
          g.row(t) /= sum;
        else
          g.row(t).setConstant(1.0 / static_cast<double>(g.cols()));
      }
      st.gamma = std::move(g);
      st.pi = p / p.sum();
      st.posteriors = std::move(posts);
    }

    const auto n = st.elbo_trace.size();
    if (n > 1 && std::abs(st.elbo_trace[n - 1] - st.elbo_trace[n - 2]) < params.elbo_tol) {
      result.converged = true;
      break;
    }
  }

  result.labels.resize(static_cast<std::size_t>(t_count));
  for (Eigen::Index t = 0; t < t_count; ++t) {
    Eigen::Index arg = 0;
    st.gamma.row(t).maxCoeff(&arg);
    result.labels[static_cast<std::size_t>(t)] = static_cast<int>(arg);
  }
  result.active_speakers = static_cast<int>(st.pi.size());
  result.gamma = std::move(st.gamma);
  result.pi = std::move(st.pi);
  result.posteriors = std::move(st.posteriors);
  result.elbo_trace = std::move(st.elbo_trace);
  return result;
}

}  // namespace vbdiar
