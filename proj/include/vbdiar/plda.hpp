#pragma once

// Two-covariance PLDA back-end. A model (m, Sigma_w, Sigma_b) is reduced to a
// transform x = E^T (x_hat - m) under which the within-speaker covariance is I
// and the between-speaker covariance is diag(phi).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vbdiar/error.hpp"
#include "vbdiar/timeline.hpp"

namespace vbdiar {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct PldaModel {
  VectorXd mean;
  MatrixXd within_cov;
  MatrixXd between_cov;

  Eigen::Index dim() const { return mean.size(); }
};

struct DiagTransform {
  VectorXd mean;   // D
  MatrixXd basis;  // D x R
  VectorXd phi;    // R, descending, positive

  Eigen::Index input_dim() const { return basis.rows(); }
  Eigen::Index output_dim() const { return basis.cols(); }
};

// Eigenvalues at or below this are treated as zero speaker variability.
inline constexpr double kMinPhi = 1e-10;

inline void validate(const PldaModel& model) {
  const auto d = model.dim();
  if (d < 1) throw DataError("PLDA model has zero dimension");
  if (model.within_cov.rows() != d || model.within_cov.cols() != d || model.between_cov.rows() != d ||
      model.between_cov.cols() != d)
    throw DataError("PLDA covariance shapes do not match the mean dimension");
  const double tol_w = 1e-9 * std::max(1.0, model.within_cov.cwiseAbs().maxCoeff());
  const double tol_b = 1e-9 * std::max(1.0, model.between_cov.cwiseAbs().maxCoeff());
  if ((model.within_cov - model.within_cov.transpose()).cwiseAbs().maxCoeff() > tol_w)
    throw DataError("within-speaker covariance is not symmetric");
  if ((model.between_cov - model.between_cov.transpose()).cwiseAbs().maxCoeff() > tol_b)
    throw DataError("between-speaker covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(model.between_cov, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-8)
    throw DataError("between-speaker covariance has a negative eigenvalue " +
                    std::to_string(eig.eigenvalues().minCoeff()));
}

// Solves Sigma_b E = Sigma_w E Phi by Cholesky whitening of Sigma_w and a
// symmetric eigendecomposition, keeping the `rank` largest eigenpairs.
inline DiagTransform diagonalize(const PldaModel& model, Eigen::Index rank) {
  validate(model);
  const auto d = model.dim();
  if (rank < 1 || rank > d)
    throw DataError("requested dimension " + std::to_string(rank) + " outside [1, " + std::to_string(d) + "]");

  Eigen::LLT<MatrixXd> llt(model.within_cov);
  if (llt.info() != Eigen::Success) throw DataError("within-speaker covariance is not positive definite");
  const MatrixXd l_inv = llt.matrixL().solve(MatrixXd::Identity(d, d));
  MatrixXd whitened = l_inv * model.between_cov * l_inv.transpose();
  whitened = 0.5 * (whitened + whitened.transpose());

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(whitened);
  if (eig.info() != Eigen::Success) throw DataError("eigendecomposition failed");
  const VectorXd& values = eig.eigenvalues();  // ascending

  Eigen::Index positive = 0;
  for (Eigen::Index i = 0; i < d; ++i)
    if (values(i) > kMinPhi) ++positive;
  if (rank > positive)
    throw DataError("requested dimension " + std::to_string(rank) + " but only " + std::to_string(positive) +
                    " between-speaker eigenvalues are positive (deficiency " + std::to_string(rank - positive) +
                    ")");

  DiagTransform t;
  t.mean = model.mean;
  t.basis.resize(d, rank);
  t.phi.resize(rank);
  const MatrixXd back = l_inv.transpose();
  for (Eigen::Index r = 0; r < rank; ++r) {
    const Eigen::Index src = d - 1 - r;
    VectorXd col = back * eig.eigenvectors().col(src);
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col(arg) < 0) col = -col;
    t.basis.col(r) = col;
    t.phi(r) = values(src);
  }
  return t;
}

// Rows of `xvectors` are embeddings. With `length_norm`, each raw embedding
// is scaled to norm sqrt(D) before centering.
inline MatrixXd transform(const MatrixXd& xvectors, const DiagTransform& t, bool length_norm = false) {
  if (xvectors.cols() != t.input_dim())
    throw DataError("x-vector dimension " + std::to_string(xvectors.cols()) + " does not match transform input " +
                    std::to_string(t.input_dim()));
  MatrixXd x = xvectors;
  if (length_norm) {
    const double target = std::sqrt(static_cast<double>(x.cols()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double n = x.row(i).norm();
      if (n > 0) x.row(i) *= target / n;
    }
  }
  x.rowwise() -= t.mean.transpose();
  return x * t.basis;
}

inline VectorXd transform_one(const VectorXd& xvector, const DiagTransform& t, bool length_norm = false) {
  return transform(MatrixXd(xvector.transpose()), t, length_norm).row(0).transpose();
}

// Same/different-speaker log-likelihood ratio in the diagonalized space, where
// the speaker mean is N(0, diag(phi)) and x | mean ~ N(mean, I).
inline double llr_score(const VectorXd& x1, const VectorXd& x2, const VectorXd& phi) {
  double llr = 0.0;
  for (Eigen::Index r = 0; r < phi.size(); ++r) {
    const double f = phi(r);
    const double a = x1(r), b = x2(r);
    const double s = 2.0 * f + 1.0;
    llr += std::log(f + 1.0) - 0.5 * std::log(s) - 0.5 * (a * a + b * b) * f * f / (s * (f + 1.0)) + f * a * b / s;
  }
  return llr;
}

// ---------------------------------------------------------------------------
// Model file: "D", the mean, D rows of Sigma_w, D rows of Sigma_b.

inline PldaModel parse_plda(std::string_view text) {
  std::vector<std::vector<std::string_view>> rows;
  std::vector<std::size_t> line_numbers;
  detail::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    auto fields = detail::split_ws(line);
    if (!fields.empty()) {
      rows.push_back(std::move(fields));
      line_numbers.push_back(line_no);
    }
  });
  if (rows.empty()) throw ParseError("empty PLDA model");
  if (rows[0].size() != 1) throw ParseError("first line must hold the dimension", line_numbers[0]);
  double dim_value = 0;
  if (!detail::parse_double(rows[0][0], dim_value) || dim_value < 1 || dim_value != std::floor(dim_value))
    throw ParseError("bad dimension", line_numbers[0]);
  const auto d = static_cast<Eigen::Index>(dim_value);
  if (rows.size() != static_cast<std::size_t>(2 * d + 2))
    throw ParseError("expected " + std::to_string(2 * d + 2) + " non-empty lines, found " +
                     std::to_string(rows.size()));

  auto read_row = [&](std::size_t k, auto&& set) {
    if (rows[k].size() != static_cast<std::size_t>(d))
      throw ParseError("expected " + std::to_string(d) + " values", line_numbers[k]);
    for (Eigen::Index j = 0; j < d; ++j) {
      double v = 0;
      if (!detail::parse_double(rows[k][j], v)) throw ParseError("bad number", line_numbers[k]);
      set(j, v);
    }
  };

  PldaModel m;
  m.mean.resize(d);
  m.within_cov.resize(d, d);
  m.between_cov.resize(d, d);
  read_row(1, [&](Eigen::Index j, double v) { m.mean(j) = v; });
  for (Eigen::Index i = 0; i < d; ++i) {
    read_row(2 + i, [&](Eigen::Index j, double v) { m.within_cov(i, j) = v; });
    read_row(2 + d + i, [&](Eigen::Index j, double v) { m.between_cov(i, j) = v; });
  }
  validate(m);
  return m;
}

inline std::string write_plda(const PldaModel& m) {
  std::ostringstream out;
  char buf[40];
  auto row = [&](auto&& get) {
    for (Eigen::Index j = 0; j < m.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", get(j));
      out << (j ? " " : "") << buf;
    }
    out << '\n';
  };
  out << m.dim() << '\n';
  row([&](Eigen::Index j) { return m.mean(j); });
  for (Eigen::Index i = 0; i < m.dim(); ++i) row([&](Eigen::Index j) { return m.within_cov(i, j); });
  for (Eigen::Index i = 0; i < m.dim(); ++i) row([&](Eigen::Index j) { return m.between_cov(i, j); });
  return out.str();
}

inline PldaModel load_plda(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open PLDA model " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_plda(ss.str());
}

}  // namespace vbdiar
