#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "ncmimo/detector_spectral.hpp"

namespace ncmimo {

enum class Singularity { bounded, divergent };

/// Pairwise divergence summary for one codeword pair. Divergent high-SNR
/// behavior is carried by the flag, never by a floating-point infinity.
struct DivergenceReport {
  int i = 0;
  int j = 0;
  double kld_finite = 0.0;
  double kld_spectral = 0.0;
  VecR isd_per_band;
  Singularity high_snr = Singularity::bounded;
  double high_snr_limit = 0.0;  // meaningful when high_snr == bounded
  double low_snr_coefficient = 0.0;
};

using CsmFunction = std::function<MatC(double)>;

namespace detail {

inline double log_det_hermitian(const MatC& m) {
  Eigen::LDLT<MatC> ldlt(m);
  if (ldlt.info() != Eigen::Success)
    throw NumericalError("log_det_hermitian: factorization failed");
  double out = 0.0;
  auto d = ldlt.vectorD();
  for (long i = 0; i < d.size(); ++i) {
    const double di = d(i).real();
    if (di <= 0.0) throw NumericalError("log_det_hermitian: matrix not PD");
    out += std::log(di);
  }
  return out;
}

/// Midpoint rule on [0, width) with q nodes.
template <typename F>
double midpoint(F&& f, double width, int q) {
  double acc = 0.0;
  for (int n = 0; n < q; ++n) acc += f((n + 0.5) * width / q);
  return acc * width / q;
}

}  // namespace detail

/// Normalized Gaussian KLD between two assembled block covariances:
/// (1/(K*nr)) (tr(Sigma_j^{-1} Sigma_i) - K*nr + ln det Sigma_j - ln det Sigma_i).
inline double kld_direct(const BlockCovariance& cov_i, const BlockCovariance& cov_j) {
  if (cov_i.K() != cov_j.K() || cov_i.nr != cov_j.nr)
    throw std::invalid_argument("kld_direct: dimension mismatch");
  if (cov_i.noise_power <= 0.0 || cov_j.noise_power <= 0.0)
    throw std::invalid_argument("kld_direct: noise power must be > 0");
  const long n = long(cov_i.K()) * cov_i.nr;
  const MatC si = cov_i.assemble();
  const MatC sj = cov_j.assemble();
  Eigen::LDLT<MatC> ldlt_j(sj);
  if (ldlt_j.info() != Eigen::Success)
    throw NumericalError("kld_direct: factorization of Sigma_j failed");
  const double tr = ldlt_j.solve(si).trace().real();
  return (tr - double(n) + detail::log_det_hermitian(sj) -
          detail::log_det_hermitian(si)) /
         double(n);
}

/// Spectral-domain KLD by midpoint quadrature over sigma in [0, 1/K):
/// integrand tr[S_j^{-1} S_i - I] - ln(|S_i|/|S_j|).
inline double kld_spectral(const CsmFunction& csm_i, const CsmFunction& csm_j,
                           int K, int quad_points = 512) {
  if (quad_points < 1)
    throw std::invalid_argument("kld_spectral: quad_points must be >= 1");
  return detail::midpoint(
      [&](double sigma) {
        const MatC si = csm_i(sigma);
        const MatC sj = csm_j(sigma);
        Eigen::LDLT<MatC> ldlt_j(sj);
        if (ldlt_j.info() != Eigen::Success)
          throw NumericalError("kld_spectral: CSM factorization failed");
        return ldlt_j.solve(si).trace().real() - double(K) -
               detail::log_det_hermitian(si) + detail::log_det_hermitian(sj);
      },
      1.0 / K, quad_points);
}

/// Per-band Itakura-Saito divergences under the CSIT-aligned configuration
/// (Psi = Ut, shared Phi): band k integrates
/// x - 1 - ln x with x = (w_i S_H^(k)(K sigma) + noise) / (w_j ... + noise).
inline VecR isd_subbands(const VecR& w_i, const VecR& w_j,
                         const ChannelProfile& profile, double noise_power,
                         int K, int quad_points = 512) {
  if (w_i.size() != w_j.size())
    throw std::invalid_argument("isd_subbands: band count mismatch");
  if ((w_i.array() < 0.0).any() || (w_j.array() < 0.0).any())
    throw std::invalid_argument("isd_subbands: w entries must be >= 0");
  VecR out(w_i.size());
  for (long k = 0; k < w_i.size(); ++k) {
    out(k) = detail::midpoint(
        [&](double sigma) {
          const double s = profile.spectrum(int(k), double(K) * sigma);
          const double x = (w_i(k) * s + noise_power) / (w_j(k) * s + noise_power);
          return x - 1.0 - std::log(x);
        },
        1.0 / K, quad_points);
  }
  return out;
}

/// High-SNR KLD limit for equal active ranks:
/// (1/K) sum_k (w_i/w_j - 1 - ln(w_i/w_j)) over active bands.
inline double kld_high_snr_equal_rank(const VecR& w_i, const VecR& w_j, int K) {
  if (w_i.size() != w_j.size())
    throw std::invalid_argument("kld_high_snr_equal_rank: band count mismatch");
  const auto active_i = (w_i.array() >= kInactiveSingularValue).count();
  const auto active_j = (w_j.array() >= kInactiveSingularValue).count();
  if (active_i != active_j)
    throw std::invalid_argument(
        "kld_high_snr_equal_rank: active ranks differ; use detect_singularity");
  double acc = 0.0;
  for (long k = 0; k < w_i.size(); ++k) {
    if (w_i(k) < kInactiveSingularValue) continue;
    const double r = w_i(k) / w_j(k);
    acc += r - 1.0 - std::log(r);
  }
  return acc / K;
}

/// Divergent iff the active ranks differ (codewords span column spaces of
/// different dimension, discriminable without error as noise vanishes).
inline Singularity detect_singularity(int active_rank_i, int active_rank_j) {
  return active_rank_i == active_rank_j ? Singularity::bounded
                                        : Singularity::divergent;
}

/// Low-SNR coefficient: the KLD approaches coefficient / noise_power^2 with
/// coefficient = sum_k (w_i - w_j)^2 (1/2) int_0^{1/K} S_H^(k)(K sigma)^2.
inline double kld_low_snr_coefficient(const VecR& w_i, const VecR& w_j,
                                      const ChannelProfile& profile, int K,
                                      int quad_points = 512) {
  if (w_i.size() != w_j.size())
    throw std::invalid_argument("kld_low_snr_coefficient: band count mismatch");
  double acc = 0.0;
  for (long k = 0; k < w_i.size(); ++k) {
    const double integral = detail::midpoint(
        [&](double sigma) {
          const double s = profile.spectrum(int(k), double(K) * sigma);
          return s * s;
        },
        1.0 / K, quad_points);
    const double d = w_i(k) - w_j(k);
    acc += d * d * 0.5 * integral;
  }
  return acc;
}

namespace detail {

/// Columns spanning the orthogonal complement of a K x nt semi-unitary.
inline MatC orthogonal_complement(const MatC& u) {
  const int K = int(u.rows());
  const int nt = int(u.cols());
  Eigen::HouseholderQR<MatC> qr(u);
  MatC q = qr.householderQ();
  return q.rightCols(K - nt);
}

}  // namespace detail

/// No-CSIT Grassmannian KLD: four subspace-comparison terms with
/// Sigma(lambda) = S_H(lambda) + noise_power I_nt,
///   (1/K) int tr[Sigma^{-1} U_j^H U_i Sigma U_i^H U_j]
/// + (1/K) |Ubar_j^H Ubar_i|_F^2 - 1
/// + (1/K) int noise tr[U_j Sigma^{-1} U_j^H P_ibar]
/// + (1/(K noise)) int tr[Ubar_j^H U_i Sigma U_i^H Ubar_j].
inline double kld_no_csit(const MatC& u_i, const MatC& u_j,
                          const ChannelProfile& profile, double noise_power,
                          int quad_points = 512) {
  const int K = int(u_i.rows());
  const int nt = int(u_i.cols());
  if (u_j.rows() != K || u_j.cols() != nt)
    throw std::invalid_argument("kld_no_csit: codeword shape mismatch");
  if (nt != profile.nt())
    throw std::invalid_argument("kld_no_csit: profile stream count mismatch");
  auto check_semi_unitary = [&](const MatC& u, const char* name) {
    if ((u.adjoint() * u - MatC::Identity(nt, nt)).norm() > 1e-10)
      throw std::invalid_argument(std::string("kld_no_csit: ") + name +
                                  " is not semi-unitary");
  };
  check_semi_unitary(u_i, "U_i");
  check_semi_unitary(u_j, "U_j");
  const MatC ubar_i = detail::orthogonal_complement(u_i);
  const MatC ubar_j = detail::orthogonal_complement(u_j);
  const MatC p_ibar = ubar_i * ubar_i.adjoint();
  const MatC m_ji = u_j.adjoint() * u_i;        // nt x nt
  const MatC m_bji = ubar_j.adjoint() * u_i;    // (K-nt) x nt

  auto sigma_diag = [&](double lambda) {
    VecR d(nt);
    for (int k = 0; k < nt; ++k) d(k) = profile.spectrum(k, lambda) + noise_power;
    return d;
  };

  const double term_signal = detail::midpoint(
      [&](double lambda) {
        const VecR d = sigma_diag(lambda);
        const VecC dc = d.cast<cxd>();
        const MatC a = m_ji * dc.asDiagonal() * m_ji.adjoint();
        return (a.diagonal().real().array() / d.array()).sum();
      },
      1.0, quad_points);
  const double noise_subspace = (ubar_j.adjoint() * ubar_i).squaredNorm();
  const double term_cross_a = detail::midpoint(
      [&](double lambda) {
        const VecC inv = sigma_diag(lambda).cwiseInverse().cast<cxd>();
        const MatC a = u_j * inv.asDiagonal() * u_j.adjoint() * p_ibar;
        return noise_power * a.trace().real();
      },
      1.0, quad_points);
  const double term_cross_b = detail::midpoint(
      [&](double lambda) {
        const VecC dc = sigma_diag(lambda).cast<cxd>();
        const MatC a = m_bji * dc.asDiagonal() * m_bji.adjoint();
        return a.trace().real() / noise_power;
      },
      1.0, quad_points);
  return (term_signal + noise_subspace + term_cross_a + term_cross_b) / K - 1.0;
}

/// Convenience wrapper building a full report for a CSIT-aligned pair.
inline DivergenceReport divergence_report(int i, int j,
                                          const BlockCovariance& cov_i,
                                          const BlockCovariance& cov_j,
                                          const CsmFunction& csm_i,
                                          const CsmFunction& csm_j,
                                          const VecR& w_i, const VecR& w_j,
                                          const ChannelProfile& profile, int K,
                                          double noise_power,
                                          int quad_points = 512) {
  DivergenceReport r;
  r.i = i;
  r.j = j;
  r.kld_finite = kld_direct(cov_i, cov_j);
  r.kld_spectral = kld_spectral(csm_i, csm_j, K, quad_points);
  r.isd_per_band = isd_subbands(w_i, w_j, profile, noise_power, K, quad_points);
  const int ni = int((w_i.array() >= kInactiveSingularValue).count());
  const int nj = int((w_j.array() >= kInactiveSingularValue).count());
  r.high_snr = detect_singularity(ni, nj);
  if (r.high_snr == Singularity::bounded)
    r.high_snr_limit = kld_high_snr_equal_rank(w_i, w_j, K);
  r.low_snr_coefficient =
      kld_low_snr_coefficient(w_i, w_j, profile, K, quad_points);
  return r;
}

inline void write_reports_csv(std::ostream& os,
                              const std::vector<DivergenceReport>& reports) {
  os << "i,j,kld_finite,kld_spectral";
  int bands = reports.empty() ? 0 : int(reports[0].isd_per_band.size());
  for (int k = 0; k < bands; ++k) os << ",isd_band_" << k;
  os << ",high_snr,high_snr_limit,low_snr_coefficient\n";
  os.precision(12);
  for (const auto& r : reports) {
    os << r.i << "," << r.j << "," << r.kld_finite << "," << r.kld_spectral;
    for (long k = 0; k < r.isd_per_band.size(); ++k) os << "," << r.isd_per_band(k);
    os << "," << (r.high_snr == Singularity::divergent ? "divergent" : "bounded")
       << "," << (r.high_snr == Singularity::divergent ? 0.0 : r.high_snr_limit)
       << "," << r.low_snr_coefficient << "\n";
  }
}

}  // namespace ncmimo
