#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "ncmimo/detector_direct.hpp"
#include "ncmimo/fft.hpp"

namespace ncmimo {

enum class Window { rectangular, blackman_tukey };

/// Relative eigenvalue floor applied to estimated CSMs before inversion;
/// finite-nr Blackman-Tukey estimates can be semidefinite.
inline constexpr double kCsmEigenFloor = 1e-12;

/// CL coefficient stack of one observation: column l holds the length-K
/// vector dyhat(l/(K*nr)), entry k taken from FFT bin l + k*nr.
struct CLCoefficients {
  MatC stack;  // K x nr
  int K = 0;
  int nr = 0;
};

inline CLCoefficients cl_coefficients(const ReceivedBlock& y, int K, int nr) {
  if (K < 1 || nr < 1 || y.y.size() != long(K) * nr)
    throw std::invalid_argument("cl_coefficients: observation length must be K*nr");
  const long N = long(K) * nr;
  VecC Y = fft_forward(y.y) / double(N);
  CLCoefficients cl;
  cl.K = K;
  cl.nr = nr;
  cl.stack.resize(K, nr);
  for (int l = 0; l < nr; ++l)
    for (int k = 0; k < K; ++k) cl.stack(k, l) = Y(l + long(k) * nr);
  return cl;
}

/// Windowed rotational spectral matrix at frequency l/nr:
/// FFT_nr[w(n) Sigma(n)](l) + (same)^H - Sigma(0), with w = 1 (rectangular)
/// or w(n) = 1 - n/nr (Blackman-Tukey). Equals the two-sided sum
/// sum_{|n|<nr} w(|n|) Sigma(n) e^{-j2 pi n l / nr}.
inline MatC rsm_estimate(const BlockCovariance& cov, int l, Window window) {
  if (l < 0 || l >= cov.nr)
    throw std::invalid_argument("rsm_estimate: frequency index out of range");
  const int K = cov.K();
  MatC a = MatC::Zero(K, K);
  for (int n = 0; n < cov.nr; ++n) {
    const double w =
        window == Window::blackman_tukey ? 1.0 - double(n) / cov.nr : 1.0;
    a += (w * std::polar(1.0, -2.0 * M_PI * double(n) * l / cov.nr)) *
         cov.blocks[n];
  }
  return a + a.adjoint() - cov.blocks[0];
}

namespace detail {

inline VecC theta_phases(int K, double sigma) {
  VecC th(K);
  for (int k = 0; k < K; ++k) th(k) = std::polar(1.0, 2.0 * M_PI * sigma * k);
  return th;
}

}  // namespace detail

/// Unitary congruence mapping the RSM at K*sigma to the CSM at sigma:
/// S(sigma) = F_K^H Theta^H(sigma) rsm Theta(sigma) F_K.
inline MatC csm_from_rsm(const MatC& rsm, double sigma) {
  const int K = int(rsm.rows());
  const VecC th = detail::theta_phases(K, sigma);
  const MatC F = dft_basis(K);
  return F.adjoint() * th.conjugate().asDiagonal() * rsm * th.asDiagonal() * F;
}

/// Asymptotic cyclic spectral matrix of the received signal:
/// F_K^H Theta^H(sigma) X Ut (eta S_H(K sigma)) Ut^H X^H Theta(sigma) F_K
/// + noise_power I_K. The signal part has rank <= nt.
inline MatC csm_analytic(const Codeword& x, const ChannelProfile& profile,
                         double eta, double noise_power, double sigma) {
  const int K = x.K();
  const int nt = profile.nt();
  VecC sh(nt);
  for (int k = 0; k < nt; ++k)
    sh(k) = eta * profile.spectrum(k, double(K) * sigma);
  const MatC core =
      x.matrix * profile.ut() * sh.asDiagonal() * profile.ut().adjoint() *
      x.matrix.adjoint();
  const VecC th = detail::theta_phases(K, sigma);
  const MatC F = dft_basis(K);
  return F.adjoint() * th.conjugate().asDiagonal() * core * th.asDiagonal() * F +
         noise_power * MatC::Identity(K, K);
}

/// Per-codeword inverse CSM caches and spectral log-determinant terms.
struct SpectralDetectorState {
  struct PerCodeword {
    std::vector<MatC> inv_csm;   // l = 0 .. nr-1, K x K Hermitian
    double log_det_norm = 0.0;   // sum_l (1/(K*nr)) ln det S(l/(K*nr))
    bool bt_fallback = false;    // rectangular estimate was not PSD
  };
  std::vector<PerCodeword> entries;
  int K = 0;
  int nr = 0;
  Window window = Window::blackman_tukey;
  bool fallback_warning = false;

  int size() const { return int(entries.size()); }
  long dimension() const { return long(K) * nr; }
};

namespace detail {

/// All-frequency RSM table via K^2 length-nr FFTs of the windowed block
/// sequence; entry l equals rsm_estimate(cov, l, window).
inline std::vector<MatC> rsm_table(const BlockCovariance& cov, Window window) {
  const int K = cov.K();
  const int nr = cov.nr;
  std::vector<MatC> a(nr, MatC(K, K));
  VecC seq(nr);
  for (int r = 0; r < K; ++r)
    for (int c = 0; c < K; ++c) {
      for (int n = 0; n < nr; ++n) {
        const double w =
            window == Window::blackman_tukey ? 1.0 - double(n) / nr : 1.0;
        seq(n) = w * cov.blocks[n](r, c);
      }
      VecC A = fft_forward(seq);
      for (int l = 0; l < nr; ++l) a[l](r, c) = A(l);
    }
  std::vector<MatC> out(nr);
  for (int l = 0; l < nr; ++l) out[l] = a[l] + a[l].adjoint() - cov.blocks[0];
  return out;
}

struct CsmInversion {
  std::vector<MatC> inverses;
  double log_det_norm = 0.0;
  bool psd = true;
};

inline CsmInversion invert_csms(const std::vector<MatC>& rsms, int K, int nr) {
  CsmInversion out;
  out.inverses.resize(nr);
  const long dim = long(K) * nr;
  for (int l = 0; l < nr; ++l) {
    MatC S = csm_from_rsm(rsms[l], double(l) / double(dim));
    S = 0.5 * (S + S.adjoint());  // enforce exact Hermitian symmetry
    Eigen::SelfAdjointEigenSolver<MatC> eig(S);
    if (eig.info() != Eigen::Success)
      throw NumericalError("precompute_spectral: CSM eigendecomposition failed");
    VecR ev = eig.eigenvalues();
    if (ev.minCoeff() <= 0.0) out.psd = false;
    const double floor = std::max(kCsmEigenFloor * std::max(ev.maxCoeff(), 0.0),
                                  std::numeric_limits<double>::min());
    VecR inv_ev(K);
    for (int k = 0; k < K; ++k) {
      const double v = std::max(ev(k), floor);
      out.log_det_norm += std::log(v) / double(dim);
      inv_ev(k) = 1.0 / v;
    }
    out.inverses[l] = eig.eigenvectors() * inv_ev.asDiagonal() *
                      eig.eigenvectors().adjoint();
  }
  return out;
}

}  // namespace detail

/// Builds the spectral state from explicit block covariances. With the
/// rectangular window an estimate that is not positive semidefinite falls
/// back to Blackman-Tukey for that codeword and raises the warning flag.
inline SpectralDetectorState precompute_spectral(
    const std::vector<BlockCovariance>& covariances, Window window) {
  if (covariances.empty())
    throw std::invalid_argument("precompute_spectral: empty covariance set");
  SpectralDetectorState state;
  state.K = covariances[0].K();
  state.nr = covariances[0].nr;
  state.window = window;
  for (const auto& cov : covariances) {
    if (cov.K() != state.K || cov.nr != state.nr)
      throw std::invalid_argument("precompute_spectral: inconsistent dimensions");
    auto inv = detail::invert_csms(detail::rsm_table(cov, window), state.K,
                                   state.nr);
    SpectralDetectorState::PerCodeword e;
    if (!inv.psd && window == Window::rectangular) {
      inv = detail::invert_csms(
          detail::rsm_table(cov, Window::blackman_tukey), state.K, state.nr);
      e.bt_fallback = true;
      state.fallback_warning = true;
    }
    e.inv_csm = std::move(inv.inverses);
    e.log_det_norm = inv.log_det_norm;
    state.entries.push_back(std::move(e));
  }
  return state;
}

inline SpectralDetectorState precompute_spectral(
    const CodewordAlphabet& alphabet, const FadingCovariance& fading,
    double noise_power, int nr, Window window = Window::blackman_tukey) {
  if (alphabet.codewords.empty())
    throw std::invalid_argument("precompute_spectral: empty alphabet");
  if (nr != fading.nr)
    throw std::invalid_argument("precompute_spectral: nr mismatch with fading");
  std::vector<BlockCovariance> covs;
  covs.reserve(alphabet.codewords.size());
  for (const auto& cw : alphabet.codewords)
    covs.push_back(build_block_covariance(cw, fading, noise_power));
  return precompute_spectral(covs, window);
}

/// Qhat_j + lhat_j with Qhat_j = sum_l dyhat(l)^H S_j^{-1}(l/(K*nr)) dyhat(l).
inline double ml_metric_spectral(const CLCoefficients& cl,
                                 const SpectralDetectorState& state, int j) {
  if (j < 0 || j >= state.size())
    throw std::invalid_argument("ml_metric_spectral: codeword index out of range");
  if (cl.K != state.K || cl.nr != state.nr)
    throw std::invalid_argument("ml_metric_spectral: CL stack dimension mismatch");
  const auto& e = state.entries[j];
  double quad = 0.0;
  for (int l = 0; l < state.nr; ++l)
    quad += cl.stack.col(l).dot(e.inv_csm[l] * cl.stack.col(l)).real();
  return quad + e.log_det_norm;
}

/// Batched metrics for a stack of observations (columns of ys).
inline MatR spectral_metrics(const MatC& ys, const SpectralDetectorState& state) {
  if (ys.rows() != state.dimension())
    throw std::invalid_argument("spectral_metrics: observation length mismatch");
  const long B = ys.cols();
  const long N = state.dimension();
  // CL stacks for the whole batch: D[l] is K x B.
  std::vector<MatC> D(state.nr, MatC(state.K, B));
  for (long b = 0; b < B; ++b) {
    VecC Y = fft_forward(ys.col(b)) / double(N);
    for (int l = 0; l < state.nr; ++l)
      for (int k = 0; k < state.K; ++k) D[l](k, b) = Y(l + long(k) * state.nr);
  }
  MatR out(state.size(), B);
  for (int j = 0; j < state.size(); ++j) {
    const auto& e = state.entries[j];
    VecR quad = VecR::Zero(B);
    for (int l = 0; l < state.nr; ++l) {
      MatC G = e.inv_csm[l] * D[l];
      quad += (D[l].conjugate().cwiseProduct(G)).real().colwise().sum().transpose();
    }
    out.row(j) = (quad.array() + e.log_det_norm).transpose();
  }
  return out;
}

inline int detect_spectral(const ReceivedBlock& y,
                           const SpectralDetectorState& state) {
  if (state.size() == 0)
    throw std::invalid_argument("detect_spectral: empty alphabet");
  CLCoefficients cl = cl_coefficients(y, state.K, state.nr);
  int best = 0;
  double best_metric = ml_metric_spectral(cl, state, 0);
  for (int j = 1; j < state.size(); ++j) {
    const double m = ml_metric_spectral(cl, state, j);
    if (m < best_metric) {
      best = j;
      best_metric = m;
    }
  }
  return best;
}

/// Debug dump of the estimated CSM tensor, one line per entry:
/// "j l r c re im".
inline void dump_csm(std::ostream& os,
                     const std::vector<BlockCovariance>& covariances,
                     Window window) {
  os << "# ncmimo csm dump\n";
  if (covariances.empty()) return;
  const int K = covariances[0].K();
  const int nr = covariances[0].nr;
  os << "# M " << covariances.size() << " K " << K << " nr " << nr << "\n";
  os << "# columns: codeword freq_index row col re im\n";
  os.precision(17);
  for (std::size_t j = 0; j < covariances.size(); ++j) {
    auto rsms = detail::rsm_table(covariances[j], window);
    for (int l = 0; l < nr; ++l) {
      MatC S = csm_from_rsm(rsms[l], double(l) / (double(K) * nr));
      for (int r = 0; r < K; ++r)
        for (int c = 0; c < K; ++c)
          os << j << " " << l << " " << r << " " << c << " " << S(r, c).real()
             << " " << S(r, c).imag() << "\n";
    }
  }
}

inline void dump_csm(const std::string& path,
                     const std::vector<BlockCovariance>& covariances,
                     Window window) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("dump_csm: cannot open " + path);
  dump_csm(os, covariances, window);
}

}  // namespace ncmimo
