#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ncmimo/common.hpp"
#include "ncmimo/fft.hpp"

namespace ncmimo {

/// Normalized sinc: sin(pi x)/(pi x), sinc(0) = 1.
inline double sinc(double x) {
  if (x == 0.0) return 1.0;
  return std::sin(M_PI * x) / (M_PI * x);
}

namespace detail {

/// Periodic triangle of half-width 1/T: peak 1 at lambda = 0 (mod 1),
/// support |lambda| < 1/T. DTFT of (1/T) sinc^2(m/T) for T >= 2.
inline double triangle_spectrum(int T, double lambda) {
  double x = lambda - std::floor(lambda);
  x = std::min(x, 1.0 - x);
  return std::max(0.0, 1.0 - x * T);
}

}  // namespace detail

/// Per-stream fading statistics of the spatially-stationary Weichselberger
/// model, together with the transmitter basis Ut.
///
/// The primary data is the nonnegative eigenvalue grid gamma (nt x n): the
/// per-bin variances of the beam-domain channel entries. The finite-array
/// ACF, acf(k, m), is its length-n inverse DFT and is exact for the sampled
/// model; closed-form presets additionally carry the limiting spectrum and
/// ACF for asymptotic analyses.
class ChannelProfile {
 public:
  /// Grid-specified profile: gamma is nt x n, entries >= 0, n even.
  static ChannelProfile from_gamma(MatR gamma) {
    return ChannelProfile(std::move(gamma), nullptr, nullptr);
  }

  /// Preset of §-style triangular spectra: stream k has limiting ACF
  /// (1/(k+2)) sinc^2(m/(k+2)) and spectrum a triangle of half-width
  /// 1/(k+2). gamma samples the triangle exactly on the length-n grid.
  static ChannelProfile triangular(int nt, int n) {
    check_dims(nt, n);
    MatR g(nt, n);
    for (int k = 0; k < nt; ++k)
      for (int l = 0; l < n; ++l)
        g(k, l) = detail::triangle_spectrum(k + 2, double(l) / n);
    auto spec = [](int k, double lam) {
      return detail::triangle_spectrum(k + 2, lam);
    };
    auto acf = [](int k, double m) {
      const double T = k + 2;
      const double s = sinc(m / T);
      return s * s / T;
    };
    return ChannelProfile(std::move(g), spec, acf);
  }

  /// Flat unit spectra on every stream (i.i.d. fading across the array).
  static ChannelProfile flat(int nt, int n) {
    check_dims(nt, n);
    MatR g = MatR::Ones(nt, n);
    auto spec = [](int, double) { return 1.0; };
    auto acf = [](int, double m) {
      return std::abs(m) < 0.5 ? 1.0 : 0.0;  // integer lags only
    };
    return ChannelProfile(std::move(g), spec, acf);
  }

  int nt() const { return int(gamma_.rows()); }
  int n() const { return int(gamma_.cols()); }
  const MatR& gamma() const { return gamma_; }
  bool zero() const { return gamma_.sum() == 0.0; }
  bool has_closed_form() const { return spectrum_fn_ != nullptr; }

  const MatC& ut() const { return ut_; }

  void set_ut(MatC u) {
    if (u.rows() != nt() || u.cols() != nt())
      throw std::invalid_argument("ChannelProfile: Ut must be nt x nt");
    const double dev =
        (u.adjoint() * u - MatC::Identity(nt(), nt())).norm();
    if (dev > 1e-10)
      throw std::invalid_argument("ChannelProfile: Ut not unitary, |Ut^H Ut - I|_F = " +
                                  std::to_string(dev));
    ut_ = std::move(u);
  }

  /// Finite-array model ACF [C_H(m)]_{k,k} = (1/n) sum_l gamma_{k,l}
  /// e^{+j2*pi*m*l/n}; periodic in m with period n, real and even for the
  /// symmetric grids used here.
  double acf(int k, long m) const {
    long mm = m % n();
    if (mm < 0) mm += n();
    return acf_table_(k, mm);
  }

  /// Limiting (large-array) ACF when a closed form exists; falls back to
  /// the model ACF for grid profiles.
  double acf_asymptotic(int k, long m) const {
    if (acf_fn_) return acf_fn_(k, double(m));
    return acf(k, m);
  }

  /// Power spectral density S_H^(k)(lambda). Exact for closed-form presets,
  /// nearest-node lookup on the gamma grid otherwise.
  double spectrum(int k, double lambda) const {
    if (spectrum_fn_) return spectrum_fn_(k, lambda);
    double x = lambda - std::floor(lambda);
    int l = int(std::lround(x * n())) % n();
    return gamma_(k, l);
  }

 private:
  ChannelProfile(MatR gamma, std::function<double(int, double)> spec,
                 std::function<double(int, double)> acf)
      : gamma_(std::move(gamma)),
        spectrum_fn_(std::move(spec)),
        acf_fn_(std::move(acf)) {
    check_dims(int(gamma_.rows()), int(gamma_.cols()));
    if ((gamma_.array() < 0.0).any())
      throw std::invalid_argument("ChannelProfile: gamma entries must be >= 0");
    ut_ = MatC::Identity(nt(), nt());
    acf_table_.resize(nt(), n());
    for (int k = 0; k < nt(); ++k) {
      VecC row = gamma_.row(k).cast<cxd>();
      VecC c = fft_inverse(row);
      acf_table_.row(k) = c.real().transpose();
    }
  }

  static void check_dims(int nt, int n) {
    if (nt < 1) throw std::invalid_argument("ChannelProfile: nt must be >= 1");
    if (n < 2 || n % 2 != 0)
      throw std::invalid_argument("ChannelProfile: n must be even and >= 2");
  }

  MatR gamma_;      // nt x n, >= 0
  MatR acf_table_;  // nt x n, inverse DFT of gamma rows
  MatC ut_;         // nt x nt unitary
  std::function<double(int, double)> spectrum_fn_;  // null for grid profiles
  std::function<double(int, double)> acf_fn_;       // limiting ACF, if known
};

/// Preset-name alias used by the harness and CLI.
inline ChannelProfile triangular_profile(int nt, int nr) {
  return ChannelProfile::triangular(nt, nr);
}

/// Haar-distributed unitary via QR of a complex Gaussian matrix with the
/// phases of the R diagonal folded back into Q.
inline MatC random_unitary(int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("random_unitary: n must be >= 1");
  auto rng = make_rng(seed, 0x5eedu);
  MatC A(n, n);
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < n; ++r) A(r, c) = complex_normal(rng, 1.0);
  Eigen::HouseholderQR<MatC> qr(A);
  MatC Q = qr.householderQ();
  MatC R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < n; ++c) {
    cxd d = R(c, c);
    Q.col(c) *= (d == cxd(0.0) ? cxd(1.0) : d / std::abs(d));
  }
  return Q;
}

/// eta-scaled covariance blocks of vec(H): blocks[m] = eta Ut C_H(m) Ut^H.
/// The assembled nt*nr x nt*nr matrix is Hermitian PSD, nt-block-Toeplitz
/// and normalized to trace nt*nr.
struct FadingCovariance {
  std::vector<MatC> blocks;  // m = 0 .. nr-1, each nt x nt
  double eta = 1.0;
  int nr = 0;

  int nt() const { return blocks.empty() ? 0 : int(blocks[0].rows()); }

  /// Dense block-Toeplitz assembly; intended for small validation instances.
  MatC assemble() const {
    const int t = nt();
    MatC out(t * nr, t * nr);
    for (int p = 0; p < nr; ++p)
      for (int q = 0; q < nr; ++q)
        out.block(p * t, q * t, t, t) =
            p >= q ? blocks[p - q] : MatC(blocks[q - p].adjoint());
    return out;
  }
};

namespace detail {

inline FadingCovariance assemble_from_acf(
    const ChannelProfile& profile, int nr,
    const std::function<double(int, long)>& acf) {
  if (nr != profile.n())
    throw std::invalid_argument(
        "assemble_fading_covariance: nr does not match profile grid");
  const double total = profile.gamma().sum();
  if (total <= 0.0)
    throw DegenerateProfileError(
        "assemble_fading_covariance: zero-power profile, eta undefined");
  FadingCovariance fc;
  fc.nr = nr;
  fc.eta = double(profile.nt()) * nr / total;
  const MatC& ut = profile.ut();
  fc.blocks.reserve(nr);
  for (int m = 0; m < nr; ++m) {
    VecC d(profile.nt());
    for (int k = 0; k < profile.nt(); ++k) d(k) = fc.eta * acf(k, m);
    fc.blocks.push_back(ut * d.asDiagonal() * ut.adjoint());
  }
  return fc;
}

}  // namespace detail

/// Covariance blocks of the sampled finite-array model (exact second-order
/// description of sample_channel output).
inline FadingCovariance assemble_fading_covariance(const ChannelProfile& profile,
                                                   int nr) {
  return detail::assemble_from_acf(
      profile, nr, [&](int k, long m) { return profile.acf(k, m); });
}

/// Covariance blocks built from the limiting ACF (decaying lags). Used by
/// the convergence and log-determinant validation paths; not the covariance
/// of the finite-array sampler.
inline FadingCovariance assemble_asymptotic_covariance(
    const ChannelProfile& profile, int nr) {
  return detail::assemble_from_acf(profile, nr, [&](int k, long m) {
    return profile.acf_asymptotic(k, m);
  });
}

/// Draw H = Ut Hring F_nr with [Hring]_{k,l} ~ CN(0, eta*gamma_{k,l})
/// independent, F_nr the unitary DFT basis.
inline MatC sample_channel(const ChannelProfile& profile, int nr, double eta,
                           std::mt19937_64& rng) {
  if (nr != profile.n())
    throw std::invalid_argument("sample_channel: nr does not match profile grid");
  const int nt = profile.nt();
  MatC hring(nt, nr);
  for (int l = 0; l < nr; ++l)
    for (int k = 0; k < nt; ++k)
      hring(k, l) = complex_normal(rng, eta * profile.gamma()(k, l));
  // Hring * F equals sqrt(nr) times the row-wise inverse FFT.
  MatC hf(nt, nr);
  const double scale = std::sqrt(double(nr));
  for (int k = 0; k < nt; ++k) {
    VecC row = hring.row(k).transpose();
    hf.row(k) = (fft_inverse(row) * scale).transpose();
  }
  return profile.ut() * hf;
}

/// Plain-text profile table: comment header, then one line per
/// (stream k, frequency index l, gamma value).
inline void save_profile(std::ostream& os, const ChannelProfile& profile) {
  os << "# ncmimo channel profile\n";
  os << "# kind spectrum\n";
  os << "# nt " << profile.nt() << " n " << profile.n() << "\n";
  os.precision(17);
  for (int k = 0; k < profile.nt(); ++k)
    for (int l = 0; l < profile.n(); ++l)
      os << k << " " << l << " " << profile.gamma()(k, l) << "\n";
}

inline void save_profile(const std::string& path, const ChannelProfile& profile) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_profile: cannot open " + path);
  save_profile(os, profile);
}

/// Reads the table written by save_profile. kind "spectrum" rows are gamma
/// entries; kind "acf" rows are ACF lags, converted to a spectrum grid by a
/// forward DFT (tiny negative ripple is clamped to zero).
inline ChannelProfile load_profile(std::istream& is) {
  std::string line, kind = "spectrum";
  int nt = -1, n = -1;
  std::vector<std::array<double, 3>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream h(line.substr(1));
      std::string tag;
      while (h >> tag) {
        if (tag == "kind") h >> kind;
        else if (tag == "nt") h >> nt;
        else if (tag == "n") h >> n;
      }
      continue;
    }
    std::istringstream v(line);
    double k, idx, val;
    if (!(v >> k >> idx >> val))
      throw std::runtime_error("load_profile: malformed row: " + line);
    rows.push_back({k, idx, val});
  }
  if (nt < 1 || n < 2) throw std::runtime_error("load_profile: missing nt/n header");
  MatR table = MatR::Zero(nt, n);
  for (const auto& r : rows) {
    int k = int(r[0]), idx = int(r[1]);
    if (k < 0 || k >= nt || idx < 0 || idx >= n)
      throw std::runtime_error("load_profile: index out of range");
    table(k, idx) = r[2];
  }
  if (kind == "spectrum") return ChannelProfile::from_gamma(table);
  if (kind == "acf") {
    MatR g(nt, n);
    for (int k = 0; k < nt; ++k) {
      VecC c = table.row(k).cast<cxd>();
      VecC G = fft_forward(c);
      for (int l = 0; l < n; ++l) g(k, l) = std::max(0.0, G(l).real());
    }
    return ChannelProfile::from_gamma(g);
  }
  throw std::runtime_error("load_profile: unknown kind " + kind);
}

inline ChannelProfile load_profile(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_profile: cannot open " + path);
  return load_profile(is);
}

}  // namespace ncmimo
