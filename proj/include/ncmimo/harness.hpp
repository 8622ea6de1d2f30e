#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ncmimo/detector_direct.hpp"
#include "ncmimo/detector_spectral.hpp"
#include "ncmimo/divergence.hpp"

namespace ncmimo {

enum class DetectorKind { direct, spectral, both };

/// Trials are simulated in fixed-size batches keyed by global trial index,
/// so results are identical for any worker count.
inline constexpr long kTrialBatch = 256;

struct ExperimentConfig {
  int K = 4;
  int nt = 1;
  int M = 2;
  std::vector<int> nr_list{128};
  std::vector<double> snr_db_list{-10.0};
  long trials = 100000;
  std::uint64_t seed = 1;
  DetectorKind detector = DetectorKind::both;
  std::string profile = "triangular";        // preset name or file path
  std::string alphabet = "orthogonal-pair";  // preset name or file path
  Window window = Window::blackman_tukey;
  std::string out_path;
  bool include_timings = true;
  std::size_t direct_dimension_cap = kDirectDimensionCap;

  void validate() const {
    if (K < 1 || nt < 1) throw std::invalid_argument("config: K, nt must be >= 1");
    if (trials < 1) throw std::invalid_argument("config: trials must be >= 1");
    if (alphabet == "orthogonal-pair") {
      if (K < 2 * nt)
        throw std::invalid_argument("config: orthogonal-pair preset needs K >= 2*nt");
      if (M != 2)
        throw std::invalid_argument("config: orthogonal-pair preset is binary (M = 2)");
    }
    if (M < 2) throw std::invalid_argument("config: M must be >= 2");
    for (int nr : nr_list)
      if (nr < 2 || nr % 2 != 0)
        throw std::invalid_argument("config: Nr values must be even and >= 2");
  }
};

struct PointResult {
  int nr = 0;
  double snr_db = 0.0;
  DetectorKind detector = DetectorKind::direct;
  double p_err = 0.0;
  double stderr_ = 0.0;
  long errors = 0;
  long trials = 0;
  double t_precompute_ms = 0.0;
  double t_per_trial_us = 0.0;
};

struct ErrorEstimate {
  ExperimentConfig config;
  std::vector<PointResult> points;
};

/// Noise power realizing a target receive SNR (linear) for an equiprobable
/// alphabet: sigma^2 = tr(C_h E[Xbar^H Xbar]) / (snr K nr), evaluated through
/// the lag-0 fading block. For the orthogonal pair this reduces to 0.75/snr.
inline double snr_to_noise_power(double snr_linear,
                                 const CodewordAlphabet& alphabet,
                                 const FadingCovariance& fading) {
  if (snr_linear <= 0.0)
    throw std::invalid_argument("snr_to_noise_power: snr must be > 0");
  if (alphabet.codewords.empty())
    throw std::invalid_argument("snr_to_noise_power: empty alphabet");
  MatC gram = MatC::Zero(alphabet.nt, alphabet.nt);
  for (const auto& cw : alphabet.codewords)
    gram += cw.matrix.adjoint() * cw.matrix;
  gram /= double(alphabet.size());
  const double signal_power = (fading.blocks[0] * gram).trace().real();
  if (signal_power <= 0.0)
    throw std::invalid_argument("snr_to_noise_power: zero-power alphabet");
  return signal_power / (snr_linear * alphabet.K);
}

/// One received block y = vec(X H + Z), column-wise layout
/// [y]_{t + r K} = [X H + Z]_{t, r}.
inline ReceivedBlock simulate_observation(const Codeword& x,
                                          const ChannelProfile& profile,
                                          int nr, double noise_power,
                                          std::mt19937_64& rng) {
  const double total = profile.gamma().sum();
  const double eta = total > 0.0 ? double(profile.nt()) * nr / total : 0.0;
  MatC h = sample_channel(profile, nr, eta, rng);
  MatC ymat = x.matrix * h;
  for (int c = 0; c < nr; ++c)
    for (int r = 0; r < x.K(); ++r) ymat(r, c) += complex_normal(rng, noise_power);
  ReceivedBlock out;
  out.y = Eigen::Map<VecC>(ymat.data(), long(x.K()) * nr);
  return out;
}

namespace detail {

inline ChannelProfile make_profile(const ExperimentConfig& cfg, int nr) {
  ChannelProfile p = [&] {
    if (cfg.profile == "triangular") return ChannelProfile::triangular(cfg.nt, nr);
    if (cfg.profile == "flat") return ChannelProfile::flat(cfg.nt, nr);
    ChannelProfile loaded = load_profile(cfg.profile);
    if (loaded.nt() != cfg.nt || loaded.n() != nr)
      throw std::invalid_argument(
          "config: profile file dimensions do not match K/nt/Nr grid");
    return loaded;
  }();
  p.set_ut(random_unitary(cfg.nt, detail::splitmix64(cfg.seed + 0x17ull)));
  return p;
}

inline CodewordAlphabet make_alphabet(const ExperimentConfig& cfg) {
  if (cfg.alphabet == "orthogonal-pair")
    return orthogonal_pair_alphabet(cfg.K, cfg.nt,
                                    detail::splitmix64(cfg.seed + 0x2bull));
  if (cfg.alphabet == "grassmannian")
    return grassmannian_alphabet(cfg.K, cfg.nt, cfg.M,
                                 detail::splitmix64(cfg.seed + 0x2bull));
  CodewordAlphabet a = load_alphabet(cfg.alphabet);
  if (a.K != cfg.K || a.nt != cfg.nt)
    throw std::invalid_argument("config: alphabet file dimensions mismatch");
  return a;
}

template <typename Fn>
void parallel_batches(long nbatches, Fn&& fn) {
  const unsigned workers =
      std::min<unsigned>(worker_count(), std::max<long>(nbatches, 1));
  std::atomic<long> next{0};
  auto drain = [&] {
    for (long b = next.fetch_add(1); b < nbatches; b = next.fetch_add(1)) fn(b);
  };
  if (workers <= 1) {
    drain();
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (unsigned w = 0; w + 1 < workers; ++w) pool.emplace_back(drain);
  drain();
  for (auto& t : pool) t.join();
}

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

/// Lowest-index argmin down each column.
inline void argmin_columns(const MatR& metrics, std::vector<int>& out) {
  out.resize(metrics.cols());
  for (long c = 0; c < metrics.cols(); ++c) {
    int best = 0;
    for (int r = 1; r < metrics.rows(); ++r)
      if (metrics(r, c) < metrics(best, c)) best = r;
    out[c] = best;
  }
}

}  // namespace detail

/// Paired Monte Carlo error estimation over the (Nr, SNR) grid. Hypotheses
/// alternate with trial index (equal split); with detector = both the same
/// (H, Z) realization feeds both detectors.
inline ErrorEstimate pairwise_error(const ExperimentConfig& cfg) {
  cfg.validate();
  ErrorEstimate est;
  est.config = cfg;
  const bool want_direct = cfg.detector != DetectorKind::spectral;
  const bool want_spectral = cfg.detector != DetectorKind::direct;
  const CodewordAlphabet alphabet = detail::make_alphabet(cfg);

  for (std::size_t ni = 0; ni < cfg.nr_list.size(); ++ni) {
    const int nr = cfg.nr_list[ni];
    const ChannelProfile profile = detail::make_profile(cfg, nr);
    const FadingCovariance fading = assemble_fading_covariance(profile, nr);
    for (std::size_t si = 0; si < cfg.snr_db_list.size(); ++si) {
      const double snr_db = cfg.snr_db_list[si];
      const double noise_power =
          snr_to_noise_power(std::pow(10.0, snr_db / 10.0), alphabet, fading);

      DirectDetectorState dstate;
      SpectralDetectorState sstate;
      double t_direct_pre = 0.0, t_spectral_pre = 0.0;
      if (want_direct) {
        auto t0 = std::chrono::steady_clock::now();
        dstate = precompute_direct(alphabet, fading, noise_power,
                                   cfg.direct_dimension_cap);
        t_direct_pre = detail::ms_since(t0);
      }
      if (want_spectral) {
        auto t0 = std::chrono::steady_clock::now();
        sstate =
            precompute_spectral(alphabet, fading, noise_power, nr, cfg.window);
        t_spectral_pre = detail::ms_since(t0);
      }

      std::atomic<long> direct_errors{0}, spectral_errors{0};
      std::atomic<long> direct_ns{0}, spectral_ns{0};
      const long nbatches = (cfg.trials + kTrialBatch - 1) / kTrialBatch;
      const long dim = long(cfg.K) * nr;

      detail::parallel_batches(nbatches, [&](long b) {
        const long t_begin = b * kTrialBatch;
        const long t_end = std::min(cfg.trials, t_begin + kTrialBatch);
        const long bsize = t_end - t_begin;
        MatC ys(dim, bsize);
        std::vector<int> hyp(bsize);
        for (long t = t_begin; t < t_end; ++t) {
          auto rng = make_rng(cfg.seed, ni, si, std::uint64_t(t));
          const int h = int(t % alphabet.size());
          hyp[t - t_begin] = h;
          ys.col(t - t_begin) =
              simulate_observation(alphabet.codewords[h], profile, nr,
                                   noise_power, rng)
                  .y;
        }
        std::vector<int> decisions;
        if (want_direct) {
          auto t0 = std::chrono::steady_clock::now();
          MatR m = direct_metrics(ys, dstate);
          detail::argmin_columns(m, decisions);
          direct_ns += long(detail::ms_since(t0) * 1e6);
          long errs = 0;
          for (long c = 0; c < bsize; ++c) errs += decisions[c] != hyp[c];
          direct_errors += errs;
        }
        if (want_spectral) {
          auto t0 = std::chrono::steady_clock::now();
          MatR m = spectral_metrics(ys, sstate);
          detail::argmin_columns(m, decisions);
          spectral_ns += long(detail::ms_since(t0) * 1e6);
          long errs = 0;
          for (long c = 0; c < bsize; ++c) errs += decisions[c] != hyp[c];
          spectral_errors += errs;
        }
      });

      auto push = [&](DetectorKind kind, long errors, double pre_ms, long ns) {
        PointResult r;
        r.nr = nr;
        r.snr_db = snr_db;
        r.detector = kind;
        r.errors = errors;
        r.trials = cfg.trials;
        r.p_err = double(errors) / double(cfg.trials);
        r.stderr_ = std::sqrt(r.p_err * (1.0 - r.p_err) / double(cfg.trials));
        r.t_precompute_ms = pre_ms;
        r.t_per_trial_us = double(ns) / 1000.0 / double(cfg.trials);
        est.points.push_back(r);
      };
      if (want_direct)
        push(DetectorKind::direct, direct_errors.load(), t_direct_pre,
             direct_ns.load());
      if (want_spectral)
        push(DetectorKind::spectral, spectral_errors.load(), t_spectral_pre,
             spectral_ns.load());
    }
  }
  return est;
}

namespace detail {

inline const char* detector_name(DetectorKind k) {
  switch (k) {
    case DetectorKind::direct: return "direct";
    case DetectorKind::spectral: return "spectral";
    default: return "both";
  }
}

}  // namespace detail

/// Sweep the configured grid and write one CSV row per (grid point,
/// detector). Rows are gnuplot-friendly; configuration is echoed in '#'
/// comment lines. Timing columns are zeroed when include_timings is off so
/// reruns with the same seed are byte-identical.
inline ErrorEstimate run_sweep(const ExperimentConfig& cfg, std::ostream& os) {
  ErrorEstimate est = pairwise_error(cfg);
  os << "# ncmimo sweep\n";
  os << "# seed " << cfg.seed << " trials " << cfg.trials << " profile "
     << cfg.profile << " alphabet " << cfg.alphabet << " window "
     << (cfg.window == Window::blackman_tukey ? "bt" : "rect") << " M " << cfg.M
     << "\n";
  os << "K,nt,Nr,SNR_dB,detector,p_err,stderr,t_precompute_ms,t_per_trial_us\n";
  for (const auto& p : est.points) {
    std::ostringstream row;
    row.precision(12);
    row << cfg.K << "," << cfg.nt << "," << p.nr << "," << p.snr_db << ","
        << detail::detector_name(p.detector) << "," << p.p_err << ","
        << p.stderr_ << ",";
    row << std::fixed << std::setprecision(4)
        << (cfg.include_timings ? p.t_precompute_ms : 0.0) << ","
        << (cfg.include_timings ? p.t_per_trial_us : 0.0) << "\n";
    os << row.str();
  }
  return est;
}

inline ErrorEstimate run_sweep(const ExperimentConfig& cfg) {
  if (cfg.out_path.empty())
    throw std::invalid_argument("run_sweep: output path not set");
  std::ofstream os(cfg.out_path);
  if (!os) throw std::runtime_error("run_sweep: cannot open " + cfg.out_path);
  return run_sweep(cfg, os);
}

struct BenchmarkRow {
  int nr = 0;
  double direct_precompute_ms = 0.0;
  double spectral_precompute_ms = 0.0;
  double direct_metric_us = 0.0;
  double spectral_metric_us = 0.0;
};

/// Wall-clock scaling of precompute and per-observation metric cost for both
/// detectors over the configured Nr ladder.
inline std::vector<BenchmarkRow> benchmark_complexity(const ExperimentConfig& cfg,
                                                      std::ostream& os) {
  cfg.validate();
  const CodewordAlphabet alphabet = detail::make_alphabet(cfg);
  std::vector<BenchmarkRow> rows;

  // Per-op wall clock, best of `reps`; sub-millisecond operations are
  // repeated in an inner loop sized to ~50 ms so the measurement is stable.
  auto time_best_of = [](int reps, auto&& fn) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    const double probe = std::max(detail::ms_since(t0), 1e-4);
    const int inner = int(std::clamp(50.0 / probe, 1.0, 2000.0));
    double best = probe;
    for (int r = 0; r < reps; ++r) {
      t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < inner; ++i) fn();
      best = std::min(best, detail::ms_since(t0) / inner);
    }
    return best;
  };

  for (int nr : cfg.nr_list) {
    const ChannelProfile profile = detail::make_profile(cfg, nr);
    const FadingCovariance fading = assemble_fading_covariance(profile, nr);
    const double noise_power = snr_to_noise_power(
        std::pow(10.0, cfg.snr_db_list.empty() ? -1.0 : cfg.snr_db_list[0] / 10.0),
        alphabet, fading);

    BenchmarkRow row;
    row.nr = nr;
    DirectDetectorState dstate;
    SpectralDetectorState sstate;
    row.direct_precompute_ms = time_best_of(3, [&] {
      dstate = precompute_direct(alphabet, fading, noise_power,
                                 cfg.direct_dimension_cap);
    });
    row.spectral_precompute_ms = time_best_of(3, [&] {
      sstate = precompute_spectral(alphabet, fading, noise_power, nr, cfg.window);
    });

    const long dim = long(cfg.K) * nr;
    const int batch = 64;
    MatC ys(dim, batch);
    for (int t = 0; t < batch; ++t) {
      auto rng = make_rng(cfg.seed, 0xbe, 0, std::uint64_t(t));
      ys.col(t) = simulate_observation(alphabet.codewords[t % alphabet.size()],
                                       profile, nr, noise_power, rng)
                      .y;
    }
    row.direct_metric_us =
        time_best_of(3, [&] { direct_metrics(ys, dstate); }) * 1000.0 / batch;
    row.spectral_metric_us =
        time_best_of(3, [&] { spectral_metrics(ys, sstate); }) * 1000.0 / batch;
    rows.push_back(row);
  }

  os << "# ncmimo complexity benchmark\n";
  os << "K,nt,Nr,t_direct_precompute_ms,t_spectral_precompute_ms,"
        "t_direct_metric_us,t_spectral_metric_us,"
        "direct_precompute_ratio,spectral_precompute_ratio\n";
  os.precision(6);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const double dr =
        i == 0 ? 0.0 : r.direct_precompute_ms / rows[i - 1].direct_precompute_ms;
    const double sr = i == 0 ? 0.0
                             : r.spectral_precompute_ms /
                                   rows[i - 1].spectral_precompute_ms;
    os << cfg.K << "," << cfg.nt << "," << r.nr << "," << r.direct_precompute_ms
       << "," << r.spectral_precompute_ms << "," << r.direct_metric_us << ","
       << r.spectral_metric_us << "," << dr << "," << sr << "\n";
  }
  return rows;
}

inline std::vector<BenchmarkRow> benchmark_complexity(const ExperimentConfig& cfg) {
  if (cfg.out_path.empty())
    throw std::invalid_argument("benchmark_complexity: output path not set");
  std::ofstream os(cfg.out_path);
  if (!os)
    throw std::runtime_error("benchmark_complexity: cannot open " + cfg.out_path);
  return benchmark_complexity(cfg, os);
}

}  // namespace ncmimo
