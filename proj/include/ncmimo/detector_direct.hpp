#pragma once

#include <vector>

#include "ncmimo/channel.hpp"
#include "ncmimo/codebook.hpp"
#include "ncmimo/common.hpp"

namespace ncmimo {

/// Default cap on the assembled covariance dimension K*nr for the direct
/// detector (memory guard, configurable at precompute).
inline constexpr std::size_t kDirectDimensionCap = 8192;

/// K-block-Toeplitz covariance of the received block under one codeword:
/// Sigma(n) = X blocks[n] X^H + noise_power * delta_n * I_K,
/// with Sigma(-n) = Sigma(n)^H implied.
struct BlockCovariance {
  std::vector<MatC> blocks;  // n = 0 .. nr-1, each K x K
  double noise_power = 0.0;
  int nr = 0;

  int K() const { return blocks.empty() ? 0 : int(blocks[0].rows()); }

  MatC assemble() const {
    const int k = K();
    MatC out(k * nr, k * nr);
    for (int p = 0; p < nr; ++p)
      for (int q = 0; q < nr; ++q)
        out.block(p * k, q * k, k, k) =
            p >= q ? blocks[p - q] : MatC(blocks[q - p].adjoint());
    return out;
  }
};

inline BlockCovariance build_block_covariance(const Codeword& x,
                                              const FadingCovariance& fading,
                                              double noise_power) {
  if (x.nt() != fading.nt())
    throw std::invalid_argument(
        "build_block_covariance: codeword/fading dimension mismatch");
  if (noise_power <= 0.0)
    throw std::invalid_argument("build_block_covariance: noise power must be > 0");
  BlockCovariance cov;
  cov.nr = fading.nr;
  cov.noise_power = noise_power;
  cov.blocks.reserve(fading.nr);
  for (int n = 0; n < fading.nr; ++n)
    cov.blocks.push_back(x.matrix * fading.blocks[n] * x.matrix.adjoint());
  cov.blocks[0] += noise_power * MatC::Identity(x.K(), x.K());
  return cov;
}

/// Cached factorizations of the assembled per-codeword covariances plus the
/// normalized log-determinant terms of the ML metric.
struct DirectDetectorState {
  struct PerCodeword {
    Eigen::LDLT<MatC> ldlt;
    double log_det_norm = 0.0;  // (1/(K*nr)) ln det Sigma
  };
  std::vector<PerCodeword> entries;
  int K = 0;
  int nr = 0;

  int size() const { return int(entries.size()); }
  long dimension() const { return long(K) * nr; }
};

inline DirectDetectorState precompute_direct(
    const std::vector<BlockCovariance>& covariances,
    std::size_t max_dimension = kDirectDimensionCap) {
  if (covariances.empty())
    throw std::invalid_argument("precompute_direct: empty covariance set");
  DirectDetectorState state;
  state.K = covariances[0].K();
  state.nr = covariances[0].nr;
  const std::size_t dim = std::size_t(state.K) * state.nr;
  if (dim > max_dimension)
    throw std::invalid_argument(
        "precompute_direct: K*nr = " + std::to_string(dim) +
        " exceeds the direct-path cap of " + std::to_string(max_dimension));
  state.entries.reserve(covariances.size());
  for (std::size_t j = 0; j < covariances.size(); ++j) {
    const auto& cov = covariances[j];
    if (cov.K() != state.K || cov.nr != state.nr)
      throw std::invalid_argument("precompute_direct: inconsistent dimensions");
    DirectDetectorState::PerCodeword e;
    e.ldlt.compute(cov.assemble());
    bool ok = e.ldlt.info() == Eigen::Success;
    double logdet = 0.0;
    if (ok) {
      auto d = e.ldlt.vectorD();
      for (long i = 0; i < d.size(); ++i) {
        const double di = d(i).real();
        if (di <= 0.0) {
          ok = false;
          break;
        }
        logdet += std::log(di);
      }
    }
    if (!ok)
      throw NumericalError(
          "precompute_direct: covariance for codeword " + std::to_string(j) +
          " is not positive definite (K*nr = " + std::to_string(dim) +
          ", noise power = " + std::to_string(cov.noise_power) + ")");
    e.log_det_norm = logdet / double(dim);
    state.entries.push_back(std::move(e));
  }
  return state;
}

inline DirectDetectorState precompute_direct(
    const CodewordAlphabet& alphabet, const FadingCovariance& fading,
    double noise_power, std::size_t max_dimension = kDirectDimensionCap) {
  if (alphabet.codewords.empty())
    throw std::invalid_argument("precompute_direct: empty alphabet");
  std::vector<BlockCovariance> covs;
  covs.reserve(alphabet.codewords.size());
  for (const auto& cw : alphabet.codewords)
    covs.push_back(build_block_covariance(cw, fading, noise_power));
  return precompute_direct(covs, max_dimension);
}

/// L_j(y) = (1/(K*nr)) y^H Sigma_j^{-1} y + (1/(K*nr)) ln det Sigma_j.
inline double ml_metric_direct(const ReceivedBlock& y,
                               const DirectDetectorState& state, int j) {
  if (j < 0 || j >= state.size())
    throw std::invalid_argument("ml_metric_direct: codeword index out of range");
  if (y.y.size() != state.dimension())
    throw std::invalid_argument("ml_metric_direct: observation length mismatch");
  const auto& e = state.entries[j];
  const double quad = y.y.dot(e.ldlt.solve(y.y)).real();
  return quad / double(state.dimension()) + e.log_det_norm;
}

/// Batched metrics for a stack of observations (columns of ys); row j holds
/// L_j for every column. Equivalent to ml_metric_direct column by column.
inline MatR direct_metrics(const MatC& ys, const DirectDetectorState& state) {
  if (ys.rows() != state.dimension())
    throw std::invalid_argument("direct_metrics: observation length mismatch");
  MatR out(state.size(), ys.cols());
  for (int j = 0; j < state.size(); ++j) {
    const auto& e = state.entries[j];
    MatC solved = e.ldlt.solve(ys);
    for (long c = 0; c < ys.cols(); ++c)
      out(j, c) = ys.col(c).dot(solved.col(c)).real() / double(state.dimension()) +
                  e.log_det_norm;
  }
  return out;
}

/// argmin_j L_j(y); ties resolve to the lowest index.
inline int detect_direct(const ReceivedBlock& y, const DirectDetectorState& state) {
  if (state.size() == 0)
    throw std::invalid_argument("detect_direct: empty alphabet");
  int best = 0;
  double best_metric = ml_metric_direct(y, state, 0);
  for (int j = 1; j < state.size(); ++j) {
    const double m = ml_metric_direct(y, state, j);
    if (m < best_metric) {
      best = j;
      best_metric = m;
    }
  }
  return best;
}

}  // namespace ncmimo
