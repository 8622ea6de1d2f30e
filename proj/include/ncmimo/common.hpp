#pragma once

#include <complex>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>

#include <Eigen/Dense>

namespace ncmimo {

using cxd = std::complex<double>;
using MatC = Eigen::MatrixXcd;
using VecC = Eigen::VectorXcd;
using MatR = Eigen::MatrixXd;
using VecR = Eigen::VectorXd;

/// Thrown when a factorization or spectral estimate breaks down numerically.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown for profiles whose total power is zero (normalization undefined).
class DegenerateProfileError : public std::invalid_argument {
 public:
  explicit DegenerateProfileError(const std::string& what)
      : std::invalid_argument(what) {}
};

/// Length-K*nr observation vector, column-wise vectorization of the K x nr
/// received block.
struct ReceivedBlock {
  VecC y;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Deterministic generator derived from a base seed and up to three stream
/// indices. Trial-level parallelism keys generators off (seed, trial index)
/// so results do not depend on scheduling.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t s0 = 0,
                                std::uint64_t s1 = 0, std::uint64_t s2 = 0) {
  std::uint64_t x = detail::splitmix64(seed);
  x = detail::splitmix64(x ^ detail::splitmix64(s0 + 0x1234abcdull));
  x = detail::splitmix64(x ^ detail::splitmix64(s1 + 0x77ull));
  x = detail::splitmix64(x ^ detail::splitmix64(s2 + 0xfeedull));
  return std::mt19937_64(x);
}

/// Draw from CN(0, var): real and imaginary parts i.i.d. N(0, var/2).
inline cxd complex_normal(std::mt19937_64& rng, double var) {
  if (var <= 0.0) return cxd(0.0, 0.0);
  std::normal_distribution<double> n(0.0, std::sqrt(var / 2.0));
  return cxd(n(rng), n(rng));
}

/// Worker count for trial-level parallelism, capped by the
/// NONCOHERENT_MIMO_THREADS environment variable.
inline unsigned worker_count() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("NONCOHERENT_MIMO_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) hw = std::min<long>(hw, v);
  }
  return hw;
}

}  // namespace ncmimo
