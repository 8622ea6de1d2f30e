#pragma once

#include <unsupported/Eigen/FFT>

#include "ncmimo/common.hpp"

namespace ncmimo {

/// Forward DFT, unscaled: X(b) = sum_n x(n) e^{-j2*pi*n*b/N}.
inline VecC fft_forward(const VecC& x) {
  Eigen::FFT<double> fft;
  VecC out(x.size());
  fft.fwd(out, x);
  return out;
}

/// Inverse DFT with 1/N scaling: x(n) = (1/N) sum_b X(b) e^{+j2*pi*n*b/N}.
inline VecC fft_inverse(const VecC& X) {
  Eigen::FFT<double> fft;
  VecC out(X.size());
  fft.inv(out, X);
  return out;
}

/// Unitary DFT basis [F]_{r,c} = e^{+j2*pi*r*c/n} / sqrt(n).
inline MatC dft_basis(int n) {
  MatC F(n, n);
  const double w = 2.0 * M_PI / n;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      F(r, c) = std::polar(1.0 / std::sqrt(double(n)),
                           w * double((long(r) * c) % n));
  return F;
}

}  // namespace ncmimo
