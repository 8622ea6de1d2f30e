#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ncmimo/channel.hpp"
#include "ncmimo/common.hpp"

namespace ncmimo {

/// Singular values below this are treated as inactive power loadings.
inline constexpr double kInactiveSingularValue = 1e-12;

struct SvdFactors {
  MatC phi;  // K x K unitary
  VecR w;    // length-nt squared singular values, >= 0
  MatC psi;  // nt x nt unitary
};

/// One K x nt space-time codeword, optionally with its SVD factorization
/// X = Phi W^{1/2} Psi^H and the count of active power loadings.
struct Codeword {
  MatC matrix;  // K x nt
  std::optional<SvdFactors> svd;
  int active_rank = 0;

  int K() const { return int(matrix.rows()); }
  int nt() const { return int(matrix.cols()); }
};

struct CodewordAlphabet {
  std::vector<Codeword> codewords;
  int K = 0;
  int nt = 0;

  int size() const { return int(codewords.size()); }
};

/// The binary test pair: disjoint column groups of one random K x K unitary,
/// scaled so the codewords differ in power (1 and 1/2) as well as subspace.
inline std::pair<Codeword, Codeword> orthogonal_pair(int K, int nt,
                                                     std::uint64_t seed) {
  if (nt < 1 || K < 2 * nt)
    throw std::invalid_argument("orthogonal_pair: requires K >= 2*nt");
  MatC U = random_unitary(K, seed);
  Codeword xi, xj;
  xi.matrix = std::sqrt(double(K) / nt) * U.leftCols(nt);
  xj.matrix = std::sqrt(double(K) / (2 * nt)) * U.block(0, nt, K, nt);
  xi.active_rank = nt;
  xj.active_rank = nt;
  return {std::move(xi), std::move(xj)};
}

inline CodewordAlphabet orthogonal_pair_alphabet(int K, int nt,
                                                 std::uint64_t seed) {
  auto [xi, xj] = orthogonal_pair(K, nt, seed);
  CodewordAlphabet a;
  a.K = K;
  a.nt = nt;
  a.codewords = {std::move(xi), std::move(xj)};
  return a;
}

/// Assembles X = Phi W^{1/2} Psi^H and records the factors. w entries are
/// squared singular values; entries below kInactiveSingularValue count as
/// inactive.
inline Codeword svd_codeword(const MatC& phi, const VecR& w, const MatC& psi) {
  const int K = int(phi.rows());
  const int nt = int(psi.rows());
  if (phi.cols() != K || psi.cols() != nt || w.size() != nt)
    throw std::invalid_argument("svd_codeword: inconsistent factor dimensions");
  if ((w.array() < 0.0).any())
    throw std::invalid_argument("svd_codeword: w entries must be >= 0");
  MatC wh = MatC::Zero(K, nt);
  for (int p = 0; p < nt; ++p) wh(p, p) = std::sqrt(w(p));
  Codeword cw;
  cw.matrix = phi * wh * psi.adjoint();
  cw.svd = SvdFactors{phi, w, psi};
  cw.active_rank = int((w.array() >= kInactiveSingularValue).count());
  return cw;
}

/// Semi-unitary alphabet (X_i^H X_i = I_nt), each codeword a distinct point
/// on the Grassmann manifold. When M*nt <= K the codewords are disjoint
/// column groups of one unitary; otherwise independent random unitaries.
inline CodewordAlphabet grassmannian_alphabet(int K, int nt, int M,
                                              std::uint64_t seed) {
  if (M < 2) throw std::invalid_argument("grassmannian_alphabet: M must be >= 2");
  if (nt < 1 || K < nt)
    throw std::invalid_argument("grassmannian_alphabet: requires K >= nt >= 1");
  CodewordAlphabet a;
  a.K = K;
  a.nt = nt;
  a.codewords.reserve(M);
  if (std::int64_t(M) * nt <= K) {
    MatC U = random_unitary(K, seed);
    for (int i = 0; i < M; ++i) {
      Codeword cw;
      cw.matrix = U.block(0, i * nt, K, nt);
      cw.active_rank = nt;
      a.codewords.push_back(std::move(cw));
    }
  } else {
    for (int i = 0; i < M; ++i) {
      Codeword cw;
      cw.matrix = random_unitary(K, detail::splitmix64(seed) + i).leftCols(nt);
      cw.active_rank = nt;
      a.codewords.push_back(std::move(cw));
    }
  }
  return a;
}

/// Plain-text alphabet format: header, then each codeword as K rows of
/// row-major "re,im" pairs.
inline void save_alphabet(std::ostream& os, const CodewordAlphabet& a) {
  os << "# ncmimo codeword alphabet\n";
  os << "# M " << a.size() << " K " << a.K << " nt " << a.nt << "\n";
  os.precision(17);
  for (const auto& cw : a.codewords) {
    for (int r = 0; r < a.K; ++r) {
      for (int c = 0; c < a.nt; ++c) {
        if (c) os << " ";
        os << cw.matrix(r, c).real() << "," << cw.matrix(r, c).imag();
      }
      os << "\n";
    }
  }
}

inline void save_alphabet(const std::string& path, const CodewordAlphabet& a) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_alphabet: cannot open " + path);
  save_alphabet(os, a);
}

inline CodewordAlphabet load_alphabet(std::istream& is) {
  std::string line;
  int M = -1, K = -1, nt = -1;
  std::vector<std::string> body;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream h(line.substr(1));
      std::string tag;
      while (h >> tag) {
        if (tag == "M") h >> M;
        else if (tag == "K") h >> K;
        else if (tag == "nt") h >> nt;
      }
      continue;
    }
    body.push_back(line);
  }
  if (M < 1 || K < 1 || nt < 1)
    throw std::runtime_error("load_alphabet: missing M/K/nt header");
  if (int(body.size()) != M * K)
    throw std::runtime_error("load_alphabet: expected " + std::to_string(M * K) +
                             " matrix rows");
  CodewordAlphabet a;
  a.K = K;
  a.nt = nt;
  for (int i = 0; i < M; ++i) {
    Codeword cw;
    cw.matrix.resize(K, nt);
    for (int r = 0; r < K; ++r) {
      std::istringstream v(body[i * K + r]);
      for (int c = 0; c < nt; ++c) {
        std::string pair;
        if (!(v >> pair))
          throw std::runtime_error("load_alphabet: short row in codeword " +
                                   std::to_string(i));
        auto comma = pair.find(',');
        if (comma == std::string::npos)
          throw std::runtime_error("load_alphabet: expected re,im pair");
        cw.matrix(r, c) = cxd(std::stod(pair.substr(0, comma)),
                              std::stod(pair.substr(comma + 1)));
      }
    }
    Eigen::JacobiSVD<MatC> svd(cw.matrix);
    cw.active_rank =
        int((svd.singularValues().array() > kInactiveSingularValue).count());
    a.codewords.push_back(std::move(cw));
  }
  return a;
}

inline CodewordAlphabet load_alphabet(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_alphabet: cannot open " + path);
  return load_alphabet(is);
}

}  // namespace ncmimo
