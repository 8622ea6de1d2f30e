#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "ncmimo/codebook.hpp"
#include "oracles.hpp"

using namespace ncmimo;

TEST_CASE("orthogonal pair") {
  SECTION("columns are orthogonal across the pair") {
    auto [xi, xj] = orthogonal_pair(6, 2, 5);
    CHECK((xi.matrix.adjoint() * xj.matrix).norm() <= 1e-10);
    // Projectors onto the two subspaces annihilate each other.
    MatC pi = xi.matrix * (xi.matrix.adjoint() * xi.matrix).inverse() *
              xi.matrix.adjoint();
    MatC pj = xj.matrix * (xj.matrix.adjoint() * xj.matrix).inverse() *
              xj.matrix.adjoint();
    CHECK((pi * pj).norm() <= 1e-10);
  }
  SECTION("powers are K and K/2") {
    auto [xi, xj] = orthogonal_pair(6, 2, 9);
    CHECK(xi.matrix.squaredNorm() == Catch::Approx(6.0).epsilon(1e-10));
    CHECK(xj.matrix.squaredNorm() == Catch::Approx(3.0).epsilon(1e-10));
  }
  SECTION("gram matrix of the high-power codeword") {
    auto [xi, xj] = orthogonal_pair(4, 1, 3);
    MatC gram = xi.matrix.adjoint() * xi.matrix;
    CHECK(std::abs(gram(0, 0) - cxd(4.0, 0.0)) <= 1e-10);
    CHECK(xi.active_rank == 1);
  }
  SECTION("requires K >= 2*nt") {
    CHECK_THROWS_AS(orthogonal_pair(3, 2, 1), std::invalid_argument);
  }
}

TEST_CASE("svd codeword") {
  SECTION("identity factors") {
    VecR w = VecR::Ones(2);
    Codeword cw = svd_codeword(MatC::Identity(4, 4), w, MatC::Identity(2, 2));
    CHECK((cw.matrix - MatC::Identity(4, 4).leftCols(2)).norm() < 1e-14);
    CHECK(cw.active_rank == 2);
  }
  SECTION("trailing zeros reduce the active rank") {
    VecR w(3);
    w << 2.0, 1.0, 0.0;
    Codeword cw = svd_codeword(random_unitary(6, 1), w, random_unitary(3, 2));
    CHECK(cw.active_rank == 2);
    Eigen::JacobiSVD<MatC> svd(cw.matrix);
    CHECK((svd.singularValues().array() > 1e-10).count() == 2);
  }
  SECTION("singular values equal sqrt(w)") {
    VecR w(2);
    w << 3.0, 0.5;
    Codeword cw = svd_codeword(random_unitary(6, 4), w, random_unitary(2, 5));
    Eigen::JacobiSVD<MatC> svd(cw.matrix);
    CHECK(svd.singularValues()(0) == Catch::Approx(std::sqrt(3.0)).margin(1e-9));
    CHECK(svd.singularValues()(1) == Catch::Approx(std::sqrt(0.5)).margin(1e-9));
    REQUIRE(cw.svd.has_value());
    VecC wsq = cw.svd->w.cwiseSqrt().cast<cxd>();
    CHECK((cw.matrix - cw.svd->phi.leftCols(2) * wsq.asDiagonal() *
                           cw.svd->psi.adjoint())
              .norm() <= 1e-10);
  }
  SECTION("negative w rejected") {
    VecR w(2);
    w << 1.0, -0.1;
    CHECK_THROWS_AS(svd_codeword(MatC::Identity(4, 4), w, MatC::Identity(2, 2)),
                    std::invalid_argument);
  }
}

TEST_CASE("grassmannian alphabet") {
  SECTION("orthogonal 1-D subspaces from disjoint slicing") {
    auto a = grassmannian_alphabet(4, 1, 2, 8);
    MatC pi = a.codewords[0].matrix * a.codewords[0].matrix.adjoint();
    MatC pj = a.codewords[1].matrix * a.codewords[1].matrix.adjoint();
    CHECK((pi - pj).norm() == Catch::Approx(std::sqrt(2.0)).margin(1e-9));
  }
  SECTION("semi-unitarity") {
    auto a = grassmannian_alphabet(4, 2, 2, 12);
    for (const auto& cw : a.codewords)
      CHECK((cw.matrix.adjoint() * cw.matrix - MatC::Identity(2, 2)).norm() <=
            1e-10);
  }
  SECTION("pairwise distinct subspaces") {
    auto a = grassmannian_alphabet(6, 2, 3, 11);
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) {
        MatC pi = a.codewords[i].matrix * a.codewords[i].matrix.adjoint();
        MatC pj = a.codewords[j].matrix * a.codewords[j].matrix.adjoint();
        CHECK((pi - pj).norm() > 1e-6);
      }
  }
  SECTION("independent-unitary path when M*nt > K") {
    auto a = grassmannian_alphabet(4, 2, 3, 13);
    CHECK(a.size() == 3);
    for (const auto& cw : a.codewords)
      CHECK((cw.matrix.adjoint() * cw.matrix - MatC::Identity(2, 2)).norm() <=
            1e-10);
  }
  SECTION("M < 2 rejected") {
    CHECK_THROWS_AS(grassmannian_alphabet(4, 1, 1, 1), std::invalid_argument);
  }
}

TEST_CASE("alphabet serialization round trip") {
  auto a = grassmannian_alphabet(6, 2, 3, 77);
  std::stringstream ss;
  save_alphabet(ss, a);
  auto b = load_alphabet(ss);
  REQUIRE(b.size() == 3);
  CHECK(b.K == 6);
  CHECK(b.nt == 2);
  for (int i = 0; i < 3; ++i) {
    CHECK((a.codewords[i].matrix - b.codewords[i].matrix).norm() < 1e-14);
    CHECK(b.codewords[i].active_rank == 2);
  }
}
